//! The detector population and its event loop.
//!
//! An [`Engine`] holds N dendritic cells, consumes [`StreamEvent`]s in
//! order and appends `(antigen, k)` pairs to its output list whenever a
//! cell's lifespan runs out. Processing is deterministic: identical
//! config, seed and stream produce an identical state trajectory and
//! output list.
//!
//! Per event:
//!
//! * an antigen event increments the antigen counter θ and stores the
//!   antigen with cell `((θ-1) mod N) + 1` — round-robin "sequential
//!   sampling"; lifespans and profiles are untouched;
//! * a signal event is transformed once into `(csm, k)`, then every cell
//!   subtracts csm from its remaining lifespan and adds k to its signal
//!   profile. A cell whose lifespan had already run out restarts from its
//!   initial lifespan and a zero profile before applying the update. Any
//!   cell at or below zero afterwards records one output pair per stored
//!   antigen instance and empties its antigen list.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::model::{
    DendriticCell, EventPayload, ModelError, OutputList, OutputPair, OutputSignals, SignalVector,
    StreamEvent, WeightMatrix,
};
use crate::Real;

/// Relative floor applied to Gaussian lifespan draws when none is given:
/// draws below `mean * GAUSSIAN_FLOOR_FRACTION` are clamped up so initial
/// lifespans stay positive.
pub const GAUSSIAN_FLOOR_FRACTION: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("population size must be at least 1")]
    EmptyPopulation,
    #[error("lifespan bounds must satisfy 0 < min <= max, got min={min} max={max}")]
    BadLifespanBounds { min: f64, max: f64 },
    #[error("gaussian lifespan needs mean > 0, std_dev >= 0 and floor > 0")]
    BadGaussianLifespan,
    #[error(transparent)]
    Weights(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("signal at tick {tick} has non-finite components")]
    NonFiniteSignal { tick: u64 },
    #[error("event time {time} precedes already-processed time {prev}")]
    NonMonotonicTime { time: u64, prev: u64 },
}

/// How initial lifespans are assigned across the population. Spread-out
/// lifespans give the cells staggered time windows over the stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LifespanDistribution<T> {
    /// Deterministic grid: cell i gets `min + (i-1)*(max-min)/(N-1)`;
    /// a single cell gets `min`.
    EvenlySpaced { min: T, max: T },
    /// Seeded uniform draws from `[min, max]`.
    Uniform { min: T, max: T },
    /// Seeded normal draws, clamped up to `floor` to keep lifespans
    /// positive.
    Gaussian { mean: T, std_dev: T, floor: T },
}

impl<T: Real> LifespanDistribution<T> {
    /// Gaussian with the default floor of `mean * 0.01`.
    pub fn gaussian(mean: T, std_dev: T) -> Self {
        Self::Gaussian { mean, std_dev, floor: mean * T::of(GAUSSIAN_FLOOR_FRACTION) }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            Self::EvenlySpaced { min, max } | Self::Uniform { min, max } => {
                if !(min > T::zero() && min <= max && max.is_finite()) {
                    return Err(ConfigError::BadLifespanBounds {
                        min: min.to_f64().unwrap_or(f64::NAN),
                        max: max.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
            Self::Gaussian { mean, std_dev, floor } => {
                let ok = mean > T::zero()
                    && mean.is_finite()
                    && std_dev >= T::zero()
                    && std_dev.is_finite()
                    && floor > T::zero();
                if !ok {
                    return Err(ConfigError::BadGaussianLifespan);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig<T> {
    pub population_size: usize,
    pub lifespan: LifespanDistribution<T>,
    pub rng_seed: u64,
    pub weights: WeightMatrix<T>,
    /// When set, antigens still held at end of stream are recorded with the
    /// holding cell's current signal profile. Off by default: an antigen
    /// sampled by a cell that never matures is silently retained.
    pub flush_at_end: bool,
}

impl<T: Real> Default for EngineConfig<T> {
    fn default() -> Self {
        Self {
            population_size: 100,
            lifespan: LifespanDistribution::EvenlySpaced { min: T::of(100.0), max: T::of(300.0) },
            rng_seed: 0,
            weights: WeightMatrix::standard(),
            flush_at_end: false,
        }
    }
}

impl<T: Real> EngineConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population_size == 0 {
            return Err(ConfigError::EmptyPopulation);
        }
        self.lifespan.validate()?;
        WeightMatrix::new(self.weights.csm, self.weights.k)?;
        Ok(())
    }
}

/// Transforms one signal vector into `(csm, k)` via the two weight rows.
pub fn transform_signal<T: Real>(
    s: &SignalVector<T>,
    w: &WeightMatrix<T>,
) -> Result<OutputSignals<T>, EngineError> {
    if !s.is_finite() {
        return Err(EngineError::NonFiniteSignal { tick: 0 });
    }
    Ok(OutputSignals {
        csm: w.csm[0] * s.pamp + w.csm[1] * s.danger + w.csm[2] * s.safe,
        k: w.k[0] * s.pamp + w.k[1] * s.danger + w.k[2] * s.safe,
    })
}

/// Next remaining lifespan of a cell given this tick's csm. A cell whose
/// previous lifespan was at or below zero restarts from its initial value
/// before the subtraction.
pub fn update_lifespan<T: Real>(cell: &DendriticCell<T>, csm: T) -> T {
    if cell.remaining_lifespan <= T::zero() {
        cell.initial_lifespan - csm
    } else {
        cell.remaining_lifespan - csm
    }
}

/// Next signal profile of a cell given this tick's k. Resets to zero
/// together with the lifespan, then accumulates.
pub fn update_signal_profile<T: Real>(cell: &DendriticCell<T>, k: T) -> T {
    if cell.remaining_lifespan <= T::zero() {
        k
    } else {
        cell.signal_profile + k
    }
}

/// Records one output pair per antigen instance held by the cell, in
/// storage order, all stamped with the cell's current signal profile, and
/// empties the antigen list. Returns the number of pairs appended.
pub fn emit_record<T: Real>(cell: &mut DendriticCell<T>, output: &mut OutputList<T>) -> usize {
    let n = cell.antigen_profile.len();
    for &antigen in &cell.antigen_profile {
        output.append(OutputPair::new(antigen, cell.signal_profile));
    }
    cell.antigen_profile.clear();
    n
}

/// One line of the pair-dump mirror: `antigen_id<TAB>k_value`, with the k
/// value printed at full (round-trip) precision.
pub fn pair_line<T: Real>(pair: &OutputPair<T>) -> String {
    format!("{}\t{}", pair.antigen, pair.k_value)
}

/// Writes the pair-dump mirror for a whole output list.
pub fn write_pairs<T: Real, W: Write>(pairs: &[OutputPair<T>], out: &mut W) -> io::Result<()> {
    for p in pairs {
        writeln!(out, "{}", pair_line(p))?;
    }
    Ok(())
}

/// The detector population plus the run state that accumulates around it.
#[derive(Debug, Clone)]
pub struct Engine<T> {
    config: EngineConfig<T>,
    cells: Vec<DendriticCell<T>>,
    /// Count of antigen events consumed (θ).
    antigen_counter: u64,
    /// Count of events consumed; event times must not decrease.
    tick: u64,
    last_time: Option<u64>,
    output: OutputList<T>,
    /// Lifetime antigen intake per cell, for sampling-balance checks.
    intake: Vec<u64>,
}

impl<T: Real> Engine<T> {
    /// Initialises the population: every cell starts with its assigned
    /// lifespan, a zero signal profile and an empty antigen list.
    pub fn new(config: EngineConfig<T>) -> Result<Self, ConfigError> {
        config.validate()?;
        let n = config.population_size;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let lifespans: Vec<T> = match config.lifespan {
            LifespanDistribution::EvenlySpaced { min, max } => (0..n)
                .map(|i| {
                    if n == 1 {
                        min
                    } else {
                        let step = (max - min) / T::of((n - 1) as f64);
                        min + step * T::of(i as f64)
                    }
                })
                .collect(),
            LifespanDistribution::Uniform { min, max } => {
                let (lo, hi) = (min.to_f64().unwrap(), max.to_f64().unwrap());
                (0..n).map(|_| T::of(rng.random_range(lo..=hi))).collect()
            }
            LifespanDistribution::Gaussian { mean, std_dev, floor } => {
                let normal = Normal::new(mean.to_f64().unwrap(), std_dev.to_f64().unwrap())
                    .expect("validated gaussian parameters");
                (0..n).map(|_| T::of(normal.sample(&mut rng)).max(floor)).collect()
            }
        };
        let cells = lifespans
            .into_iter()
            .enumerate()
            .map(|(i, lifespan)| DendriticCell::new(i + 1, lifespan))
            .collect();
        Ok(Self {
            config,
            cells,
            antigen_counter: 0,
            tick: 0,
            last_time: None,
            output: OutputList::new(),
            intake: vec![0; n],
        })
    }

    pub fn config(&self) -> &EngineConfig<T> {
        &self.config
    }

    pub fn population(&self) -> &[DendriticCell<T>] {
        &self.cells
    }

    /// Number of antigen events consumed so far (θ).
    pub fn antigen_counter(&self) -> u64 {
        self.antigen_counter
    }

    /// Number of events consumed so far.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn output(&self) -> &OutputList<T> {
        &self.output
    }

    /// Lifetime antigen intake per cell (includes already-emitted antigens).
    pub fn intake_counts(&self) -> &[u64] {
        &self.intake
    }

    /// Antigen instances currently held across the population.
    pub fn held_antigens(&self) -> usize {
        self.cells.iter().map(|c| c.antigen_profile.len()).sum()
    }

    /// Stores an antigen with the next cell in round-robin order and
    /// returns that cell's 1-based index.
    pub fn sample_antigen(&mut self, antigen: crate::model::AntigenId) -> usize {
        self.antigen_counter += 1;
        let idx = ((self.antigen_counter - 1) % self.cells.len() as u64) as usize;
        self.cells[idx].antigen_profile.push(antigen);
        self.intake[idx] += 1;
        idx + 1
    }

    /// Applies one event and returns the number of output pairs it
    /// produced. Events must arrive in nondecreasing time order.
    pub fn process_event(&mut self, event: &StreamEvent<T>) -> Result<usize, EngineError> {
        if let Some(prev) = self.last_time {
            if event.time < prev {
                return Err(EngineError::NonMonotonicTime { time: event.time, prev });
            }
        }
        self.last_time = Some(event.time);
        self.tick += 1;
        match event.payload {
            EventPayload::Antigen(antigen) => {
                self.sample_antigen(antigen);
                Ok(0)
            }
            EventPayload::Signal(signal) => {
                // Transformed once per tick; identical for every cell.
                let o = transform_signal(&signal, &self.config.weights)
                    .map_err(|_| EngineError::NonFiniteSignal { tick: self.tick })?;
                let mut emitted = 0;
                for cell in &mut self.cells {
                    let f = update_lifespan(cell, o.csm);
                    let g = update_signal_profile(cell, o.k);
                    cell.remaining_lifespan = f;
                    cell.signal_profile = g;
                    // tick > 0 always holds here: a signal event is being
                    // processed, so at least one event exists.
                    if f <= T::zero() {
                        emitted += emit_record(cell, &mut self.output);
                    }
                }
                Ok(emitted)
            }
        }
    }

    /// End-of-stream handling: records every still-held antigen with its
    /// cell's current signal profile, in cell-index order. Lifespans and
    /// profiles are untouched. Returns the number of pairs appended.
    pub fn flush(&mut self) -> usize {
        let mut emitted = 0;
        for cell in &mut self.cells {
            emitted += emit_record(cell, &mut self.output);
        }
        emitted
    }

    /// Convenience driver: processes the whole stream, flushing at the end
    /// when the config asks for it.
    pub fn run<'a, I>(&mut self, events: I) -> Result<(), EngineError>
    where
        I: IntoIterator<Item = &'a StreamEvent<T>>,
        T: 'a,
    {
        for event in events {
            self.process_event(event)?;
        }
        if self.config.flush_at_end {
            self.flush();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AntigenId;

    fn evenly(n: usize, min: f64, max: f64) -> EngineConfig<f64> {
        EngineConfig {
            population_size: n,
            lifespan: LifespanDistribution::EvenlySpaced { min, max },
            ..EngineConfig::default()
        }
    }

    fn sig(p: f64, d: f64, s: f64) -> StreamEvent<f64> {
        StreamEvent::signal(0, SignalVector { pamp: p, danger: d, safe: s })
    }

    #[test]
    fn evenly_spaced_lifespans() {
        let e = Engine::new(evenly(3, 100.0, 300.0)).unwrap();
        let spans: Vec<f64> = e.population().iter().map(|c| c.initial_lifespan).collect();
        assert_eq!(spans, vec![100.0, 200.0, 300.0]);
    }

    #[test]
    fn single_cell_lifespan_is_min() {
        let e = Engine::new(evenly(1, 50.0, 500.0)).unwrap();
        assert_eq!(e.population()[0].initial_lifespan, 50.0);
    }

    #[test]
    fn fresh_population_state() {
        for lifespan in [
            LifespanDistribution::EvenlySpaced { min: 10.0, max: 20.0 },
            LifespanDistribution::Uniform { min: 10.0, max: 20.0 },
            LifespanDistribution::gaussian(15.0, 4.0),
        ] {
            let e = Engine::new(EngineConfig { population_size: 5, lifespan, ..Default::default() })
                .unwrap();
            for c in e.population() {
                assert_eq!(c.signal_profile, 0.0);
                assert!(c.antigen_profile.is_empty());
                assert!(c.initial_lifespan > 0.0);
                assert_eq!(c.remaining_lifespan, c.initial_lifespan);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert_eq!(Engine::new(evenly(0, 100.0, 300.0)).unwrap_err(), ConfigError::EmptyPopulation);
        assert!(matches!(
            Engine::new(evenly(3, 0.0, 300.0)).unwrap_err(),
            ConfigError::BadLifespanBounds { .. }
        ));
        assert!(matches!(
            Engine::new(evenly(3, 300.0, 100.0)).unwrap_err(),
            ConfigError::BadLifespanBounds { .. }
        ));
    }

    #[test]
    fn transform_examples() {
        let w = WeightMatrix::standard();
        let o = transform_signal(&SignalVector { pamp: 1.0, danger: 0.0, safe: 0.0 }, &w).unwrap();
        assert_eq!((o.csm, o.k), (2.0, 2.0));

        let o = transform_signal(&SignalVector { pamp: 0.0, danger: 0.0, safe: 0.0 }, &w).unwrap();
        assert_eq!((o.csm, o.k), (0.0, 0.0));

        let o = transform_signal(&SignalVector { pamp: 0.5, danger: 0.5, safe: 1.0 }, &w).unwrap();
        assert_eq!((o.csm, o.k), (3.5, -1.5));
    }

    #[test]
    fn transform_rejects_non_finite() {
        let w = WeightMatrix::standard();
        let s = SignalVector { pamp: f64::NAN, danger: 0.0, safe: 0.0 };
        assert!(transform_signal(&s, &w).is_err());
    }

    #[test]
    fn lifespan_update_cases() {
        // Fresh cell: full lifespan before any signal.
        let cell = DendriticCell::new(1, 100.0);
        assert_eq!(cell.remaining_lifespan, 100.0);

        // Ordinary depletion.
        let mut cell = DendriticCell::new(1, 100.0);
        cell.remaining_lifespan = 60.0;
        assert_eq!(update_lifespan(&cell, 40.0), 20.0);

        // Matured cell restarts from its initial lifespan.
        cell.remaining_lifespan = -20.0;
        assert_eq!(update_lifespan(&cell, 5.0), 95.0);
    }

    #[test]
    fn signal_profile_update_cases() {
        let mut cell = DendriticCell::new(1, 100.0);
        assert_eq!(cell.signal_profile, 0.0);

        cell.signal_profile = 1.5;
        assert_eq!(update_signal_profile(&cell, -3.0), -1.5);

        // Reset branch: profile restarts from zero before accumulating.
        cell.signal_profile = 7.0;
        cell.remaining_lifespan = -1.0;
        assert_eq!(update_signal_profile(&cell, 2.0), 2.0);
    }

    #[test]
    fn sequential_sampling_indices() {
        let mut e = Engine::new(evenly(100, 100.0, 300.0)).unwrap();
        assert_eq!(e.sample_antigen(AntigenId(7)), 1);
        for i in 2..=99 {
            assert_eq!(e.sample_antigen(AntigenId(7)), i);
        }
        assert_eq!(e.sample_antigen(AntigenId(7)), 100);
        assert_eq!(e.sample_antigen(AntigenId(7)), 1); // wrap-around
    }

    #[test]
    fn emit_record_cases() {
        let mut out = OutputList::new();
        let mut cell = DendriticCell::new(1, 10.0);
        cell.antigen_profile = vec![AntigenId(5), AntigenId(5), AntigenId(7)];
        cell.signal_profile = 4.2;
        assert_eq!(emit_record(&mut cell, &mut out), 3);
        let got: Vec<(u64, f64)> = out.iter().map(|p| (p.antigen.0, p.k_value)).collect();
        assert_eq!(got, vec![(5, 4.2), (5, 4.2), (7, 4.2)]);
        assert!(cell.antigen_profile.is_empty());

        // Empty antigen profile: nothing recorded.
        let mut cell = DendriticCell::new(1, 10.0);
        cell.signal_profile = -1.0;
        assert_eq!(emit_record(&mut cell, &mut out), 0);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn no_emission_while_alive() {
        // One cell, lifespan 20: a single (1,0,0) signal leaves F=18 > 0.
        let mut e = Engine::new(evenly(1, 20.0, 20.0)).unwrap();
        e.process_event(&StreamEvent::antigen(1, AntigenId(9))).unwrap();
        let n = e.process_event(&sig(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(n, 0);
        assert!(e.output().is_empty());
    }

    #[test]
    fn hand_traced_single_cell_run() {
        // I = 10, antigen 4, then five (1,0,0) signals: each gives csm=2,
        // k=2, so F hits 0 at the fifth signal with G = 10.
        let mut e = Engine::new(evenly(1, 10.0, 10.0)).unwrap();
        e.process_event(&StreamEvent::antigen(1, AntigenId(4))).unwrap();
        for t in 2..=5 {
            assert_eq!(e.process_event(&sig(1.0, 0.0, 0.0)).unwrap(), 0, "tick {t}");
        }
        assert_eq!(e.process_event(&sig(1.0, 0.0, 0.0)).unwrap(), 1);
        let got: Vec<(u64, f64)> = e.output().iter().map(|p| (p.antigen.0, p.k_value)).collect();
        assert_eq!(got, vec![(4, 10.0)]);
    }

    #[test]
    fn antigen_free_stream_emits_nothing() {
        let mut e = Engine::new(evenly(3, 5.0, 15.0)).unwrap();
        for _ in 0..50 {
            e.process_event(&sig(30.0, 10.0, 5.0)).unwrap();
        }
        assert!(e.output().is_empty());
        e.flush();
        assert!(e.output().is_empty());
    }

    #[test]
    fn signal_free_stream_emits_nothing_without_flush() {
        let mut e = Engine::new(evenly(3, 5.0, 15.0)).unwrap();
        for i in 0..10 {
            e.process_event(&StreamEvent::antigen(i, AntigenId(i))).unwrap();
        }
        assert!(e.output().is_empty());
        assert_eq!(e.held_antigens(), 10);
    }

    #[test]
    fn flush_records_held_antigens() {
        let mut e = Engine::new(evenly(1, 100.0, 100.0)).unwrap();
        e.process_event(&StreamEvent::antigen(1, AntigenId(9))).unwrap();
        e.process_event(&sig(0.5, 0.0, 0.0)).unwrap(); // k = 1.0, F = 99
        assert!(e.output().is_empty());
        assert_eq!(e.flush(), 1);
        let got: Vec<(u64, f64)> = e.output().iter().map(|p| (p.antigen.0, p.k_value)).collect();
        assert_eq!(got, vec![(9, 1.0)]);
        // Flushing again is a no-op: antigen lists were emptied.
        assert_eq!(e.flush(), 0);
    }

    #[test]
    fn out_of_order_events_rejected() {
        let mut e = Engine::new(evenly(1, 10.0, 10.0)).unwrap();
        e.process_event(&StreamEvent::antigen(5, AntigenId(1))).unwrap();
        let err = e.process_event(&StreamEvent::antigen(4, AntigenId(1))).unwrap_err();
        assert_eq!(err, EngineError::NonMonotonicTime { time: 4, prev: 5 });
    }

    #[test]
    fn identical_seed_identical_population() {
        let cfg = EngineConfig::<f64> {
            population_size: 20,
            lifespan: LifespanDistribution::gaussian(200.0, 50.0),
            rng_seed: 99,
            ..Default::default()
        };
        let a = Engine::new(cfg.clone()).unwrap();
        let b = Engine::new(cfg).unwrap();
        assert_eq!(a.population(), b.population());
    }

    #[test]
    fn gaussian_lifespans_respect_floor() {
        let cfg = EngineConfig::<f64> {
            population_size: 1000,
            lifespan: LifespanDistribution::gaussian(1.0, 50.0),
            rng_seed: 7,
            ..Default::default()
        };
        let e = Engine::new(cfg).unwrap();
        for c in e.population() {
            assert!(c.initial_lifespan >= 0.01);
        }
    }

    #[test]
    fn pair_line_round_trips_precision() {
        let p = OutputPair::new(AntigenId(3), 0.1 + 0.2);
        let line = pair_line(&p);
        let k: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert_eq!(k, 0.1 + 0.2);
    }
}
