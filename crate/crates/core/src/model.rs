//! Domain types shared by the engine, the analysis stage and preprocessing.

use std::fmt;

use thiserror::Error;

use crate::Real;

/// Errors from constructing the shared domain types.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("signal components must be finite, got ({0}, {1}, {2})")]
    NonFiniteSignal(f64, f64, f64),
    #[error("signal components must be nonnegative, got ({0}, {1}, {2})")]
    NegativeSignal(f64, f64, f64),
    #[error("weight matrix entries must be finite")]
    NonFiniteWeight,
    #[error("csm weights must be nonnegative with at least one positive entry")]
    InvalidCsmRow,
}

/// One categorised signal sample: PAMP, danger and safe components,
/// normalised into a nonnegative range (`[0, s_max]`, 100 by default).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalVector<T> {
    pub pamp: T,
    pub danger: T,
    pub safe: T,
}

impl<T: Real> SignalVector<T> {
    /// Validating constructor: components must be finite and nonnegative.
    pub fn new(pamp: T, danger: T, safe: T) -> Result<Self, ModelError> {
        let v = Self { pamp, danger, safe };
        if !v.is_finite() {
            return Err(ModelError::NonFiniteSignal(
                pamp.to_f64().unwrap_or(f64::NAN),
                danger.to_f64().unwrap_or(f64::NAN),
                safe.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if pamp < T::zero() || danger < T::zero() || safe < T::zero() {
            return Err(ModelError::NegativeSignal(
                pamp.to_f64().unwrap(),
                danger.to_f64().unwrap(),
                safe.to_f64().unwrap(),
            ));
        }
        Ok(v)
    }

    pub fn is_finite(&self) -> bool {
        self.pamp.is_finite() && self.danger.is_finite() && self.safe.is_finite()
    }
}

/// Categorical identifier of the entity being classified. Ordering carries
/// no domain meaning; it is only used for deterministic report layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AntigenId(pub u64);

impl fmt::Display for AntigenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Payload of one stream event: exactly one of a signal vector or an
/// antigen identifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventPayload<T> {
    Signal(SignalVector<T>),
    Antigen(AntigenId),
}

/// A timestamped input item. Tick indices start at 1; tick 0 is the
/// population initialisation point and never carries an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamEvent<T> {
    pub time: u64,
    pub payload: EventPayload<T>,
}

impl<T> StreamEvent<T> {
    pub fn signal(time: u64, signal: SignalVector<T>) -> Self {
        Self { time, payload: EventPayload::Signal(signal) }
    }

    pub fn antigen(time: u64, antigen: AntigenId) -> Self {
        Self { time, payload: EventPayload::Antigen(antigen) }
    }
}

/// The 2x3 signal transformation matrix. Row one produces the
/// costimulation value (csm) that depletes cell lifespans, row two the
/// signed context value (k) accumulated into signal profiles. Entries are
/// fixed for the lifetime of a run.
///
/// Rows are laid out `[pamp, danger, safe]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMatrix<T> {
    pub csm: [T; 3],
    pub k: [T; 3],
}

impl<T: Real> WeightMatrix<T> {
    /// Validates that all entries are finite and that the csm row is
    /// nonnegative with at least one positive entry, so lifespans deplete
    /// monotonically between resets.
    pub fn new(csm: [T; 3], k: [T; 3]) -> Result<Self, ModelError> {
        if csm.iter().chain(k.iter()).any(|w| !w.is_finite()) {
            return Err(ModelError::NonFiniteWeight);
        }
        if csm.iter().any(|w| *w < T::zero()) || csm.iter().all(|w| *w == T::zero()) {
            return Err(ModelError::InvalidCsmRow);
        }
        Ok(Self { csm, k })
    }

    /// The conventional weights: csm row (2, 1, 2) and k row (2, 1, -3).
    /// The negative safe entry in the k row is what lets safe signals
    /// suppress the pamp and danger contributions.
    pub fn standard() -> Self {
        Self {
            csm: [T::of(2.0), T::one(), T::of(2.0)],
            k: [T::of(2.0), T::one(), T::of(-3.0)],
        }
    }
}

impl<T: Real> Default for WeightMatrix<T> {
    fn default() -> Self {
        Self::standard()
    }
}

/// The two output signals of one transformed signal event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSignals<T> {
    /// Costimulation value; subtracted from every cell's remaining lifespan.
    pub csm: T,
    /// Context value; added to every cell's signal profile. Signed.
    pub k: T,
}

/// One detector of the population.
///
/// `remaining_lifespan` and `signal_profile` follow a lazy reset protocol:
/// a cell whose lifespan has run out keeps its stale values until the next
/// signal event, which starts from `initial_lifespan` and a zero profile
/// again. The antigen profile is cleared eagerly when the cell's output is
/// recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct DendriticCell<T> {
    /// 1-based position in the population.
    pub index: usize,
    pub initial_lifespan: T,
    pub remaining_lifespan: T,
    pub signal_profile: T,
    pub antigen_profile: Vec<AntigenId>,
}

impl<T: Real> DendriticCell<T> {
    /// A fresh cell: full lifespan, zero profile, nothing sampled.
    pub fn new(index: usize, initial_lifespan: T) -> Self {
        debug_assert!(initial_lifespan > T::zero());
        Self {
            index,
            initial_lifespan,
            remaining_lifespan: initial_lifespan,
            signal_profile: T::zero(),
            antigen_profile: Vec::new(),
        }
    }
}

/// One `(antigen, k-value)` record produced by a maturing cell. The k value
/// is the cell's signal profile at the moment of maturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputPair<T> {
    pub antigen: AntigenId,
    pub k_value: T,
}

impl<T> OutputPair<T> {
    pub fn new(antigen: AntigenId, k_value: T) -> Self {
        Self { antigen, k_value }
    }
}

/// Append-only list of output pairs. Duplicates are kept and order is
/// preserved; nothing removes or reorders elements within a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputList<T> {
    pairs: Vec<OutputPair<T>>,
}

impl<T> OutputList<T> {
    pub fn new() -> Self {
        Self { pairs: Vec::new() }
    }

    /// Appends one pair at the tail. Prior elements and their order are
    /// untouched; duplicates are not eliminated.
    pub fn append(&mut self, pair: OutputPair<T>) {
        self.pairs.push(pair);
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[OutputPair<T>] {
        &self.pairs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, OutputPair<T>> {
        self.pairs.iter()
    }
}

impl<T> std::ops::Index<usize> for OutputList<T> {
    type Output = OutputPair<T>;

    fn index(&self, j: usize) -> &OutputPair<T> {
        &self.pairs[j]
    }
}

impl<'a, T> IntoIterator for &'a OutputList<T> {
    type Item = &'a OutputPair<T>;
    type IntoIter = std::slice::Iter<'a, OutputPair<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}
