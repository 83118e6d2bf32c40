//! Greedy assignment of candidate signals to the pamp/danger/safe
//! categories, driven by the mean square error of a full detection run on
//! the training split.
//!
//! Candidates positively associated with the anomaly label are eligible
//! for pamp and danger, negatively associated ones for safe. When a
//! category has no eligible candidate at all (common on data where every
//! feature moves the same way), it falls back to taking candidates with
//! inverted values so its semantics still hold. Principal-component
//! candidates carry no association; the search is free to place and orient
//! them wherever the error drops.

use std::collections::BTreeMap;

use crate::analysis::score_all;
use crate::engine::{Engine, EngineConfig};
use crate::model::{AntigenId, SignalVector, StreamEvent};
use crate::preprocess::{
    signal_from_candidates, AssignedCandidate, Association, Orientation, PreprocessError,
    SignalCategory,
};
use crate::Real;

pub(crate) const CATEGORIES: [SignalCategory; 3] =
    [SignalCategory::Pamp, SignalCategory::Danger, SignalCategory::Safe];

/// Evaluates a candidate assignment: lower is better.
pub trait MseScorer<T: Real> {
    /// Mean square error of the detection outcome on `signals` against the
    /// per-row labels, with row index serving as the antigen.
    fn mse(&mut self, signals: &[SignalVector<T>], labels: &[bool]) -> Result<T, PreprocessError>;
}

/// The real measure: run the detection engine over the training rows
/// (one antigen plus one signal event per row), score every antigen
/// offline, min-max normalize the scores into [0, 1] and average the
/// squared distance to the labels.
///
/// The run always flushes at end of stream so every training row receives
/// a score even when lifespans exceed the stream length.
#[derive(Debug, Clone)]
pub struct DcaMseScorer<T> {
    pub engine_config: EngineConfig<T>,
}

impl<T: Real> DcaMseScorer<T> {
    pub fn new(engine_config: EngineConfig<T>) -> Self {
        Self { engine_config }
    }
}

impl<T: Real> MseScorer<T> for DcaMseScorer<T> {
    fn mse(&mut self, signals: &[SignalVector<T>], labels: &[bool]) -> Result<T, PreprocessError> {
        let mut config = self.engine_config.clone();
        config.flush_at_end = true;
        let mut engine = Engine::new(config).map_err(crate::engine::EngineError::from)?;
        let mut events = Vec::with_capacity(signals.len() * 2);
        let mut t = 0;
        for (row, &signal) in signals.iter().enumerate() {
            t += 1;
            events.push(StreamEvent::antigen(t, AntigenId(row as u64)));
            t += 1;
            events.push(StreamEvent::signal(t, signal));
        }
        engine.run(&events)?;

        let scores = score_all(engine.output().pairs());
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for s in &scores {
            lo = lo.min(s.score);
            hi = hi.max(s.score);
        }
        let spread = hi - lo;
        let mut acc = T::zero();
        for s in &scores {
            let normalized = if spread > T::zero() { (s.score - lo) / spread } else { T::zero() };
            let label = if labels[s.antigen.0 as usize] { T::one() } else { T::zero() };
            acc = acc + (normalized - label) * (normalized - label);
        }
        Ok(acc / T::of(scores.len().max(1) as f64))
    }
}

/// Which categories a candidate may occupy directly, given its label
/// association. `None` (principal components) fits anywhere.
fn eligible(assoc: Option<Association>, cat: SignalCategory) -> bool {
    match assoc {
        Some(Association::Positive) => cat != SignalCategory::Safe,
        Some(Association::Negative) => cat == SignalCategory::Safe,
        None => true,
    }
}

/// Orientation choices for a candidate in a category. Association fixes
/// it: direct when the direction already matches the category, inverted
/// for a fallback cross-assignment. Unassociated candidates try both.
fn orientations(assoc: Option<Association>, cat: SignalCategory) -> &'static [Orientation] {
    match assoc {
        Some(_) if eligible(assoc, cat) => &[Orientation::Direct],
        Some(_) => &[Orientation::Inverted],
        None => &[Orientation::Direct, Orientation::Inverted],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    category: SignalCategory,
    orientation: Orientation,
}

/// Greedy search state: one optional slot per candidate, by rank.
struct Search<'a, T: Real, S: MseScorer<T>> {
    values: &'a [Vec<T>],
    labels: &'a [bool],
    assoc: &'a [Option<Association>],
    s_max: T,
    scorer: &'a mut S,
    memo: BTreeMap<Vec<(u8, u8)>, T>,
    /// Categories with at least one eligible candidate in the pool; the
    /// others accept fallback (inverted) assignments.
    pool_eligible: [bool; 3],
}

impl<'a, T: Real, S: MseScorer<T>> Search<'a, T, S> {
    fn allowed(&self, candidate: usize, cat: SignalCategory) -> bool {
        eligible(self.assoc[candidate], cat) || !self.pool_eligible[cat as usize]
    }

    fn evaluate(&mut self, slots: &[Option<Slot>]) -> Result<T, PreprocessError> {
        let key: Vec<(u8, u8)> = slots
            .iter()
            .map(|s| match s {
                None => (u8::MAX, 0),
                Some(slot) => (slot.category as u8, slot.orientation as u8),
            })
            .collect();
        if let Some(&mse) = self.memo.get(&key) {
            return Ok(mse);
        }
        let assignment = slots_to_assignment(slots);
        let signals: Vec<SignalVector<T>> = self
            .values
            .iter()
            .map(|row| signal_from_candidates(row, &assignment, self.s_max))
            .collect();
        let mse = self.scorer.mse(&signals, self.labels)?;
        self.memo.insert(key, mse);
        Ok(mse)
    }
}

fn slots_to_assignment(slots: &[Option<Slot>]) -> Vec<AssignedCandidate> {
    slots
        .iter()
        .enumerate()
        .filter_map(|(candidate, s)| {
            s.map(|slot| AssignedCandidate {
                candidate,
                category: slot.category,
                orientation: slot.orientation,
            })
        })
        .collect()
}

/// Runs the greedy search. `values` holds the normalized candidate matrix
/// (rows by candidates, candidate columns ordered by selection rank) and
/// `assoc` the per-candidate label association. Returns the assignment
/// sorted by category then rank.
pub fn categorize_greedy<T: Real, S: MseScorer<T>>(
    values: &[Vec<T>],
    assoc: &[Option<Association>],
    labels: &[bool],
    s_max: T,
    scorer: &mut S,
) -> Result<Vec<AssignedCandidate>, PreprocessError> {
    let d = assoc.len();
    if d < 3 {
        return Err(PreprocessError::TooFewCandidates { have: d });
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(PreprocessError::DegenerateLabels);
    }

    let mut pool_eligible = [false; 3];
    for cat in CATEGORIES {
        pool_eligible[cat as usize] = assoc.iter().any(|&a| eligible(a, cat));
    }

    let mut search =
        Search { values, labels, assoc, s_max, scorer, memo: BTreeMap::new(), pool_eligible };

    // Seeding pass 1: each category takes its best-ranked eligible
    // candidate. Pass 2 fills still-empty categories with the best-ranked
    // leftovers, inverted when their direction disagrees.
    let mut slots: Vec<Option<Slot>> = vec![None; d];
    for cat in CATEGORIES {
        if let Some(c) = (0..d).find(|&c| slots[c].is_none() && eligible(assoc[c], cat)) {
            slots[c] = Some(Slot { category: cat, orientation: Orientation::Direct });
        }
    }
    for cat in CATEGORIES {
        if slots.iter().flatten().any(|s| s.category == cat) {
            continue;
        }
        let c = (0..d).find(|&c| slots[c].is_none()).expect("d >= 3 leaves a free candidate");
        let orientation = orientations(assoc[c], cat)[0];
        slots[c] = Some(Slot { category: cat, orientation });
    }

    let mut best_mse = search.evaluate(&slots)?;

    // Improvement loop: single-candidate reassignments, orientation flips
    // and additions, keeping the first strictest improvement per round.
    loop {
        let mut best_move: Option<(Vec<Option<Slot>>, T)> = None;
        for c in 0..d {
            let mut trials: Vec<Slot> = Vec::new();
            for cat in CATEGORIES {
                if Some(cat) == slots[c].map(|s| s.category) {
                    // Same category: only an orientation flip is new.
                    if let Some(current) = slots[c] {
                        for &o in orientations(assoc[c], cat) {
                            if o != current.orientation {
                                trials.push(Slot { category: cat, orientation: o });
                            }
                        }
                    }
                    continue;
                }
                if !search.allowed(c, cat) {
                    continue;
                }
                for &o in orientations(assoc[c], cat) {
                    trials.push(Slot { category: cat, orientation: o });
                }
            }
            for slot in trials {
                // Moving c must not empty its current category.
                if let Some(current) = slots[c] {
                    let remaining = slots
                        .iter()
                        .enumerate()
                        .filter(|&(i, s)| {
                            i != c && s.map(|x| x.category) == Some(current.category)
                        })
                        .count();
                    if remaining == 0 && slot.category != current.category {
                        continue;
                    }
                }
                let mut next = slots.clone();
                next[c] = Some(slot);
                let mse = search.evaluate(&next)?;
                if mse < best_mse && best_move.as_ref().map_or(true, |(_, m)| mse < *m) {
                    best_move = Some((next, mse));
                }
            }
        }
        match best_move {
            Some((next, mse)) => {
                slots = next;
                best_mse = mse;
            }
            None => break,
        }
    }

    let mut assignment = slots_to_assignment(&slots);
    assignment.sort_by_key(|a| (a.category as u8, a.candidate));
    Ok(assignment)
}

fn cat_first(assoc: Option<Association>, cat: SignalCategory) -> usize {
    let _ = (assoc, cat);
    0
}
