//! Streaming anomaly detection with a population of dendritic cell detectors.
//!
//! The library is split along the pipeline stages:
//!
//! * [`model`] — shared domain types: signal vectors, antigen identifiers,
//!   the weight matrix and the append-only output list.
//! * [`engine`] — the detector population itself; consumes a stream of
//!   signal/antigen events and emits `(antigen, k)` output pairs.
//! * [`analysis`] — per-antigen anomaly scores and verdicts, offline or in
//!   fixed-size segments for online operation.
//! * [`preprocess`] — automated signal selection and categorisation: min-max
//!   normalisation, correlation / information-gain ranking, principal
//!   component extraction and a greedy MSE-driven category assignment.
//! * [`dataset`] — labeled CSV ingestion, stream synthesis, stratified
//!   k-fold splitting and seeded synthetic benchmark data.
//! * [`eval`] — confusion counts, TPR/FPR and verdict-combination rules.
//!
//! All numeric code is generic over [`Real`], implemented for `f32` and
//! `f64`. The aliases at the crate root pin the common choice.

use std::fmt;

pub mod analysis;
pub mod dataset;
pub mod engine;
pub mod eval;
pub mod model;
pub mod preprocess;

/// Scalar type the whole pipeline is generic over.
///
/// `parse` must round-trip the output of `Display` exactly; the shortest
/// round-trip formatting of `f32`/`f64` guarantees this, which is what makes
/// serialized models and reports bit-exact on reload.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + fmt::Display + fmt::Debug + Send + Sync + 'static
{
    fn parse(s: &str) -> Option<Self>;

    /// Shorthand for the ubiquitous `from_f64(..).unwrap()` on constants.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in every Real type")
    }
}

impl Real for f32 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl Real for f64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

/// Double-precision engine, the default for production runs.
pub type Engine64 = engine::Engine<f64>;
/// Single-precision engine.
pub type Engine32 = engine::Engine<f32>;
/// Double-precision segment analyzer.
pub type SegmentAnalyzer64 = analysis::SegmentAnalyzer<f64>;
/// Double-precision fitted preprocessing model.
pub type PreprocessModel64 = preprocess::PreprocessModel<f64>;
