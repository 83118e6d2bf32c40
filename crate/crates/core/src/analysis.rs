//! Turning the output list into per-antigen anomaly scores and verdicts.
//!
//! The anomaly score of an antigen type is the mean k value over all of
//! its output pairs; a score strictly above the threshold is classified
//! anomalous. Offline analysis scans a complete list. Online analysis
//! consumes pairs as the engine emits them and publishes one report per
//! fixed-size segment, so verdicts become available during detection
//! instead of after it.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::model::{AntigenId, OutputPair};
use crate::Real;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("antigen {0} does not occur in the output list")]
    AntigenAbsent(AntigenId),
    #[error("segment size must be at least 1")]
    ZeroSegmentSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Normal,
    Anomalous,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Normal => "normal",
            Verdict::Anomalous => "anomalous",
        }
    }
}

/// Score of one antigen type over one analyzed span: occurrence count β,
/// k-value sum γ, their ratio, and the verdict once classified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntigenScore<T> {
    pub antigen: AntigenId,
    pub count: u64,
    pub k_sum: T,
    pub score: T,
    pub verdict: Option<Verdict>,
}

/// Counts the pairs whose antigen equals `antigen`. Full scan.
pub fn count_antigen<T: Real>(lst: &[OutputPair<T>], antigen: AntigenId) -> u64 {
    lst.iter().filter(|p| p.antigen == antigen).count() as u64
}

/// Sums the k values of the pairs whose antigen equals `antigen`.
pub fn sum_k<T: Real>(lst: &[OutputPair<T>], antigen: AntigenId) -> T {
    lst.iter()
        .filter(|p| p.antigen == antigen)
        .fold(T::zero(), |acc, p| acc + p.k_value)
}

/// Mean k value of one antigen type over the whole list. Errors when the
/// antigen never occurs; callers enumerate observed types only.
pub fn anomaly_score<T: Real>(
    lst: &[OutputPair<T>],
    antigen: AntigenId,
) -> Result<AntigenScore<T>, AnalysisError> {
    let count = count_antigen(lst, antigen);
    if count == 0 {
        return Err(AnalysisError::AntigenAbsent(antigen));
    }
    let k_sum = sum_k(lst, antigen);
    Ok(AntigenScore { antigen, count, k_sum, score: k_sum / T::of(count as f64), verdict: None })
}

/// Sets the verdict: anomalous iff the score is strictly greater than the
/// threshold.
pub fn classify<T: Real>(mut score: AntigenScore<T>, threshold: T) -> AntigenScore<T> {
    score.verdict =
        Some(if score.score > threshold { Verdict::Anomalous } else { Verdict::Normal });
    score
}

/// Scores every antigen type observed in the list, ordered by antigen id.
/// Accumulation happens in list order per type, so sums are bit-identical
/// to the per-type full scans.
pub fn score_all<T: Real>(lst: &[OutputPair<T>]) -> Vec<AntigenScore<T>> {
    let mut acc: BTreeMap<AntigenId, (u64, T)> = BTreeMap::new();
    for p in lst {
        let e = acc.entry(p.antigen).or_insert((0, T::zero()));
        e.0 += 1;
        e.1 = e.1 + p.k_value;
    }
    acc.into_iter()
        .map(|(antigen, (count, k_sum))| AntigenScore {
            antigen,
            count,
            k_sum,
            score: k_sum / T::of(count as f64),
            verdict: None,
        })
        .collect()
}

/// What closes a segment: a fixed number of output pairs, or a fixed span
/// of event ticks. Pair counting is the default; it is deterministic under
/// replay regardless of how signals and antigens interleave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentUnit {
    Pairs(usize),
    Ticks(u64),
}

/// Analysis result for one segment of the output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport<T> {
    pub segment_index: u64,
    /// Global indices of the first and last output pair in this segment.
    pub span: (u64, u64),
    /// One classified score per antigen type observed in this segment,
    /// ordered by antigen id.
    pub scores: Vec<AntigenScore<T>>,
    /// True for a trailing segment cut short by end of stream.
    pub partial: bool,
}

/// Streaming segment analyzer. Feed it output pairs in emission order;
/// every completed segment comes back as a report before the next pair
/// has to be consumed. Completed segments are immutable.
#[derive(Debug, Clone)]
pub struct SegmentAnalyzer<T> {
    unit: SegmentUnit,
    threshold: T,
    acc: BTreeMap<AntigenId, (u64, T)>,
    pairs_in_segment: usize,
    next_index: u64,
    total_pairs: u64,
    segment_first_pair: u64,
    /// Tick-mode window start; set by the first pair seen.
    window_start: Option<u64>,
}

impl<T: Real> SegmentAnalyzer<T> {
    pub fn new(unit: SegmentUnit, threshold: T) -> Result<Self, AnalysisError> {
        match unit {
            SegmentUnit::Pairs(0) => return Err(AnalysisError::ZeroSegmentSize),
            SegmentUnit::Ticks(0) => return Err(AnalysisError::ZeroSegmentSize),
            _ => {}
        }
        Ok(Self {
            unit,
            threshold,
            acc: BTreeMap::new(),
            pairs_in_segment: 0,
            next_index: 0,
            total_pairs: 0,
            segment_first_pair: 0,
            window_start: None,
        })
    }

    /// Pair-count segmentation with segment size `z`.
    pub fn by_pairs(z: usize, threshold: T) -> Result<Self, AnalysisError> {
        Self::new(SegmentUnit::Pairs(z), threshold)
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    /// Consumes one pair; `tick` is the event tick it was emitted at (only
    /// consulted in tick mode). Returns the completed segment's report when
    /// this pair closes one.
    pub fn push(&mut self, pair: &OutputPair<T>, tick: u64) -> Option<SegmentReport<T>> {
        let mut closed = None;
        if let SegmentUnit::Ticks(w) = self.unit {
            let window = tick / w;
            match self.window_start {
                None => self.window_start = Some(window),
                Some(current) if window != current => {
                    closed = Some(self.close_segment(current, false));
                    self.window_start = Some(window);
                }
                Some(_) => {}
            }
        }
        let e = self.acc.entry(pair.antigen).or_insert((0, T::zero()));
        e.0 += 1;
        e.1 = e.1 + pair.k_value;
        self.pairs_in_segment += 1;
        self.total_pairs += 1;
        if let SegmentUnit::Pairs(z) = self.unit {
            if self.pairs_in_segment == z {
                let idx = self.next_index;
                closed = Some(self.close_segment(idx, false));
            }
        }
        closed
    }

    /// Closes the trailing segment at end of stream, if one is open. It is
    /// flagged partial: the stream ended before the segment filled.
    pub fn finish(&mut self) -> Option<SegmentReport<T>> {
        if self.pairs_in_segment == 0 {
            return None;
        }
        let idx = match self.unit {
            SegmentUnit::Pairs(_) => self.next_index,
            SegmentUnit::Ticks(_) => self.window_start.unwrap_or(self.next_index),
        };
        Some(self.close_segment(idx, true))
    }

    fn close_segment(&mut self, index: u64, partial: bool) -> SegmentReport<T> {
        let scores = std::mem::take(&mut self.acc)
            .into_iter()
            .map(|(antigen, (count, k_sum))| {
                classify(
                    AntigenScore {
                        antigen,
                        count,
                        k_sum,
                        score: k_sum / T::of(count as f64),
                        verdict: None,
                    },
                    self.threshold,
                )
            })
            .collect();
        let report = SegmentReport {
            segment_index: index,
            span: (self.segment_first_pair, self.total_pairs.saturating_sub(1)),
            scores,
            partial,
        };
        self.pairs_in_segment = 0;
        self.segment_first_pair = self.total_pairs;
        self.next_index = index + 1;
        report
    }
}

/// Fully segments an in-memory list: `z`-sized segments, classified at
/// `threshold`, trailing partial segment included.
pub fn segment_and_analyze<T: Real>(
    lst: &[OutputPair<T>],
    z: usize,
    threshold: T,
) -> Result<Vec<SegmentReport<T>>, AnalysisError> {
    let mut analyzer = SegmentAnalyzer::by_pairs(z, threshold)?;
    let mut reports = Vec::new();
    for p in lst {
        if let Some(r) = analyzer.push(p, 0) {
            reports.push(r);
        }
    }
    if let Some(r) = analyzer.finish() {
        reports.push(r);
    }
    Ok(reports)
}

/// Collects, per antigen type, the sequence of verdicts it received across
/// segments, in segment order.
pub fn verdict_sequences<T: Real>(
    reports: &[SegmentReport<T>],
) -> BTreeMap<AntigenId, Vec<Verdict>> {
    let mut map: BTreeMap<AntigenId, Vec<Verdict>> = BTreeMap::new();
    for report in reports {
        for s in &report.scores {
            map.entry(s.antigen).or_default().push(s.verdict.expect("segment scores classified"));
        }
    }
    map
}

/// Header of the segment-report line format.
pub const SEGMENT_CSV_HEADER: &str = "segment,antigen,count,k_sum,score,verdict,partial";

/// Writes one line per (segment, antigen type) score, comma-separated,
/// floats at full round-trip precision.
pub fn write_segment<T: Real, W: Write>(report: &SegmentReport<T>, out: &mut W) -> io::Result<()> {
    for s in &report.scores {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            report.segment_index,
            s.antigen,
            s.count,
            s.k_sum,
            s.score,
            s.verdict.map_or("unclassified", |v| v.as_str()),
            report.partial,
        )?;
    }
    Ok(())
}
