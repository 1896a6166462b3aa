//! Trigger-level precision, recall and F1, and relation-parameter counting.

use alloc::collections::BTreeSet;
use alloc::format;

use crate::corpus::Span;
use crate::error::{Error, Result};
use crate::model::Baseline;

/// Counts and derived scores at one granularity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Prf {
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    /// Harmonic mean of P and R; `0` when both are zero.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn merge(&mut self, other: &Prf) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Identification counts a span as correct when its offsets match a gold
/// trigger; classification also requires the event type to match.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScoreReport {
    pub identification: Prf,
    pub classification: Prf,
}

impl ScoreReport {
    /// Counts of two disjoint evaluation sets added together.
    pub fn merge(&mut self, other: &ScoreReport) {
        self.identification.merge(&other.identification);
        self.classification.merge(&other.classification);
    }
}

fn check_disjoint(spans: &[Span], sentence: usize) -> Result<()> {
    let mut sorted: alloc::vec::Vec<&Span> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if s.start >= s.end {
            return Err(Error::invalid("predicted span", format!("empty span in sentence {sentence}")));
        }
    }
    for w in sorted.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::invalid(
                "predicted span",
                format!(
                    "[{}, {}) overlaps [{}, {}) in sentence {sentence}",
                    w[0].start, w[0].end, w[1].start, w[1].end
                ),
            ));
        }
    }
    Ok(())
}

/// Scores per-sentence predictions against gold triggers. Exact span
/// matching; each gold trigger is matched at most once.
pub fn score(gold: &[alloc::vec::Vec<Span>], predicted: &[alloc::vec::Vec<Span>]) -> Result<ScoreReport> {
    if gold.len() != predicted.len() {
        return Err(Error::dim("score", &[gold.len()], &[predicted.len()]));
    }
    let mut report = ScoreReport::default();
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        check_disjoint(p, i)?;
        let typed: BTreeSet<Span> = g.iter().copied().collect();
        let mut offsets: BTreeSet<(usize, usize)> = g.iter().map(|s| (s.start, s.end)).collect();
        let mut typed_left = typed;
        for s in p {
            if offsets.remove(&(s.start, s.end)) {
                report.identification.correct += 1;
            }
            if typed_left.remove(s) {
                report.classification.correct += 1;
            }
        }
        for prf in [&mut report.identification, &mut report.classification] {
            prf.gold += g.len();
            prf.predicted += p.len();
        }
    }
    Ok(report)
}

/// Relation-specific parameters: `p·r` edge-label embeddings for EE-GCN,
/// `r·d·d` relation filters for RGCN, none for the plain GCN.
pub fn count_relation_params(kind: Baseline, r: i64, p: i64, d: i64) -> Result<u64> {
    if r < 0 || p < 0 || d < 0 {
        return Err(Error::Argument(format!("negative size in ({r}, {p}, {d})")));
    }
    let (r, p, d) = (r as u64, p as u64, d as u64);
    Ok(match kind {
        Baseline::EeGcn => p * r,
        Baseline::Rgcn => r * d * d,
        Baseline::Gcn => 0,
    })
}
