//! Summary evaluation: ROUGE-1/2/SU4, color matching over highlights,
//! student coverage and the paired t-test.

mod color;
mod rouge;
mod ttest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use color::{assign_colors, color_match, student_coverage, ColoredEntry, ColoredSummary, ColorAssignment, SystemPhrase};
pub use rouge::{rouge_n, rouge_su4, rouge_units};
pub use ttest::{paired_ttest, TTest};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no references given")]
    NoReferences,
    #[error("annotation cell has no responses")]
    NoResponses,
    #[error("paired samples need equal lengths >= 2 (got {0} and {1})")]
    BadSampleSizes(usize, usize),
}

/// Conditions under which a metric falls back to a conventional value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricFlag {
    /// Candidate has no counting units; precision reported as 0.
    EmptyCandidate,
    /// A denominator was zero; the affected score is 0.
    ZeroDenominator,
    /// Differences have zero variance.
    DegenerateVariance,
}

/// A value plus an optional fallback flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged<T> {
    pub value: T,
    pub flag: Option<MetricFlag>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

impl PrfScore {
    pub fn new(p: f64, r: f64) -> Self {
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        PrfScore { p, r, f }
    }

    /// From true positives and the two denominators; an empty denominator
    /// yields 0 for that side.
    pub fn from_counts(tp: f64, predicted: f64, gold: f64) -> Self {
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if gold > 0.0 { tp / gold } else { 0.0 };
        PrfScore::new(p, r)
    }

    /// Mean precision and recall, F recomputed from the means.
    pub fn mean(scores: &[PrfScore]) -> PrfScore {
        if scores.is_empty() {
            return PrfScore::default();
        }
        let n = scores.len() as f64;
        PrfScore::new(
            scores.iter().map(|s| s.p).sum::<f64>() / n,
            scores.iter().map(|s| s.r).sum::<f64>() / n,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_mean() {
        let s = PrfScore::new(0.5, 1.0);
        assert!((s.f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(PrfScore::new(0.0, 0.0).f, 0.0);
    }

    #[test]
    fn all_positive_half_correct() {
        let s = PrfScore::from_counts(5.0, 10.0, 5.0);
        assert_eq!((s.p, s.r), (0.5, 1.0));
    }
}
