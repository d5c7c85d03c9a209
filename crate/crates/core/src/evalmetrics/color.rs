use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EvalError, Flagged, MetricFlag, PrfScore};
use crate::corpus::{ColorId, LectureAnnotation, Response};
use crate::extractor::CandidatePhrase;

/// A system summary bullet with its supporter estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemPhrase {
    pub phrase: CandidatePhrase,
    pub estimate: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoredEntry {
    pub color: Option<ColorId>,
    pub estimate: u32,
}

/// Summary entries reduced to (color, estimate) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoredSummary {
    pub entries: Vec<ColoredEntry>,
}

impl ColoredSummary {
    pub fn new(entries: Vec<ColoredEntry>) -> Self {
        ColoredSummary { entries }
    }

    /// The human summary of an annotation.
    pub fn from_annotation(annotation: &LectureAnnotation) -> Self {
        ColoredSummary {
            entries: annotation
                .summary
                .iter()
                .map(|s| ColoredEntry {
                    color: s.color.clone(),
                    estimate: s.supporters,
                })
                .collect(),
        }
    }

    /// Sum estimates of entries sharing a color. Colored entries come first
    /// in color order, then colorless entries in their original order.
    pub fn merge_same_colors(&self) -> ColoredSummary {
        let mut by_color: BTreeMap<&ColorId, u32> = BTreeMap::new();
        let mut colorless = Vec::new();
        for e in &self.entries {
            match &e.color {
                Some(c) => *by_color.entry(c).or_default() += e.estimate,
                None => colorless.push(e.clone()),
            }
        }
        let mut entries: Vec<ColoredEntry> = by_color
            .into_iter()
            .map(|(c, estimate)| ColoredEntry {
                color: Some(c.clone()),
                estimate,
            })
            .collect();
        entries.extend(colorless);
        ColoredSummary { entries }
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.estimate)).sum()
    }
}

/// Result of mapping system phrases onto one annotator's colors.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorAssignment {
    /// One entry per system phrase, in input order (not merged).
    pub summary: ColoredSummary,
    /// Indices of phrases that overlapped more than one highlight.
    pub ambiguous: Vec<usize>,
}

/// A phrase inherits color `c` when more than half of its tokens fall inside
/// one highlight of color `c` in the same response. With several overlapping
/// highlights the largest overlap wins, ties going to the earlier-starting
/// highlight.
pub fn assign_colors(system: &[SystemPhrase], annotation: &LectureAnnotation) -> ColorAssignment {
    let mut entries = Vec::with_capacity(system.len());
    let mut ambiguous = Vec::new();
    for (idx, sp) in system.iter().enumerate() {
        let phrase = &sp.phrase;
        let mut overlapping: Vec<(usize, usize, &ColorId)> = annotation
            .highlights
            .iter()
            .filter(|h| h.response == phrase.response)
            .map(|h| (h.span.intersection_len(&phrase.span), h.span.start, &h.color))
            .filter(|(o, _, _)| *o > 0)
            .collect();
        if overlapping.len() > 1 {
            ambiguous.push(idx);
        }
        overlapping.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let color = overlapping
            .first()
            .filter(|(o, _, _)| 2 * o > phrase.span.len())
            .map(|(_, _, c)| (*c).clone());
        entries.push(ColoredEntry {
            color,
            estimate: sp.estimate,
        });
    }
    ColorAssignment {
        summary: ColoredSummary { entries },
        ambiguous,
    }
}

/// Color-matching P/R/F. Shared colors contribute the smaller of the two
/// estimates; precision divides by all system estimates (colorless entries
/// included), recall by all human estimates.
pub fn color_match(system: &ColoredSummary, human: &ColoredSummary) -> Flagged<PrfScore> {
    let sys = system.merge_same_colors();
    let hum = human.merge_same_colors();
    let hum_by_color: BTreeMap<&ColorId, u32> = hum
        .entries
        .iter()
        .filter_map(|e| e.color.as_ref().map(|c| (c, e.estimate)))
        .collect();
    let tp: u64 = sys
        .entries
        .iter()
        .filter_map(|e| {
            let c = e.color.as_ref()?;
            hum_by_color.get(c).map(|&h| u64::from(h.min(e.estimate)))
        })
        .sum();
    let (st, ht) = (sys.total(), hum.total());
    let flag = (st == 0 || ht == 0).then_some(MetricFlag::ZeroDenominator);
    Flagged {
        value: PrfScore::from_counts(tp as f64, st as f64, ht as f64),
        flag,
    }
}

/// Fraction of responding students with at least one highlighted token.
pub fn student_coverage(annotation: &LectureAnnotation, responses: &[Response]) -> Result<f64, EvalError> {
    if responses.is_empty() {
        return Err(EvalError::NoResponses);
    }
    let highlighted: BTreeSet<&str> = annotation
        .highlights
        .iter()
        .map(|h| h.response.student_id.as_str())
        .collect();
    let covered = responses
        .iter()
        .filter(|r| highlighted.contains(r.student_id.as_str()))
        .count();
    Ok(covered as f64 / responses.len() as f64)
}
