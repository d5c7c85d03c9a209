use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_lsa_table, load_resources, summarize, train_models, PipelineConfig, PipelineError, Variant};
use crate::corpus::{LectureAnnotation, PromptKind, ReflectionCorpus};
use crate::evalmetrics::{
    assign_colors, color_match, paired_ttest, rouge_n, rouge_su4, EvalError, MetricFlag, PrfScore, SystemPhrase,
};
use crate::extractor::ExtractorError;
use crate::ranking::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rouge1,
    Rouge2,
    RougeSu4,
    ColorMatch,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Rouge1,
        MetricKind::Rouge2,
        MetricKind::RougeSu4,
        MetricKind::ColorMatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rouge1 => "rouge_1",
            MetricKind::Rouge2 => "rouge_2",
            MetricKind::RougeSu4 => "rouge_su4",
            MetricKind::ColorMatch => "color_match",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// One system's summary of one cell and its scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub lecture_id: String,
    pub prompt: PromptKind,
    pub system: Variant,
    pub summary: Summary,
    pub scores: BTreeMap<MetricKind, PrfScore>,
    /// Summary phrases that overlapped several highlights of one annotator.
    pub ambiguous_colors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub lecture_id: String,
    pub prompt: PromptKind,
    pub system: Variant,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub lecture_id: String,
    /// Lectures whose annotations trained this fold's models.
    pub training_lectures: Vec<String>,
    pub cells: Vec<CellResult>,
    pub skipped: Vec<SkippedCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub system: Variant,
    pub metric: MetricKind,
    /// Number of (fold, prompt) cells averaged.
    pub n: usize,
    pub score: PrfScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub system: Variant,
    pub baseline: Variant,
    pub metric: MetricKind,
    pub n: usize,
    pub t: f64,
    pub p: f64,
    pub flag: Option<MetricFlag>,
}

impl TTestRow {
    pub fn significant(&self) -> bool {
        self.flag.is_none() && self.p < 0.05
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossvalReport {
    pub course_id: String,
    pub folds: Vec<FoldResult>,
    pub means: Vec<MeanRow>,
    pub ttests: Vec<TTestRow>,
}

/// ROUGE against every annotator's summary and color matching averaged
/// over annotators. Returns the scores and the count of ambiguous color
/// assignments.
pub fn summary_scores(
    summary: &Summary,
    annotations: &[LectureAnnotation],
) -> Result<(BTreeMap<MetricKind, PrfScore>, usize), EvalError> {
    if annotations.is_empty() {
        return Err(EvalError::NoReferences);
    }
    let candidate = summary.segments();
    let references: Vec<Vec<Vec<String>>> = annotations
        .iter()
        .map(|a| {
            a.summary
                .iter()
                .map(|s| s.tokens.iter().map(|t| t.lower.clone()).collect())
                .collect()
        })
        .collect();
    let mut scores = BTreeMap::new();
    scores.insert(MetricKind::Rouge1, rouge_n(&candidate, &references, 1)?.value);
    scores.insert(MetricKind::Rouge2, rouge_n(&candidate, &references, 2)?.value);
    scores.insert(MetricKind::RougeSu4, rouge_su4(&candidate, &references)?.value);
    let system: Vec<SystemPhrase> = summary
        .entries
        .iter()
        .map(|e| SystemPhrase {
            phrase: e.phrase.clone(),
            estimate: e.supporters,
        })
        .collect();
    let mut per_annotator = Vec::with_capacity(annotations.len());
    let mut ambiguous = 0;
    for ann in annotations {
        let assignment = assign_colors(&system, ann);
        ambiguous += assignment.ambiguous.len();
        let human = crate::evalmetrics::ColoredSummary::from_annotation(ann);
        per_annotator.push(color_match(&assignment.summary, &human).value);
    }
    scores.insert(MetricKind::ColorMatch, PrfScore::mean(&per_annotator));
    Ok((scores, ambiguous))
}

fn run_fold(
    corpus: &ReflectionCorpus,
    lecture: &str,
    resources: &crate::similarity::Resources,
    config: &PipelineConfig,
) -> Result<FoldResult, PipelineError> {
    let train = corpus.without_lecture(lecture);
    let test = corpus.only_lecture(lecture);
    debug_assert!(train.all_annotations().all(|a| a.lecture_id != lecture));
    let models = train_models(&train, &config.variants, resources, config)?;
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for cell in test.cells() {
        let annotations = test.annotations(&cell);
        for &variant in &config.variants {
            let skip = |reason: String| SkippedCell {
                lecture_id: cell.lecture_id.clone(),
                prompt: cell.prompt,
                system: variant,
                reason,
            };
            if annotations.is_empty() {
                skipped.push(skip("no annotations".into()));
                continue;
            }
            let summary = match summarize(&test, &cell, variant, &models, config) {
                Ok(s) => s,
                Err(PipelineError::Extractor(e @ ExtractorError::MissingChunkTags(_))) => {
                    log::warn!("{cell}: {variant} skipped: {e}");
                    skipped.push(skip(e.to_string()));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (scores, ambiguous_colors) = summary_scores(&summary, annotations)?;
            cells.push(CellResult {
                lecture_id: cell.lecture_id.clone(),
                prompt: cell.prompt,
                system: variant,
                summary,
                scores,
                ambiguous_colors,
            });
        }
    }
    Ok(FoldResult {
        lecture_id: lecture.to_string(),
        training_lectures: train.lecture_ids().to_vec(),
        cells,
        skipped,
    })
}

fn aggregate(folds: &[FoldResult], config: &PipelineConfig) -> (Vec<MeanRow>, Vec<TTestRow>) {
    type Key = (String, PromptKind);
    let mut by_system: BTreeMap<(Variant, MetricKind), BTreeMap<Key, PrfScore>> = BTreeMap::new();
    for cell in folds.iter().flat_map(|f| &f.cells) {
        for (&metric, &score) in &cell.scores {
            by_system
                .entry((cell.system, metric))
                .or_default()
                .insert((cell.lecture_id.clone(), cell.prompt), score);
        }
    }
    let mut means = Vec::new();
    for &system in &config.variants {
        for metric in MetricKind::ALL {
            let Some(cells) = by_system.get(&(system, metric)) else {
                continue;
            };
            let n = cells.len() as f64;
            let mean = |f: fn(&PrfScore) -> f64| cells.values().map(f).sum::<f64>() / n;
            means.push(MeanRow {
                system,
                metric,
                n: cells.len(),
                score: PrfScore {
                    p: mean(|s| s.p),
                    r: mean(|s| s.r),
                    f: mean(|s| s.f),
                },
            });
        }
    }
    let mut ttests = Vec::new();
    let baseline = config.baseline;
    for &system in config.variants.iter().filter(|&&v| v != baseline) {
        for metric in MetricKind::ALL {
            let (Some(a), Some(b)) = (by_system.get(&(system, metric)), by_system.get(&(baseline, metric))) else {
                continue;
            };
            let (xs, ys): (Vec<f64>, Vec<f64>) = a
                .iter()
                .filter_map(|(k, s)| b.get(k).map(|t| (s.f, t.f)))
                .unzip();
            if let Ok(t) = paired_ttest(&xs, &ys) {
                ttests.push(TTestRow {
                    system,
                    baseline,
                    metric,
                    n: xs.len(),
                    t: t.t,
                    p: t.p_two_tailed,
                    flag: t.flag,
                });
            }
        }
    }
    (means, ttests)
}

/// Leave-one-lecture-out cross-validation over every configured variant.
/// Folds run on up to `jobs` threads; results keep lecture order.
pub fn run_crossval(corpus: &ReflectionCorpus, config: &PipelineConfig, jobs: usize) -> Result<CrossvalReport, PipelineError> {
    config.validate()?;
    let lectures = corpus.lecture_ids();
    if lectures.len() < 2 {
        return Err(PipelineError::TooFewLectures(lectures.len()));
    }
    let mut resources = load_resources(&config.paths)?;
    if config.variants.iter().any(|v| v.uses_lsa()) {
        resources.lsa = Some(std::sync::Arc::new(build_lsa_table(corpus, config)?));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let folds = pool.install(|| {
        lectures
            .par_iter()
            .map(|l| {
                run_fold(corpus, l, &resources, config).map_err(|e| PipelineError::Fold {
                    lecture: l.clone(),
                    error: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let (means, ttests) = aggregate(&folds, config);
    Ok(CrossvalReport {
        course_id: corpus.course_id().to_string(),
        folds,
        means,
        ttests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::table_one;
    use crate::extractor::CandidatePhrase;
    use crate::ranking::SummaryEntry;

    #[test]
    fn human_highlights_as_summary_score_well() {
        let corpus = table_one();
        let cell = corpus.cells()[0].clone();
        let anns = corpus.annotations(&cell);
        let a1 = &anns[0];
        let mut summary = Summary::empty(&cell.lecture_id, cell.prompt, "oracle");
        // One bullet per color of annotator A1, supporters from the human summary.
        for sp in &a1.summary {
            let h = a1.highlights.iter().find(|h| Some(&h.color) == sp.color.as_ref()).unwrap();
            summary.entries.push(SummaryEntry {
                phrase: CandidatePhrase::from_response(corpus.response(&h.response).unwrap(), h.span),
                supporters: sp.supporters,
                community: None,
                centrality: 0.0,
            });
        }
        let (scores, ambiguous) = summary_scores(&summary, &anns[..1]).unwrap();
        assert_eq!(scores[&MetricKind::ColorMatch], PrfScore::new(1.0, 1.0));
        assert_eq!(ambiguous, 0);
        assert!(scores[&MetricKind::Rouge1].f > 0.0);
        let empty = Summary::empty(&cell.lecture_id, cell.prompt, "none");
        let (scores, _) = summary_scores(&empty, anns).unwrap();
        assert!(scores.values().all(|s| s.f == 0.0));
        assert!(summary_scores(&empty, &[]).is_err());
    }
}
