//! Component-level leave-one-lecture-out experiments: phrase extraction,
//! pair similarity and clustering purity.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_lsa_table, load_resources, PipelineConfig, PipelineError, Stage};
use crate::clustering::{build_phrase_graph, detect_communities, kmedoids, purity, EnsemblePredictor};
use crate::corpus::ReflectionCorpus;
use crate::evalmetrics::PrfScore;
use crate::extractor::{evaluate_extraction, gold_spans, np_chunk_cell, CandidatePhrase, ExtractorError, PhraseExtractor};
use crate::similarity::{build_pair_training_set, evaluate_lsa_baseline, evaluate_pairs, train_similarity, Resources};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub lecture_id: String,
    pub system: PrfScore,
    /// `None` when the baseline could not run (e.g. missing chunk tags).
    pub baseline: Option<PrfScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityScores {
    pub lecture_id: String,
    pub communities: Vec<f64>,
    pub kmedoids: Vec<f64>,
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Macro average of P, R and F over folds.
pub fn mean_prf(scores: impl IntoIterator<Item = PrfScore>) -> PrfScore {
    let v: Vec<PrfScore> = scores.into_iter().collect();
    PrfScore {
        p: mean(v.iter().map(|s| s.p)),
        r: mean(v.iter().map(|s| s.r)),
        f: mean(v.iter().map(|s| s.f)),
    }
}

fn folds<T: Send>(
    corpus: &ReflectionCorpus,
    jobs: usize,
    f: impl Fn(&str) -> Result<T, PipelineError> + Sync,
) -> Result<Vec<T>, PipelineError> {
    if corpus.lecture_ids().len() < 2 {
        return Err(PipelineError::TooFewLectures(corpus.lecture_ids().len()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    pool.install(|| {
        corpus
            .lecture_ids()
            .par_iter()
            .map(|l| {
                f(l).map_err(|e| PipelineError::Fold {
                    lecture: l.clone(),
                    error: Box::new(e),
                })
            })
            .collect()
    })
}

/// Exact-match extraction: CRF trained on the other lectures against the
/// noun-phrase baseline, scored on the held-out lecture's merged gold spans.
pub fn crossval_extraction(corpus: &ReflectionCorpus, config: &PipelineConfig, jobs: usize) -> Result<Vec<FoldScores>, PipelineError> {
    folds(corpus, jobs, |lecture| {
        let train = corpus.without_lecture(lecture);
        let test = corpus.only_lecture(lecture);
        let (extractor, _) = PhraseExtractor::train(&train, config.crf_config())?;
        let mut predicted = Vec::new();
        let mut np: Option<Vec<CandidatePhrase>> = Some(Vec::new());
        let mut gold = std::collections::BTreeSet::new();
        for cell in test.cells() {
            if test.annotations(&cell).is_empty() {
                continue;
            }
            gold.extend(gold_spans(&test, &cell)?);
            predicted.extend(extractor.extract_cell(&test, &cell));
            if let Some(acc) = np.as_mut() {
                match np_chunk_cell(&test, &cell) {
                    Ok(p) => acc.extend(p),
                    Err(ExtractorError::MissingChunkTags(_)) => np = None,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(FoldScores {
            lecture_id: lecture.into(),
            system: evaluate_extraction(&predicted, &gold),
            baseline: np.map(|p| evaluate_extraction(&p, &gold)),
        })
    })
}

fn resources_with_lsa(corpus: &ReflectionCorpus, config: &PipelineConfig) -> Result<Resources, PipelineError> {
    let mut resources = load_resources(&config.paths)?;
    resources.lsa = Some(Arc::new(build_lsa_table(corpus, config)?));
    Ok(resources)
}

/// Pair classification: the learned ensemble against the LSA threshold
/// baseline, on held-out highlight pairs.
pub fn crossval_similarity(corpus: &ReflectionCorpus, config: &PipelineConfig, jobs: usize) -> Result<Vec<FoldScores>, PipelineError> {
    let resources = resources_with_lsa(corpus, config)?;
    let lsa = resources.lsa.clone().expect("lsa built above");
    folds(corpus, jobs, |lecture| {
        let train_pairs = build_pair_training_set(&corpus.without_lecture(lecture));
        let test_pairs = build_pair_training_set(&corpus.only_lecture(lecture));
        let (model, _) = train_similarity(&train_pairs, &resources, config.svm_config())?;
        Ok(FoldScores {
            lecture_id: lecture.into(),
            system: evaluate_pairs(&model, &test_pairs, &resources),
            baseline: Some(evaluate_lsa_baseline(&lsa, &test_pairs, config.lsa_threshold)),
        })
    })
}

/// Purity of community detection and K-medoids over each held-out
/// annotation's highlighted phrases, with edges from the ensemble trained
/// on the other lectures.
pub fn crossval_purity(corpus: &ReflectionCorpus, config: &PipelineConfig, jobs: usize) -> Result<Vec<PurityScores>, PipelineError> {
    let resources = resources_with_lsa(corpus, config)?;
    folds(corpus, jobs, |lecture| {
        let train_pairs = build_pair_training_set(&corpus.without_lecture(lecture));
        let (model, _) = train_similarity(&train_pairs, &resources, config.svm_config())?;
        let predictor = EnsemblePredictor {
            model: &model,
            resources: &resources,
        };
        let test = corpus.only_lecture(lecture);
        let mut out = PurityScores {
            lecture_id: lecture.into(),
            communities: Vec::new(),
            kmedoids: Vec::new(),
        };
        for ann in test.all_annotations() {
            let (phrases, colors): (Vec<CandidatePhrase>, Vec<Option<String>>) = ann
                .highlights
                .iter()
                .filter_map(|h| {
                    let r = test.response(&h.response)?;
                    Some((CandidatePhrase::from_response(r, h.span), Some(h.color.color_key.clone())))
                })
                .unzip();
            if phrases.len() < 2 {
                continue;
            }
            let graph = build_phrase_graph(&phrases, &predictor);
            let cd = detect_communities(&graph, &config.community_config());
            let km = kmedoids(
                &graph,
                config.kmedoids_k,
                config.stage_seed(Stage::Clustering),
                config.kmedoids_max_iter,
            );
            out.communities.push(purity(&cd, &colors)?);
            out.kmedoids.push(purity(&km.clustering, &colors)?);
        }
        Ok(out)
    })
}
