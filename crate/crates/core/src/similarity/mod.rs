//! Phrase-pair similarity: seven metrics, a learned linear ensemble over
//! them, and an LSA cosine baseline.

pub mod lsa;
pub mod metrics;
pub mod svm;
pub mod taxonomy;
pub mod vectors;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ReflectionCorpus, Token};
use crate::evalmetrics::PrfScore;
use crate::extractor::{is_stopword, CandidatePhrase};

pub use lsa::{build_lsa, corpus_documents, text_documents, LsaSpace, SvdConfig};
pub use svm::{train_svm, SimilarityModel, SvmConfig, SvmTrace};
pub use taxonomy::Taxonomy;
pub use vectors::VectorTable;

pub const NUM_METRICS: usize = 7;
/// Metric values, their availability bits and a bias input.
pub const NUM_INPUTS: usize = 2 * NUM_METRICS + 1;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("vector file line {line}: {message}")]
    VectorFormat { line: usize, message: String },
    #[error("{path}: {message}")]
    Resource { path: String, message: String },
    #[error("matrix has {available} nonzero singular values, {requested} requested")]
    RankDeficient { requested: usize, available: usize },
    #[error("similarity training needs both similar and dissimilar pairs")]
    SingleClassTrainingSet,
    #[error("similarity model line {line}: {message}")]
    ModelFormat { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LexicalOverlap,
    CosineTf,
    LinTaxonomy,
    Bleu,
    Simsum,
    EmbeddingCosine,
    LsaCosine,
}

impl Metric {
    pub const ALL: [Metric; NUM_METRICS] = [
        Metric::LexicalOverlap,
        Metric::CosineTf,
        Metric::LinTaxonomy,
        Metric::Bleu,
        Metric::Simsum,
        Metric::EmbeddingCosine,
        Metric::LsaCosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::LexicalOverlap => "lexical_overlap",
            Metric::CosineTf => "cosine_tf",
            Metric::LinTaxonomy => "lin_taxonomy",
            Metric::Bleu => "bleu",
            Metric::Simsum => "simsum",
            Metric::EmbeddingCosine => "embedding_cosine",
            Metric::LsaCosine => "lsa_cosine",
        }
    }
}

/// Values of the seven metrics for one phrase pair. A metric whose resource
/// is missing or does not cover the phrases has value 0 and is unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub values: [f64; NUM_METRICS],
    pub available: [bool; NUM_METRICS],
}

impl PairFeatures {
    pub fn get(&self, m: Metric) -> Option<f64> {
        let i = m as usize;
        self.available[i].then_some(self.values[i])
    }

    pub fn to_input(&self) -> [f64; NUM_INPUTS] {
        let mut x = [0.0; NUM_INPUTS];
        x[..NUM_METRICS].copy_from_slice(&self.values);
        for (i, &a) in self.available.iter().enumerate() {
            x[NUM_METRICS + i] = if a { 1.0 } else { 0.0 };
        }
        x[NUM_INPUTS - 1] = 1.0;
        x
    }
}

/// Optional lexical resources shared by every metric computation.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub embeddings: Option<Arc<VectorTable>>,
    pub lsa: Option<Arc<VectorTable>>,
    pub taxonomy: Option<Arc<Taxonomy>>,
}

fn lin_phrases(tax: &Taxonomy, a: &[Token], b: &[Token]) -> Option<f64> {
    let content = |ts: &[Token]| -> Vec<String> {
        ts.iter()
            .filter(|t| !t.is_punctuation() && !is_stopword(&t.lower))
            .map(|t| t.lower.clone())
            .collect()
    };
    let (ca, cb) = (content(a), content(b));
    let mut best: Option<f64> = None;
    for x in &ca {
        for y in &cb {
            if let Some(v) = tax.lin_words(x, y) {
                best = Some(best.map_or(v, |m| m.max(v)));
            }
        }
    }
    best
}

/// All seven metrics for a phrase pair. Lexical overlap and TF cosine work on
/// stems; the other surface metrics on lowercased tokens.
pub fn pair_features(a: &[Token], b: &[Token], resources: &Resources) -> PairFeatures {
    let stems = |ts: &[Token]| ts.iter().map(|t| t.stem.clone()).collect::<Vec<_>>();
    let lowers = |ts: &[Token]| ts.iter().map(|t| t.lower.clone()).collect::<Vec<_>>();
    let (sa, sb) = (stems(a), stems(b));
    let (la, lb) = (lowers(a), lowers(b));
    let mut values = [0.0; NUM_METRICS];
    let mut available = [true; NUM_METRICS];
    values[Metric::LexicalOverlap as usize] = metrics::dice(&sa, &sb);
    values[Metric::CosineTf as usize] = metrics::cosine_tf(&sa, &sb);
    values[Metric::Bleu as usize] = metrics::bleu(&la, &lb);
    values[Metric::Simsum as usize] = metrics::simsum(&la, &lb);
    let mut optional = |m: Metric, v: Option<f64>| match v {
        Some(v) => values[m as usize] = v,
        None => available[m as usize] = false,
    };
    optional(Metric::LinTaxonomy, resources.taxonomy.as_ref().and_then(|t| lin_phrases(t, a, b)));
    optional(
        Metric::EmbeddingCosine,
        resources.embeddings.as_ref().and_then(|t| metrics::vector_cosine(t, &la, &lb)),
    );
    optional(Metric::LsaCosine, resources.lsa.as_ref().and_then(|t| metrics::vector_cosine(t, &la, &lb)));
    PairFeatures { values, available }
}

/// Two highlighted phrases from one annotation, labeled by color agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub annotator_id: String,
    pub phrase_a: CandidatePhrase,
    pub phrase_b: CandidatePhrase,
    pub similar: bool,
}

/// Every unordered pair of highlights within one annotation, both
/// annotators pooled. Pairs never cross lectures or prompts.
pub fn build_pair_training_set(corpus: &ReflectionCorpus) -> Vec<LabeledPair> {
    let mut pairs = Vec::new();
    for ann in corpus.all_annotations() {
        let phrases: Vec<(CandidatePhrase, &crate::corpus::ColorId)> = ann
            .highlights
            .iter()
            .filter_map(|h| {
                let r = corpus.response(&h.response)?;
                Some((CandidatePhrase::from_response(r, h.span), &h.color))
            })
            .collect();
        for i in 0..phrases.len() {
            for j in i + 1..phrases.len() {
                let (a, ca) = &phrases[i];
                let (b, cb) = &phrases[j];
                if a.response == b.response && a.span == b.span {
                    continue;
                }
                pairs.push(LabeledPair {
                    annotator_id: ann.annotator_id.clone(),
                    phrase_a: a.clone(),
                    phrase_b: b.clone(),
                    similar: ca == cb,
                });
            }
        }
    }
    pairs
}

pub fn pair_feature_matrix(pairs: &[LabeledPair], resources: &Resources) -> Vec<PairFeatures> {
    pairs
        .par_iter()
        .map(|p| pair_features(&p.phrase_a.tokens, &p.phrase_b.tokens, resources))
        .collect()
}

pub fn train_similarity(
    pairs: &[LabeledPair],
    resources: &Resources,
    config: SvmConfig,
) -> Result<(SimilarityModel, SvmTrace), SimilarityError> {
    let features = pair_feature_matrix(pairs, resources);
    let labels: Vec<bool> = pairs.iter().map(|p| p.similar).collect();
    train_svm(&features, &labels, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPrediction {
    pub score: f64,
    pub similar: bool,
}

pub fn predict_similar(model: &SimilarityModel, a: &[Token], b: &[Token], resources: &Resources) -> SimilarityPrediction {
    let score = model.decision(&pair_features(a, b, resources));
    SimilarityPrediction {
        score,
        similar: score >= 0.0,
    }
}

/// LSA cosine at or above `threshold`; out-of-vocabulary phrases count as 0.
pub fn lsa_baseline_similar(lsa: &VectorTable, a: &[Token], b: &[Token], threshold: f64) -> bool {
    let lowers = |ts: &[Token]| ts.iter().map(|t| t.lower.clone()).collect::<Vec<_>>();
    metrics::vector_cosine(lsa, &lowers(a), &lowers(b)).unwrap_or(0.0) >= threshold
}

/// P/R/F of the positive class.
pub fn evaluate_predictions(predicted: &[bool], gold: &[bool]) -> PrfScore {
    assert_eq!(predicted.len(), gold.len());
    let tp = predicted.iter().zip(gold).filter(|(p, g)| **p && **g).count();
    let pp = predicted.iter().filter(|p| **p).count();
    let gp = gold.iter().filter(|g| **g).count();
    PrfScore::from_counts(tp as f64, pp as f64, gp as f64)
}

pub fn evaluate_pairs(model: &SimilarityModel, pairs: &[LabeledPair], resources: &Resources) -> PrfScore {
    let predicted: Vec<bool> = pairs
        .par_iter()
        .map(|p| predict_similar(model, &p.phrase_a.tokens, &p.phrase_b.tokens, resources).similar)
        .collect();
    let gold: Vec<bool> = pairs.iter().map(|p| p.similar).collect();
    evaluate_predictions(&predicted, &gold)
}

pub fn evaluate_lsa_baseline(lsa: &VectorTable, pairs: &[LabeledPair], threshold: f64) -> PrfScore {
    let predicted: Vec<bool> = pairs
        .iter()
        .map(|p| lsa_baseline_similar(lsa, &p.phrase_a.tokens, &p.phrase_b.tokens, threshold))
        .collect();
    let gold: Vec<bool> = pairs.iter().map(|p| p.similar).collect();
    evaluate_predictions(&predicted, &gold)
}
