//! End-to-end summarization: system variants, model training, per-cell
//! summaries, leave-one-lecture-out cross-validation and reports.

mod crossval;
pub mod experiments;
mod report;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    build_phrase_graph, detect_communities, kmedoids, ClusteringError, CommunityConfig, EdgePredictor, EnsemblePredictor,
    LsaPredictor,
};
use crate::corpus::{CellKey, CorpusError, ReflectionCorpus};
use crate::evalmetrics::EvalError;
use crate::extractor::{np_chunk_cell, CandidatePhrase, CrfConfig, ExtractorError, PhraseExtractor};
use crate::ranking::{assemble_summary, lexrank_response_baseline, AssembleConfig, RankingError, Summary};
use crate::similarity::{
    build_lsa, build_pair_training_set, corpus_documents, text_documents, train_similarity, Resources, SimilarityError,
    SimilarityModel, SvdConfig, SvmConfig, Taxonomy, VectorTable,
};

pub use crossval::{run_crossval, summary_scores, CellResult, CrossvalReport, FoldResult, MetricKind, SkippedCell};
pub use report::{parse_markdown_means, render_json, render_markdown, render_tsv, ReportFormat};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot access {path}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("cross-validation needs at least 2 lectures, corpus has {0}")]
    TooFewLectures(usize),
    #[error("variant {0} needs a model that was not provided")]
    MissingModel(Variant),
    #[error("fold {lecture}")]
    Fold {
        lecture: String,
        #[source]
        error: Box<PipelineError>,
    },
}

/// Which stages a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Whole responses ranked by LexRank.
    LexrankBaseline,
    /// Noun-phrase chunks, LSA similarity, K-medoids.
    PhrasesumNp,
    /// CRF phrases, LSA similarity, K-medoids.
    Sequencesum,
    /// CRF phrases, learned similarity, K-medoids.
    Simsum,
    /// CRF phrases, learned similarity, community detection.
    Cdsum,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::LexrankBaseline,
        Variant::PhrasesumNp,
        Variant::Sequencesum,
        Variant::Simsum,
        Variant::Cdsum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::LexrankBaseline => "lexrank_baseline",
            Variant::PhrasesumNp => "phrasesum_np",
            Variant::Sequencesum => "sequencesum",
            Variant::Simsum => "simsum",
            Variant::Cdsum => "cdsum",
        }
    }

    pub fn uses_crf(self) -> bool {
        matches!(self, Variant::Sequencesum | Variant::Simsum | Variant::Cdsum)
    }

    pub fn uses_learned_similarity(self) -> bool {
        matches!(self, Variant::Simsum | Variant::Cdsum)
    }

    pub fn uses_lsa(self) -> bool {
        !matches!(self, Variant::LexrankBaseline)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown system variant {s:?}")))
    }
}

/// Optional on-disk resources.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourcePaths {
    /// Word vectors in the `<size> <dim>` text format.
    pub embeddings: Option<PathBuf>,
    /// Directory with `data.noun`, `index.noun`, ... files.
    pub taxonomy_dict: Option<PathBuf>,
    pub taxonomy_ic: Option<PathBuf>,
    /// Plain-text LSA background, one document per line. Defaults to the
    /// corpus responses.
    pub lsa_background: Option<PathBuf>,
    /// Prebuilt LSA vectors; skips building the space.
    pub lsa_vectors: Option<PathBuf>,
    /// Pretrained models used by `summarize` instead of training.
    pub extractor_model: Option<PathBuf>,
    pub similarity_model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Variant used by single-cell summarization.
    pub variant: Variant,
    /// Variants compared in cross-validation.
    pub variants: Vec<Variant>,
    /// Variant the others are tested against for significance markers.
    pub baseline: Variant,
    pub paths: ResourcePaths,
    pub extractor: CrfConfig,
    pub similarity: SvmConfig,
    pub lsa_dim: usize,
    pub lsa_threshold: f64,
    pub svd: SvdConfig,
    pub community: CommunityConfig,
    pub kmedoids_k: Option<usize>,
    pub kmedoids_max_iter: usize,
    pub assemble: AssembleConfig,
    pub lexrank_threshold: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: Variant::Cdsum,
            variants: Variant::ALL.to_vec(),
            baseline: Variant::PhrasesumNp,
            paths: ResourcePaths::default(),
            extractor: CrfConfig::default(),
            similarity: SvmConfig::default(),
            lsa_dim: 100,
            lsa_threshold: 0.5,
            svd: SvdConfig::default(),
            community: CommunityConfig::default(),
            kmedoids_k: None,
            kmedoids_max_iter: 100,
            assemble: AssembleConfig::default(),
            lexrank_threshold: 0.1,
            seed: 0,
        }
    }
}

/// Stage indices for seed fan-out: stage `i` runs with `seed + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Extractor = 0,
    Lsa = 1,
    Similarity = 2,
    Clustering = 3,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        self.seed.wrapping_add(stage as u64)
    }

    pub fn crf_config(&self) -> CrfConfig {
        CrfConfig {
            seed: self.stage_seed(Stage::Extractor),
            ..self.extractor
        }
    }

    pub fn svd_config(&self) -> SvdConfig {
        SvdConfig {
            seed: self.stage_seed(Stage::Lsa),
            ..self.svd
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            seed: self.stage_seed(Stage::Similarity),
            ..self.similarity
        }
    }

    pub fn community_config(&self) -> CommunityConfig {
        CommunityConfig {
            seed: self.stage_seed(Stage::Clustering),
            ..self.community
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.variants.is_empty() {
            return Err(PipelineError::Config("no variants selected".into()));
        }
        if self.lsa_dim == 0 {
            return Err(PipelineError::Config("lsa_dim must be positive".into()));
        }
        if self.assemble.max_phrases == 0 {
            return Err(PipelineError::Config("max_phrases must be positive".into()));
        }
        if self.paths.taxonomy_dict.is_some() != self.paths.taxonomy_ic.is_some() {
            return Err(PipelineError::Config("taxonomy_dict and taxonomy_ic go together".into()));
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path).map(BufReader::new).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Embeddings and taxonomy from the configured paths. LSA is added
/// separately by [`build_lsa_table`].
pub fn load_resources(paths: &ResourcePaths) -> Result<Resources, PipelineError> {
    let mut res = Resources::default();
    if let Some(p) = &paths.embeddings {
        res.embeddings = Some(Arc::new(VectorTable::read(open(p)?)?));
    }
    if let (Some(dict), Some(ic)) = (&paths.taxonomy_dict, &paths.taxonomy_ic) {
        res.taxonomy = Some(Arc::new(Taxonomy::load(dict, ic)?));
    }
    Ok(res)
}

/// LSA vectors: read from `lsa_vectors`, else built from `lsa_background`,
/// else from the corpus responses.
pub fn build_lsa_table(corpus: &ReflectionCorpus, config: &PipelineConfig) -> Result<VectorTable, PipelineError> {
    if let Some(p) = &config.paths.lsa_vectors {
        return Ok(VectorTable::read(open(p)?)?);
    }
    let docs = match &config.paths.lsa_background {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| PipelineError::Io {
                path: p.display().to_string(),
                source,
            })?;
            text_documents(&text)
        }
        None => corpus_documents(corpus),
    };
    Ok(build_lsa(&docs, config.lsa_dim, &config.svd_config())?.table)
}

/// Everything a variant needs at summarization time.
#[derive(Debug, Clone, Default)]
pub struct TrainedModels {
    pub extractor: Option<PhraseExtractor>,
    pub similarity: Option<SimilarityModel>,
    /// Embeddings, taxonomy and LSA vectors.
    pub resources: Resources,
}

/// Train the supervised models `variants` need on `train` only.
pub fn train_models(
    train: &ReflectionCorpus,
    variants: &[Variant],
    resources: &Resources,
    config: &PipelineConfig,
) -> Result<TrainedModels, PipelineError> {
    let mut models = TrainedModels {
        resources: resources.clone(),
        ..Default::default()
    };
    if variants.iter().any(|v| v.uses_crf()) {
        let (extractor, trace) = PhraseExtractor::train(train, config.crf_config())?;
        log::info!(
            "extractor: {} iterations, objective {:.4}",
            trace.objective.len(),
            trace.objective.last().copied().unwrap_or(f64::NAN)
        );
        models.extractor = Some(extractor);
    }
    if variants.iter().any(|v| v.uses_learned_similarity()) {
        let pairs = build_pair_training_set(train);
        let (model, _) = train_similarity(&pairs, resources, config.svm_config())?;
        models.similarity = Some(model);
    }
    Ok(models)
}

/// Candidate phrases of a cell for a phrase-based variant.
pub fn candidate_phrases(
    corpus: &ReflectionCorpus,
    cell: &CellKey,
    variant: Variant,
    models: &TrainedModels,
) -> Result<Vec<CandidatePhrase>, PipelineError> {
    match variant {
        Variant::LexrankBaseline => Ok(Vec::new()),
        Variant::PhrasesumNp => Ok(np_chunk_cell(corpus, cell)?),
        _ => {
            let extractor = models.extractor.as_ref().ok_or(PipelineError::MissingModel(variant))?;
            Ok(extractor.extract_cell(corpus, cell))
        }
    }
}

/// Summary of one (lecture, prompt) cell. A cell without candidate phrases
/// yields an empty summary and a warning.
pub fn summarize(
    corpus: &ReflectionCorpus,
    cell: &CellKey,
    variant: Variant,
    models: &TrainedModels,
    config: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let system = variant.name();
    if variant == Variant::LexrankBaseline {
        let entries = lexrank_response_baseline(
            corpus.responses(cell),
            config.assemble.max_phrases,
            config.lexrank_threshold,
            &config.assemble.lexrank,
        )?;
        let mut summary = Summary::empty(&cell.lecture_id, cell.prompt, system);
        summary.entries = entries;
        return Ok(summary);
    }
    let phrases = candidate_phrases(corpus, cell, variant, models)?;
    if phrases.is_empty() {
        log::warn!("{cell}: no candidate phrases for {system}");
        return Ok(Summary::empty(&cell.lecture_id, cell.prompt, system));
    }
    let graph = {
        let lsa;
        let ensemble;
        let predictor: &dyn EdgePredictor = if variant.uses_learned_similarity() {
            let model = models.similarity.as_ref().ok_or(PipelineError::MissingModel(variant))?;
            ensemble = EnsemblePredictor {
                model,
                resources: &models.resources,
            };
            &ensemble
        } else {
            let table = models.resources.lsa.as_deref().ok_or(PipelineError::MissingModel(variant))?;
            lsa = LsaPredictor {
                lsa: table,
                threshold: config.lsa_threshold,
            };
            &lsa
        };
        build_phrase_graph(&phrases, predictor)
    };
    let clustering = if variant == Variant::Cdsum {
        detect_communities(&graph, &config.community_config())
    } else {
        kmedoids(
            &graph,
            config.kmedoids_k,
            config.stage_seed(Stage::Clustering),
            config.kmedoids_max_iter,
        )
        .clustering
    };
    Ok(assemble_summary(
        &clustering,
        &graph,
        &phrases,
        &config.assemble,
        &cell.lecture_id,
        cell.prompt,
        system,
    )?)
}

/// Rebuild a summary from its JSON form, resolving each bullet's span
/// against the corpus.
pub fn summary_from_json(value: &serde_json::Value, corpus: &ReflectionCorpus) -> Result<Summary, PipelineError> {
    let bad = |m: &str| PipelineError::Config(format!("summary JSON: {m}"));
    let lecture_id = value["lecture_id"].as_str().ok_or_else(|| bad("missing lecture_id"))?;
    let prompt: crate::corpus::PromptKind =
        serde_json::from_value(value["prompt"].clone()).map_err(|e| bad(&e.to_string()))?;
    let system = value["system"].as_str().unwrap_or("unknown");
    let mut summary = Summary::empty(lecture_id, prompt, system);
    for b in value["bullets"].as_array().ok_or_else(|| bad("missing bullets"))? {
        let student = b["source_student"].as_str().ok_or_else(|| bad("bullet without source_student"))?;
        let span = b["span"].as_array().filter(|a| a.len() == 2).ok_or_else(|| bad("bullet span"))?;
        let (start, end) = match (span[0].as_u64(), span[1].as_u64()) {
            (Some(s), Some(e)) if s < e => (s as usize, e as usize),
            _ => return Err(bad("bullet span")),
        };
        let key = crate::corpus::ResponseRef {
            student_id: student.into(),
            lecture_id: lecture_id.into(),
            prompt,
        };
        let response = corpus.response(&key).ok_or_else(|| bad(&format!("unknown response {key}")))?;
        if end > response.tokens.len() {
            return Err(bad(&format!("span {start}..{end} outside {key}")));
        }
        let supporters = b["supporters"].as_u64().ok_or_else(|| bad("bullet supporters"))?;
        summary.entries.push(crate::ranking::SummaryEntry {
            phrase: CandidatePhrase::from_response(response, crate::corpus::Span::new(start, end)),
            supporters: supporters as u32,
            community: None,
            centrality: 0.0,
        });
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{response, table_one};
    use crate::corpus::PromptKind;

    #[test]
    fn config_round_trip_and_defaults() {
        let c = PipelineConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(PipelineConfig::from_json(&text).unwrap(), c);
        let partial = PipelineConfig::from_json(r#"{"variant": "simsum", "seed": 7}"#).unwrap();
        assert_eq!(partial.variant, Variant::Simsum);
        assert_eq!(partial.stage_seed(Stage::Clustering), 10);
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!("cdsum".parse::<Variant>().is_ok());
        assert!("nope".parse::<Variant>().is_err());
    }

    #[test]
    fn single_response_gives_one_singleton_bullet() {
        let r = response("L1", PromptKind::Interesting, "S1", "CLT");
        let corpus = ReflectionCorpus::from_parts("C", vec![r], Vec::new()).unwrap();
        let cell = CellKey::new("L1", PromptKind::Interesting);
        let models = TrainedModels {
            resources: Resources {
                lsa: Some(Arc::new(VectorTable::new(1, vec![("clt".into(), vec![1.0])]).unwrap())),
                ..Default::default()
            },
            ..Default::default()
        };
        let config = PipelineConfig::default();
        // Without chunk tags the NP variant refuses to run.
        assert!(matches!(
            summarize(&corpus, &cell, Variant::PhrasesumNp, &models, &config),
            Err(PipelineError::Extractor(ExtractorError::MissingChunkTags(_)))
        ));
        let s = summarize(&corpus, &cell, Variant::LexrankBaseline, &models, &config).unwrap();
        assert_eq!(s.entries.len(), 1);
        assert_eq!(s.entries[0].supporters, 1);
        assert!(matches!(
            summarize(&corpus, &cell, Variant::Cdsum, &models, &config),
            Err(PipelineError::MissingModel(Variant::Cdsum))
        ));
    }

    #[test]
    fn table_one_cdsum_with_oracle_similarity() {
        // Oracle models: gold highlights as phrases, same-color pairs linked.
        let corpus = table_one();
        let cell = corpus.cells()[0].clone();
        let ann = &corpus.annotations(&cell)[0];
        let phrases: Vec<CandidatePhrase> = ann
            .highlights
            .iter()
            .map(|h| CandidatePhrase::from_response(corpus.response(&h.response).unwrap(), h.span))
            .collect();
        let color_of = |p: &CandidatePhrase| {
            ann.highlights
                .iter()
                .find(|h| h.response == p.response && h.span == p.span)
                .map(|h| h.color.clone())
        };
        let oracle = |a: &CandidatePhrase, b: &CandidatePhrase| (color_of(a) == color_of(b)).then_some(1.0);
        let graph = build_phrase_graph(&phrases, &oracle);
        let clustering = detect_communities(&graph, &CommunityConfig::default());
        let summary = assemble_summary(
            &clustering,
            &graph,
            &phrases,
            &AssembleConfig::default(),
            &cell.lecture_id,
            cell.prompt,
            "cdsum",
        )
        .unwrap();
        let mut human: Vec<u32> = ann.summary.iter().filter(|s| s.color.is_some()).map(|s| s.supporters).collect();
        human.sort_unstable_by(|a, b| b.cmp(a));
        let sizes: Vec<u32> = summary.entries.iter().map(|e| e.supporters).collect();
        let colors: std::collections::BTreeSet<_> = summary.entries.iter().map(|e| color_of(&e.phrase)).collect();
        assert_eq!(colors.len(), summary.entries.len());
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(summary.entries.len(), human.len().min(5));
    }

    #[test]
    fn summary_json_round_trip() {
        let corpus = table_one();
        let cell = corpus.cells()[0].clone();
        let r = &corpus.responses(&cell)[2];
        let mut s = Summary::empty(&cell.lecture_id, cell.prompt, "x");
        s.entries.push(crate::ranking::SummaryEntry {
            phrase: CandidatePhrase::from_response(r, crate::corpus::Span::new(0, 3)),
            supporters: 4,
            community: None,
            centrality: 0.0,
        });
        let back = summary_from_json(&s.to_json(), &corpus).unwrap();
        assert_eq!(back.entries[0].phrase, s.entries[0].phrase);
        assert_eq!(back.entries[0].supporters, 4);
        let mut bad = s.to_json();
        bad["bullets"][0]["span"] = serde_json::json!([0, 99]);
        assert!(summary_from_json(&bad, &corpus).is_err());
    }
}
