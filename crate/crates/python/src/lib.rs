//! Python bindings. Corpora are loaded once into a `Corpus` handle; results
//! come back as JSON strings or plain tuples.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use phrasesum::corpus::{load_corpus, CellKey, ColorId, CorpusError, PromptKind, ReflectionCorpus};
use phrasesum::evalmetrics::{self, ColoredEntry, ColoredSummary, PrfScore};
use phrasesum::pipeline::{self, PipelineConfig, PipelineError, ReportFormat, Variant};

fn is_validation(e: &PipelineError) -> bool {
    match e {
        PipelineError::Corpus(_) | PipelineError::Config(_) | PipelineError::TooFewLectures(_) => true,
        PipelineError::Fold { error, .. } => is_validation(error),
        _ => false,
    }
}

fn pipeline_err(e: PipelineError) -> PyErr {
    let msg = error_chain(&e);
    if is_validation(&e) {
        PyValueError::new_err(msg)
    } else {
        PyRuntimeError::new_err(msg)
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        src = s.source();
    }
    msg
}

fn corpus_err(e: CorpusError) -> PyErr {
    PyValueError::new_err(error_chain(&e))
}

fn parse_config(config_json: Option<&str>) -> PyResult<PipelineConfig> {
    let config = match config_json {
        Some(text) => PipelineConfig::from_json(text).map_err(pipeline_err)?,
        None => PipelineConfig::default(),
    };
    config.validate().map_err(pipeline_err)?;
    Ok(config)
}

fn prf(s: PrfScore) -> (f64, f64, f64) {
    (s.p, s.r, s.f)
}

/// A validated reflection corpus.
#[pyclass(frozen, module = "pyphrasesum")]
struct Corpus {
    inner: Arc<ReflectionCorpus>,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    fn load(responses: &str, annotations: &str) -> PyResult<Self> {
        let inner = load_corpus(responses, annotations).map_err(corpus_err)?;
        Ok(Corpus { inner: Arc::new(inner) })
    }

    #[getter]
    fn course_id(&self) -> String {
        self.inner.course_id().to_string()
    }

    #[getter]
    fn lecture_ids(&self) -> Vec<String> {
        self.inner.lecture_ids().to_vec()
    }

    /// (lecture, prompt) pairs in corpus order.
    fn cells(&self) -> Vec<(String, String)> {
        self.inner
            .cells()
            .into_iter()
            .map(|c| (c.lecture_id, c.prompt.to_string()))
            .collect()
    }

    fn num_responses(&self) -> usize {
        self.inner.all_responses().count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(course_id={:?}, lectures={}, responses={})",
            self.inner.course_id(),
            self.inner.lecture_ids().len(),
            self.num_responses()
        )
    }
}

/// Leave-one-lecture-out cross-validation; returns the rendered report.
#[pyfunction]
#[pyo3(signature = (corpus, config_json=None, jobs=1, format="json"))]
fn crossval(py: Python<'_>, corpus: &Corpus, config_json: Option<&str>, jobs: usize, format: &str) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let format: ReportFormat = format.parse().map_err(pipeline_err)?;
    let corpus = corpus.inner.clone();
    let report = py
        .detach(|| pipeline::run_crossval(&corpus, &config, jobs))
        .map_err(pipeline_err)?;
    Ok(format.render(&report))
}

/// Summary of one cell as JSON. Supervised models are trained on the other
/// lectures of the corpus.
#[pyfunction]
#[pyo3(signature = (corpus, lecture, prompt, variant="cdsum", config_json=None))]
fn summarize(
    py: Python<'_>,
    corpus: &Corpus,
    lecture: &str,
    prompt: &str,
    variant: &str,
    config_json: Option<&str>,
) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let variant: Variant = variant.parse().map_err(pipeline_err)?;
    let prompt: PromptKind = prompt.parse().map_err(|e: String| PyValueError::new_err(e))?;
    let corpus = corpus.inner.clone();
    if !corpus.lecture_ids().iter().any(|l| l == lecture) {
        return Err(PyValueError::new_err(format!("unknown lecture {lecture:?}")));
    }
    let cell = CellKey::new(lecture, prompt);
    let summary = py
        .detach(|| {
            let mut resources = pipeline::load_resources(&config.paths)?;
            if variant.uses_lsa() {
                resources.lsa = Some(Arc::new(pipeline::build_lsa_table(&corpus, &config)?));
            }
            let train = if corpus.lecture_ids().len() > 1 {
                corpus.without_lecture(lecture)
            } else {
                (*corpus).clone()
            };
            let models = pipeline::train_models(&train, &[variant], &resources, &config)?;
            pipeline::summarize(&corpus, &cell, variant, &models, &config)
        })
        .map_err(pipeline_err)?;
    serde_json::to_string(&summary.to_json()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// ROUGE-N (or ROUGE-SU4 when `n` is 0) of tokenized segments against one
/// or more references; returns (P, R, F).
#[pyfunction]
#[pyo3(signature = (candidate, references, n=1))]
fn rouge(candidate: Vec<Vec<String>>, references: Vec<Vec<Vec<String>>>, n: usize) -> PyResult<(f64, f64, f64)> {
    let r = if n == 0 {
        evalmetrics::rouge_su4(&candidate, &references)
    } else {
        evalmetrics::rouge_n(&candidate, &references, n)
    };
    r.map(|f| prf(f.value)).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn colored(entries: Vec<(Option<String>, u32)>) -> ColoredSummary {
    ColoredSummary::new(
        entries
            .into_iter()
            .map(|(c, n)| ColoredEntry {
                color: c.map(|c| ColorId::new("_", c)),
                estimate: n,
            })
            .collect(),
    )
}

/// Color-match P/R/F between two lists of (color, student estimate).
/// A color of `None` marks a system phrase that matched no highlight.
#[pyfunction]
fn color_match(system: Vec<(Option<String>, u32)>, human: Vec<(Option<String>, u32)>) -> (f64, f64, f64) {
    prf(evalmetrics::color_match(&colored(system), &colored(human)).value)
}

#[pymodule]
fn pyphrasesum(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_function(wrap_pyfunction!(crossval, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(rouge, m)?)?;
    m.add_function(wrap_pyfunction!(color_match, m)?)?;
    m.add("VARIANTS", Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>())?;
    Ok(())
}
