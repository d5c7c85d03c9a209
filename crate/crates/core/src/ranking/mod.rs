//! LexRank centrality, summary assembly and the response-level LexRank
//! baseline.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{Clustering, PhraseGraph};
use crate::corpus::{PromptKind, Response, Span};
use crate::extractor::CandidatePhrase;
use crate::similarity::metrics::cosine_tf;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("weight matrix is not symmetric at ({0}, {1})")]
    NonSymmetricInput(usize, usize),
    #[error("negative weight at ({0}, {1})")]
    NegativeWeight(usize, usize),
    #[error("weight matrix is not square or is empty")]
    BadShape,
    #[error("clustering has no communities")]
    EmptyClustering,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexRankConfig {
    pub damping: f64,
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for LexRankConfig {
    fn default() -> Self {
        LexRankConfig {
            damping: 0.85,
            eps: 1e-6,
            max_iter: 1000,
        }
    }
}

/// Row-stochastic damped transition matrix; all-zero rows become uniform.
pub fn transition_matrix(weights: &DMatrix<f64>, damping: f64) -> Result<DMatrix<f64>, RankingError> {
    let n = weights.nrows();
    if n == 0 || weights.ncols() != n {
        return Err(RankingError::BadShape);
    }
    for i in 0..n {
        for j in 0..n {
            let w = weights[(i, j)];
            if w < 0.0 {
                return Err(RankingError::NegativeWeight(i, j));
            }
            if (w - weights[(j, i)]).abs() > 1e-12 * w.abs().max(1.0) {
                return Err(RankingError::NonSymmetricInput(i, j));
            }
        }
    }
    let uniform = 1.0 / n as f64;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let row_sum: f64 = weights.row(i).sum();
        for j in 0..n {
            let w = if row_sum > 0.0 { weights[(i, j)] / row_sum } else { uniform };
            p[(i, j)] = damping * w + (1.0 - damping) * uniform;
        }
    }
    Ok(p)
}

/// Stationary distribution of the damped random walk, by power iteration
/// until the L∞ change drops below `eps`.
pub fn lexrank(weights: &DMatrix<f64>, config: &LexRankConfig) -> Result<Vec<f64>, RankingError> {
    let p = transition_matrix(weights, config.damping)?;
    let n = p.nrows();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..config.max_iter {
        let mut next = vec![0.0; n];
        for (i, xi) in x.iter().enumerate() {
            for (j, nj) in next.iter_mut().enumerate() {
                *nj += xi * p[(i, j)];
            }
        }
        let sum: f64 = next.iter().sum();
        for v in &mut next {
            *v /= sum;
        }
        let delta = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if delta < config.eps {
            return Ok(x);
        }
    }
    log::warn!("lexrank: no convergence after {} iterations", config.max_iter);
    Ok(x)
}

/// Ranking key with centralities that differ only by rounding noise treated
/// as equal.
fn centrality_key(c: f64) -> i64 {
    (c * 1e10).round() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub phrase: CandidatePhrase,
    pub supporters: u32,
    /// Index of the source community in the clustering, if any.
    pub community: Option<usize>,
    pub centrality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub lecture_id: String,
    pub prompt: PromptKind,
    pub system: String,
    pub entries: Vec<SummaryEntry>,
}

#[derive(Serialize, Deserialize)]
struct BulletJson {
    text: String,
    supporters: u32,
    source_student: String,
    span: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct SummaryJson {
    lecture_id: String,
    prompt: PromptKind,
    system: String,
    bullets: Vec<BulletJson>,
}

impl Summary {
    pub fn empty(lecture_id: &str, prompt: PromptKind, system: &str) -> Self {
        Summary {
            lecture_id: lecture_id.into(),
            prompt,
            system: system.into(),
            entries: Vec::new(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = SummaryJson {
            lecture_id: self.lecture_id.clone(),
            prompt: self.prompt,
            system: self.system.clone(),
            bullets: self
                .entries
                .iter()
                .map(|e| BulletJson {
                    text: e.phrase.text(),
                    supporters: e.supporters,
                    source_student: e.phrase.student_id().to_string(),
                    span: [e.phrase.span.start, e.phrase.span.end],
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("summary serializes")
    }

    /// Plain bullet list, one `- text [supporters]` line per entry.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "- {} [{}]", e.phrase.text(), e.supporters);
        }
        out
    }

    /// Bullets as lowercased token lists, the unit ROUGE works on.
    pub fn segments(&self) -> Vec<Vec<String>> {
        self.entries.iter().map(|e| e.phrase.lowers()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssembleConfig {
    pub max_phrases: usize,
    /// Count distinct students instead of phrases as supporters.
    pub count_students: bool,
    pub lexrank: LexRankConfig,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            max_phrases: 5,
            count_students: false,
            lexrank: LexRankConfig::default(),
        }
    }
}

fn submatrix(graph: &PhraseGraph, members: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(members.len(), members.len(), |a, b| {
        if a == b {
            0.0
        } else {
            graph.weight(members[a], members[b]).unwrap_or(0.0)
        }
    })
}

/// One bullet per community, up to `max_phrases`. Overlapping communities
/// are made disjoint first; each bullet is the member with the highest
/// LexRank centrality inside its community (lowest node on ties), and
/// bullets are ordered by supporters, then centrality, then text.
pub fn assemble_summary(
    clustering: &Clustering,
    graph: &PhraseGraph,
    phrases: &[CandidatePhrase],
    config: &AssembleConfig,
    lecture_id: &str,
    prompt: PromptKind,
    system: &str,
) -> Result<Summary, RankingError> {
    if clustering.communities.is_empty() {
        return Err(RankingError::EmptyClustering);
    }
    let disjoint = clustering.disjoint_members();
    let mut entries = Vec::new();
    for (ci, members) in disjoint.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let centrality = lexrank(&submatrix(graph, members), &config.lexrank)?;
        let mut best = 0;
        for i in 1..members.len() {
            if centrality_key(centrality[i]) > centrality_key(centrality[best]) {
                best = i;
            }
        }
        let supporters = if config.count_students {
            members
                .iter()
                .map(|&m| phrases[m].student_id())
                .collect::<BTreeSet<_>>()
                .len()
        } else {
            members.len()
        };
        entries.push(SummaryEntry {
            phrase: phrases[members[best]].clone(),
            supporters: supporters as u32,
            community: Some(ci),
            centrality: centrality[best],
        });
    }
    entries.sort_by(|a, b| {
        b.supporters
            .cmp(&a.supporters)
            .then(centrality_key(b.centrality).cmp(&centrality_key(a.centrality)))
            .then(a.phrase.text().cmp(&b.phrase.text()))
    });
    entries.truncate(config.max_phrases);
    Ok(Summary {
        lecture_id: lecture_id.into(),
        prompt,
        system: system.into(),
        entries,
    })
}

/// Whole responses ranked by LexRank over a TF-cosine graph; similarities
/// below `threshold` are dropped. Ties keep document order.
pub fn lexrank_response_baseline(
    responses: &[Response],
    max_units: usize,
    threshold: f64,
    config: &LexRankConfig,
) -> Result<Vec<SummaryEntry>, RankingError> {
    let n = responses.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let stems: Vec<Vec<String>> = responses
        .iter()
        .map(|r| r.tokens.iter().filter(|t| !t.is_punctuation()).map(|t| t.stem.clone()).collect())
        .collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine_tf(&stems[i], &stems[j]);
            if s >= threshold && s > 0.0 {
                w[(i, j)] = s;
                w[(j, i)] = s;
            }
        }
    }
    let c = lexrank(&w, config)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| centrality_key(c[b]).cmp(&centrality_key(c[a])).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(max_units)
        .map(|i| SummaryEntry {
            phrase: CandidatePhrase::from_response(&responses[i], Span::new(0, responses[i].tokens.len())),
            supporters: 1,
            community: None,
            centrality: c[i],
        })
        .collect())
}
