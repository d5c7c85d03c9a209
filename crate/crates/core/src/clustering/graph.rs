use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ClusteringError;
use crate::extractor::CandidatePhrase;
use crate::similarity::{lsa_baseline_similar, metrics, predict_similar, Resources, SimilarityModel, VectorTable};

/// Undirected weighted graph over nodes `0..n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhraseGraph {
    adjacency: Vec<BTreeMap<usize, f64>>,
}

impl PhraseGraph {
    pub fn new(n: usize) -> Self {
        PhraseGraph {
            adjacency: vec![BTreeMap::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Insert or overwrite edge `{i, j}`. Self-loops and weights outside
    /// (0, 1] are rejected.
    pub fn add_edge(&mut self, i: usize, j: usize, w: f64) -> Result<(), ClusteringError> {
        if i == j || i >= self.len() || j >= self.len() || !(w > 0.0 && w <= 1.0) {
            return Err(ClusteringError::InvalidEdge { i, j, w });
        }
        self.adjacency[i].insert(j, w);
        self.adjacency[j].insert(i, w);
        Ok(())
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i].get(&j).copied()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[i].iter().map(|(&j, &w)| (j, w))
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].values().sum()
    }

    /// Edges with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, adj) in self.adjacency.iter().enumerate() {
            for (&j, &w) in adj.range(i + 1..) {
                out.push((i, j, w));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().iter().map(|e| e.2).sum()
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.len()];
        let mut out = Vec::new();
        for s in 0..self.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for (u, _) in self.neighbors(v) {
                    if comp[u] == usize::MAX {
                        comp[u] = id;
                        members.push(u);
                        stack.push(u);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Edge-list dump: a `#nodes n` header, then `i<TAB>j<TAB>w` lines.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#nodes {}", self.len())?;
        for (i, j, wt) in self.edges() {
            writeln!(w, "{i}\t{j}\t{wt}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, ClusteringError> {
        let bad = |line: usize, message: String| ClusteringError::GraphFormat { line, message };
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let n: usize = header
            .strip_prefix("#nodes ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(1, format!("expected \"#nodes n\", found {header:?}")))?;
        let mut g = PhraseGraph::new(n);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = match f.as_slice() {
                [i, j, w] => i.parse().ok().zip(j.parse().ok()).zip(w.parse().ok()),
                _ => None,
            };
            let ((i, j), w) = parsed.ok_or_else(|| bad(idx + 2, format!("expected i<TAB>j<TAB>w, found {line:?}")))?;
            g.add_edge(i, j, w).map_err(|e| bad(idx + 2, e.to_string()))?;
        }
        Ok(g)
    }
}

/// Decides whether two phrases are linked and with what weight in (0, 1].
pub trait EdgePredictor: Sync {
    fn edge(&self, a: &CandidatePhrase, b: &CandidatePhrase) -> Option<f64>;
}

impl<F> EdgePredictor for F
where
    F: Fn(&CandidatePhrase, &CandidatePhrase) -> Option<f64> + Sync,
{
    fn edge(&self, a: &CandidatePhrase, b: &CandidatePhrase) -> Option<f64> {
        self(a, b)
    }
}

/// The learned ensemble; the edge weight is the logistic of the decision value.
pub struct EnsemblePredictor<'a> {
    pub model: &'a SimilarityModel,
    pub resources: &'a Resources,
}

impl EdgePredictor for EnsemblePredictor<'_> {
    fn edge(&self, a: &CandidatePhrase, b: &CandidatePhrase) -> Option<f64> {
        let p = predict_similar(self.model, &a.tokens, &b.tokens, self.resources);
        p.similar.then(|| 1.0 / (1.0 + (-p.score).exp()))
    }
}

/// LSA cosine baseline; the edge weight is the cosine itself.
pub struct LsaPredictor<'a> {
    pub lsa: &'a VectorTable,
    pub threshold: f64,
}

impl EdgePredictor for LsaPredictor<'_> {
    fn edge(&self, a: &CandidatePhrase, b: &CandidatePhrase) -> Option<f64> {
        if !lsa_baseline_similar(self.lsa, &a.tokens, &b.tokens, self.threshold) {
            return None;
        }
        let lowers = |p: &CandidatePhrase| p.lowers();
        metrics::vector_cosine(self.lsa, &lowers(a), &lowers(b)).filter(|&c| c > 0.0)
    }
}

/// One node per phrase, an edge wherever the predictor fires.
pub fn build_phrase_graph(phrases: &[CandidatePhrase], predictor: &dyn EdgePredictor) -> PhraseGraph {
    let n = phrases.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let edges: Vec<(usize, usize, f64)> = pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            predictor
                .edge(&phrases[i], &phrases[j])
                .filter(|w| *w > 0.0)
                .map(|w| (i, j, w.min(1.0)))
        })
        .collect();
    let mut g = PhraseGraph::new(n);
    for (i, j, w) in edges {
        g.add_edge(i, j, w).expect("weights clamped into (0, 1]");
    }
    g
}

/// Random graph with `n_blocks` planted groups: intra-block pairs are linked
/// with probability `p_in`, inter-block pairs with `p_out`, all weights 1.
pub fn planted_partition(n_blocks: usize, block_size: usize, p_in: f64, p_out: f64, seed: u64) -> (PhraseGraph, Vec<usize>) {
    let n = n_blocks * block_size;
    let labels: Vec<usize> = (0..n).map(|i| i / block_size.max(1)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = PhraseGraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random_bool(p.clamp(0.0, 1.0)) {
                g.add_edge(i, j, 1.0).expect("valid edge");
            }
        }
    }
    (g, labels)
}
