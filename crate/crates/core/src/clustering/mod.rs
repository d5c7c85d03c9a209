//! Phrase graphs and their partition into communities.

mod graph;
mod kmedoids;
mod oslom;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{build_phrase_graph, planted_partition, EdgePredictor, EnsemblePredictor, LsaPredictor, PhraseGraph};
pub use kmedoids::{default_k, kmedoids, KMedoidsResult};
pub use oslom::{binomial_tail, detect_communities, jaccard, CommunityConfig};

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid edge ({i}, {j}) with weight {w}")]
    InvalidEdge { i: usize, j: usize, w: f64 },
    #[error("graph dump line {line}: {message}")]
    GraphFormat { line: usize, message: String },
    #[error("no phrase carries a color")]
    NoColoredPhrases,
}

/// A group of nodes. `significance` is the corrected score of the weakest
/// member; lower is more significant, singletons get 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub members: Vec<usize>,
    pub significance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub communities: Vec<Community>,
}

impl Clustering {
    /// Order communities by significance (then size, then members) and add
    /// a singleton for every node not covered.
    pub fn from_communities(n: usize, mut communities: Vec<Community>) -> Self {
        communities.retain(|c| !c.members.is_empty());
        for c in &mut communities {
            c.members.sort_unstable();
            c.members.dedup();
        }
        communities.sort_by(|a, b| {
            a.significance
                .total_cmp(&b.significance)
                .then(b.members.len().cmp(&a.members.len()))
                .then(a.members.cmp(&b.members))
        });
        let mut covered = vec![false; n];
        for c in &communities {
            for &m in &c.members {
                covered[m] = true;
            }
        }
        for (v, _) in covered.iter().enumerate().filter(|(_, c)| !**c) {
            communities.push(Community {
                members: vec![v],
                significance: 1.0,
            });
        }
        Clustering { communities }
    }

    /// Assign each node to exactly one community: the most significant one
    /// containing it (earliest in the list on ties). Returns disjoint
    /// member lists aligned with `self.communities`; some may be empty.
    pub fn disjoint_members(&self) -> Vec<Vec<usize>> {
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for (ci, c) in self.communities.iter().enumerate() {
            for &m in &c.members {
                match owner.get(&m) {
                    Some(&prev) if self.communities[prev].significance <= c.significance => {}
                    _ => {
                        owner.insert(m, ci);
                    }
                }
            }
        }
        let mut out = vec![Vec::new(); self.communities.len()];
        for (m, ci) in owner {
            out[ci].push(m);
        }
        out
    }
}

/// Share of colored (phrase, community) incidences that agree with their
/// community's majority color. Uncolored phrases are ignored.
pub fn purity<C: Ord>(clustering: &Clustering, colors: &[Option<C>]) -> Result<f64, ClusteringError> {
    let mut agree = 0usize;
    let mut total = 0usize;
    for c in &clustering.communities {
        let mut counts: BTreeMap<&C, usize> = BTreeMap::new();
        for &m in &c.members {
            if let Some(Some(color)) = colors.get(m) {
                *counts.entry(color).or_default() += 1;
            }
        }
        agree += counts.values().max().copied().unwrap_or(0);
        total += counts.values().sum::<usize>();
    }
    if total == 0 {
        return Err(ClusteringError::NoColoredPhrases);
    }
    Ok(agree as f64 / total as f64)
}
