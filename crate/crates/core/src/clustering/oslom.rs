//! Overlapping community detection by local optimisation of statistical
//! significance against a binomial configuration null model.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::{Clustering, Community, PhraseGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunityConfig {
    pub pvalue: f64,
    pub trials: usize,
    /// Communities overlapping more than this (Jaccard) count as the same.
    pub merge_jaccard: f64,
    pub seed: u64,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig {
            pvalue: 1.0,
            trials: 10,
            merge_jaccard: 0.8,
            seed: 0,
        }
    }
}

/// ln(1 − p) for p = P[X ≥ k], X ~ Binomial(n, q).
fn ln_complement_tail(k: u64, n: u64, q: f64) -> f64 {
    if k == 0 {
        return f64::NEG_INFINITY;
    }
    if k > n || q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let dist = Binomial::new(q, n).expect("valid binomial");
    let p = dist.sf(k - 1);
    if p < 0.5 {
        (-p).ln_1p()
    } else {
        dist.cdf(k - 1).ln()
    }
}

/// P[X ≥ k] for X ~ Binomial(n, q).
pub fn binomial_tail(k: u64, n: u64, q: f64) -> f64 {
    -ln_complement_tail(k, n, q).exp_m1()
}

/// Order-statistic corrected scores are kept as `s = n_ext · ln(1 − p)`, so
/// that `c = 1 − exp(s)`; a smaller `c` is a larger `s`. This keeps scores
/// distinguishable when `c` would round to 1.
fn corrected_log(ln_1mp: f64, n_ext: usize) -> f64 {
    if n_ext == 0 {
        0.0
    } else {
        n_ext as f64 * ln_1mp
    }
}

fn corrected(s: f64) -> f64 {
    -s.exp_m1()
}

struct Detector<'a> {
    g: &'a PhraseGraph,
    degree: Vec<f64>,
    two_m: f64,
    pvalue: f64,
}

/// Incrementally maintained community state.
struct Grower {
    members: BTreeSet<usize>,
    kin: Vec<f64>,
    total_degree: f64,
}

impl<'a> Detector<'a> {
    fn new(g: &'a PhraseGraph, pvalue: f64) -> Self {
        let degree: Vec<f64> = (0..g.len()).map(|i| g.degree(i)).collect();
        let two_m = degree.iter().sum();
        Detector { g, degree, two_m, pvalue }
    }

    /// ln(1 − p(v, C)) with `kin` the weight from v into C and `k_c` the
    /// total degree of C (v excluded).
    fn ln_1mp(&self, v: usize, kin: f64, k_c: f64) -> f64 {
        let q = (k_c / self.two_m).clamp(0.0, 1.0);
        ln_complement_tail(kin.round() as u64, self.degree[v].round() as u64, q)
    }

    fn grower(&self, seed: usize) -> Grower {
        let mut g = Grower {
            members: BTreeSet::new(),
            kin: vec![0.0; self.g.len()],
            total_degree: 0.0,
        };
        self.add(&mut g, seed);
        g
    }

    fn add(&self, c: &mut Grower, v: usize) {
        c.members.insert(v);
        c.total_degree += self.degree[v];
        for (u, w) in self.g.neighbors(v) {
            c.kin[u] += w;
        }
    }

    fn remove(&self, c: &mut Grower, v: usize) {
        c.members.remove(&v);
        c.total_degree -= self.degree[v];
        for (u, w) in self.g.neighbors(v) {
            c.kin[u] -= w;
        }
    }

    /// Minimum corrected log-score over members, i.e. the worst member, for
    /// the community `members ∪ extra`.
    fn worst_log(&self, c: &Grower, extra: Option<usize>) -> f64 {
        let size = c.members.len() + usize::from(extra.is_some());
        let n_ext = self.g.len() + 1 - size;
        let total = c.total_degree + extra.map_or(0.0, |x| self.degree[x]);
        let mut worst = f64::INFINITY;
        for u in c.members.iter().copied().chain(extra) {
            let mut kin = c.kin[u];
            if let Some(x) = extra {
                if u == x {
                    kin = c.kin[x];
                } else {
                    kin += self.g.weight(u, x).unwrap_or(0.0);
                }
            }
            let s = corrected_log(self.ln_1mp(u, kin, total - self.degree[u]), n_ext);
            worst = worst.min(s);
        }
        worst
    }

    fn grow(&self, seed: usize) -> Grower {
        let mut c = self.grower(seed);
        let mut worst = self.worst_log(&c, None);
        loop {
            let n_ext = self.g.len() - c.members.len();
            let mut best: Option<(f64, usize)> = None;
            let mut frontier: BTreeSet<usize> = BTreeSet::new();
            for &m in &c.members {
                for (u, _) in self.g.neighbors(m) {
                    if !c.members.contains(&u) {
                        frontier.insert(u);
                    }
                }
            }
            for v in frontier {
                let s = corrected_log(self.ln_1mp(v, c.kin[v], c.total_degree), n_ext);
                if best.is_none_or(|(bs, _)| s > bs) {
                    best = Some((s, v));
                }
            }
            let Some((s, v)) = best else { break };
            if corrected(s) > self.pvalue {
                break;
            }
            let new_worst = self.worst_log(&c, Some(v));
            if new_worst <= worst {
                break;
            }
            self.add(&mut c, v);
            worst = new_worst;
        }
        c
    }

    /// Drop the least significant member while its p-value exceeds
    /// pvalue/|C|.
    fn cleanup(&self, c: &mut Grower) {
        while c.members.len() > 1 {
            let threshold = self.pvalue / c.members.len() as f64;
            let mut worst: Option<(f64, usize)> = None;
            for &u in &c.members {
                let p = -self.ln_1mp(u, c.kin[u], c.total_degree - self.degree[u]).exp_m1();
                if worst.is_none_or(|(wp, _)| p > wp) {
                    worst = Some((p, u));
                }
            }
            let (p, u) = worst.expect("non-empty community");
            if p > threshold {
                self.remove(c, u);
            } else {
                break;
            }
        }
    }

    fn significance(&self, c: &Grower) -> f64 {
        corrected(self.worst_log(c, None))
    }

    fn trial(&self, seed: u64) -> Vec<Community> {
        let mut order: Vec<usize> = (0..self.g.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut covered = vec![false; self.g.len()];
        let mut found = Vec::new();
        for s in order {
            if covered[s] {
                continue;
            }
            let mut c = self.grow(s);
            self.cleanup(&mut c);
            for &m in &c.members {
                covered[m] = true;
            }
            if c.members.len() >= 2 {
                found.push(Community {
                    significance: self.significance(&c),
                    members: c.members.into_iter().collect(),
                });
            }
        }
        found
    }
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let sa: BTreeSet<_> = a.iter().collect();
    let sb: BTreeSet<_> = b.iter().collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn significance_order(a: &Community, b: &Community) -> std::cmp::Ordering {
    a.significance
        .total_cmp(&b.significance)
        .then(b.members.len().cmp(&a.members.len()))
        .then(a.members.cmp(&b.members))
}

/// Significant, possibly overlapping communities. Each trial grows
/// communities from every uncovered node in a seeded random order; a
/// community survives if a near-duplicate of it appears in at least half of
/// the trials. Nodes left uncovered become singletons.
pub fn detect_communities(graph: &PhraseGraph, config: &CommunityConfig) -> Clustering {
    let n = graph.len();
    if graph.edge_count() == 0 {
        return Clustering::from_communities(n, Vec::new());
    }
    let det = Detector::new(graph, config.pvalue);
    let trials = config.trials.max(1);
    let per_trial: Vec<Vec<Community>> = (0..trials)
        .into_par_iter()
        .map(|t| det.trial(config.seed.wrapping_add(t as u64)))
        .collect();

    // Representatives with the set of trials that produced a near-duplicate.
    let mut all: Vec<(usize, Community)> = per_trial
        .into_iter()
        .enumerate()
        .flat_map(|(t, cs)| cs.into_iter().map(move |c| (t, c)))
        .collect();
    all.sort_by(|a, b| significance_order(&a.1, &b.1).then(a.0.cmp(&b.0)));
    let mut reps: Vec<(Community, BTreeSet<usize>)> = Vec::new();
    for (t, c) in all {
        match reps
            .iter_mut()
            .find(|(r, _)| jaccard(&r.members, &c.members) > config.merge_jaccard)
        {
            Some((_, seen)) => {
                seen.insert(t);
            }
            None => reps.push((c, BTreeSet::from([t]))),
        }
    }
    let needed = trials.div_ceil(2);
    let stable: Vec<Community> = reps
        .into_iter()
        .filter(|(_, seen)| seen.len() >= needed)
        .map(|(c, _)| c)
        .collect();
    Clustering::from_communities(n, stable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{planted_partition, purity};

    #[test]
    fn binomial_tail_values() {
        // P[Bin(4, 0.5) >= 3] = 5/16.
        assert!((binomial_tail(3, 4, 0.5) - 5.0 / 16.0).abs() < 1e-12);
        assert_eq!(binomial_tail(0, 4, 0.5), 1.0);
        assert_eq!(binomial_tail(5, 4, 0.5), 0.0);
        // Tiny tails stay representable in log form.
        assert!(ln_complement_tail(40, 40, 0.01) < 0.0);
    }

    #[test]
    fn edgeless_graph_is_all_singletons() {
        let g = PhraseGraph::new(4);
        let c = detect_communities(&g, &CommunityConfig::default());
        assert_eq!(c.communities.len(), 4);
        assert!(c.communities.iter().all(|c| c.members.len() == 1));
    }

    fn two_cliques(s: usize) -> PhraseGraph {
        planted_partition(2, s, 1.0, 0.0, 0).0
    }

    #[test]
    fn disjoint_cliques_recovered_for_any_seed() {
        for seed in 0..20 {
            let g = two_cliques(5);
            let config = CommunityConfig { seed, ..Default::default() };
            let c = detect_communities(&g, &config);
            let sets: Vec<&Vec<usize>> = c.communities.iter().map(|c| &c.members).collect();
            assert_eq!(sets, vec![&vec![0, 1, 2, 3, 4], &vec![5, 6, 7, 8, 9]], "seed {seed}");
        }
    }

    #[test]
    fn cliques_of_every_size_survive_cleanup() {
        for s in 3..=8 {
            for seed in 0..5 {
                let g = two_cliques(s);
                let c = detect_communities(&g, &CommunityConfig { seed, ..Default::default() });
                assert_eq!(c.communities.len(), 2, "size {s}, seed {seed}");
                assert!(c.communities.iter().all(|c| c.members.len() == s));
            }
        }
    }

    #[test]
    fn strict_pvalue_blocks_small_cliques() {
        // First growth step in K3+K3: p = 1 - (5/6)^2, corrected over 5 outsiders.
        let c = 1.0 - (1.0 - (1.0 - (5.0f64 / 6.0).powi(2))).powi(5);
        assert!(c > 0.8);
        let g = two_cliques(3);
        let strict = detect_communities(&g, &CommunityConfig { pvalue: 0.5, ..Default::default() });
        assert_eq!(strict.communities.len(), 6);
    }

    #[test]
    fn planted_partition_purity() {
        for seed in 0..20 {
            let (g, labels) = planted_partition(3, 20, 0.9, 0.05, seed);
            let c = detect_communities(&g, &CommunityConfig { seed, ..Default::default() });
            let colors: Vec<Option<usize>> = labels.into_iter().map(Some).collect();
            let p = purity(&c, &colors).unwrap();
            assert!(p >= 0.9, "seed {seed}: purity {p}, {} communities", c.communities.len());
        }
    }

    #[test]
    fn deterministic_and_covering() {
        let (g, _) = planted_partition(4, 8, 0.7, 0.1, 3);
        let config = CommunityConfig { seed: 9, ..Default::default() };
        let a = detect_communities(&g, &config);
        assert_eq!(a, detect_communities(&g, &config));
        let covered: BTreeSet<usize> = a.communities.iter().flat_map(|c| c.members.iter().copied()).collect();
        assert_eq!(covered.len(), g.len());
        assert!(a.communities.iter().all(|c| !c.members.is_empty() && (0.0..=1.0).contains(&c.significance)));
    }
}
