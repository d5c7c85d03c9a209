use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Clustering, Community, PhraseGraph};

/// Result of a K-medoids run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMedoidsResult {
    pub clustering: Clustering,
    pub medoids: Vec<usize>,
    /// Sum of member-to-medoid distances after each assignment step.
    pub objective: Vec<f64>,
}

fn distance(g: &PhraseGraph, i: usize, j: usize) -> f64 {
    if i == j {
        0.0
    } else {
        1.0 - g.weight(i, j).unwrap_or(0.0)
    }
}

/// `⌈√n⌉`, the default number of clusters.
pub fn default_k(n: usize) -> usize {
    let mut k = (n as f64).sqrt().ceil() as usize;
    // Guard against floating error around perfect squares.
    while k > 0 && (k - 1) * (k - 1) >= n {
        k -= 1;
    }
    while k * k < n {
        k += 1;
    }
    k
}

fn assign(g: &PhraseGraph, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let owner = (0..g.len())
        .map(|v| {
            if let Some(pos) = medoids.iter().position(|&m| m == v) {
                return pos;
            }
            let mut best = 0;
            for (c, &m) in medoids.iter().enumerate().skip(1) {
                let (d, bd) = (distance(g, v, m), distance(g, v, medoids[best]));
                if d < bd || (d == bd && m < medoids[best]) {
                    best = c;
                }
            }
            total += distance(g, v, medoids[best]);
            best
        })
        .collect();
    (owner, total)
}

/// Partitioning around medoids with distance `1 − w` on edges and 1
/// elsewhere. Assignment ties go to the node's own medoid role, then to the
/// lowest medoid id; update ties keep the current medoid.
pub fn kmedoids(graph: &PhraseGraph, k: Option<usize>, seed: u64, max_iter: usize) -> KMedoidsResult {
    let n = graph.len();
    if n == 0 {
        return KMedoidsResult {
            clustering: Clustering::default(),
            medoids: Vec::new(),
            objective: Vec::new(),
        };
    }
    let k = k.unwrap_or_else(|| default_k(n)).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let mut objective = Vec::new();
    let mut owner;
    let mut iter = 0;
    loop {
        let (o, total) = assign(graph, &medoids);
        owner = o;
        objective.push(total);
        iter += 1;
        if iter >= max_iter {
            break;
        }
        let mut changed = false;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&v| owner[v] == c).collect();
            let cost = |m: usize| members.iter().map(|&v| distance(graph, v, m)).sum::<f64>();
            let mut best = medoids[c];
            let mut best_cost = cost(best);
            for &m in &members {
                let mc = cost(m);
                if mc < best_cost {
                    best = m;
                    best_cost = mc;
                }
            }
            if best != medoids[c] {
                medoids[c] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let communities = (0..k)
        .map(|c| Community {
            members: (0..n).filter(|&v| owner[v] == c).collect(),
            significance: 1.0,
        })
        .collect();
    KMedoidsResult {
        clustering: Clustering { communities },
        medoids,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::planted_partition;

    #[test]
    fn default_k_is_ceil_sqrt() {
        assert_eq!(default_k(1), 1);
        assert_eq!(default_k(9), 3);
        assert_eq!(default_k(10), 4);
        assert_eq!(default_k(16), 4);
    }

    #[test]
    fn single_node() {
        let r = kmedoids(&PhraseGraph::new(1), None, 0, 100);
        assert_eq!(r.clustering.communities.len(), 1);
        assert_eq!(r.clustering.communities[0].members, vec![0]);
    }

    #[test]
    fn nine_nodes_three_clusters() {
        let (g, _) = planted_partition(3, 3, 0.8, 0.1, 4);
        let r = kmedoids(&g, None, 4, 100);
        assert_eq!(r.clustering.communities.len(), 3);
        assert!(r.clustering.communities.iter().all(|c| !c.members.is_empty()));
        let mut all: Vec<usize> = r.clustering.communities.iter().flat_map(|c| c.members.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn cliques_recovered_for_every_seed() {
        let (g, _) = planted_partition(2, 5, 1.0, 0.0, 0);
        for seed in 0..20 {
            let r = kmedoids(&g, Some(2), seed, 100);
            let mut sets: Vec<Vec<usize>> = r.clustering.communities.iter().map(|c| c.members.clone()).collect();
            sets.sort();
            assert_eq!(sets, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9]], "seed {seed}");
        }
    }

    #[test]
    fn objective_non_increasing() {
        for seed in 0..20 {
            let (g, _) = planted_partition(4, 10, 0.6, 0.15, seed);
            let r = kmedoids(&g, None, seed, 100);
            for w in r.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", r.objective);
            }
            assert_eq!(r.clustering.communities.len(), default_k(40));
        }
    }
}
