//! Latent semantic analysis: TF-IDF weighting and a randomized truncated SVD.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vectors::VectorTable;
use super::SimilarityError;
use crate::corpus::{is_punct, ReflectionCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvdConfig {
    pub oversampling: usize,
    pub min_power_iterations: usize,
    pub max_power_iterations: usize,
    /// Stop once every retained singular value moves by less than this
    /// relative amount between two power iterations.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        SvdConfig {
            oversampling: 10,
            min_power_iterations: 4,
            max_power_iterations: 300,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// Leading singular triplets: `u` is m×k, `singular_values` descending.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub iterations: usize,
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Randomized subspace iteration for an m×n operator given through its
/// products `mul(X) = A·X` and `tmul(Y) = Aᵀ·Y`.
pub fn randomized_svd<F, G>(rows: usize, cols: usize, mul: F, tmul: G, k: usize, config: &SvdConfig) -> TruncatedSvd
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let l = (k + config.oversampling).min(rows.min(cols));
    let k = k.min(l);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let omega = DMatrix::from_fn(cols, l, |_, _| rng.random_range(-1.0..1.0));
    let mut q = orthonormalize(mul(&omega));
    let mut prev: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let (u_small, sigma) = loop {
        q = orthonormalize(mul(&orthonormalize(tmul(&q))));
        iterations += 1;
        // B = Qᵀ A, formed as (Aᵀ Q)ᵀ.
        let b = tmul(&q).transpose();
        let svd = b.svd(true, false);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let sigma: Vec<f64> = order.iter().take(k).map(|&i| svd.singular_values[i]).collect();
        let top = sigma.first().copied().unwrap_or(0.0);
        let settled = prev.as_ref().is_some_and(|p| {
            sigma
                .iter()
                .zip(p)
                .all(|(s, ps)| (s - ps).abs() <= config.tolerance * s.max(top * 1e-12))
        });
        if (iterations >= config.min_power_iterations && settled) || iterations >= config.max_power_iterations {
            if !settled {
                log::warn!("randomized svd: no convergence after {iterations} iterations");
            }
            let u_b = svd.u.expect("u requested");
            let u_small = DMatrix::from_fn(u_b.nrows(), k, |r, c| u_b[(r, order[c])]);
            break (u_small, sigma);
        }
        prev = Some(sigma);
    };
    TruncatedSvd {
        u: &q * u_small,
        singular_values: sigma,
        iterations,
    }
}

/// Column-compressed term-document matrix.
struct SparseMatrix {
    rows: usize,
    cols: usize,
    // (row, value) entries of each column.
    columns: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    fn mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, x.ncols());
        for (c, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                for j in 0..x.ncols() {
                    out[(r, j)] += v * x[(c, j)];
                }
            }
        }
        out
    }

    fn tmul(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.cols, y.ncols());
        for (c, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                for j in 0..y.ncols() {
                    out[(c, j)] += v * y[(r, j)];
                }
            }
        }
        out
    }
}

/// Outcome of building an LSA space.
#[derive(Debug, Clone)]
pub struct LsaSpace {
    pub table: VectorTable,
    pub singular_values: Vec<f64>,
    pub requested_dim: usize,
}

/// Lowercased, punctuation-free tokens of every response in the corpus; the
/// default LSA background.
pub fn corpus_documents(corpus: &ReflectionCorpus) -> Vec<Vec<String>> {
    corpus
        .all_responses()
        .map(|r| r.tokens.iter().filter(|t| !t.is_punctuation()).map(|t| t.lower.clone()).collect())
        .collect()
}

/// Documents from plain text, one document per non-empty line.
pub fn text_documents(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|line| {
            crate::corpus::tokenize(line)
                .into_iter()
                .filter(|t| !t.raw.chars().all(is_punct))
                .map(|t| t.lower)
                .collect::<Vec<_>>()
        })
        .filter(|d| !d.is_empty())
        .collect()
}

/// Smoothed TF-IDF term-document matrix followed by a rank-`k` SVD. Term
/// vectors are rows of U·Σ scaled to unit length; terms whose projection
/// vanishes are left out of the table. When the matrix has fewer than `k`
/// nonzero singular values the dimension is reduced with a warning.
pub fn build_lsa(documents: &[Vec<String>], k: usize, config: &SvdConfig) -> Result<LsaSpace, SimilarityError> {
    if k == 0 {
        return Err(SimilarityError::RankDeficient { requested: 0, available: 0 });
    }
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for d in documents {
        for w in d {
            vocab.entry(w.as_str()).or_insert(0);
        }
    }
    for (i, v) in vocab.values_mut().enumerate() {
        *v = i;
    }
    let (m, n) = (vocab.len(), documents.len());
    if m == 0 || n == 0 {
        return Err(SimilarityError::RankDeficient { requested: k, available: 0 });
    }
    let mut df = vec![0usize; m];
    let mut columns = Vec::with_capacity(n);
    for d in documents {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for w in d {
            *tf.entry(vocab[w.as_str()]).or_insert(0.0) += 1.0;
        }
        for &t in tf.keys() {
            df[t] += 1;
        }
        columns.push(tf.into_iter().collect::<Vec<_>>());
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    for col in &mut columns {
        for (t, v) in col.iter_mut() {
            *v *= idf[*t];
        }
    }
    let a = SparseMatrix { rows: m, cols: n, columns };
    let svd = randomized_svd(m, n, |x| a.mul(x), |y| a.tmul(y), k, config);
    let top = svd.singular_values.first().copied().unwrap_or(0.0);
    let rank = svd.singular_values.iter().take_while(|&&s| s > top * 1e-10 && s > 0.0).count();
    if rank == 0 {
        return Err(SimilarityError::RankDeficient { requested: k, available: 0 });
    }
    if rank < k {
        log::warn!("lsa: only {rank} nonzero singular values, reducing dimension from {k}");
    }
    let mut entries = Vec::with_capacity(m);
    for (word, &t) in &vocab {
        let v: Vec<f64> = (0..rank).map(|c| svd.u[(t, c)] * svd.singular_values[c]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > top * 1e-12 {
            entries.push((word.to_string(), v.into_iter().map(|x| x / norm).collect()));
        }
    }
    Ok(LsaSpace {
        table: VectorTable::new(rank, entries)?,
        singular_values: svd.singular_values[..rank].to_vec(),
        requested_dim: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One-sided Jacobi SVD; returns singular values in descending order.
    fn jacobi_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
        let mut u = a.clone();
        let n = u.ncols();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha: f64 = u.column(p).norm_squared();
                    let beta: f64 = u.column(q).norm_squared();
                    let gamma: f64 = u.column(p).dot(&u.column(q));
                    if gamma == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt());
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for r in 0..u.nrows() {
                        let (x, y) = (u[(r, p)], u[(r, q)]);
                        u[(r, p)] = c * x - s * y;
                        u[(r, q)] = s * x + c * y;
                    }
                }
            }
            if off < 1e-14 {
                break;
            }
        }
        let mut s: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[test]
    fn jacobi_oracle_sanity() {
        let a = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
        let s = jacobi_singular_values(&a);
        assert!((s[0] - 4.0).abs() < 1e-14 && (s[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = DMatrix::from_fn(50, 30, |_, _| rng.random_range(-1.0..1.0));
        let oracle = jacobi_singular_values(&a);
        let svd = randomized_svd(50, 30, |x| &a * x, |y| a.transpose() * y, 5, &SvdConfig::default());
        for (s, o) in svd.singular_values.iter().zip(&oracle) {
            assert!(((s - o) / o).abs() < 1e-6, "{s} vs {o}");
        }
        // Columns of U are orthonormal.
        let gram = svd.u.transpose() * &svd.u;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
    }

    fn docs(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split_whitespace().map(str::to_owned).collect()).collect()
    }

    #[test]
    fn identical_documents_rank_one() {
        let d = docs(&["central limit theorem", "central limit theorem"]);
        let space = build_lsa(&d, 1, &SvdConfig::default()).unwrap();
        let a = space.table.get("central").unwrap();
        for w in ["limit", "theorem"] {
            let b = space.table.get(w).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
        assert!((a[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_blocks() {
        let d = docs(&["a b c", "a b", "a c", "x y", "y", "x y y"]);
        let space = build_lsa(&d, 4, &SvdConfig::default()).unwrap();
        let t = &space.table;
        for w in t.words() {
            let v = t.get(w).unwrap();
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for p in ["a", "b", "c"] {
            for q in ["x", "y"] {
                let dot: f64 = t.get(p).unwrap().iter().zip(t.get(q).unwrap()).map(|(x, y)| x * y).sum();
                assert!(dot.abs() < 1e-9, "{p}/{q}: {dot}");
            }
        }
    }

    #[test]
    fn rank_deficient_reduces_dimension() {
        let d = docs(&["a b", "a b"]);
        let space = build_lsa(&d, 3, &SvdConfig::default()).unwrap();
        assert_eq!(space.table.dim(), 1);
        assert_eq!(space.requested_dim, 3);
        assert!(build_lsa(&[], 3, &SvdConfig::default()).is_err());
        assert!(build_lsa(&d, 0, &SvdConfig::default()).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let d = docs(&["a b c", "b c d", "c d e", "a e", "b d"]);
        let x = build_lsa(&d, 2, &SvdConfig::default()).unwrap();
        let y = build_lsa(&d, 2, &SvdConfig::default()).unwrap();
        assert_eq!(x.table, y.table);
    }
}
