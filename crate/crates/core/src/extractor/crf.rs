//! Linear-chain CRF over the three-label BIO alphabet.
//!
//! Ill-formed label bigrams (`O → I` and a sequence starting with `I`) carry
//! a transition weight of −∞, so the forward recursion, the gradient and the
//! decoder all range over well-formed sequences only.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::features::FeatureAlphabet;
use super::{BioLabel, ExtractorError, NUM_LABELS};

/// Sparse per-position feature activations of one sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSequence {
    pub positions: Vec<Vec<(usize, f64)>>,
}

impl SparseSequence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub l2_sigma: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Recorded for provenance; the optimiser itself is deterministic.
    pub seed: u64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            l2_sigma: 1.0,
            max_iterations: 200,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

/// Dense weights. `emission[f][y]` is the weight of feature `f` under label `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfWeights {
    pub emission: Vec<[f64; NUM_LABELS]>,
    pub transition: [[f64; NUM_LABELS]; NUM_LABELS],
    pub begin: [f64; NUM_LABELS],
    pub end: [f64; NUM_LABELS],
}

const O: usize = BioLabel::O as usize;
const I: usize = BioLabel::I as usize;

fn pinned_transition(from: usize, to: usize) -> bool {
    from == O && to == I
}

fn pinned_begin(to: usize) -> bool {
    to == I
}

impl CrfWeights {
    pub fn zeros(num_features: usize) -> Self {
        Self::from_params(num_features, &vec![0.0; param_len(num_features)])
    }

    /// Unpack a free-parameter vector (pinned slots are ignored).
    pub fn from_params(num_features: usize, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), param_len(num_features));
        let mut emission = vec![[0.0; NUM_LABELS]; num_features];
        for (f, row) in emission.iter_mut().enumerate() {
            row.copy_from_slice(&theta[f * NUM_LABELS..(f + 1) * NUM_LABELS]);
        }
        let base = num_features * NUM_LABELS;
        let mut transition = [[0.0; NUM_LABELS]; NUM_LABELS];
        for a in 0..NUM_LABELS {
            for b in 0..NUM_LABELS {
                transition[a][b] = if pinned_transition(a, b) {
                    f64::NEG_INFINITY
                } else {
                    theta[base + a * NUM_LABELS + b]
                };
            }
        }
        let mut begin = [0.0; NUM_LABELS];
        let mut end = [0.0; NUM_LABELS];
        for y in 0..NUM_LABELS {
            begin[y] = if pinned_begin(y) {
                f64::NEG_INFINITY
            } else {
                theta[base + 9 + y]
            };
            end[y] = theta[base + 12 + y];
        }
        CrfWeights {
            emission,
            transition,
            begin,
            end,
        }
    }

    pub fn to_params(&self) -> Vec<f64> {
        let f = self.emission.len();
        let mut theta = vec![0.0; param_len(f)];
        for (i, row) in self.emission.iter().enumerate() {
            theta[i * NUM_LABELS..(i + 1) * NUM_LABELS].copy_from_slice(row);
        }
        let base = f * NUM_LABELS;
        for a in 0..NUM_LABELS {
            for b in 0..NUM_LABELS {
                if !pinned_transition(a, b) {
                    theta[base + a * NUM_LABELS + b] = self.transition[a][b];
                }
            }
        }
        for y in 0..NUM_LABELS {
            if !pinned_begin(y) {
                theta[base + 9 + y] = self.begin[y];
            }
            theta[base + 12 + y] = self.end[y];
        }
        theta
    }

    pub fn num_features(&self) -> usize {
        self.emission.len()
    }

    /// Per-position label scores from emissions only.
    pub fn emissions(&self, seq: &SparseSequence) -> Vec<[f64; NUM_LABELS]> {
        seq.positions
            .iter()
            .map(|feats| {
                let mut s = [0.0; NUM_LABELS];
                for &(f, v) in feats {
                    for (y, sy) in s.iter_mut().enumerate() {
                        *sy += v * self.emission[f][y];
                    }
                }
                s
            })
            .collect()
    }

    /// Total score of a labeling (−∞ when ill-formed).
    pub fn score(&self, seq: &SparseSequence, labels: &[BioLabel]) -> f64 {
        assert_eq!(seq.len(), labels.len());
        if labels.is_empty() {
            return 0.0;
        }
        let em = self.emissions(seq);
        let mut total = self.begin[labels[0] as usize];
        for t in 0..labels.len() {
            if t > 0 {
                total += self.transition[labels[t - 1] as usize][labels[t] as usize];
            }
            total += em[t][labels[t] as usize];
        }
        total + self.end[labels[labels.len() - 1] as usize]
    }

    fn forward(&self, em: &[[f64; NUM_LABELS]]) -> Vec<[f64; NUM_LABELS]> {
        let mut alpha = vec![[f64::NEG_INFINITY; NUM_LABELS]; em.len()];
        for y in 0..NUM_LABELS {
            alpha[0][y] = self.begin[y] + em[0][y];
        }
        for t in 1..em.len() {
            for y in 0..NUM_LABELS {
                let terms = [
                    alpha[t - 1][0] + self.transition[0][y],
                    alpha[t - 1][1] + self.transition[1][y],
                    alpha[t - 1][2] + self.transition[2][y],
                ];
                alpha[t][y] = log_sum_exp(&terms) + em[t][y];
            }
        }
        alpha
    }

    fn backward(&self, em: &[[f64; NUM_LABELS]]) -> Vec<[f64; NUM_LABELS]> {
        let n = em.len();
        let mut beta = vec![[f64::NEG_INFINITY; NUM_LABELS]; n];
        beta[n - 1] = self.end;
        for t in (0..n - 1).rev() {
            for y in 0..NUM_LABELS {
                let terms = [
                    self.transition[y][0] + em[t + 1][0] + beta[t + 1][0],
                    self.transition[y][1] + em[t + 1][1] + beta[t + 1][1],
                    self.transition[y][2] + em[t + 1][2] + beta[t + 1][2],
                ];
                beta[t][y] = log_sum_exp(&terms);
            }
        }
        beta
    }

    /// Log partition function by the forward recursion.
    pub fn log_partition(&self, seq: &SparseSequence) -> f64 {
        assert!(!seq.is_empty(), "log_partition of an empty sequence");
        let em = self.emissions(seq);
        let alpha = self.forward(&em);
        let last = alpha[alpha.len() - 1];
        log_sum_exp(&[
            last[0] + self.end[0],
            last[1] + self.end[1],
            last[2] + self.end[2],
        ])
    }

    /// Log partition function by the backward recursion.
    pub fn log_partition_backward(&self, seq: &SparseSequence) -> f64 {
        assert!(!seq.is_empty(), "log_partition of an empty sequence");
        let em = self.emissions(seq);
        let beta = self.backward(&em);
        log_sum_exp(&[
            self.begin[0] + em[0][0] + beta[0][0],
            self.begin[1] + em[0][1] + beta[0][1],
            self.begin[2] + em[0][2] + beta[0][2],
        ])
    }

    /// Highest-scoring well-formed labeling. Exact ties resolve toward the
    /// order O < B < I at the earliest differing position.
    pub fn viterbi(&self, seq: &SparseSequence) -> Vec<BioLabel> {
        let n = seq.len();
        if n == 0 {
            return Vec::new();
        }
        let em = self.emissions(seq);
        // best[t][y]: max score of positions t..n given label y at t.
        let mut best = vec![[f64::NEG_INFINITY; NUM_LABELS]; n];
        for y in 0..NUM_LABELS {
            best[n - 1][y] = em[n - 1][y] + self.end[y];
        }
        for t in (0..n - 1).rev() {
            for y in 0..NUM_LABELS {
                let mut m = f64::NEG_INFINITY;
                for z in 0..NUM_LABELS {
                    m = m.max(self.transition[y][z] + best[t + 1][z]);
                }
                best[t][y] = em[t][y] + m;
            }
        }
        let pick = |cand: [f64; NUM_LABELS]| {
            let mut arg = 0;
            for y in 1..NUM_LABELS {
                if cand[y] > cand[arg] {
                    arg = y;
                }
            }
            arg
        };
        let mut labels = Vec::with_capacity(n);
        let mut prev = pick([
            self.begin[0] + best[0][0],
            self.begin[1] + best[0][1],
            self.begin[2] + best[0][2],
        ]);
        labels.push(BioLabel::from_index(prev));
        for row in best.iter().skip(1) {
            let y = pick([
                self.transition[prev][0] + row[0],
                self.transition[prev][1] + row[1],
                self.transition[prev][2] + row[2],
            ]);
            labels.push(BioLabel::from_index(y));
            prev = y;
        }
        labels
    }
}

pub fn param_len(num_features: usize) -> usize {
    num_features * NUM_LABELS + NUM_LABELS * NUM_LABELS + 2 * NUM_LABELS
}

/// Indices of the free-parameter vector that are structurally pinned.
pub fn pinned_params(num_features: usize) -> Vec<usize> {
    let base = num_features * NUM_LABELS;
    vec![base + O * NUM_LABELS + I, base + 9 + I]
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// A training instance: features plus gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub features: SparseSequence,
    pub labels: Vec<BioLabel>,
}

/// L2-regularised conditional log-likelihood over a fixed training set.
pub struct CrfObjective<'a> {
    pub instances: &'a [TrainingInstance],
    pub num_features: usize,
    pub l2_sigma: f64,
}

impl CrfObjective<'_> {
    /// Regularised log-likelihood and its gradient with respect to the
    /// free-parameter vector. Pinned slots have zero gradient.
    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let w = CrfWeights::from_params(self.num_features, theta);
        let base = self.num_features * NUM_LABELS;
        let mut grad = vec![0.0; theta.len()];
        let mut value = 0.0;
        for inst in self.instances {
            let seq = &inst.features;
            let n = seq.len();
            if n == 0 {
                continue;
            }
            let em = w.emissions(seq);
            let alpha = w.forward(&em);
            let beta = w.backward(&em);
            let last = alpha[n - 1];
            let log_z = log_sum_exp(&[last[0] + w.end[0], last[1] + w.end[1], last[2] + w.end[2]]);
            value += w.score(seq, &inst.labels) - log_z;

            // Empirical counts.
            for (t, feats) in seq.positions.iter().enumerate() {
                let y = inst.labels[t] as usize;
                for &(f, v) in feats {
                    grad[f * NUM_LABELS + y] += v;
                }
                if t > 0 {
                    grad[base + inst.labels[t - 1] as usize * NUM_LABELS + y] += 1.0;
                }
            }
            grad[base + 9 + inst.labels[0] as usize] += 1.0;
            grad[base + 12 + inst.labels[n - 1] as usize] += 1.0;

            // Expected counts.
            for t in 0..n {
                for y in 0..NUM_LABELS {
                    let p = (alpha[t][y] + beta[t][y] - log_z).exp();
                    if p == 0.0 {
                        continue;
                    }
                    for &(f, v) in &seq.positions[t] {
                        grad[f * NUM_LABELS + y] -= v * p;
                    }
                    if t == 0 {
                        grad[base + 9 + y] -= p;
                    }
                    if t == n - 1 {
                        grad[base + 12 + y] -= p;
                    }
                }
                if t > 0 {
                    for a in 0..NUM_LABELS {
                        for b in 0..NUM_LABELS {
                            let lp = alpha[t - 1][a] + w.transition[a][b] + em[t][b] + beta[t][b] - log_z;
                            let p = lp.exp();
                            grad[base + a * NUM_LABELS + b] -= p;
                        }
                    }
                }
            }
        }
        let inv_var = 1.0 / (self.l2_sigma * self.l2_sigma);
        for (g, th) in grad.iter_mut().zip(theta) {
            *g -= th * inv_var;
            value -= 0.5 * th * th * inv_var;
        }
        for p in pinned_params(self.num_features) {
            grad[p] = 0.0;
        }
        (value, grad)
    }
}

/// Optimisation trace returned alongside a trained model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    /// Regularised log-likelihood at the start and after every accepted step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximise the objective with limited-memory BFGS and an Armijo
/// backtracking line search. Only steps that strictly improve the objective
/// are accepted.
pub(crate) fn maximize_lbfgs<F>(mut eval: F, x0: Vec<f64>, config: &CrfConfig, pinned: &[usize]) -> (Vec<f64>, TrainTrace)
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    const HISTORY: usize = 6;
    let mut x = x0;
    // Minimise the negated objective.
    let (v, g) = eval(&x);
    let mut f = -v;
    let mut g: Vec<f64> = g.into_iter().map(|gi| -gi).collect();
    let mut trace = TrainTrace {
        objective: vec![v],
        ..Default::default()
    };
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    for iter in 0..config.max_iterations {
        if max_abs(&g) < config.tolerance {
            trace.converged = true;
            break;
        }
        trace.iterations = iter + 1;
        let mut d = two_loop(&g, &s_hist, &y_hist);
        for &p in pinned {
            d[p] = 0.0;
        }
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|x| -x).collect();
            slope = dot(&d, &g);
        }
        let mut step = if s_hist.is_empty() {
            1.0 / dot(&g, &g).sqrt().max(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..50 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (vn, gn) = eval(&xn);
            let fnew = -vn;
            if fnew.is_finite() && fnew <= f + 1e-4 * step * slope && fnew < f {
                accepted = Some((xn, fnew, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            // No improving step: we are at numerical precision.
            trace.converged = max_abs(&g) < config.tolerance.sqrt();
            break;
        };
        let gn: Vec<f64> = gn.into_iter().map(|gi| -gi).collect();
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-10 {
            if s_hist.len() == HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        x = xn;
        f = fnew;
        g = gn;
        trace.objective.push(-f);
    }
    if max_abs(&g) < config.tolerance {
        trace.converged = true;
    }
    (x, trace)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    let rhos: Vec<f64> = (0..k).map(|i| 1.0 / dot(&y_hist[i], &s_hist[i])).collect();
    for i in (0..k).rev() {
        alphas[i] = rhos[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alphas[i] * yj;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        for qj in &mut q {
            *qj *= gamma;
        }
    }
    for i in 0..k {
        let beta = rhos[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alphas[i] - beta) * sj;
        }
    }
    q.into_iter().map(|x| -x).collect()
}

/// Trained model: feature alphabet, weights and the configuration used.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    pub alphabet: FeatureAlphabet,
    pub weights: CrfWeights,
    pub config: CrfConfig,
}

pub fn train_crf(
    instances: &[TrainingInstance],
    alphabet: FeatureAlphabet,
    config: CrfConfig,
) -> Result<(CrfModel, TrainTrace), ExtractorError> {
    if !instances
        .iter()
        .any(|inst| inst.labels.iter().any(|&l| l != BioLabel::O))
    {
        return Err(ExtractorError::DegenerateTrainingSet);
    }
    let num_features = alphabet.len();
    let objective = CrfObjective {
        instances,
        num_features,
        l2_sigma: config.l2_sigma,
    };
    let pinned = pinned_params(num_features);
    let (theta, trace) = maximize_lbfgs(
        |th| objective.value_and_gradient(th),
        vec![0.0; param_len(num_features)],
        &config,
        &pinned,
    );
    log::debug!(
        "crf: {} iterations, objective {:.4}, converged {}",
        trace.iterations,
        trace.objective.last().copied().unwrap_or(f64::NAN),
        trace.converged
    );
    Ok((
        CrfModel {
            alphabet,
            weights: CrfWeights::from_params(num_features, &theta),
            config,
        },
        trace,
    ))
}

const MODEL_HEADER: &str = "crf-model v1";
const TRANSITION_MARKER: &str = "#transitions";

fn label_name(y: usize) -> &'static str {
    BioLabel::from_index(y).as_str()
}

impl CrfModel {
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MODEL_HEADER}")?;
        writeln!(w, "{}", serde_json::to_string(&self.config).expect("config serializes"))?;
        for (f, name) in self.alphabet.names().iter().enumerate() {
            for y in 0..NUM_LABELS {
                writeln!(w, "{name}\t{}\t{}", label_name(y), self.weights.emission[f][y])?;
            }
        }
        writeln!(w, "{TRANSITION_MARKER}")?;
        for y in 0..NUM_LABELS {
            writeln!(w, "BOS\t{}\t{}", label_name(y), self.weights.begin[y])?;
        }
        for a in 0..NUM_LABELS {
            for b in 0..NUM_LABELS {
                writeln!(w, "{}\t{}\t{}", label_name(a), label_name(b), self.weights.transition[a][b])?;
            }
        }
        for y in 0..NUM_LABELS {
            writeln!(w, "{}\tEOS\t{}", label_name(y), self.weights.end[y])?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, ExtractorError> {
        let bad = |line: usize, message: &str| ExtractorError::ModelFormat {
            line,
            message: message.to_owned(),
        };
        let mut lines = r.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, String), ExtractorError> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(bad(i + 1, &e.to_string())),
                None => Err(bad(0, &format!("unexpected end of file, expected {expect}"))),
            }
        };
        let (ln, header) = next("header")?;
        if header.trim() != MODEL_HEADER {
            return Err(bad(ln, "missing crf-model v1 header"));
        }
        let (ln, cfg) = next("config")?;
        let config: CrfConfig = serde_json::from_str(&cfg).map_err(|e| bad(ln, &e.to_string()))?;
        let mut alphabet = FeatureAlphabet::default();
        let mut emission: Vec<[f64; NUM_LABELS]> = Vec::new();
        let parse_w = |ln: usize, s: &str| s.trim().parse::<f64>().map_err(|_| bad(ln, "bad weight"));
        loop {
            let (ln, line) = next("feature or transition block")?;
            if line == TRANSITION_MARKER {
                break;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(bad(ln, "expected feature<TAB>label<TAB>weight"));
            }
            let y = BioLabel::parse(parts[1]).ok_or_else(|| bad(ln, "unknown label"))? as usize;
            let f = alphabet.intern(parts[0]);
            if f == emission.len() {
                emission.push([0.0; NUM_LABELS]);
            }
            emission[f][y] = parse_w(ln, parts[2])?;
        }
        let mut weights = CrfWeights::zeros(emission.len());
        weights.emission = emission;
        for _ in 0..(NUM_LABELS + NUM_LABELS * NUM_LABELS + NUM_LABELS) {
            let (ln, line) = next("transition")?;
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(bad(ln, "expected from<TAB>to<TAB>weight"));
            }
            let v = parse_w(ln, parts[2])?;
            match (parts[0], parts[1]) {
                ("BOS", to) => {
                    let y = BioLabel::parse(to).ok_or_else(|| bad(ln, "unknown label"))? as usize;
                    weights.begin[y] = v;
                }
                (from, "EOS") => {
                    let y = BioLabel::parse(from).ok_or_else(|| bad(ln, "unknown label"))? as usize;
                    weights.end[y] = v;
                }
                (from, to) => {
                    let a = BioLabel::parse(from).ok_or_else(|| bad(ln, "unknown label"))? as usize;
                    let b = BioLabel::parse(to).ok_or_else(|| bad(ln, "unknown label"))? as usize;
                    weights.transition[a][b] = v;
                }
            }
        }
        Ok(CrfModel {
            alphabet,
            weights,
            config,
        })
    }
}
