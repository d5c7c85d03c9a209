//! Linear SVM over pair features, trained by stochastic subgradient descent
//! on a class-weighted hinge loss.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Metric, PairFeatures, SimilarityError, NUM_INPUTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Inverse regularisation strength; λ = 1 / (C·N).
    pub c: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 50,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityModel {
    /// Metric values, then mask bits, then the bias.
    pub weights: Vec<f64>,
    pub config: SvmConfig,
}

/// Per-epoch training objective. Rejected epochs repeat the previous value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SvmTrace {
    pub objective: Vec<f64>,
    pub rejected_epochs: usize,
}

fn dot(w: &[f64], x: &[f64; NUM_INPUTS]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn objective(w: &[f64], xs: &[[f64; NUM_INPUTS]], ys: &[f64], cw: &[f64], lambda: f64) -> f64 {
    let reg: f64 = w[..NUM_INPUTS - 1].iter().map(|v| v * v).sum::<f64>() * lambda / 2.0;
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .zip(cw)
        .map(|((x, y), c)| c * (1.0 - y * dot(w, x)).max(0.0))
        .sum();
    reg + loss / xs.len() as f64
}

/// Train on feature vectors with boolean labels (`true` = similar).
pub fn train_svm(features: &[PairFeatures], labels: &[bool], config: SvmConfig) -> Result<(SimilarityModel, SvmTrace), SimilarityError> {
    assert_eq!(features.len(), labels.len());
    let n = features.len();
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == n {
        return Err(SimilarityError::SingleClassTrainingSet);
    }
    let xs: Vec<[f64; NUM_INPUTS]> = features.iter().map(PairFeatures::to_input).collect();
    let ys: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let (w_pos, w_neg) = (n as f64 / (2.0 * n_pos as f64), n as f64 / (2.0 * (n - n_pos) as f64));
    let cw: Vec<f64> = labels.iter().map(|&l| if l { w_pos } else { w_neg }).collect();
    let lambda = 1.0 / (config.c * n as f64);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let mut w = vec![0.0; NUM_INPUTS];
    let mut eta = config.learning_rate;
    let mut current = objective(&w, &xs, &ys, &cw, lambda);
    let mut trace = SvmTrace {
        objective: vec![current],
        rejected_epochs: 0,
    };
    for _ in 0..config.epochs {
        let start = w.clone();
        for &i in &order {
            let margin = ys[i] * dot(&w, &xs[i]);
            for (j, wj) in w.iter_mut().enumerate() {
                let reg = if j < NUM_INPUTS - 1 { lambda * *wj } else { 0.0 };
                let hinge = if margin < 1.0 { cw[i] * ys[i] * xs[i][j] } else { 0.0 };
                *wj -= eta * (reg - hinge);
            }
        }
        let value = objective(&w, &xs, &ys, &cw, lambda);
        if value > current || !value.is_finite() {
            w = start;
            eta /= 2.0;
            trace.rejected_epochs += 1;
        } else {
            current = value;
        }
        trace.objective.push(current);
    }
    log::debug!(
        "svm: objective {:.5} after {} epochs ({} rejected)",
        current,
        config.epochs,
        trace.rejected_epochs
    );
    Ok((SimilarityModel { weights: w, config }, trace))
}

const MODEL_HEADER: &str = "sim-model v1";

fn input_names() -> Vec<String> {
    let mut names: Vec<String> = Metric::ALL.iter().map(|m| m.name().to_string()).collect();
    names.extend(Metric::ALL.iter().map(|m| format!("mask:{}", m.name())));
    names.push("bias".into());
    names
}

impl SimilarityModel {
    /// Raw decision value; positive means similar.
    pub fn decision(&self, f: &PairFeatures) -> f64 {
        dot(&self.weights, &f.to_input())
    }

    /// Weight of a named input.
    pub fn weight(&self, name: &str) -> Option<f64> {
        input_names().iter().position(|n| n == name).map(|i| self.weights[i])
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MODEL_HEADER}")?;
        writeln!(w, "{}", serde_json::to_string(&self.config).expect("config serializes"))?;
        for (name, v) in input_names().iter().zip(&self.weights) {
            writeln!(w, "{name}\t{v}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, SimilarityError> {
        let bad = |line: usize, message: String| SimilarityError::ModelFormat { line, message };
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header != MODEL_HEADER {
            return Err(bad(1, format!("expected {MODEL_HEADER:?}, found {header:?}")));
        }
        let cfg = lines.next().transpose()?.unwrap_or_default();
        let config: SvmConfig = serde_json::from_str(&cfg).map_err(|e| bad(2, e.to_string()))?;
        let names = input_names();
        let mut weights = vec![f64::NAN; NUM_INPUTS];
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 3;
            let (name, v) = line
                .split_once('\t')
                .ok_or_else(|| bad(lineno, "expected name<TAB>weight".into()))?;
            let idx = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| bad(lineno, format!("unknown feature {name:?}")))?;
            let v: f64 = v.parse().map_err(|_| bad(lineno, format!("bad weight {v:?}")))?;
            if !v.is_finite() {
                return Err(bad(lineno, "weights must be finite".into()));
            }
            weights[idx] = v;
        }
        if let Some(i) = weights.iter().position(|w| w.is_nan()) {
            return Err(bad(0, format!("missing weight for {}", names[i])));
        }
        Ok(SimilarityModel { weights, config })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::NUM_METRICS;

    fn uniform(v: f64) -> PairFeatures {
        PairFeatures {
            values: [v; NUM_METRICS],
            available: [true; NUM_METRICS],
        }
    }

    fn toy() -> (Vec<PairFeatures>, Vec<bool>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let pos = i % 5 == 0;
            xs.push(uniform(if pos { 1.0 } else { 0.0 }));
            ys.push(pos);
        }
        (xs, ys)
    }

    #[test]
    fn separable_toy_set() {
        let (xs, ys) = toy();
        let (model, trace) = train_svm(&xs, &ys, SvmConfig::default()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(model.decision(x) >= 0.0, *y);
        }
        for w in trace.objective.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn deterministic() {
        let (xs, ys) = toy();
        let a = train_svm(&xs, &ys, SvmConfig::default()).unwrap();
        let b = train_svm(&xs, &ys, SvmConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_objective_never_increases() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..200 {
            let mut f = uniform(0.0);
            for v in &mut f.values {
                *v = rng.random_range(0.0..1.0);
            }
            f.available[6] = rng.random_bool(0.5);
            ys.push(f.values[0] + rng.random_range(-0.3..0.3) > 0.7);
            xs.push(f);
        }
        let config = SvmConfig {
            learning_rate: 5.0,
            ..SvmConfig::default()
        };
        let (_, trace) = train_svm(&xs, &ys, config).unwrap();
        assert!(trace.rejected_epochs > 0);
        for w in trace.objective.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![uniform(1.0); 3];
        assert!(matches!(
            train_svm(&xs, &[true; 3], SvmConfig::default()),
            Err(SimilarityError::SingleClassTrainingSet)
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let (xs, ys) = toy();
        let (model, _) = train_svm(&xs, &ys, SvmConfig::default()).unwrap();
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sim-model v1\n{"));
        assert!(text.contains("\nmask:lsa_cosine\t"));
        assert_eq!(SimilarityModel::read(buf.as_slice()).unwrap(), model);
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(SimilarityModel::read(truncated.as_bytes()).is_err());
    }
}
