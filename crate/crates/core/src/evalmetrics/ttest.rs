use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{EvalError, MetricFlag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub p_two_tailed: f64,
    pub flag: Option<MetricFlag>,
}

/// Two-tailed paired t-test on `a[i] - b[i]`.
///
/// Zero variance of the differences is flagged: identical samples give
/// `t = 0, p = 1`; a constant nonzero shift gives `t = ±∞, p = 0`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(EvalError::BadSampleSizes(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TTest {
            t,
            p_two_tailed: p,
            flag: Some(MetricFlag::DegenerateVariance),
        });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid degrees of freedom");
    let p = 2.0 * dist.cdf(-t.abs());
    Ok(TTest {
        t,
        p_two_tailed: p.min(1.0),
        flag: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [0.3, 0.5, 0.9];
        let r = paired_ttest(&a, &a).unwrap();
        assert_eq!((r.t, r.p_two_tailed), (0.0, 1.0));
        assert_eq!(r.flag, Some(MetricFlag::DegenerateVariance));
    }

    #[test]
    fn jittered_constant_shift() {
        let b = [0.0; 4];
        let mut prev = 1.0;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let a = [1.0 + eps, 1.0 - eps, 1.0 + eps, 1.0 - eps];
            let p = paired_ttest(&a, &b).unwrap().p_two_tailed;
            assert!(p < prev);
            prev = p;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn textbook_case() {
        // Differences with mean 1 and sample sd 1 over n = 10.
        let d = [1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 1.0];
        let mean: f64 = d.iter().sum::<f64>() / 10.0;
        let var: f64 = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 9.0;
        let scale = 1.0 / var.sqrt();
        let a: Vec<f64> = d.iter().map(|x| 1.0 + (x - mean) * scale).collect();
        let b = vec![0.0; 10];
        let r = paired_ttest(&a, &b).unwrap();
        assert!((r.t - 10f64.sqrt()).abs() < 1e-12);
        assert!((r.p_two_tailed - 0.011507).abs() < 2e-6, "{}", r.p_two_tailed);
    }

    #[test]
    fn antisymmetric() {
        let a = [0.1, 0.7, 0.4, 0.9];
        let b = [0.3, 0.2, 0.8, 0.1];
        assert_eq!(paired_ttest(&a, &b).unwrap().t, -paired_ttest(&b, &a).unwrap().t);
    }

    #[test]
    fn size_errors() {
        assert!(paired_ttest(&[1.0], &[1.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[1.0]).is_err());
    }
}
