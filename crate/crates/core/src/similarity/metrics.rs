//! Pairwise phrase metrics. Each one is symmetric and bounded by [0, 1].

use std::collections::HashMap;
use std::hash::Hash;

use super::vectors::VectorTable;

/// Words allowed between the two halves of a skip bigram.
const MAX_SKIP_GAP: usize = 4;

fn counts<T: Hash + Eq + Clone>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it).or_insert(0) += 1;
    }
    m
}

/// Clipped overlap of two multisets.
fn overlap<T: Hash + Eq>(a: &HashMap<T, usize>, b: &HashMap<T, usize>) -> usize {
    a.iter().map(|(k, &n)| n.min(b.get(k).copied().unwrap_or(0))).sum()
}

fn f1(matches: usize, a_total: usize, b_total: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    2.0 * matches as f64 / (a_total + b_total) as f64
}

/// Dice coefficient over the sets of stems.
pub fn dice(a: &[String], b: &[String]) -> f64 {
    let sa: std::collections::HashSet<&String> = a.iter().collect();
    let sb: std::collections::HashSet<&String> = b.iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 0.0;
    }
    let inter = sa.intersection(&sb).count();
    2.0 * inter as f64 / (sa.len() + sb.len()) as f64
}

/// Cosine of term-frequency vectors.
pub fn cosine_tf(a: &[String], b: &[String]) -> f64 {
    let ca = counts(a.iter());
    let cb = counts(b.iter());
    let dot: f64 = ca
        .iter()
        .map(|(k, &n)| (n * cb.get(k).copied().unwrap_or(0)) as f64)
        .sum();
    if dot == 0.0 {
        return 0.0;
    }
    let na: usize = ca.values().map(|n| n * n).sum();
    let nb: usize = cb.values().map(|n| n * n).sum();
    (dot / ((na * nb) as f64).sqrt()).min(1.0)
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    if tokens.len() < n {
        return HashMap::new();
    }
    counts(tokens.windows(n))
}

/// One-directional sentence BLEU with n ≤ 2. Bigram precision is add-one
/// smoothed; unigram precision is not, so word-disjoint phrases score 0.
fn bleu_directed(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=2 {
        let c = ngrams(cand, n);
        let r = ngrams(reference, n);
        let total: usize = c.values().sum();
        let m = overlap(&c, &r);
        let (num, den) = if n == 1 { (m, total) } else { (m + 1, total + 1) };
        if num == 0 {
            return 0.0;
        }
        log_p += (num as f64 / den as f64).ln() / 2.0;
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * log_p.exp()).min(1.0)
}

/// Smoothed BLEU averaged over both directions.
pub fn bleu(a: &[String], b: &[String]) -> f64 {
    (bleu_directed(a, b) + bleu_directed(b, a)) / 2.0
}

fn skip_bigrams(tokens: &[String]) -> HashMap<(&String, &String), usize> {
    let mut m = HashMap::new();
    for i in 0..tokens.len() {
        for j in i + 1..tokens.len().min(i + MAX_SKIP_GAP + 2) {
            *m.entry((&tokens[i], &tokens[j])).or_insert(0) += 1;
        }
    }
    m
}

/// Mean of unigram F1 and skip-bigram F1. When either phrase has fewer than
/// two tokens there are no skip bigrams to compare and unigram F1 alone is
/// returned.
pub fn simsum(a: &[String], b: &[String]) -> f64 {
    let (ua, ub) = (counts(a.iter()), counts(b.iter()));
    let uni = f1(overlap(&ua, &ub), a.len(), b.len());
    if a.len() < 2 || b.len() < 2 {
        return uni;
    }
    let (sa, sb) = (skip_bigrams(a), skip_bigrams(b));
    let ta: usize = sa.values().sum();
    let tb: usize = sb.values().sum();
    let skip = f1(overlap(&sa, &sb), ta, tb);
    (uni + skip) / 2.0
}

fn mean_vector(table: &VectorTable, tokens: &[String]) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    for s in &mut sum {
        *s /= n as f64;
    }
    Some(sum)
}

/// Cosine of mean in-vocabulary vectors, clamped to [0, 1]. `None` when
/// either side has no usable vector.
pub fn vector_cosine(table: &VectorTable, a: &[String], b: &[String]) -> Option<f64> {
    let va = mean_vector(table, a)?;
    let vb = mean_vector(table, b)?;
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    if a == b {
        return Some(1.0);
    }
    Some((dot / (na * nb)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn dice_worked_example() {
        // "central limit theorem" vs "central limit thm" over stems.
        let a = w("central limit theorem");
        let b = w("central limit thm");
        assert!((dice(&a, &b) - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(dice(&a, &a), 1.0);
        assert_eq!(dice(&a, &w("sampl distribut")), 0.0);
    }

    #[test]
    fn cosine_counts_repeats() {
        let a = w("a a b");
        let b = w("a b b");
        assert!((cosine_tf(&a, &b) - 4.0 / 5.0).abs() < 1e-15);
        assert_eq!(cosine_tf(&a, &w("c")), 0.0);
    }

    #[test]
    fn bleu_hand_case() {
        // cand "a b c", ref "a b d": p1 = 2/3, p2 = (1+1)/(2+1), bp = 1.
        let expected = (2.0f64 / 3.0 * 2.0 / 3.0).sqrt();
        assert!((bleu(&w("a b c"), &w("a b d")) - expected).abs() < 1e-15);
        // cand "a", ref "a b": p1 = 1, p2 = 1/1, bp = e^{1-2}.
        let short = (-1.0f64).exp();
        assert!((bleu_directed(&w("a"), &w("a b")) - short).abs() < 1e-15);
        assert!((bleu_directed(&w("a b"), &w("a")) - (0.5f64 * 0.5).sqrt()).abs() < 1e-15);
        assert_eq!(bleu(&w("x y"), &w("p q")), 0.0);
    }

    #[test]
    fn simsum_hand_case() {
        // unigram F1 = 1; skip bigrams {ab, ac, bc} vs {ac, ab, cb}: F1 = 2/3.
        let s = simsum(&w("a b c"), &w("a c b"));
        assert!((s - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(simsum(&w("clt"), &w("clt")), 1.0);
        assert!((simsum(&w("clt"), &w("clt theorem")) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn vector_cosine_masks_oov() {
        let table = VectorTable::new(2, [("a".to_string(), vec![1.0, 0.0]), ("b".to_string(), vec![0.0, 1.0]), ("c".to_string(), vec![-1.0, 0.0])]).unwrap();
        assert_eq!(vector_cosine(&table, &w("zz"), &w("a")), None);
        assert_eq!(vector_cosine(&table, &w("a"), &w("b")), Some(0.0));
        assert_eq!(vector_cosine(&table, &w("a"), &w("c")), Some(0.0));
        let v = vector_cosine(&table, &w("a b zz"), &w("a")).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }
}
