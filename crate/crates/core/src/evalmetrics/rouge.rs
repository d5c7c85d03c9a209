use std::collections::HashMap;

use super::{EvalError, Flagged, MetricFlag, PrfScore};
use crate::corpus::{is_punct, stem};

/// Maximum number of words allowed between the two halves of a skip bigram.
const MAX_SKIP_GAP: usize = 4;

fn normalise(segment: &[String]) -> Vec<String> {
    segment
        .iter()
        .filter(|w| !w.chars().all(is_punct))
        .map(|w| stem(&w.to_lowercase()))
        .collect()
}

/// Counting units of a multi-segment text. Units never cross segment
/// boundaries. `n == 0` selects the SU4 unit set (unigrams plus ordered skip
/// bigrams with at most four words between them).
pub fn rouge_units(segments: &[Vec<String>], n: usize) -> HashMap<Vec<String>, usize> {
    let mut units: HashMap<Vec<String>, usize> = HashMap::new();
    for seg in segments {
        let words = normalise(seg);
        if n == 0 {
            for w in &words {
                *units.entry(vec![w.clone()]).or_default() += 1;
            }
            for i in 0..words.len() {
                for j in i + 1..words.len().min(i + MAX_SKIP_GAP + 2) {
                    *units.entry(vec![words[i].clone(), words[j].clone()]).or_default() += 1;
                }
            }
        } else if words.len() >= n {
            for gram in words.windows(n) {
                *units.entry(gram.to_vec()).or_default() += 1;
            }
        }
    }
    units
}

fn score_units(
    candidate: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    n: usize,
) -> Result<Flagged<PrfScore>, EvalError> {
    if references.is_empty() {
        return Err(EvalError::NoReferences);
    }
    let cand = rouge_units(candidate, n);
    let cand_total: usize = cand.values().sum();
    let mut per_ref = Vec::with_capacity(references.len());
    let mut flag = None;
    for reference in references {
        let refs = rouge_units(reference, n);
        let ref_total: usize = refs.values().sum();
        let matches: usize = cand
            .iter()
            .map(|(unit, &c)| c.min(refs.get(unit).copied().unwrap_or(0)))
            .sum();
        if ref_total == 0 && flag.is_none() {
            flag = Some(MetricFlag::ZeroDenominator);
        }
        per_ref.push(PrfScore::from_counts(matches as f64, cand_total as f64, ref_total as f64));
    }
    if cand_total == 0 {
        flag = Some(MetricFlag::EmptyCandidate);
    }
    Ok(Flagged {
        value: PrfScore::mean(&per_ref),
        flag,
    })
}

/// ROUGE-N over Porter stems, averaged across references.
pub fn rouge_n(
    candidate: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    n: usize,
) -> Result<Flagged<PrfScore>, EvalError> {
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    score_units(candidate, references, n)
}

/// ROUGE-SU4, averaged across references.
pub fn rouge_su4(candidate: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<Flagged<PrfScore>, EvalError> {
    score_units(candidate, references, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(s: &str) -> Vec<Vec<String>> {
        vec![s.split_whitespace().map(str::to_owned).collect()]
    }

    #[test]
    fn identical_texts() {
        let t = seg("central limit theorem");
        for n in 1..=2 {
            let s = rouge_n(&t, std::slice::from_ref(&t), n).unwrap().value;
            assert_eq!((s.p, s.r, s.f), (1.0, 1.0, 1.0));
        }
        let s = rouge_su4(&t, std::slice::from_ref(&t)).unwrap().value;
        assert_eq!((s.p, s.r, s.f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unigram_subset() {
        let s = rouge_n(&seg("central limit"), &[seg("central limit theorem")], 1).unwrap().value;
        assert_eq!(s.p, 1.0);
        assert!((s.r - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bigram_order_sensitive() {
        let s = rouge_n(&seg("a b"), &[seg("b a")], 2).unwrap().value;
        assert_eq!((s.p, s.r), (0.0, 0.0));
    }

    #[test]
    fn su4_hand_case() {
        let s = rouge_su4(&seg("a b c"), &[seg("a c b")]).unwrap().value;
        assert!((s.p - 5.0 / 6.0).abs() < 1e-15);
        assert!((s.r - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn su4_gap_limit() {
        // a and g are six positions apart: five words between them.
        let units = rouge_units(&seg("a b c d e f g"), 0);
        assert!(units.contains_key(&vec!["a".to_string(), "f".to_string()]));
        assert!(!units.contains_key(&vec!["a".to_string(), "g".to_string()]));
    }

    #[test]
    fn disjoint_and_empty() {
        let s = rouge_su4(&seg("x y"), &[seg("p q")]).unwrap().value;
        assert_eq!((s.p, s.r, s.f), (0.0, 0.0, 0.0));
        let e = rouge_n(&[], &[seg("p q")], 1).unwrap();
        assert_eq!(e.flag, Some(MetricFlag::EmptyCandidate));
        assert_eq!(e.value.p, 0.0);
        assert_eq!(rouge_n(&seg("a"), &[], 1), Err(EvalError::NoReferences));
    }

    #[test]
    fn segments_do_not_bridge() {
        let two = vec![vec!["a".to_string()], vec!["b".to_string()]];
        let s = rouge_n(&two, &[seg("a b")], 2).unwrap().value;
        assert_eq!(s.p, 0.0);
    }

    #[test]
    fn averaged_over_references() {
        let s = rouge_n(&seg("a b"), &[seg("a b"), seg("a c")], 1).unwrap().value;
        assert!((s.p - 0.75).abs() < 1e-15);
        assert!((s.r - 0.75).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bounded_and_swap_symmetric(a in proptest::collection::vec("[a-d]", 1..8), b in proptest::collection::vec("[a-d]", 1..8)) {
            let ca = vec![a.clone()];
            let cb = vec![b.clone()];
            for n in [0usize, 1, 2] {
                let ab = score_units(&ca, std::slice::from_ref(&cb), n).unwrap().value;
                let ba = score_units(&cb, std::slice::from_ref(&ca), n).unwrap().value;
                for v in [ab.p, ab.r, ab.f] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert!((ab.p - ba.r).abs() < 1e-12);
                prop_assert!((ab.r - ba.p).abs() < 1e-12);
            }
        }
    }
}
