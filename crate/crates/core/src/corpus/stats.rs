use serde::Serialize;

use super::{CorpusError, ReflectionCorpus};

/// Means over (lecture, prompt) cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub cells: usize,
    pub lectures: usize,
    pub students: usize,
    pub responses: f64,
    /// Word tokens (punctuation excluded).
    pub words: f64,
    /// Mean of per-cell words/response ratios.
    pub words_per_response: f64,
    /// Highlights per annotation, averaged over annotated cells only.
    pub highlights: f64,
    pub annotated_cells: usize,
}

pub fn corpus_stats(corpus: &ReflectionCorpus) -> Result<CorpusStats, CorpusError> {
    let cells = corpus.cells();
    if cells.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = cells.len() as f64;
    let mut responses = 0.0;
    let mut words = 0.0;
    let mut ratio = 0.0;
    let mut highlight_sum = 0.0;
    let mut annotated = 0usize;
    for cell in &cells {
        let rs = corpus.responses(cell);
        let w: usize = rs
            .iter()
            .map(|r| r.tokens.iter().filter(|t| !t.is_punctuation()).count())
            .sum();
        responses += rs.len() as f64;
        words += w as f64;
        ratio += w as f64 / rs.len() as f64;
        let anns = corpus.annotations(cell);
        if !anns.is_empty() {
            annotated += 1;
            let total: usize = anns.iter().map(|a| a.highlights.len()).sum();
            highlight_sum += total as f64 / anns.len() as f64;
        }
    }
    let students: std::collections::BTreeSet<_> =
        corpus.all_responses().map(|r| r.student_id.as_str()).collect();
    Ok(CorpusStats {
        cells: cells.len(),
        lectures: corpus.lecture_ids().len(),
        students: students.len(),
        responses: responses / n,
        words: words / n,
        words_per_response: ratio / n,
        highlights: if annotated > 0 {
            highlight_sum / annotated as f64
        } else {
            0.0
        },
        annotated_cells: annotated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::*;
    use crate::corpus::PromptKind;

    #[test]
    fn single_cell() {
        let p = PromptKind::Interesting;
        let rs = vec![
            response("L", p, "a", "x y"),
            response("L", p, "b", "x z."),
            response("L", p, "c", "y z"),
        ];
        let c = ReflectionCorpus::from_parts("c", rs, vec![]).unwrap();
        let s = corpus_stats(&c).unwrap();
        assert_eq!(s.responses, 3.0);
        assert_eq!(s.words, 6.0);
        assert_eq!(s.words_per_response, 2.0);
        assert_eq!(s.highlights, 0.0);
    }

    #[test]
    fn empty_corpus() {
        let c = ReflectionCorpus::from_parts("c", vec![], vec![]).unwrap();
        assert!(matches!(corpus_stats(&c), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn table_one_highlights() {
        let s = corpus_stats(&table_one()).unwrap();
        // 10 highlights from one annotator, none from the other.
        assert_eq!(s.highlights, 5.0);
        assert_eq!(s.students, 10);
    }
}
