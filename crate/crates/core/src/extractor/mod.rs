//! Candidate-phrase extraction as word-level BIO labeling.
//!
//! Training data come from annotator highlights: each highlighted span is
//! labeled `B I*` and everything else `O`. A linear-chain CRF ([`crf`])
//! learns to reproduce those spans on unseen responses. The chunk-tag noun
//! phrase baseline and exact-match evaluation live here too.

pub mod crf;
pub mod features;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CellKey, ReflectionCorpus, Response, ResponseRef, Span, Token};
use crate::evalmetrics::PrfScore;

pub use crf::{train_crf, CrfConfig, CrfModel, CrfWeights, SparseSequence, TrainTrace, TrainingInstance};
pub use features::{featurize, is_stopword, stopwords, CellStatistics, FeatureAlphabet};

pub const NUM_LABELS: usize = 3;

#[derive(Debug, Error)]
pub enum ExtractorError {
    #[error("annotator {annotator} has overlapping highlights in {response}")]
    OverlappingHighlightsSameAnnotator { response: ResponseRef, annotator: String },
    #[error("training set contains no B or I labels")]
    DegenerateTrainingSet,
    #[error("malformed label sequence: I at position {position} does not continue a phrase")]
    MalformedLabels { position: usize },
    #[error("response {0} has tokens without chunk tags")]
    MissingChunkTags(ResponseRef),
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
}

/// Label alphabet. The discriminant order is also the decoder's tie-break
/// preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BioLabel {
    O = 0,
    B = 1,
    I = 2,
}

impl BioLabel {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => BioLabel::O,
            1 => BioLabel::B,
            2 => BioLabel::I,
            _ => panic!("label index {i} out of range"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BioLabel::O => "O",
            BioLabel::B => "B",
            BioLabel::I => "I",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "O" => Some(BioLabel::O),
            "B" => Some(BioLabel::B),
            "I" => Some(BioLabel::I),
            _ => None,
        }
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// No `I` at position 0 and no `I` directly after `O`.
pub fn is_well_formed(labels: &[BioLabel]) -> bool {
    first_ill_formed(labels).is_none()
}

fn first_ill_formed(labels: &[BioLabel]) -> Option<usize> {
    let mut prev = BioLabel::O;
    for (i, &l) in labels.iter().enumerate() {
        if l == BioLabel::I && prev == BioLabel::O {
            return Some(i);
        }
        prev = l;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub response: ResponseRef,
    pub labels: Vec<BioLabel>,
}

/// An extracted token span with its source response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePhrase {
    pub response: ResponseRef,
    pub span: Span,
    pub tokens: Vec<Token>,
}

impl CandidatePhrase {
    pub fn from_response(response: &Response, span: Span) -> Self {
        CandidatePhrase {
            response: response.key(),
            span,
            tokens: response.tokens[span.start..span.end].to_vec(),
        }
    }

    /// A phrase not tied to any response span (e.g. a human summary phrase).
    pub fn detached(response: ResponseRef, tokens: Vec<Token>) -> Self {
        let span = Span::new(0, tokens.len());
        CandidatePhrase { response, span, tokens }
    }

    pub fn student_id(&self) -> &str {
        &self.response.student_id
    }

    /// Display text: raw tokens joined by spaces.
    pub fn text(&self) -> String {
        self.tokens.iter().map(|t| t.raw.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn lowers(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.lower.clone()).collect()
    }
}

/// Spans of maximal `B I*` runs.
pub fn decode_spans(labels: &[BioLabel]) -> Result<Vec<Span>, ExtractorError> {
    if let Some(position) = first_ill_formed(labels) {
        return Err(ExtractorError::MalformedLabels { position });
    }
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &l) in labels.iter().enumerate() {
        match l {
            BioLabel::B => {
                if let Some(s) = start {
                    spans.push(Span::new(s, i));
                }
                start = Some(i);
            }
            BioLabel::O => {
                if let Some(s) = start.take() {
                    spans.push(Span::new(s, i));
                }
            }
            BioLabel::I => {}
        }
    }
    if let Some(s) = start {
        spans.push(Span::new(s, labels.len()));
    }
    Ok(spans)
}

/// Label encoding of a set of non-overlapping spans.
pub fn encode_spans(spans: &[Span], len: usize) -> Vec<BioLabel> {
    let mut labels = vec![BioLabel::O; len];
    for s in spans {
        labels[s.start] = BioLabel::B;
        for l in &mut labels[s.start + 1..s.end] {
            *l = BioLabel::I;
        }
    }
    labels
}

pub fn decode_phrases(sequence: &LabeledSequence, response: &Response) -> Result<Vec<CandidatePhrase>, ExtractorError> {
    assert_eq!(sequence.labels.len(), response.tokens.len());
    Ok(decode_spans(&sequence.labels)?
        .into_iter()
        .map(|s| CandidatePhrase::from_response(response, s))
        .collect())
}

/// Noun-phrase baseline: maximal runs of `B-NP`/`I-NP` chunk tags.
pub fn np_chunk_baseline(response: &Response) -> Result<Vec<CandidatePhrase>, ExtractorError> {
    if response.tokens.iter().any(|t| t.chunk.is_none()) {
        return Err(ExtractorError::MissingChunkTags(response.key()));
    }
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, t) in response.tokens.iter().enumerate() {
        match t.chunk.as_deref() {
            Some("B-NP") => {
                if let Some(s) = start {
                    spans.push(Span::new(s, i));
                }
                start = Some(i);
            }
            Some("I-NP") => {
                if start.is_none() {
                    start = Some(i);
                }
            }
            _ => {
                if let Some(s) = start.take() {
                    spans.push(Span::new(s, i));
                }
            }
        }
    }
    if let Some(s) = start {
        spans.push(Span::new(s, response.tokens.len()));
    }
    Ok(spans
        .into_iter()
        .map(|s| CandidatePhrase::from_response(response, s))
        .collect())
}

/// Highlight spans of one response, per annotator, after checking that no
/// annotator overlaps itself.
fn spans_by_annotator(
    corpus: &ReflectionCorpus,
    cell: &CellKey,
    response: &Response,
) -> Result<BTreeMap<String, Vec<Span>>, ExtractorError> {
    let mut out = BTreeMap::new();
    for ann in corpus.annotations(cell) {
        let mut spans: Vec<Span> = ann
            .highlights
            .iter()
            .filter(|h| h.response.student_id == response.student_id)
            .map(|h| h.span)
            .collect();
        spans.sort();
        if spans.windows(2).any(|w| w[0].overlaps(&w[1])) {
            return Err(ExtractorError::OverlappingHighlightsSameAnnotator {
                response: response.key(),
                annotator: ann.annotator_id.clone(),
            });
        }
        out.insert(ann.annotator_id.clone(), spans);
    }
    Ok(out)
}

/// Split the merged highlights of one response into label configurations.
/// Identical spans from different annotators collapse; a span that
/// partially overlaps one already placed goes to another configuration.
fn merge_configurations(by_annotator: &BTreeMap<String, Vec<Span>>) -> Vec<Vec<Span>> {
    let mut unique: BTreeSet<Span> = BTreeSet::new();
    let mut configs: Vec<Vec<Span>> = Vec::new();
    for spans in by_annotator.values() {
        for &s in spans {
            if !unique.insert(s) {
                continue;
            }
            match configs.iter_mut().find(|c| c.iter().all(|o| !o.overlaps(&s))) {
                Some(c) => c.push(s),
                None => configs.push(vec![s]),
            }
        }
    }
    for c in &mut configs {
        c.sort();
    }
    if configs.is_empty() {
        configs.push(Vec::new());
    }
    configs
}

/// Labeled training sequences from every annotated cell.
pub fn build_training_sequences(corpus: &ReflectionCorpus) -> Result<Vec<LabeledSequence>, ExtractorError> {
    let mut out = Vec::new();
    for cell in corpus.cells() {
        if corpus.annotations(&cell).is_empty() {
            continue;
        }
        for response in corpus.responses(&cell) {
            let by_annotator = spans_by_annotator(corpus, &cell, response)?;
            for config in merge_configurations(&by_annotator) {
                out.push(LabeledSequence {
                    response: response.key(),
                    labels: encode_spans(&config, response.tokens.len()),
                });
            }
        }
    }
    Ok(out)
}

/// The merged, deduplicated gold phrase set of one cell.
pub fn gold_spans(corpus: &ReflectionCorpus, cell: &CellKey) -> Result<BTreeSet<(ResponseRef, Span)>, ExtractorError> {
    let mut gold = BTreeSet::new();
    for response in corpus.responses(cell) {
        for spans in spans_by_annotator(corpus, cell, response)?.values() {
            for &s in spans {
                gold.insert((response.key(), s));
            }
        }
    }
    Ok(gold)
}

/// Number of distinct highlight instances used for training.
pub fn count_phrase_instances(corpus: &ReflectionCorpus) -> Result<usize, ExtractorError> {
    let mut n = 0;
    for cell in corpus.cells() {
        n += gold_spans(corpus, &cell)?.len();
    }
    Ok(n)
}

/// Exact-match precision/recall/F of predicted spans against gold spans.
pub fn evaluate_extraction(predicted: &[CandidatePhrase], gold: &BTreeSet<(ResponseRef, Span)>) -> PrfScore {
    let predicted: BTreeSet<(ResponseRef, Span)> =
        predicted.iter().map(|p| (p.response.clone(), p.span)).collect();
    let tp = predicted.intersection(gold).count() as f64;
    PrfScore::from_counts(tp, predicted.len() as f64, gold.len() as f64)
}

/// Map template strings to ids, growing the alphabet.
fn vectorize_train(tokens: &[Token], stats: &CellStatistics, alphabet: &mut FeatureAlphabet) -> SparseSequence {
    SparseSequence {
        positions: (0..tokens.len())
            .map(|i| {
                featurize(tokens, i, stats)
                    .into_iter()
                    .map(|(name, v)| (alphabet.intern(&name), v))
                    .collect()
            })
            .collect(),
    }
}

/// Map template strings to ids, dropping features never seen in training.
fn vectorize(tokens: &[Token], stats: &CellStatistics, alphabet: &FeatureAlphabet) -> SparseSequence {
    SparseSequence {
        positions: (0..tokens.len())
            .map(|i| {
                featurize(tokens, i, stats)
                    .into_iter()
                    .filter_map(|(name, v)| alphabet.get(&name).map(|id| (id, v)))
                    .collect()
            })
            .collect(),
    }
}

/// A trained CRF phrase extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseExtractor {
    pub model: CrfModel,
}

impl PhraseExtractor {
    pub fn train(corpus: &ReflectionCorpus, config: CrfConfig) -> Result<(Self, TrainTrace), ExtractorError> {
        let sequences = build_training_sequences(corpus)?;
        let mut alphabet = FeatureAlphabet::default();
        let mut stats_cache: BTreeMap<CellKey, CellStatistics> = BTreeMap::new();
        let mut instances = Vec::with_capacity(sequences.len());
        for seq in sequences {
            let cell = seq.response.cell();
            let stats = stats_cache
                .entry(cell.clone())
                .or_insert_with(|| CellStatistics::new(corpus.responses(&cell), cell.prompt));
            let response = corpus.response(&seq.response).expect("sequence built from corpus");
            instances.push(TrainingInstance {
                features: vectorize_train(&response.tokens, stats, &mut alphabet),
                labels: seq.labels,
            });
        }
        let (model, trace) = train_crf(&instances, alphabet, config)?;
        Ok((PhraseExtractor { model }, trace))
    }

    /// Label every response of a cell.
    pub fn label_cell(&self, corpus: &ReflectionCorpus, cell: &CellKey) -> Vec<LabeledSequence> {
        let responses = corpus.responses(cell);
        let stats = CellStatistics::new(responses, cell.prompt);
        responses
            .iter()
            .map(|r| LabeledSequence {
                response: r.key(),
                labels: self.model.weights.viterbi(&vectorize(&r.tokens, &stats, &self.model.alphabet)),
            })
            .collect()
    }

    /// Candidate phrases for every response of a cell, in response order.
    pub fn extract_cell(&self, corpus: &ReflectionCorpus, cell: &CellKey) -> Vec<CandidatePhrase> {
        let responses = corpus.responses(cell);
        self.label_cell(corpus, cell)
            .iter()
            .zip(responses)
            .flat_map(|(seq, r)| decode_phrases(seq, r).expect("viterbi output is well formed"))
            .collect()
    }
}

/// Noun-phrase baseline over a whole cell.
pub fn np_chunk_cell(corpus: &ReflectionCorpus, cell: &CellKey) -> Result<Vec<CandidatePhrase>, ExtractorError> {
    let mut out = Vec::new();
    for r in corpus.responses(cell) {
        out.extend(np_chunk_baseline(r)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::BioLabel::{B, I, O};
    use super::*;
    use crate::corpus::fixtures::*;
    use crate::corpus::{LectureAnnotation, PromptKind};
    use proptest::prelude::*;

    #[test]
    fn decode_worked_example() {
        let p = PromptKind::Confusing;
        let r = response("L", p, "S10", "The central limit and normal approximations");
        let seq = LabeledSequence {
            response: r.key(),
            labels: vec![B, I, I, O, B, I],
        };
        let phrases = decode_phrases(&seq, &r).unwrap();
        let texts: Vec<_> = phrases.iter().map(CandidatePhrase::text).collect();
        assert_eq!(texts, ["The central limit", "normal approximations"]);
    }

    #[test]
    fn decode_edge_cases() {
        assert!(decode_spans(&[O, O, O]).unwrap().is_empty());
        assert_eq!(decode_spans(&[B, B]).unwrap(), vec![Span::new(0, 1), Span::new(1, 2)]);
        assert!(matches!(decode_spans(&[O, I]), Err(ExtractorError::MalformedLabels { position: 1 })));
        assert!(matches!(decode_spans(&[I]), Err(ExtractorError::MalformedLabels { position: 0 })));
    }

    fn tagged(chunks: &[&str]) -> Response {
        let words: Vec<String> = (0..chunks.len()).map(|i| format!("w{i}")).collect();
        let mut r = response("L", PromptKind::Interesting, "s", &words.join(" "));
        for (t, c) in r.tokens.iter_mut().zip(chunks) {
            t.chunk = Some((*c).to_owned());
        }
        r
    }

    #[test]
    fn np_baseline() {
        let r = tagged(&["B-NP", "I-NP", "O"]);
        let p = np_chunk_baseline(&r).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].span, Span::new(0, 2));
        assert!(np_chunk_baseline(&tagged(&["B-VP", "O"])).unwrap().is_empty());
        let r = tagged(&["B-NP", "I-NP", "I-NP", "I-NP"]);
        assert_eq!(np_chunk_baseline(&r).unwrap().len(), 1);
        let untagged = response("L", PromptKind::Interesting, "s", "a b");
        assert!(matches!(np_chunk_baseline(&untagged), Err(ExtractorError::MissingChunkTags(_))));
    }

    #[test]
    fn identical_highlights_collapse() {
        let p = PromptKind::Confusing;
        let rs = vec![response("L", p, "S", "about normal approximations")];
        let mk = |a: &str| LectureAnnotation {
            lecture_id: "L".into(),
            prompt: p,
            annotator_id: a.into(),
            summary: vec![phrase("normal approximation", a, Some("c"), 1)],
            highlights: vec![highlight("L", p, "S", 1, 3, a, "c")],
        };
        let c = ReflectionCorpus::from_parts("x", rs, vec![mk("A"), mk("B")]).unwrap();
        let seqs = build_training_sequences(&c).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].labels, vec![O, B, I]);
        assert_eq!(count_phrase_instances(&c).unwrap(), 1);
    }

    #[test]
    fn partial_overlap_separate_instances() {
        let p = PromptKind::Confusing;
        let rs = vec![
            response("L", p, "S", "the central limit theorem"),
            response("L", p, "T", "nothing"),
        ];
        let a = LectureAnnotation {
            lecture_id: "L".into(),
            prompt: p,
            annotator_id: "A".into(),
            summary: vec![phrase("clt", "A", Some("y"), 1)],
            highlights: vec![highlight("L", p, "S", 0, 3, "A", "y")],
        };
        let b = LectureAnnotation {
            lecture_id: "L".into(),
            prompt: p,
            annotator_id: "B".into(),
            summary: vec![phrase("clt", "B", Some("y"), 1)],
            highlights: vec![highlight("L", p, "S", 1, 4, "B", "y")],
        };
        let c = ReflectionCorpus::from_parts("x", rs, vec![a, b]).unwrap();
        let seqs = build_training_sequences(&c).unwrap();
        assert_eq!(seqs.len(), 3);
        assert_eq!(seqs[0].labels, vec![B, I, I, O]);
        assert_eq!(seqs[1].labels, vec![O, B, I, I]);
        assert_eq!(seqs[2].labels, vec![O]);
        assert_eq!(count_phrase_instances(&c).unwrap(), 2);
    }

    #[test]
    fn same_annotator_overlap_rejected() {
        let p = PromptKind::Confusing;
        let rs = vec![response("L", p, "S", "a b c")];
        let a = LectureAnnotation {
            lecture_id: "L".into(),
            prompt: p,
            annotator_id: "A".into(),
            summary: vec![phrase("x", "A", Some("y"), 1), phrase("z", "A", Some("g"), 1)],
            highlights: vec![highlight("L", p, "S", 0, 2, "A", "y"), highlight("L", p, "S", 1, 3, "A", "g")],
        };
        let c = ReflectionCorpus::from_parts("x", rs, vec![a]).unwrap();
        assert!(matches!(
            build_training_sequences(&c),
            Err(ExtractorError::OverlappingHighlightsSameAnnotator { .. })
        ));
    }

    #[test]
    fn exact_match_evaluation() {
        let c = table_one();
        let cell = CellKey::new("L1", PromptKind::Confusing);
        let gold = gold_spans(&c, &cell).unwrap();
        assert_eq!(gold.len(), 10);
        let predicted: Vec<_> = gold
            .iter()
            .map(|(r, s)| CandidatePhrase::from_response(c.response(r).unwrap(), *s))
            .collect();
        let prf = evaluate_extraction(&predicted, &gold);
        assert_eq!((prf.p, prf.r, prf.f), (1.0, 1.0, 1.0));

        // Shift one span by a token: one false positive and one false negative.
        let mut shifted = predicted.clone();
        let r = c.response(&shifted[0].response).unwrap();
        let s = shifted[0].span;
        let new_span = if s.end < r.tokens.len() {
            Span::new(s.start, s.end + 1)
        } else {
            Span::new(s.start, s.end - 1)
        };
        shifted[0] = CandidatePhrase::from_response(r, new_span);
        let prf = evaluate_extraction(&shifted, &gold);
        assert!((prf.p - 0.9).abs() < 1e-12 && (prf.r - 0.9).abs() < 1e-12);
    }

    #[test]
    fn training_learns_table_one_highlights() {
        let c = table_one();
        let (ex, trace) = PhraseExtractor::train(&c, CrfConfig::default()).unwrap();
        assert!(trace.objective.windows(2).all(|w| w[1] >= w[0]));
        let cell = CellKey::new("L1", PromptKind::Confusing);
        let phrases = ex.extract_cell(&c, &cell);
        let texts: Vec<_> = phrases.iter().map(CandidatePhrase::text).collect();
        assert!(texts.contains(&"CLT".to_string()), "{texts:?}");
        assert!(texts.contains(&"Q-q plot".to_string()), "{texts:?}");
    }

    proptest! {
        #[test]
        fn encode_decode_identity(cuts in proptest::collection::btree_set(0usize..20, 0..10), keep in proptest::collection::vec(any::<bool>(), 10)) {
            // Consecutive cut points define adjacent candidate spans; keep a subset.
            let cuts: Vec<usize> = cuts.into_iter().collect();
            let spans: Vec<Span> = cuts
                .windows(2)
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(w, _)| Span::new(w[0], w[1]))
                .collect();
            let labels = encode_spans(&spans, 20);
            prop_assert!(is_well_formed(&labels));
            prop_assert_eq!(decode_spans(&labels).unwrap(), spans);
        }
    }
}
