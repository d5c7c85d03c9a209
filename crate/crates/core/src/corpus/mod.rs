//! Highlight-annotated reflection corpora: loading, validation, indexing.
//!
//! A corpus is a set of (lecture, prompt) cells. Each cell holds the
//! tokenized student responses plus zero or more annotations, one per
//! annotator, consisting of a short human summary and color highlights over
//! response token spans. Everything downstream reads from an immutable
//! [`ReflectionCorpus`].

mod load;
mod stats;
mod stem;
mod token;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::{load_corpus, parse_corpus};
pub use stats::{corpus_stats, CorpusStats};
pub use stem::stem;
pub use token::{tokenize, Token};

pub(crate) use token::is_punct;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed record: {message}")]
    MalformedRecord {
        file: String,
        line: usize,
        message: String,
    },
    #[error("highlight [{start}, {end}) out of bounds for response {response} with {len} tokens")]
    SpanOutOfBounds {
        response: ResponseRef,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("highlight color {color} of annotator {annotator} in {cell} has no summary phrase")]
    OrphanColor {
        cell: CellKey,
        annotator: String,
        color: String,
    },
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("highlight refers to unknown response {0}")]
    UnresolvedResponse(ResponseRef),
    #[error("summary phrase with color {color} in {cell} has zero supporters but carries highlights")]
    ZeroSupporters { cell: CellKey, color: String },
    #[error("corpus has no responses")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Interesting,
    Confusing,
}

impl PromptKind {
    pub const ALL: [PromptKind; 2] = [PromptKind::Interesting, PromptKind::Confusing];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Interesting => "interesting",
            PromptKind::Confusing => "confusing",
        }
    }

    /// The reflection question shown to students.
    pub fn question(self) -> &'static str {
        match self {
            PromptKind::Interesting => "Describe what you found most interesting in today's class.",
            PromptKind::Confusing => "Describe what was confusing or needed more detail.",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "interesting" => Ok(PromptKind::Interesting),
            "confusing" => Ok(PromptKind::Confusing),
            other => Err(format!("unknown prompt kind {other:?}")),
        }
    }
}

/// A (lecture, prompt) cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub lecture_id: String,
    pub prompt: PromptKind,
}

impl CellKey {
    pub fn new(lecture_id: impl Into<String>, prompt: PromptKind) -> Self {
        CellKey {
            lecture_id: lecture_id.into(),
            prompt,
        }
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.lecture_id, self.prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResponseRef {
    pub student_id: String,
    pub lecture_id: String,
    pub prompt: PromptKind,
}

impl ResponseRef {
    pub fn cell(&self) -> CellKey {
        CellKey::new(self.lecture_id.clone(), self.prompt)
    }
}

impl fmt::Display for ResponseRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.lecture_id, self.prompt, self.student_id)
    }
}

/// Half-open token index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersection_len(&self, other: &Span) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub student_id: String,
    pub lecture_id: String,
    pub prompt: PromptKind,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Response {
    pub fn key(&self) -> ResponseRef {
        ResponseRef {
            student_id: self.student_id.clone(),
            lecture_id: self.lecture_id.clone(),
            prompt: self.prompt,
        }
    }
}

/// Annotator-scoped color. Colors of different annotators never compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColorId {
    pub annotator_id: String,
    pub color_key: String,
}

impl ColorId {
    pub fn new(annotator_id: impl Into<String>, color_key: impl Into<String>) -> Self {
        ColorId {
            annotator_id: annotator_id.into(),
            color_key: color_key.into(),
        }
    }
}

impl fmt::Display for ColorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.annotator_id, self.color_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Highlight {
    pub response: ResponseRef,
    pub span: Span,
    pub color: ColorId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryPhrase {
    pub text: String,
    pub tokens: Vec<Token>,
    pub color: Option<ColorId>,
    pub supporters: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LectureAnnotation {
    pub lecture_id: String,
    pub prompt: PromptKind,
    pub annotator_id: String,
    pub summary: Vec<SummaryPhrase>,
    pub highlights: Vec<Highlight>,
}

impl LectureAnnotation {
    pub fn cell(&self) -> CellKey {
        CellKey::new(self.lecture_id.clone(), self.prompt)
    }
}

/// Validated, immutable corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionCorpus {
    course_id: String,
    lectures: Vec<String>,
    cells: BTreeMap<CellKey, Vec<Response>>,
    annotations: BTreeMap<CellKey, Vec<LectureAnnotation>>,
    annotator_ids: BTreeSet<String>,
}

impl ReflectionCorpus {
    /// Build a corpus from already tokenized responses and annotations,
    /// enforcing every structural invariant.
    pub fn from_parts(
        course_id: impl Into<String>,
        responses: Vec<Response>,
        annotations: Vec<LectureAnnotation>,
    ) -> Result<Self, CorpusError> {
        let mut lectures = Vec::new();
        let mut cells: BTreeMap<CellKey, Vec<Response>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for response in responses {
            if response.tokens.is_empty() {
                log::warn!("dropping empty response {}", response.key());
                continue;
            }
            if !seen.insert(response.key()) {
                return Err(CorpusError::DuplicateKey(format!("response {}", response.key())));
            }
            if !lectures.contains(&response.lecture_id) {
                lectures.push(response.lecture_id.clone());
            }
            cells
                .entry(CellKey::new(response.lecture_id.clone(), response.prompt))
                .or_default()
                .push(response);
        }

        let mut by_cell: BTreeMap<CellKey, Vec<LectureAnnotation>> = BTreeMap::new();
        let mut annotator_ids = BTreeSet::new();
        for annotation in annotations {
            let cell = annotation.cell();
            let slot = by_cell.entry(cell.clone()).or_default();
            if slot.iter().any(|a| a.annotator_id == annotation.annotator_id) {
                return Err(CorpusError::DuplicateKey(format!(
                    "annotation {cell} by {}",
                    annotation.annotator_id
                )));
            }
            validate_annotation(&cells, &annotation)?;
            annotator_ids.insert(annotation.annotator_id.clone());
            slot.push(annotation);
        }
        for slot in by_cell.values_mut() {
            slot.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        }
        if !annotator_ids.is_empty() && annotator_ids.len() != 2 {
            log::warn!("expected 2 annotators, found {}", annotator_ids.len());
        }
        Ok(ReflectionCorpus {
            course_id: course_id.into(),
            lectures,
            cells,
            annotations: by_cell,
            annotator_ids,
        })
    }

    pub fn course_id(&self) -> &str {
        &self.course_id
    }

    /// Lecture ids in first-seen order.
    pub fn lecture_ids(&self) -> &[String] {
        &self.lectures
    }

    pub fn annotator_ids(&self) -> &BTreeSet<String> {
        &self.annotator_ids
    }

    /// All (lecture, prompt) cells that have at least one response, in lecture order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for lecture in &self.lectures {
            for prompt in PromptKind::ALL {
                let key = CellKey::new(lecture.clone(), prompt);
                if self.cells.contains_key(&key) {
                    out.push(key);
                }
            }
        }
        out
    }

    pub fn responses(&self, cell: &CellKey) -> &[Response] {
        self.cells.get(cell).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_responses(&self) -> impl Iterator<Item = &Response> {
        self.cells.values().flatten()
    }

    pub fn response(&self, key: &ResponseRef) -> Option<&Response> {
        self.cells
            .get(&key.cell())?
            .iter()
            .find(|r| r.student_id == key.student_id)
    }

    /// Annotations of a cell, sorted by annotator id.
    pub fn annotations(&self, cell: &CellKey) -> &[LectureAnnotation] {
        self.annotations.get(cell).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_annotations(&self) -> impl Iterator<Item = &LectureAnnotation> {
        self.annotations.values().flatten()
    }

    pub fn annotation(&self, cell: &CellKey, annotator: &str) -> Option<&LectureAnnotation> {
        self.annotations(cell).iter().find(|a| a.annotator_id == annotator)
    }

    /// A copy of the corpus with one lecture removed entirely.
    pub fn without_lecture(&self, lecture_id: &str) -> ReflectionCorpus {
        self.filter_lectures(|l| l != lecture_id)
    }

    /// A copy restricted to one lecture.
    pub fn only_lecture(&self, lecture_id: &str) -> ReflectionCorpus {
        self.filter_lectures(|l| l == lecture_id)
    }

    fn filter_lectures(&self, keep: impl Fn(&str) -> bool) -> ReflectionCorpus {
        let cells: BTreeMap<_, _> = self
            .cells
            .iter()
            .filter(|(k, _)| keep(&k.lecture_id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let annotations: BTreeMap<_, _> = self
            .annotations
            .iter()
            .filter(|(k, _)| keep(&k.lecture_id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let annotator_ids = annotations
            .values()
            .flatten()
            .map(|a: &LectureAnnotation| a.annotator_id.clone())
            .collect();
        ReflectionCorpus {
            course_id: self.course_id.clone(),
            lectures: self.lectures.iter().filter(|l| keep(l)).cloned().collect(),
            cells,
            annotations,
            annotator_ids,
        }
    }

    /// Write `responses.jsonl`, including token tags so a reload is lossless.
    pub fn write_responses<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for lecture in &self.lectures {
            for prompt in PromptKind::ALL {
                for r in self.responses(&CellKey::new(lecture.clone(), prompt)) {
                    let tokens: Vec<_> = r
                        .tokens
                        .iter()
                        .map(|t| {
                            let mut o = serde_json::Map::new();
                            o.insert("text".into(), t.raw.clone().into());
                            if let Some(p) = &t.pos {
                                o.insert("pos".into(), p.clone().into());
                            }
                            if let Some(c) = &t.chunk {
                                o.insert("chunk".into(), c.clone().into());
                            }
                            serde_json::Value::Object(o)
                        })
                        .collect();
                    let record = serde_json::json!({
                        "course_id": self.course_id,
                        "lecture_id": r.lecture_id,
                        "prompt": r.prompt,
                        "student_id": r.student_id,
                        "text": r.text,
                        "tokens": tokens,
                    });
                    writeln!(w, "{record}")?;
                }
            }
        }
        Ok(())
    }

    pub fn write_annotations<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for annotation in self.annotations.values().flatten() {
            let summary: Vec<_> = annotation
                .summary
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "text": s.text,
                        "color": s.color.as_ref().map(|c| c.color_key.clone()),
                        "supporters": s.supporters,
                    })
                })
                .collect();
            let highlights: Vec<_> = annotation
                .highlights
                .iter()
                .map(|h| {
                    serde_json::json!({
                        "student_id": h.response.student_id,
                        "start": h.span.start,
                        "end": h.span.end,
                        "color": h.color.color_key,
                    })
                })
                .collect();
            let record = serde_json::json!({
                "lecture_id": annotation.lecture_id,
                "prompt": annotation.prompt,
                "annotator_id": annotation.annotator_id,
                "summary": summary,
                "highlights": highlights,
            });
            writeln!(w, "{record}")?;
        }
        Ok(())
    }
}

fn validate_annotation(
    cells: &BTreeMap<CellKey, Vec<Response>>,
    annotation: &LectureAnnotation,
) -> Result<(), CorpusError> {
    let cell = annotation.cell();
    let responses = cells.get(&cell).map(Vec::as_slice).unwrap_or(&[]);
    let summary_colors: BTreeMap<&ColorId, &SummaryPhrase> = annotation
        .summary
        .iter()
        .filter_map(|s| s.color.as_ref().map(|c| (c, s)))
        .collect();
    let mut per_color: BTreeMap<&ColorId, u32> = BTreeMap::new();
    for h in &annotation.highlights {
        let response = responses
            .iter()
            .find(|r| r.student_id == h.response.student_id)
            .ok_or_else(|| CorpusError::UnresolvedResponse(h.response.clone()))?;
        if h.span.start >= h.span.end || h.span.end > response.tokens.len() {
            return Err(CorpusError::SpanOutOfBounds {
                response: h.response.clone(),
                start: h.span.start,
                end: h.span.end,
                len: response.tokens.len(),
            });
        }
        if h.color.annotator_id != annotation.annotator_id || !summary_colors.contains_key(&h.color) {
            return Err(CorpusError::OrphanColor {
                cell: cell.clone(),
                annotator: annotation.annotator_id.clone(),
                color: h.color.color_key.clone(),
            });
        }
        *per_color.entry(&h.color).or_default() += 1;
    }
    for (color, phrase) in &summary_colors {
        let count = per_color.get(color).copied().unwrap_or(0);
        if count > 0 && phrase.supporters == 0 {
            return Err(CorpusError::ZeroSupporters {
                cell: cell.clone(),
                color: color.color_key.clone(),
            });
        }
        if count != phrase.supporters && !annotation.highlights.is_empty() {
            log::warn!(
                "{cell}: annotator {} color {} asserts {} supporters but has {} highlights",
                annotation.annotator_id,
                color.color_key,
                phrase.supporters,
                count
            );
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixtures {
    //! Small hand-built corpora shared by unit tests across modules.

    use super::*;

    pub fn response(lecture: &str, prompt: PromptKind, student: &str, text: &str) -> Response {
        Response {
            student_id: student.into(),
            lecture_id: lecture.into(),
            prompt,
            text: text.into(),
            tokens: tokenize(text),
        }
    }

    pub fn highlight(
        lecture: &str,
        prompt: PromptKind,
        student: &str,
        start: usize,
        end: usize,
        annotator: &str,
        color: &str,
    ) -> Highlight {
        Highlight {
            response: ResponseRef {
                student_id: student.into(),
                lecture_id: lecture.into(),
                prompt,
            },
            span: Span::new(start, end),
            color: ColorId::new(annotator, color),
        }
    }

    pub fn phrase(text: &str, annotator: &str, color: Option<&str>, supporters: u32) -> SummaryPhrase {
        SummaryPhrase {
            text: text.into(),
            tokens: tokenize(text),
            color: color.map(|c| ColorId::new(annotator, c)),
            supporters,
        }
    }

    /// The confusing-prompt example from the introduction of the dataset
    /// documentation: ten responses, one fully highlighted annotation.
    pub fn table_one() -> ReflectionCorpus {
        let p = PromptKind::Confusing;
        let l = "L1";
        let texts = [
            ("S1", "In the age of distributions example, application of qq plot was confusing"),
            ("S2", "Last problem about normalization"),
            ("S3", "central limit teorem and A And B events example formulas were different. I did not understand that part well"),
            ("S4", "Sampling distribution was a little bit abstract"),
            ("S5", "Q-q plot"),
            ("S6", "Central Limit Thm"),
            ("S7", "CLT"),
            ("S8", "Normal approximation to binomial"),
            ("S9", "bernaulli random variables"),
            ("S10", "The central limit and normal approximations"),
        ];
        let responses = texts.iter().map(|(s, t)| response(l, p, s, t)).collect();
        let a = "A1";
        let hl = |s: &str, st, en, c: &str| highlight(l, p, s, st, en, a, c);
        let annotation = LectureAnnotation {
            lecture_id: l.into(),
            prompt: p,
            annotator_id: a.into(),
            summary: vec![
                phrase("central limit theorem", a, Some("yellow"), 12),
                phrase("q-q plot", a, Some("green"), 9),
                phrase("sampling distribution", a, Some("red"), 6),
                phrase("normal approximation", a, Some("blue"), 5),
                phrase("normalization (last example)", a, Some("magenta"), 3),
            ],
            highlights: vec![
                hl("S1", 9, 11, "green"),
                hl("S2", 0, 4, "magenta"),
                hl("S3", 0, 3, "yellow"),
                hl("S4", 0, 2, "red"),
                hl("S5", 0, 2, "green"),
                hl("S6", 0, 3, "yellow"),
                hl("S7", 0, 1, "yellow"),
                hl("S8", 0, 4, "blue"),
                hl("S10", 0, 3, "yellow"),
                hl("S10", 4, 6, "blue"),
            ],
        };
        let b = "A2";
        let second = LectureAnnotation {
            lecture_id: l.into(),
            prompt: p,
            annotator_id: b.into(),
            summary: vec![
                phrase("central limit theorem", b, Some("c1"), 13),
                phrase("q-q plots", b, Some("c2"), 9),
                phrase("sampling distributions", b, Some("c3"), 6),
            ],
            highlights: vec![],
        };
        ReflectionCorpus::from_parts("stats", responses, vec![annotation, second]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn table_one_builds() {
        let c = table_one();
        let cell = CellKey::new("L1", PromptKind::Confusing);
        assert_eq!(c.responses(&cell).len(), 10);
        assert_eq!(c.annotations(&cell).len(), 2);
        assert_eq!(c.annotator_ids().len(), 2);
        let s1 = &c.responses(&cell)[0];
        assert_eq!(s1.tokens[9].raw, "qq");
        assert_eq!(s1.tokens[10].raw, "plot");
    }

    #[test]
    fn duplicate_response_rejected() {
        let p = PromptKind::Interesting;
        let r = vec![response("L1", p, "S1", "a b"), response("L1", p, "S1", "c")];
        assert!(matches!(
            ReflectionCorpus::from_parts("c", r, vec![]),
            Err(CorpusError::DuplicateKey(_))
        ));
    }

    #[test]
    fn span_out_of_bounds() {
        let p = PromptKind::Interesting;
        let r = vec![response("L1", p, "S1", "a b")];
        let ann = LectureAnnotation {
            lecture_id: "L1".into(),
            prompt: p,
            annotator_id: "A".into(),
            summary: vec![phrase("a", "A", Some("y"), 1)],
            highlights: vec![highlight("L1", p, "S1", 0, 3, "A", "y")],
        };
        assert!(matches!(
            ReflectionCorpus::from_parts("c", r, vec![ann]),
            Err(CorpusError::SpanOutOfBounds { len: 2, end: 3, .. })
        ));
    }

    #[test]
    fn orphan_color() {
        let p = PromptKind::Interesting;
        let r = vec![response("L1", p, "S1", "a b")];
        let ann = LectureAnnotation {
            lecture_id: "L1".into(),
            prompt: p,
            annotator_id: "A".into(),
            summary: vec![phrase("a", "A", Some("y"), 1)],
            highlights: vec![highlight("L1", p, "S1", 0, 1, "A", "g")],
        };
        assert!(matches!(
            ReflectionCorpus::from_parts("c", r, vec![ann]),
            Err(CorpusError::OrphanColor { .. })
        ));
    }

    #[test]
    fn unresolved_highlight() {
        let p = PromptKind::Interesting;
        let r = vec![response("L1", p, "S1", "a b")];
        let ann = LectureAnnotation {
            lecture_id: "L1".into(),
            prompt: p,
            annotator_id: "A".into(),
            summary: vec![phrase("a", "A", Some("y"), 1)],
            highlights: vec![highlight("L1", p, "S9", 0, 1, "A", "y")],
        };
        assert!(matches!(
            ReflectionCorpus::from_parts("c", r, vec![ann]),
            Err(CorpusError::UnresolvedResponse(_))
        ));
    }

    #[test]
    fn colors_compare_by_annotator() {
        assert_ne!(ColorId::new("A", "y"), ColorId::new("B", "y"));
        assert_eq!(ColorId::new("A", "y"), ColorId::new("A", "y"));
    }

    #[test]
    fn fold_views() {
        let c = table_one();
        assert!(c.without_lecture("L1").cells().is_empty());
        assert_eq!(c.only_lecture("L1"), c);
    }
}
