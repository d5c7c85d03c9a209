use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::token::{align_tokens, tokenize};
use super::{
    ColorId, CorpusError, Highlight, LectureAnnotation, PromptKind, ReflectionCorpus, Response,
    ResponseRef, Span, SummaryPhrase,
};

#[derive(Deserialize)]
struct ResponseRecord {
    #[serde(default)]
    course_id: String,
    lecture_id: String,
    prompt: PromptKind,
    student_id: String,
    text: String,
    tokens: Option<Vec<TokenRecord>>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct TokenRecord {
    text: String,
    pos: Option<String>,
    chunk: Option<String>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct AnnotationRecord {
    lecture_id: String,
    prompt: PromptKind,
    annotator_id: String,
    #[serde(default)]
    summary: Vec<SummaryRecord>,
    #[serde(default)]
    highlights: Vec<HighlightRecord>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct SummaryRecord {
    text: String,
    color: Option<String>,
    supporters: u32,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct HighlightRecord {
    student_id: String,
    start: usize,
    end: usize,
    color: String,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

fn warn_extra(file: &str, line: usize, extra: &BTreeMap<String, Value>) {
    if !extra.is_empty() {
        let keys: Vec<_> = extra.keys().map(String::as_str).collect();
        log::warn!("{file}:{line}: ignoring unknown fields {keys:?}");
    }
}

fn read_lines<R: BufRead, T: for<'de> Deserialize<'de>>(
    reader: R,
    file: &str,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: file.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            file: file.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

/// Parse the two JSONL streams into a validated corpus.
pub fn parse_corpus<R1: BufRead, R2: BufRead>(
    responses: R1,
    annotations: R2,
) -> Result<ReflectionCorpus, CorpusError> {
    let response_records: Vec<(usize, ResponseRecord)> = read_lines(responses, "responses")?;
    let mut course_id: Option<String> = None;
    let mut parsed = Vec::with_capacity(response_records.len());
    for (line, rec) in response_records {
        warn_extra("responses", line, &rec.extra);
        match &course_id {
            None => course_id = Some(rec.course_id.clone()),
            Some(c) if *c != rec.course_id => {
                log::warn!("responses:{line}: course id {:?} differs from {c:?}", rec.course_id)
            }
            _ => {}
        }
        let tokens = match &rec.tokens {
            None => tokenize(&rec.text),
            Some(list) => {
                for t in list {
                    warn_extra("responses", line, &t.extra);
                }
                if list.iter().any(|t| t.text.is_empty() || t.text.chars().any(char::is_whitespace)) {
                    return Err(CorpusError::MalformedRecord {
                        file: "responses".into(),
                        line,
                        message: "token text must be non-empty and contain no whitespace".into(),
                    });
                }
                let words: Vec<_> = list
                    .iter()
                    .map(|t| (t.text.clone(), t.pos.clone(), t.chunk.clone()))
                    .collect();
                align_tokens(&rec.text, &words)
            }
        };
        parsed.push(Response {
            student_id: rec.student_id,
            lecture_id: rec.lecture_id,
            prompt: rec.prompt,
            text: rec.text,
            tokens,
        });
    }

    let annotation_records: Vec<(usize, AnnotationRecord)> = read_lines(annotations, "annotations")?;
    let mut parsed_annotations = Vec::with_capacity(annotation_records.len());
    for (line, rec) in annotation_records {
        warn_extra("annotations", line, &rec.extra);
        let annotator = rec.annotator_id.clone();
        let summary = rec
            .summary
            .into_iter()
            .map(|s| {
                warn_extra("annotations", line, &s.extra);
                SummaryPhrase {
                    tokens: tokenize(&s.text),
                    text: s.text,
                    color: s.color.map(|c| ColorId::new(annotator.clone(), c)),
                    supporters: s.supporters,
                }
            })
            .collect();
        let highlights = rec
            .highlights
            .into_iter()
            .map(|h| {
                warn_extra("annotations", line, &h.extra);
                Highlight {
                    response: ResponseRef {
                        student_id: h.student_id,
                        lecture_id: rec.lecture_id.clone(),
                        prompt: rec.prompt,
                    },
                    span: Span::new(h.start, h.end),
                    color: ColorId::new(annotator.clone(), h.color),
                }
            })
            .collect();
        parsed_annotations.push(LectureAnnotation {
            lecture_id: rec.lecture_id,
            prompt: rec.prompt,
            annotator_id: rec.annotator_id,
            summary,
            highlights,
        });
    }
    ReflectionCorpus::from_parts(course_id.unwrap_or_default(), parsed, parsed_annotations)
}

/// Load and validate `responses.jsonl` + `annotations.jsonl`.
pub fn load_corpus(
    responses_path: impl AsRef<Path>,
    annotations_path: impl AsRef<Path>,
) -> Result<ReflectionCorpus, CorpusError> {
    let open = |p: &Path| {
        File::open(p).map(BufReader::new).map_err(|source| CorpusError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let r = open(responses_path.as_ref())?;
    let a = open(annotations_path.as_ref())?;
    parse_corpus(r, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CellKey;

    const RESPONSES: &str = r#"{"course_id":"c","lecture_id":"1","prompt":"confusing","student_id":"s1","text":"Q-q plot?"}
{"course_id":"c","lecture_id":"1","prompt":"confusing","student_id":"s2","text":"CLT","tokens":[{"text":"CLT","pos":"NNP","chunk":"B-NP"}],"mood":"meh"}
"#;

    #[test]
    fn minimal_corpus() {
        let ann = r#"{"lecture_id":"1","prompt":"confusing","annotator_id":"a","summary":[{"text":"clt","color":"y","supporters":1}],"highlights":[{"student_id":"s2","start":0,"end":1,"color":"y"}]}"#;
        let c = parse_corpus(RESPONSES.as_bytes(), ann.as_bytes()).unwrap();
        assert_eq!(c.course_id(), "c");
        assert_eq!(c.lecture_ids(), ["1"]);
        let cell = CellKey::new("1", PromptKind::Confusing);
        assert_eq!(c.responses(&cell).len(), 2);
        assert_eq!(c.annotations(&cell).len(), 1);
        let s2 = &c.responses(&cell)[1];
        assert_eq!(s2.tokens[0].chunk.as_deref(), Some("B-NP"));
        assert_eq!(c.responses(&cell)[0].tokens.len(), 3);
    }

    #[test]
    fn span_one_past_end() {
        let ann = r#"{"lecture_id":"1","prompt":"confusing","annotator_id":"a","summary":[{"text":"clt","color":"y","supporters":1}],"highlights":[{"student_id":"s2","start":0,"end":2,"color":"y"}]}"#;
        let err = parse_corpus(RESPONSES.as_bytes(), ann.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::SpanOutOfBounds { .. }), "{err}");
    }

    #[test]
    fn malformed_line_number() {
        let ann = "\n{not json}\n";
        match parse_corpus(RESPONSES.as_bytes(), ann.as_bytes()) {
            Err(CorpusError::MalformedRecord { line, file, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(file, "annotations");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_annotation() {
        let one = r#"{"lecture_id":"1","prompt":"confusing","annotator_id":"a","summary":[],"highlights":[]}"#;
        let ann = format!("{one}\n{one}\n");
        assert!(matches!(
            parse_corpus(RESPONSES.as_bytes(), ann.as_bytes()),
            Err(CorpusError::DuplicateKey(_))
        ));
    }

    #[test]
    fn serialize_round_trip() {
        let c = crate::corpus::fixtures::table_one();
        let mut r = Vec::new();
        let mut a = Vec::new();
        c.write_responses(&mut r).unwrap();
        c.write_annotations(&mut a).unwrap();
        let back = parse_corpus(r.as_slice(), a.as_slice()).unwrap();
        assert_eq!(back, c);
    }
}
