//! Feature templates for the phrase labeler.
//!
//! Local features look at a 5-token window centred on the current token:
//! every contiguous trigram fully inside the window, for words, POS tags and
//! chunk tags, with `<s>`/`</s>` sentinels past the sequence edges. Global
//! features come from all responses to the same (lecture, prompt).

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use crate::corpus::{tokenize, PromptKind, Response, Token};

const STOPWORD_LIST: &str = include_str!("../../data/stopwords.txt");

/// The shipped English stopword list.
pub fn stopwords() -> &'static BTreeSet<String> {
    static SET: OnceLock<BTreeSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORD_LIST
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect()
    })
}

pub fn is_stopword(lower: &str) -> bool {
    stopwords().contains(lower)
}

const BOS: &str = "<s>";
const EOS: &str = "</s>";
const NO_TAG: &str = "<none>";

/// Feature-string → dense id map, ids assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureAlphabet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl FeatureAlphabet {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Statistics over all responses to one (lecture, prompt).
#[derive(Debug, Clone, Default)]
pub struct CellStatistics {
    counts: HashMap<String, usize>,
    ranks: HashMap<String, usize>,
    prompt_stems: BTreeSet<String>,
}

impl CellStatistics {
    pub fn new(responses: &[Response], prompt: PromptKind) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in responses.iter().flat_map(|r| &r.tokens) {
            *counts.entry(t.stem.clone()).or_default() += 1;
        }
        // Dense rank by count, 1 = most frequent.
        let mut distinct: Vec<usize> = counts.values().copied().collect();
        distinct.sort_unstable_by(|a, b| b.cmp(a));
        distinct.dedup();
        let rank_of: HashMap<usize, usize> = distinct.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        let ranks = counts.iter().map(|(s, c)| (s.clone(), rank_of[c])).collect();
        let prompt_stems = tokenize(prompt.question())
            .into_iter()
            .filter(|t| !t.is_punctuation())
            .map(|t| t.stem)
            .collect();
        CellStatistics {
            counts,
            ranks,
            prompt_stems,
        }
    }

    pub fn count(&self, stem: &str) -> usize {
        self.counts.get(stem).copied().unwrap_or(0)
    }

    pub fn rank(&self, stem: &str) -> Option<usize> {
        self.ranks.get(stem).copied()
    }
}

fn window<'a>(tokens: &'a [Token], position: usize, offset: isize, field: impl Fn(&'a Token) -> &'a str) -> &'a str {
    let i = position as isize + offset;
    if i < 0 {
        BOS
    } else if i as usize >= tokens.len() {
        EOS
    } else {
        field(&tokens[i as usize])
    }
}

fn trigrams<'a>(
    out: &mut Vec<(String, f64)>,
    prefix: &str,
    tokens: &'a [Token],
    position: usize,
    field: impl Fn(&'a Token) -> &'a str + Copy,
) {
    for start in -2isize..=0 {
        let a = window(tokens, position, start, field);
        let b = window(tokens, position, start + 1, field);
        let c = window(tokens, position, start + 2, field);
        out.push((format!("{prefix}[{start}]={a}|{b}|{c}"), 1.0));
    }
}

/// Instantiate every template at `position`.
pub fn featurize(tokens: &[Token], position: usize, stats: &CellStatistics) -> Vec<(String, f64)> {
    assert!(position < tokens.len(), "position out of range");
    let tok = &tokens[position];
    let mut out = Vec::with_capacity(16);
    out.push(("bias".to_owned(), 1.0));
    out.push((format!("w={}", tok.lower), 1.0));
    trigrams(&mut out, "w3", tokens, position, |t| t.lower.as_str());
    trigrams(&mut out, "p3", tokens, position, |t| t.pos.as_deref().unwrap_or(NO_TAG));
    trigrams(&mut out, "c3", tokens, position, |t| t.chunk.as_deref().unwrap_or(NO_TAG));
    let in_prompt = stats.prompt_stems.contains(&tok.stem);
    out.push((format!("in_prompt={}", u8::from(in_prompt)), 1.0));
    out.push((format!("stop={}", u8::from(is_stopword(&tok.lower))), 1.0));
    let count = stats.count(&tok.stem);
    out.push(("tf_count".to_owned(), (1.0 + count as f64).ln()));
    if let Some(rank) = stats.rank(&tok.stem) {
        out.push(("tf_rank".to_owned(), 1.0 / rank as f64));
    }
    out
}
