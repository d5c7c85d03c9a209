use serde::{Deserialize, Serialize};

use super::stem::stem;

/// One token of a student response.
///
/// `char_start`/`char_end` are character (not byte) offsets into the source
/// response text, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub raw: String,
    pub lower: String,
    pub stem: String,
    pub pos: Option<String>,
    pub chunk: Option<String>,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    pub fn new(raw: &str, char_start: usize, char_end: usize) -> Self {
        let lower = raw.to_lowercase();
        let stem = stem(&lower);
        Token {
            raw: raw.to_owned(),
            lower,
            stem,
            pos: None,
            chunk: None,
            char_start,
            char_end,
        }
    }

    pub fn with_tags(mut self, pos: Option<String>, chunk: Option<String>) -> Self {
        self.pos = pos;
        self.chunk = chunk;
        self
    }

    /// True when every character is punctuation.
    pub fn is_punctuation(&self) -> bool {
        self.raw.chars().all(is_punct)
    }
}

pub(crate) fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}' | '\u{2026}' | '\u{2013}' | '\u{2014}'
        )
}

/// Split on whitespace, then peel leading and trailing punctuation off each
/// chunk one character at a time. Internal punctuation ("q-q", "today's")
/// stays inside the word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut tokens);
    }
    tokens
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut lo = start;
    let mut hi = end;
    while lo < hi && is_punct(chars[lo]) {
        lo += 1;
    }
    while hi > lo && is_punct(chars[hi - 1]) {
        hi -= 1;
    }
    let push = |out: &mut Vec<Token>, a: usize, b: usize| {
        let raw: String = chars[a..b].iter().collect();
        out.push(Token::new(&raw, a, b));
    };
    for p in start..lo {
        push(out, p, p + 1);
    }
    if lo < hi {
        push(out, lo, hi);
    }
    for p in hi..end {
        push(out, p, p + 1);
    }
}

/// Attach character offsets to externally supplied token strings by scanning
/// the source text left to right. Tokens that cannot be located (a tagger may
/// normalise quotes, for instance) are placed directly after the previous
/// token so offsets stay strictly increasing.
pub(crate) fn align_tokens(text: &str, words: &[(String, Option<String>, Option<String>)]) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut cursor = 0usize;
    let mut out = Vec::with_capacity(words.len());
    for (word, pos, chunk) in words {
        let needle: Vec<char> = word.chars().collect();
        let len = needle.len().max(1);
        let found = if needle.is_empty() || needle.len() > chars.len() {
            None
        } else {
            (cursor..=chars.len() - needle.len()).find(|&s| chars[s..s + needle.len()] == needle[..])
        };
        let start = found.unwrap_or(cursor);
        let end = start + len;
        cursor = end;
        out.push(Token::new(word, start, end).with_tags(pos.clone(), chunk.clone()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raws(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.raw.as_str()).collect()
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn plain_words() {
        let t = tokenize("central limit teorem");
        assert_eq!(raws(&t), ["central", "limit", "teorem"]);
        let stems: Vec<_> = t.iter().map(|t| t.stem.as_str()).collect();
        assert_eq!(stems, ["central", "limit", "teorem"]);
    }

    #[test]
    fn hyphen_kept_punctuation_split() {
        let t = tokenize("Q-q plot?");
        assert_eq!(raws(&t), ["Q-q", "plot", "?"]);
        let lowers: Vec<_> = t.iter().map(|t| t.lower.as_str()).collect();
        assert_eq!(lowers, ["q-q", "plot", "?"]);
        assert_eq!((t[0].char_start, t[0].char_end), (0, 3));
        assert_eq!((t[2].char_start, t[2].char_end), (8, 9));
    }

    #[test]
    fn leading_and_trailing_runs() {
        let t = tokenize("(today's topic...)");
        assert_eq!(raws(&t), ["(", "today's", "topic", ".", ".", ".", ")"]);
    }

    #[test]
    fn align_recovers_offsets() {
        let words = vec![
            ("Q-q".to_string(), Some("NN".to_string()), None),
            ("plot".to_string(), None, Some("I-NP".to_string())),
        ];
        let t = align_tokens("  Q-q  plot", &words);
        assert_eq!((t[0].char_start, t[0].char_end), (2, 5));
        assert_eq!((t[1].char_start, t[1].char_end), (7, 11));
        assert_eq!(t[0].pos.as_deref(), Some("NN"));
    }

    #[test]
    fn align_missing_token_stays_monotone() {
        let words = vec![
            ("``".to_string(), None, None),
            ("hi".to_string(), None, None),
        ];
        let t = align_tokens("\"hi", &words);
        assert!(t[0].char_start < t[0].char_end);
        assert!(t[0].char_end <= t[1].char_start);
    }

    proptest! {
        #[test]
        fn offsets_reconstruct_text(s in "[a-zA-Z0-9 ,.?!'\\-()\n]{0,60}") {
            let tokens = tokenize(&s);
            let chars: Vec<char> = s.chars().collect();
            let mut rebuilt = String::new();
            let mut prev_end = 0;
            for t in &tokens {
                prop_assert!(t.char_start < t.char_end);
                prop_assert!(t.char_start >= prev_end);
                prev_end = t.char_end;
                let piece: String = chars[t.char_start..t.char_end].iter().collect();
                prop_assert_eq!(&piece, &t.raw);
                rebuilt.push_str(&piece);
            }
            let stripped: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(rebuilt, stripped);
            prop_assert_eq!(tokenize(&s), tokens);
        }

        #[test]
        fn stem_is_deterministic(w in "[a-z]{1,12}") {
            prop_assert_eq!(stem(&w), stem(&w));
        }
    }
}
