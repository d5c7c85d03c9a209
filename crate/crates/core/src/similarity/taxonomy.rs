//! WordNet-style noun/verb hierarchy with an information-content table, used
//! for Lin similarity.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::SimilarityError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WordPos {
    Noun,
    Verb,
}

impl WordPos {
    const ALL: [WordPos; 2] = [WordPos::Noun, WordPos::Verb];

    fn file_suffix(self) -> &'static str {
        match self {
            WordPos::Noun => "noun",
            WordPos::Verb => "verb",
        }
    }

    fn letter(self) -> char {
        match self {
            WordPos::Noun => 'n',
            WordPos::Verb => 'v',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SynsetId {
    pub pos: WordPos,
    pub offset: u64,
}

/// Detachment rules applied when a word form is not itself a lemma.
const NOUN_SUFFIXES: &[(&str, &str)] = &[
    ("s", ""),
    ("ses", "s"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("men", "man"),
    ("ies", "y"),
];
const VERB_SUFFIXES: &[(&str, &str)] = &[
    ("s", ""),
    ("ies", "y"),
    ("es", "e"),
    ("es", ""),
    ("ed", "e"),
    ("ed", ""),
    ("ing", "e"),
    ("ing", ""),
];

#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    hypernyms: HashMap<SynsetId, Vec<SynsetId>>,
    lemmas: HashMap<(WordPos, String), Vec<SynsetId>>,
    exceptions: HashMap<(WordPos, String), Vec<String>>,
    ic: HashMap<SynsetId, f64>,
}

impl Taxonomy {
    /// Build directly from parts. `synsets` lists each synset with its
    /// hypernyms; `lemmas` maps a lemma to its senses, most frequent first.
    pub fn from_parts(
        synsets: impl IntoIterator<Item = (SynsetId, Vec<SynsetId>)>,
        lemmas: impl IntoIterator<Item = (WordPos, String, Vec<SynsetId>)>,
        ic: impl IntoIterator<Item = (SynsetId, f64)>,
    ) -> Self {
        Taxonomy {
            hypernyms: synsets.into_iter().collect(),
            lemmas: lemmas.into_iter().map(|(p, l, s)| ((p, l), s)).collect(),
            exceptions: HashMap::new(),
            ic: ic.into_iter().collect(),
        }
    }

    /// Load `data.{noun,verb}`, `index.{noun,verb}` and the optional
    /// `{noun,verb}.exc` files from a WordNet dictionary directory, plus an
    /// information-content file of `<offset>[n|v] <ic>` lines. A bare offset
    /// applies to both parts of speech.
    pub fn load(dict_dir: &Path, ic_path: &Path) -> Result<Self, SimilarityError> {
        let mut tax = Taxonomy::default();
        for pos in WordPos::ALL {
            let data = dict_dir.join(format!("data.{}", pos.file_suffix()));
            tax.read_data(pos, &data)?;
            let index = dict_dir.join(format!("index.{}", pos.file_suffix()));
            tax.read_index(pos, &index)?;
            let exc = dict_dir.join(format!("{}.exc", pos.file_suffix()));
            if exc.exists() {
                tax.read_exceptions(pos, &exc)?;
            }
        }
        tax.read_ic(ic_path)?;
        log::info!(
            "taxonomy: {} synsets, {} lemmas, {} ic entries",
            tax.hypernyms.len(),
            tax.lemmas.len(),
            tax.ic.len()
        );
        Ok(tax)
    }

    fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>, SimilarityError> {
        let f = File::open(path).map_err(|e| SimilarityError::Resource {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
    }

    fn format_error(path: &Path, line: usize, message: impl Into<String>) -> SimilarityError {
        SimilarityError::Resource {
            path: format!("{}:{line}", path.display()),
            message: message.into(),
        }
    }

    fn read_data(&mut self, pos: WordPos, path: &Path) -> Result<(), SimilarityError> {
        for (lineno, line) in Self::lines(path)? {
            let line = line?;
            // License header lines start with spaces.
            if line.starts_with(' ') || line.trim().is_empty() {
                continue;
            }
            let body = line.split(" | ").next().unwrap_or(&line);
            let f: Vec<&str> = body.split_whitespace().collect();
            let err = |m: &str| Self::format_error(path, lineno, m);
            let offset: u64 = f.first().and_then(|s| s.parse().ok()).ok_or_else(|| err("bad synset offset"))?;
            let w_cnt = f
                .get(3)
                .and_then(|s| usize::from_str_radix(s, 16).ok())
                .ok_or_else(|| err("bad word count"))?;
            let mut i = 4 + 2 * w_cnt;
            let p_cnt: usize = f.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| err("bad pointer count"))?;
            i += 1;
            let mut parents = Vec::new();
            for _ in 0..p_cnt {
                let ptr = f.get(i..i + 4).ok_or_else(|| err("truncated pointer list"))?;
                if ptr[0] == "@" || ptr[0] == "@i" {
                    let target: u64 = ptr[1].parse().map_err(|_| err("bad pointer offset"))?;
                    if ptr[2].starts_with(pos.letter()) {
                        parents.push(SynsetId { pos, offset: target });
                    }
                }
                i += 4;
            }
            self.hypernyms.insert(SynsetId { pos, offset }, parents);
        }
        Ok(())
    }

    fn read_index(&mut self, pos: WordPos, path: &Path) -> Result<(), SimilarityError> {
        for (lineno, line) in Self::lines(path)? {
            let line = line?;
            if line.starts_with(' ') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let err = |m: &str| Self::format_error(path, lineno, m);
            let lemma = f.first().ok_or_else(|| err("missing lemma"))?.to_string();
            let synset_cnt: usize = f.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| err("bad synset count"))?;
            let p_cnt: usize = f.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| err("bad pointer count"))?;
            let start = 4 + p_cnt + 2;
            let offsets = f.get(start..start + synset_cnt).ok_or_else(|| err("truncated offsets"))?;
            let senses: Result<Vec<SynsetId>, _> = offsets
                .iter()
                .map(|s| s.parse().map(|offset| SynsetId { pos, offset }).map_err(|_| err("bad offset")))
                .collect();
            self.lemmas.insert((pos, lemma), senses?);
        }
        Ok(())
    }

    fn read_exceptions(&mut self, pos: WordPos, path: &Path) -> Result<(), SimilarityError> {
        for (_, line) in Self::lines(path)? {
            let line = line?;
            let mut f = line.split_whitespace();
            if let Some(form) = f.next() {
                self.exceptions
                    .insert((pos, form.to_string()), f.map(str::to_string).collect());
            }
        }
        Ok(())
    }

    fn read_ic(&mut self, path: &Path) -> Result<(), SimilarityError> {
        for (lineno, line) in Self::lines(path)? {
            let line = line?;
            let mut f = line.split_whitespace();
            let Some(key) = f.next() else { continue };
            let err = |m: &str| Self::format_error(path, lineno, m);
            let value: f64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| err("bad ic value"))?;
            let (digits, poses): (&str, Vec<WordPos>) = match key.chars().last() {
                Some('n') => (&key[..key.len() - 1], vec![WordPos::Noun]),
                Some('v') => (&key[..key.len() - 1], vec![WordPos::Verb]),
                _ => (key, WordPos::ALL.to_vec()),
            };
            let offset: u64 = digits.parse().map_err(|_| err("bad synset offset"))?;
            for pos in poses {
                self.ic.insert(SynsetId { pos, offset }, value);
            }
        }
        Ok(())
    }

    /// Base forms of `word` known to the lexicon for one part of speech.
    fn morphy(&self, word: &str, pos: WordPos) -> Vec<String> {
        let mut out = Vec::new();
        let key = (pos, word.to_string());
        if let Some(bases) = self.exceptions.get(&key) {
            out.extend(bases.iter().filter(|b| self.lemmas.contains_key(&(pos, (*b).clone()))).cloned());
        }
        if self.lemmas.contains_key(&key) {
            out.push(word.to_string());
        }
        if out.is_empty() {
            let rules = match pos {
                WordPos::Noun => NOUN_SUFFIXES,
                WordPos::Verb => VERB_SUFFIXES,
            };
            for (suffix, repl) in rules {
                if let Some(stem) = word.strip_suffix(suffix) {
                    let base = format!("{stem}{repl}");
                    if !base.is_empty() && self.lemmas.contains_key(&(pos, base.clone())) && !out.contains(&base) {
                        out.push(base);
                    }
                }
            }
        }
        out
    }

    /// All senses of a surface word, nouns before verbs.
    pub fn senses(&self, word: &str) -> Vec<SynsetId> {
        let mut out = Vec::new();
        for pos in WordPos::ALL {
            for base in self.morphy(word, pos) {
                for s in &self.lemmas[&(pos, base)] {
                    if !out.contains(s) {
                        out.push(*s);
                    }
                }
            }
        }
        out
    }

    pub fn contains(&self, word: &str) -> bool {
        !self.senses(word).is_empty()
    }

    fn ancestors(&self, s: SynsetId) -> HashSet<SynsetId> {
        let mut seen = HashSet::new();
        let mut stack = vec![s];
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                if let Some(ps) = self.hypernyms.get(&x) {
                    stack.extend(ps.iter().copied());
                }
            }
        }
        seen
    }

    /// Lin similarity of two synsets: 2·IC(lcs) / (IC(a) + IC(b)), where the
    /// lowest common subsumer is the shared ancestor with the highest IC.
    /// `None` when the synsets lie in different hierarchies or lack IC.
    pub fn lin_synsets(&self, a: SynsetId, b: SynsetId) -> Option<f64> {
        if a.pos != b.pos {
            return None;
        }
        let (ia, ib) = (*self.ic.get(&a)?, *self.ic.get(&b)?);
        if a == b {
            return Some(1.0);
        }
        let anc_a = self.ancestors(a);
        let lcs = self
            .ancestors(b)
            .intersection(&anc_a)
            .filter_map(|s| self.ic.get(s).copied())
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))?;
        if ia + ib <= 0.0 {
            return Some(0.0);
        }
        Some((2.0 * lcs / (ia + ib)).clamp(0.0, 1.0))
    }

    /// Maximum Lin similarity over all sense pairs of two words.
    pub fn lin_words(&self, a: &str, b: &str) -> Option<f64> {
        let sa = self.senses(a);
        let sb = self.senses(b);
        let mut best: Option<f64> = None;
        for &x in &sa {
            for &y in &sb {
                if let Some(v) = self.lin_synsets(x, y) {
                    best = Some(best.map_or(v, |b| b.max(v)));
                }
            }
        }
        best
    }
}

#[cfg(test)]
pub(crate) mod fixture {
    use super::*;
    use std::io::Write;

    /// A six-synset noun hierarchy:
    ///
    /// entity(1) ← abstraction(2) ← theorem(3), statistic(4) ← mean(5), median(6)
    /// plus a verb compute(7).
    pub fn write_dict(dir: &Path) -> std::path::PathBuf {
        let mut data = File::create(dir.join("data.noun")).unwrap();
        writeln!(data, "  1 This software and database is being provided").unwrap();
        writeln!(data, "00000001 03 n 01 entity 0 000 | that which is perceived").unwrap();
        writeln!(data, "00000002 03 n 01 abstraction 0 001 @ 00000001 n 0000 | a general concept").unwrap();
        writeln!(data, "00000003 09 n 01 theorem 0 001 @ 00000002 n 0000 | a proposition").unwrap();
        writeln!(data, "00000004 09 n 02 statistic 0 statistics 0 001 @ 00000002 n 0000 | a datum").unwrap();
        writeln!(data, "00000005 09 n 02 mean 0 average 0 001 @ 00000004 n 0000 | a central value").unwrap();
        writeln!(data, "00000006 09 n 01 median 0 002 @ 00000004 n 0000 ~ 00000005 n 0000 | a middle value").unwrap();
        let mut index = File::create(dir.join("index.noun")).unwrap();
        writeln!(index, "  1 This software and database is being provided").unwrap();
        for (lemma, off) in [("entity", 1), ("abstraction", 2), ("theorem", 3), ("statistic", 4), ("statistics", 4), ("mean", 5), ("average", 5), ("median", 6)] {
            writeln!(index, "{lemma} n 1 1 @ 1 0 {off:08}").unwrap();
        }
        let mut exc = File::create(dir.join("noun.exc")).unwrap();
        writeln!(exc, "medians median").unwrap();
        let mut data = File::create(dir.join("data.verb")).unwrap();
        writeln!(data, "00000007 31 v 01 compute 0 000 01 + 02 00 | make a calculation").unwrap();
        let mut index = File::create(dir.join("index.verb")).unwrap();
        writeln!(index, "compute v 1 0 1 0 00000007").unwrap();
        let ic_path = dir.join("ic.txt");
        let mut ic = File::create(&ic_path).unwrap();
        for (off, v) in [("1n", 0.0), ("2n", 1.0), ("3n", 5.0), ("4n", 3.0), ("5n", 6.0), ("6n", 6.0), ("7v", 4.0)] {
            writeln!(ic, "{off} {v}").unwrap();
        }
        ic_path
    }

    pub fn load() -> Taxonomy {
        let dir = tempfile::tempdir().unwrap();
        let ic = write_dict(dir.path());
        Taxonomy::load(dir.path(), &ic).unwrap()
    }
}
