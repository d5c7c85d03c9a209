use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::SimilarityError;

/// Dense word vectors keyed by lowercased token.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl VectorTable {
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, SimilarityError> {
        let mut table = VectorTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        };
        for (word, v) in entries {
            table.insert(word, v)?;
        }
        Ok(table)
    }

    fn insert(&mut self, word: String, v: Vec<f64>) -> Result<(), SimilarityError> {
        if v.len() != self.dim {
            return Err(SimilarityError::VectorFormat {
                line: self.words.len() + 2,
                message: format!("expected {} components for {word:?}, found {}", self.dim, v.len()),
            });
        }
        let word = word.to_lowercase();
        match self.index.get(&word) {
            // Keep the first vector for a repeated word.
            Some(_) => log::warn!("vector table: duplicate entry {word:?} ignored"),
            None => {
                self.index.insert(word.clone(), self.words.len());
                self.words.push(word);
                self.data.extend(v);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Vector of a token; the lookup is case-insensitive.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        let i = match self.index.get(token) {
            Some(&i) => i,
            None => *self.index.get(&token.to_lowercase())?,
        };
        Some(&self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Read the plain-text format: a `<vocab_size> <dim>` header, then one
    /// `<token> <v1> ... <vd>` line per word.
    pub fn read<R: BufRead>(r: R) -> Result<Self, SimilarityError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(SimilarityError::VectorFormat {
            line: 1,
            message: "empty file".into(),
        })??;
        let bad_header = || SimilarityError::VectorFormat {
            line: 1,
            message: format!("expected \"<vocab_size> <dim>\", found {header:?}"),
        };
        let mut parts = header.split_whitespace();
        let size: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad_header)?;
        let dim: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad_header)?;
        if parts.next().is_some() {
            return Err(bad_header());
        }
        let mut table = VectorTable::new(dim, [])?;
        let mut seen = 0;
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("non-empty line").to_string();
            let v: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let v = v.map_err(|e| SimilarityError::VectorFormat {
                line: lineno,
                message: e.to_string(),
            })?;
            if v.len() != dim {
                return Err(SimilarityError::VectorFormat {
                    line: lineno,
                    message: format!("expected {dim} components, found {}", v.len()),
                });
            }
            table.insert(word, v)?;
            seen += 1;
        }
        if seen != size {
            log::warn!("vector table header declares {size} words, file has {seen}");
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_write_round_trip() {
        let text = "2 3\nClt 0.1 -2 3e-3\ntheorem 1 0 0.3333333333333333\n";
        let t = VectorTable::read(text.as_bytes()).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("CLT").unwrap(), &[0.1, -2.0, 0.003]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(VectorTable::read(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = VectorTable::read("1 2\na 1 2 3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SimilarityError::VectorFormat { line: 2, .. }));
        assert!(VectorTable::read("x\n".as_bytes()).is_err());
        assert!(VectorTable::read("1 1\na b\n".as_bytes()).is_err());
    }
}
