//! Word-vector text files and term resolution with the multi-token fallback.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_word;

/// Characters a term is split on when it is not in the vocabulary as a whole.
pub const TERM_SEPARATORS: [char; 4] = [' ', '\'', '-', '\u{2019}'];

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a term was turned into a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    /// The whole term is in the vocabulary.
    Direct,
    /// Mean of the vectors of the known parts.
    Averaged,
    /// Nothing recognized.
    Zero,
}

/// Vocabulary of fixed-dimension word vectors.
///
/// Vectors are stored row-major in one `f32` buffer; lookups hand out `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub declared: usize,
    pub loaded: usize,
    pub duplicates: usize,
}

impl EmbeddingStore {
    /// Builds a store from `(word, vector)` pairs; first occurrence of a word wins.
    pub fn from_pairs<I, S>(dim: usize, pairs: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: AsRef<str>,
    {
        let mut store = Self::with_capacity(dim, 0);
        for (i, (word, vector)) in pairs.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(EmbeddingError::Parse {
                    line: i + 1,
                    message: format!("vector of length {} for dimension {dim}", vector.len()),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::Parse {
                    line: i + 1,
                    message: "non-finite component".into(),
                });
            }
            store.push(normalize_word(word.as_ref()), &vector);
        }
        Ok(store)
    }

    fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            words: Vec::with_capacity(n),
            index: HashMap::with_capacity(n),
            data: Vec::with_capacity(n * dim),
        }
    }

    /// Returns false if the word was already present.
    fn push(&mut self, word: String, vector: &[f32]) -> bool {
        if self.index.contains_key(&word) {
            return false;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
        true
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

    /// Vocabulary in file order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Vector for `term`, falling back to the mean of its known parts and
    /// finally to the zero vector.
    pub fn embed_term(&self, term: &str) -> (Vec<f64>, Resolution) {
        if let Some(v) = self.get(term) {
            return (v.iter().map(|&x| f64::from(x)).collect(), Resolution::Direct);
        }
        let mut sum = vec![0.0f64; self.dim];
        let mut found = 0usize;
        for part in term.split(TERM_SEPARATORS).filter(|p| !p.is_empty()) {
            if let Some(v) = self.get(part) {
                for (s, &x) in sum.iter_mut().zip(v) {
                    *s += f64::from(x);
                }
                found += 1;
            }
        }
        if found == 0 {
            return (vec![0.0; self.dim], Resolution::Zero);
        }
        let n = found as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        (sum, Resolution::Averaged)
    }

    /// One row per word, in order, plus the resolution of each row.
    pub fn embed_matrix<S: AsRef<str>>(&self, words: &[S]) -> (Array2<f64>, Vec<Resolution>) {
        let mut matrix = Array2::zeros((words.len(), self.dim));
        let mut tags = Vec::with_capacity(words.len());
        for (mut row, word) in matrix.rows_mut().into_iter().zip(words) {
            let (v, tag) = self.embed_term(word.as_ref());
            row.iter_mut().zip(v).for_each(|(r, x)| *r = x);
            tags.push(tag);
        }
        (matrix, tags)
    }
}

/// Reads the text vector format: a `<count> <dim>` header, then one
/// `word v1 ... v_dim` line per word. At most `max_vocab` vectors are read.
pub fn load_embedding_store<R: BufRead>(
    reader: R,
    max_vocab: Option<usize>,
) -> Result<(EmbeddingStore, LoadStats), EmbeddingError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(EmbeddingError::Parse { line: 1, message: "missing header".into() }),
    };
    let bad_header = || EmbeddingError::Parse {
        line: 1,
        message: format!("expected `<count> <dim>`, found `{}`", header.trim_end()),
    };
    let mut fields = header.split_whitespace();
    let count: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad_header)?;
    let dim: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad_header)?;
    if fields.next().is_some() || dim == 0 {
        return Err(bad_header());
    }

    let wanted = max_vocab.map_or(count, |m| m.min(count));
    let mut store = EmbeddingStore::with_capacity(dim, wanted);
    let mut stats = LoadStats { declared: count, ..LoadStats::default() };
    let mut vector = Vec::with_capacity(dim);
    let mut read = 0usize;
    for (i, line) in lines.enumerate() {
        if read == wanted {
            break;
        }
        let lineno = i + 2;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        // fastText writes a trailing space after the last component.
        let line = line.strip_suffix(' ').unwrap_or(line);
        let mut fields = line.split(' ');
        let word = match fields.next() {
            Some(w) if !w.is_empty() => w,
            _ => {
                return Err(EmbeddingError::Parse { line: lineno, message: "missing word".into() })
            }
        };
        vector.clear();
        for field in fields {
            let v: f32 = field.parse().map_err(|_| EmbeddingError::Parse {
                line: lineno,
                message: format!("non-numeric component `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(EmbeddingError::Parse {
                    line: lineno,
                    message: "non-finite component".into(),
                });
            }
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(EmbeddingError::Parse {
                line: lineno,
                message: format!("expected {dim} components, found {}", vector.len()),
            });
        }
        if !store.push(normalize_word(word), &vector) {
            stats.duplicates += 1;
        }
        read += 1;
    }
    if read < wanted {
        return Err(EmbeddingError::Parse {
            line: read + 2,
            message: format!("header declares {count} vectors, file ends after {read}"),
        });
    }
    if stats.duplicates > 0 {
        log::warn!("{} duplicate words in vector file; kept first occurrences", stats.duplicates);
    }
    stats.loaded = store.len();
    Ok((store, stats))
}

pub fn write_embedding_store<W: Write>(store: &EmbeddingStore, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", store.len(), store.dim)?;
    for (i, word) in store.words.iter().enumerate() {
        out.write_all(word.as_bytes())?;
        for v in store.row(i) {
            write!(out, " {v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}
