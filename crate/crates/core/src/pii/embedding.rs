use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-finite component {value:?}")]
    NonFiniteValue { line: usize, value: String },
    #[error("line {line}: unparsable component {value:?}")]
    BadValue { line: usize, value: String },
    #[error("read error: {0}")]
    Io(String),
}

/// Word vectors loaded from a word2vec text file. Keys are lowercase.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dimension: usize,
    words: Vec<String>,
    vectors: Vec<f64>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn dimension(&self) -> usize {
        self.dimension
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

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(&word.to_lowercase()).copied()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.vector(i))
    }

    pub(crate) fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    /// Cosine similarity between two stored words.
    pub(crate) fn cosine_at(&self, a: usize, b: usize) -> f64 {
        let (na, nb) = (self.norms[a], self.norms[b]);
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        dot(self.vector(a), self.vector(b)) / (na * nb)
    }

    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, Vec<f64>)]) -> Result<EmbeddingStore, EmbeddingError> {
        let dimension = pairs.first().map(|(_, v)| v.len()).unwrap_or(0);
        let mut builder = Builder::new(dimension);
        for (line, (w, v)) in pairs.iter().enumerate() {
            if v.len() != dimension {
                return Err(EmbeddingError::DimensionMismatch {
                    line: line + 1,
                    expected: dimension,
                    found: v.len(),
                });
            }
            if let Some(x) = v.iter().find(|x| !x.is_finite()) {
                return Err(EmbeddingError::NonFiniteValue {
                    line: line + 1,
                    value: x.to_string(),
                });
            }
            builder.push(w.as_ref(), v);
        }
        Ok(builder.finish())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

struct Builder {
    dimension: usize,
    words: Vec<String>,
    vectors: Vec<f64>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Builder {
    fn new(dimension: usize) -> Builder {
        Builder {
            dimension,
            words: Vec::new(),
            vectors: Vec::new(),
            norms: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push(&mut self, word: &str, v: &[f64]) {
        let word = word.to_lowercase();
        if self.index.contains_key(&word) {
            return;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.norms.push(norm(v));
        self.vectors.extend_from_slice(v);
    }

    fn finish(self) -> EmbeddingStore {
        EmbeddingStore {
            dimension: self.dimension,
            words: self.words,
            vectors: self.vectors,
            norms: self.norms,
            index: self.index,
        }
    }
}

/// Reads the word2vec text format: a `<count> <dimension>` header followed
/// by one `word v1 .. vd` row per word.
pub fn load_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingStore, EmbeddingError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((_, Ok(l))) => break l,
            Some((_, Err(e))) => return Err(EmbeddingError::Io(e.to_string())),
            None => return Err(EmbeddingError::BadHeader("empty input".into())),
        }
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dimension) = match fields.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(EmbeddingError::BadHeader(header.clone())),
        },
        _ => return Err(EmbeddingError::BadHeader(header.clone())),
    };

    let mut builder = Builder::new(dimension);
    let mut rows = 0usize;
    let mut values = Vec::with_capacity(dimension);
    for (n, line) in lines {
        let line = line.map_err(|e| EmbeddingError::Io(e.to_string()))?;
        let line_no = n + 1;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else {
            continue;
        };
        values.clear();
        for p in parts {
            let x: f64 = p.parse().map_err(|_| EmbeddingError::BadValue {
                line: line_no,
                value: p.to_string(),
            })?;
            if !x.is_finite() {
                return Err(EmbeddingError::NonFiniteValue {
                    line: line_no,
                    value: p.to_string(),
                });
            }
            values.push(x);
        }
        if values.len() != dimension {
            return Err(EmbeddingError::DimensionMismatch {
                line: line_no,
                expected: dimension,
                found: values.len(),
            });
        }
        rows += 1;
        if rows > count {
            return Err(EmbeddingError::BadHeader(format!(
                "header declares {count} words but more rows follow"
            )));
        }
        builder.push(word, &values);
    }
    if rows != count {
        return Err(EmbeddingError::BadHeader(format!(
            "header declares {count} words, found {rows} rows"
        )));
    }
    Ok(builder.finish())
}
