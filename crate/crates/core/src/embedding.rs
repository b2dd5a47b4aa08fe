//! Pre-trained concept vectors used as initial node features.
//!
//! File layout: one concept per line, `<cui> <v1> <v2> ... <vF>`, separated
//! by single spaces or tabs. All rows must have the same length.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use kg_tensor::rng;

use crate::ontology::ConceptId;

pub const DEFAULT_DIM: usize = 200;

/// Norm of the fallback vector given to concepts absent from the table.
pub const FALLBACK_NORM: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: expected {expected} values, got {got}")]
    Dim { line: usize, expected: usize, got: usize },
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<ConceptId, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: ConceptId, v: Vec<f64>) -> Result<(), EmbeddingError> {
        if v.len() != self.dim {
            return Err(EmbeddingError::Dim {
                line: 0,
                expected: self.dim,
                got: v.len(),
            });
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.vectors.contains_key(id)
    }

    /// The stored vector, or a deterministic pseudo-random vector of norm
    /// [`FALLBACK_NORM`] seeded by the CUI.
    pub fn vector(&self, id: &ConceptId) -> Cow<'_, [f64]> {
        match self.vectors.get(id) {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(fallback_vector(id, self.dim)),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| EmbeddingError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut table: Option<EmbeddingTable> = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_ascii_whitespace();
            let cui = fields.next().unwrap_or_default();
            let id = ConceptId::new(cui).map_err(|e| EmbeddingError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let values: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| EmbeddingError::Parse {
                            line: line_no,
                            msg: format!("bad value {f:?}"),
                        })
                })
                .collect::<Result<_, _>>()?;
            let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
            if values.len() != t.dim || values.is_empty() {
                return Err(EmbeddingError::Dim {
                    line: line_no,
                    expected: t.dim,
                    got: values.len(),
                });
            }
            t.vectors.insert(id, values);
        }
        Ok(table.unwrap_or_else(|| EmbeddingTable::new(DEFAULT_DIM)))
    }

    /// Text form accepted by [`EmbeddingTable::parse`], rows sorted by CUI.
    pub fn to_text(&self) -> String {
        let mut ids: Vec<&ConceptId> = self.vectors.keys().collect();
        ids.sort();
        let mut out = String::new();
        for id in ids {
            out.push_str(id.as_str());
            for v in &self.vectors[id] {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn fallback_vector(id: &ConceptId, dim: usize) -> Vec<f64> {
    let mut r = rng::stream(rng::stable_hash(id.as_str().as_bytes()), &[0xE3B]);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x *= FALLBACK_NORM / norm);
    }
    v
}

/// Arithmetic mean of equal-length rows; the zero vector when there are none.
pub fn mean_vector<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
        n += 1;
    }
    if n > 0 {
        let n = n as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}
