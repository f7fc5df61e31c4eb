//! Text vector files (`utt_id dim v1 … vdim`, one record per line) and
//! length-normalized speaker-embedding lookup.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const XVECTOR_DIM: usize = 512;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new() }
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

    pub fn insert(&mut self, utt_id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: v.len() });
        }
        self.vectors.insert(utt_id.into(), v);
        Ok(())
    }

    pub fn get(&self, utt_id: &str) -> Option<&[f64]> {
        self.vectors.get(utt_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Parses a vector file; every record must declare and carry `dim` values.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let mut store = Self::new(dim);
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let utt = fields.next().expect("non-empty line has a field");
            let declared: usize = fields
                .next()
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| Error::Format(format!("line {line_no}: missing dimension for {utt}")))?;
            if declared != dim {
                return Err(Error::Format(format!(
                    "line {line_no}: {utt} declares dim {declared}, expected {dim}"
                )));
            }
            let values: Vec<f64> = fields
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {line_no}: {utt}: {e}")))?;
            if values.len() != dim {
                return Err(Error::Format(format!(
                    "line {line_no}: {utt} has {} values, expected {dim}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("line {line_no}: {utt} has non-finite values")));
            }
            store.vectors.insert(utt.to_string(), values);
        }
        Ok(store)
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, dim).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (utt, v) in &self.vectors {
            write!(out, "{utt} {}", v.len()).unwrap();
            for x in v {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// The stored vector for `utt_id` divided by its Euclidean norm.
    pub fn normalized(&self, utt_id: &str) -> Result<Vec<f64>> {
        let v = self
            .get(utt_id)
            .ok_or_else(|| Error::Lookup(format!("no vector for utt_id {utt_id}")))?;
        length_normalize(v)
    }
}

pub fn length_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate("zero-norm vector".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Loads the x-vector for one utterance from a vector file and length-normalizes it.
pub fn ingest_xvector(path: &Path, utt_id: &str) -> Result<Vec<f64>> {
    VectorStore::load(path, XVECTOR_DIM)?.normalized(utt_id)
}
