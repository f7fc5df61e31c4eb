//! Countermeasure front-ends: 60-dim LFCC and 90-dim CQCC frame matrices.

pub mod cqcc;
pub mod lfcc;

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cqcc::compute_cqcc;
pub use lfcc::compute_lfcc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Lfcc,
    Cqcc,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 2] = [FeatureKind::Lfcc, FeatureKind::Cqcc];

    pub fn n_static(self) -> usize {
        match self {
            FeatureKind::Lfcc => lfcc::N_CEPS,
            FeatureKind::Cqcc => cqcc::N_CEPS,
        }
    }

    pub fn dim(self) -> usize {
        3 * self.n_static()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Lfcc => "lfcc",
            FeatureKind::Cqcc => "cqcc",
        }
    }

    /// Cache key component; bump when extraction changes.
    pub fn version(self) -> &'static str {
        match self {
            FeatureKind::Lfcc => "lfcc-v1-20lin-20c-dd",
            FeatureKind::Cqcc => "cqcc-v1-b96-o9-1024-30c-dd",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lfcc" => Ok(FeatureKind::Lfcc),
            "cqcc" => Ok(FeatureKind::Cqcc),
            _ => Err(Error::Config(format!("unknown front-end {s:?}"))),
        }
    }
}

/// Row-major `[n_frames × dim]` cepstral features of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub utt_id: String,
    pub kind: FeatureKind,
    n_frames: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(utt_id: impl Into<String>, kind: FeatureKind, data: Vec<f64>) -> Result<Self> {
        let dim = kind.dim();
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension { expected: dim, got: data.len() % dim });
        }
        let m = Self { utt_id: utt_id.into(), kind, n_frames: data.len() / dim, data };
        m.validate()?;
        Ok(m)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.dim();
        &self.data[t * d..(t + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 3 {
            return Err(Error::TooShort(format!("{} has {} frames", self.utt_id, self.n_frames)));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{} {} has non-finite entries", self.kind, self.utt_id)));
        }
        Ok(())
    }

    /// Header `utt_id kind n_frames dim`, then one space-separated row per frame.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {}\n", self.utt_id, self.kind, self.n_frames, self.dim());
        for row in self.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty feature file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(Error::Format(format!("bad feature header {header:?}")));
        }
        let kind: FeatureKind = h[1].parse().map_err(|_| Error::Format(format!("bad kind {:?}", h[1])))?;
        let n_frames: usize = h[2].parse().map_err(|_| Error::Format(format!("bad n_frames {:?}", h[2])))?;
        let dim: usize = h[3].parse().map_err(|_| Error::Format(format!("bad dim {:?}", h[3])))?;
        if dim != kind.dim() {
            return Err(Error::Dimension { expected: kind.dim(), got: dim });
        }
        let mut data = Vec::with_capacity(n_frames * dim);
        for (i, line) in lines.enumerate() {
            let before = data.len();
            for v in line.split_whitespace() {
                data.push(v.parse::<f64>().map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?);
            }
            if data.len() - before != dim {
                return Err(Error::Format(format!("row {} has {} values, expected {dim}", i + 1, data.len() - before)));
            }
        }
        if data.len() != n_frames * dim {
            return Err(Error::Format(format!("expected {n_frames} rows, got {}", data.len() / dim)));
        }
        Self::new(h[0], kind, data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Extracts the requested front-end.
pub fn extract(kind: FeatureKind, utt_id: &str, w: &crate::dsp::Waveform) -> Result<FeatureMatrix> {
    let statics = match kind {
        FeatureKind::Lfcc => lfcc::lfcc_static(w)?,
        FeatureKind::Cqcc => cqcc::cqcc_static(w)?,
    };
    FeatureMatrix::new(utt_id, kind, append_deltas(&statics, kind.n_static())?)
}

const DELTA_HALF_WIDTH: usize = 2;

/// Regression deltas over ±2 frames with edge replication.
fn deltas(x: &[f64], dim: usize) -> Vec<f64> {
    let n = x.len() / dim;
    let norm: f64 = 2.0 * (1..=DELTA_HALF_WIDTH).map(|k| (k * k) as f64).sum::<f64>();
    let mut out = vec![0.0; x.len()];
    for t in 0..n {
        for k in 1..=DELTA_HALF_WIDTH {
            let next = (t + k).min(n - 1);
            let prev = t.saturating_sub(k);
            for d in 0..dim {
                out[t * dim + d] += k as f64 * (x[next * dim + d] - x[prev * dim + d]);
            }
        }
        for v in &mut out[t * dim..(t + 1) * dim] {
            *v /= norm;
        }
    }
    out
}

/// Appends Δ and ΔΔ to each row of a row-major `[n × dim]` matrix.
pub fn append_deltas(statics: &[f64], dim: usize) -> Result<Vec<f64>> {
    let n = statics.len() / dim;
    if n < 3 {
        return Err(Error::TooShort(format!("deltas need 3 frames, got {n}")));
    }
    let d1 = deltas(statics, dim);
    let d2 = deltas(&d1, dim);
    let mut out = Vec::with_capacity(3 * statics.len());
    for t in 0..n {
        let r = t * dim..(t + 1) * dim;
        out.extend_from_slice(&statics[r.clone()]);
        out.extend_from_slice(&d1[r.clone()]);
        out.extend_from_slice(&d2[r]);
    }
    Ok(out)
}

/// First `n_out` coefficients of the orthonormal DCT-II.
pub fn dct2_ortho(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            let theta = std::f64::consts::PI * k as f64 / (2.0 * n);
            s * x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (theta * (2 * i + 1) as f64).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Inverse of [`dct2_ortho`] from a full coefficient vector.
pub fn idct2_ortho(c: &[f64]) -> Vec<f64> {
    let n = c.len() as f64;
    (0..c.len())
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                    s * v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_has_zero_deltas() {
        let x = [1.5, -2.0].repeat(6);
        let out = append_deltas(&x, 2).unwrap();
        for row in out.chunks(6) {
            assert_eq!(&row[..2], &[1.5, -2.0]);
            assert!(row[2..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ramp_has_unit_interior_delta() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let out = append_deltas(&x, 1).unwrap();
        for t in 2..8 {
            assert_eq!(out[3 * t + 1], 1.0);
        }
        for t in 4..6 {
            assert_eq!(out[3 * t + 2], 0.0);
        }
        // edge replication shrinks the slope at the ends
        assert!((out[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn deltas_triple_the_dim_and_need_three_frames() {
        assert_eq!(append_deltas(&vec![0.0; 20 * 4], 20).unwrap().len(), 60 * 4);
        assert!(matches!(append_deltas(&[0.0; 40], 20), Err(Error::TooShort(_))));
    }

    #[test]
    fn dct_roundtrip() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 7) % 11) as f64 - 3.3).collect();
        let c = dct2_ortho(&x, x.len());
        let y = idct2_ortho(&c);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
        let energy_x: f64 = x.iter().map(|v| v * v).sum();
        let energy_c: f64 = c.iter().map(|v| v * v).sum();
        assert!((energy_x - energy_c).abs() < 1e-9 * energy_x);
    }

    #[test]
    fn text_roundtrip_exact() {
        let data: Vec<f64> = (0..60 * 4).map(|i| (i as f64).sin() / 3.0).collect();
        let m = FeatureMatrix::new("u1", FeatureKind::Lfcc, data).unwrap();
        let back = FeatureMatrix::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(FeatureMatrix::parse("u1 lfcc 1 90\n").is_err());
    }
}
