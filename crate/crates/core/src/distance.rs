//! Chamfer distances between the train/test bonafide/spoof point clouds of a
//! quality feature.
//!
//! Clouds are numbered as in the analysis: 1 train bonafide, 2 train spoof,
//! 3 test bonafide, 4 test spoof. `d13` and `d24` compare the same class
//! across partitions; the other four compare classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six cloud pairs, in output column order.
pub const PAIRS: [(usize, usize); 6] = [(1, 2), (1, 3), (2, 3), (1, 4), (2, 4), (3, 4)];
pub const PAIR_NAMES: [&str; 6] = ["d12", "d13", "d23", "d14", "d24", "d34"];

/// A cloud of equal-length points.
pub type Cloud = Vec<Vec<f64>>;

fn check(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud(format!("sizes {} and {}", a.len(), b.len())));
    }
    let dim = a[0].len();
    for p in a.iter().chain(b) {
        if p.len() != dim {
            return Err(Error::Dimension { expected: dim, got: p.len() });
        }
    }
    Ok(dim)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(1/|A|) Σ_a min_b ‖a − b‖²`.
pub fn chamfer_directed(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    check(a, b)?;
    let total: f64 = a
        .iter()
        .map(|p| b.iter().map(|q| sq_dist(p, q)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / a.len() as f64)
}

/// Average of both directions, divided by the dimensionality.
pub fn chamfer_symmetric(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let dim = check(a, b)?;
    Ok((chamfer_directed(a, b)? + chamfer_directed(b, a)?) / 2.0 / dim as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionQuad {
    pub feature: String,
    /// Train bonafide, train spoof, test bonafide, test spoof.
    pub clouds: [Cloud; 4],
}

impl PartitionQuad {
    pub fn new(feature: impl Into<String>, clouds: [Cloud; 4]) -> Result<Self> {
        let q = Self { feature: feature.into(), clouds };
        q.validate()?;
        Ok(q)
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.clouds.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::EmptyCloud(format!("{} cloud P{}", self.feature, i + 1)));
            }
        }
        let dim = self.dim();
        for p in self.clouds.iter().flatten() {
            if p.len() != dim {
                return Err(Error::Dimension { expected: dim, got: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite point in {}", self.feature)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceVector {
    pub d12: f64,
    pub d13: f64,
    pub d23: f64,
    pub d14: f64,
    pub d24: f64,
    pub d34: f64,
}

impl DistanceVector {
    pub fn as_array(&self) -> [f64; 6] {
        [self.d12, self.d13, self.d23, self.d14, self.d24, self.d34]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self { d12: v[0], d13: v[1], d23: v[2], d14: v[3], d24: v[4], d34: v[5] }
    }
}

pub fn six_distances(quad: &PartitionQuad) -> Result<DistanceVector> {
    quad.validate()?;
    let mut out = [0.0; 6];
    for (o, &(i, j)) in out.iter_mut().zip(&PAIRS) {
        *o = chamfer_symmetric(&quad.clouds[i - 1], &quad.clouds[j - 1])?;
    }
    Ok(DistanceVector::from_array(out))
}
