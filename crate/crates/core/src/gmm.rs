//! Diagonal-covariance Gaussian mixtures: seeded k-means start, EM with a
//! variance floor, and the two-model log-likelihood-ratio score.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MODEL_FORMAT: &str = "spoofgap-gmm/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    format: String,
    pub n_components: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    /// `[n_components][dim]`
    pub means: Vec<Vec<f64>>,
    /// `[n_components][dim]`, diagonal covariances.
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub n_components: usize,
    pub seed: u64,
    pub kmeans_iters: usize,
    pub max_iters: usize,
    /// Stop when the average per-frame log-likelihood gains less than this.
    pub tol: f64,
    /// Floor as a fraction of the pooled per-dimension variance.
    pub variance_floor: f64,
}

impl FitConfig {
    pub fn new(n_components: usize, seed: u64) -> Self {
        Self { n_components, seed, kmeans_iters: 10, max_iters: 100, tol: 1e-5, variance_floor: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Average per-frame log-likelihood before each M-step and after the last one.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl FitReport {
    /// Largest decrease between consecutive trace entries (0 when monotone).
    pub fn worst_decrease(&self) -> f64 {
        self.trace.windows(2).map(|p| p[0] - p[1]).fold(0.0, f64::max)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-component constants for fast log-density evaluation.
struct Evaluator {
    consts: Vec<f64>,
    inv_var: Vec<Vec<f64>>,
}

impl Evaluator {
    fn new(m: &GmmModel) -> Self {
        let consts = m
            .weights
            .iter()
            .zip(&m.variances)
            .map(|(w, var)| {
                w.ln() - 0.5 * var.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>()
            })
            .collect();
        let inv_var = m.variances.iter().map(|var| var.iter().map(|v| 1.0 / v).collect()).collect();
        Self { consts, inv_var }
    }

    fn component_logs(&self, m: &GmmModel, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            if self.consts[k] == f64::NEG_INFINITY {
                *o = f64::NEG_INFINITY;
                continue;
            }
            let q: f64 = x
                .iter()
                .zip(&m.means[k])
                .zip(&self.inv_var[k])
                .map(|((xi, mu), iv)| (xi - mu) * (xi - mu) * iv)
                .sum();
            *o = self.consts[k] - 0.5 * q;
        }
    }
}

impl GmmModel {
    pub fn validate(&self) -> Result<()> {
        let k = self.n_components;
        if self.weights.len() != k || self.means.len() != k || self.variances.len() != k {
            return Err(Error::Format(format!("model declares {k} components")));
        }
        if self.means.iter().chain(&self.variances).any(|r| r.len() != self.dim) {
            return Err(Error::Dimension { expected: self.dim, got: self.means[0].len() });
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::Numeric(format!("mixture weights sum to {sum}")));
        }
        if self.variances.iter().flatten().any(|v| !v.is_finite() || *v <= 0.0)
            || self.means.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Numeric("non-finite mean or non-positive variance".into()));
        }
        Ok(())
    }

    /// Per-frame log-likelihoods of a row-major frame matrix.
    pub fn frame_log_likelihoods(&self, frames: &[f64]) -> Result<Vec<f64>> {
        if !frames.len().is_multiple_of(self.dim) {
            return Err(Error::Dimension { expected: self.dim, got: frames.len() % self.dim });
        }
        let ev = Evaluator::new(self);
        let mut buf = vec![0.0; self.n_components];
        Ok(frames
            .chunks_exact(self.dim)
            .map(|x| {
                ev.component_logs(self, x, &mut buf);
                log_sum_exp(&buf)
            })
            .collect())
    }

    pub fn mean_log_likelihood(&self, frames: &[f64]) -> Result<f64> {
        let ll = self.frame_log_likelihoods(frames)?;
        if ll.is_empty() {
            return Err(Error::TooShort("no frames to score".into()));
        }
        Ok(ll.iter().sum::<f64>() / ll.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: GmmModel = serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unsupported model format {:?}", m.format)));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans(frames: &[f64], dim: usize, k: usize, iters: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = frames.len() / dim;
    let row = |i: usize| &frames[i * dim..(i + 1) * dim];
    let mut r = rng::stream(seed, "gmm/kmeans");
    let mut picks: Vec<usize> = index::sample(&mut r, n, k).into_vec();
    picks.sort_unstable();
    let mut centres: Vec<Vec<f64>> = picks.iter().map(|&i| row(i).to_vec()).collect();
    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        for (i, a) in assign.iter_mut().enumerate() {
            let x = row(i);
            let mut best = (f64::INFINITY, 0);
            for (c, centre) in centres.iter().enumerate() {
                let d = sq_dist(x, centre);
                if d < best.0 {
                    best = (d, c);
                }
            }
            *a = best.1;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            // an empty cluster keeps its previous centre
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    (centres, assign)
}

/// Fits a diagonal GMM to the row-major `frames` of dimension `dim`.
pub fn fit_gmm(frames: &[f64], dim: usize, cfg: &FitConfig) -> Result<(GmmModel, FitReport)> {
    let k = cfg.n_components;
    if dim == 0 || !frames.len().is_multiple_of(dim) {
        return Err(Error::Dimension { expected: dim, got: frames.len() });
    }
    let n = frames.len() / dim;
    if k == 0 || n < 10 * k {
        return Err(Error::Capacity(format!(
            "{n} frames for {k} components, need at least {}",
            10 * k.max(1)
        )));
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite training frame".into()));
    }
    let row = |i: usize| &frames[i * dim..(i + 1) * dim];

    let mut global_mean = vec![0.0; dim];
    for i in 0..n {
        for (m, x) in global_mean.iter_mut().zip(row(i)) {
            *m += x;
        }
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut global_var = vec![0.0; dim];
    for i in 0..n {
        for ((v, x), m) in global_var.iter_mut().zip(row(i)).zip(&global_mean) {
            *v += (x - m) * (x - m);
        }
    }
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (cfg.variance_floor * v / n as f64).max(f64::MIN_POSITIVE))
        .collect();

    let (centres, assign) = kmeans(frames, dim, k, cfg.kmeans_iters, cfg.seed);
    let mut counts = vec![0usize; k];
    let mut var_acc = vec![vec![0.0; dim]; k];
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        for ((v, x), c) in var_acc[a].iter_mut().zip(row(i)).zip(&centres[a]) {
            *v += (x - c) * (x - c);
        }
    }
    let mut model = GmmModel {
        format: MODEL_FORMAT.to_string(),
        n_components: k,
        dim,
        weights: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        means: centres,
        variances: var_acc
            .iter()
            .zip(&counts)
            .map(|(acc, &c)| {
                acc.iter()
                    .zip(&floor)
                    .zip(&global_var)
                    .map(|((a, f), g)| if c > 0 { (a / c as f64).max(*f) } else { (g / n as f64).max(*f) })
                    .collect()
            })
            .collect(),
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut logs = vec![0.0; k];
    let mut resp = vec![0.0; n * k];
    for iter in 0..=cfg.max_iters {
        // E-step
        let ev = Evaluator::new(&model);
        let mut total = 0.0;
        for i in 0..n {
            ev.component_logs(&model, row(i), &mut logs);
            let lse = log_sum_exp(&logs);
            total += lse;
            for (r, l) in resp[i * k..(i + 1) * k].iter_mut().zip(&logs) {
                *r = (l - lse).exp();
            }
        }
        let avg = total / n as f64;
        if let Some(&prev) = trace.last() {
            if avg - prev < cfg.tol {
                trace.push(avg);
                converged = true;
                break;
            }
        }
        trace.push(avg);
        if iter == cfg.max_iters {
            break;
        }
        // M-step
        let mut nk = vec![0.0; k];
        let mut sum_x = vec![vec![0.0; dim]; k];
        for i in 0..n {
            let x = row(i);
            for c in 0..k {
                let g = resp[i * k + c];
                if g == 0.0 {
                    continue;
                }
                nk[c] += g;
                for (s, xi) in sum_x[c].iter_mut().zip(x) {
                    *s += g * xi;
                }
            }
        }
        let means: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                if nk[c] > 0.0 {
                    sum_x[c].iter().map(|s| s / nk[c]).collect()
                } else {
                    model.means[c].clone()
                }
            })
            .collect();
        let mut sum_sq = vec![vec![0.0; dim]; k];
        for i in 0..n {
            let x = row(i);
            for c in 0..k {
                let g = resp[i * k + c];
                if g == 0.0 {
                    continue;
                }
                for ((s, xi), mu) in sum_sq[c].iter_mut().zip(x).zip(&means[c]) {
                    *s += g * (xi - mu) * (xi - mu);
                }
            }
        }
        for c in 0..k {
            model.weights[c] = nk[c] / n as f64;
            if nk[c] > 0.0 {
                model.variances[c] = sum_sq[c].iter().zip(&floor).map(|(s, f)| (s / nk[c]).max(*f)).collect();
            }
        }
        let wsum: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= wsum);
        model.means = means;
    }
    model.validate()?;
    Ok((model, FitReport { trace, converged }))
}

/// Mean per-frame log-likelihood under the bonafide model minus the same under
/// the spoof model. Higher means more bonafide-like.
pub fn score_llr(bona: &GmmModel, spoof: &GmmModel, frames: &[f64]) -> Result<f64> {
    if bona.dim != spoof.dim {
        return Err(Error::Dimension { expected: bona.dim, got: spoof.dim });
    }
    if frames.is_empty() {
        return Err(Error::TooShort("no frames to score".into()));
    }
    Ok(bona.mean_log_likelihood(frames)? - spoof.mean_log_likelihood(frames)?)
}
