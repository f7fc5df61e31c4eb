//! Long-term average spectrum and minimum-statistics noise spectrum.

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};

const LOG_EPS: f64 = 1e-12;

/// Per-bin power mean over frames, in dB.
pub fn compute_ltas(spec: &Spectrogram) -> Vec<f64> {
    let mut acc = vec![0.0; spec.n_bins()];
    for frame in spec.frames() {
        for (a, p) in acc.iter_mut().zip(frame) {
            *a += p;
        }
    }
    let n = spec.n_frames() as f64;
    acc.iter().map(|s| 10.0 * (s / n + LOG_EPS).log10()).collect()
}

/// Simplified minimum-statistics tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinStatsConfig {
    /// First-order smoothing of the periodogram.
    pub alpha: f64,
    /// Sliding minimum window, in frames.
    pub window: usize,
    /// Multiplicative bias compensation of the minimum.
    pub bias: f64,
}

impl Default for MinStatsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            window: 150,
            bias: 1.5,
        }
    }
}

/// Per-frame noise PSD estimate, row-major `[n_frames × n_bins]`.
pub fn track_noise(spec: &Spectrogram, cfg: &MinStatsConfig) -> Result<Vec<Vec<f64>>> {
    if spec.n_frames() < cfg.window {
        return Err(Error::TooShort(format!(
            "minimum statistics needs >= {} frames, got {}",
            cfg.window,
            spec.n_frames()
        )));
    }
    let n_bins = spec.n_bins();
    let mut smoothed = spec.frame(0).to_vec();
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(spec.n_frames());
    let mut out = Vec::with_capacity(spec.n_frames());
    for (t, frame) in spec.frames().enumerate() {
        if t > 0 {
            for (s, p) in smoothed.iter_mut().zip(frame) {
                *s = cfg.alpha * *s + (1.0 - cfg.alpha) * p;
            }
        }
        history.push(smoothed.clone());
        let lo = (t + 1).saturating_sub(cfg.window);
        let mut noise = vec![f64::INFINITY; n_bins];
        for past in &history[lo..=t] {
            for (m, v) in noise.iter_mut().zip(past) {
                *m = m.min(*v);
            }
        }
        noise.iter_mut().for_each(|m| *m *= cfg.bias);
        out.push(noise);
    }
    Ok(out)
}

/// Frame-averaged minimum-statistics noise spectrum, in dB.
pub fn estimate_noise_spectrum(spec: &Spectrogram) -> Result<Vec<f64>> {
    estimate_noise_spectrum_with(spec, &MinStatsConfig::default())
}

pub fn estimate_noise_spectrum_with(spec: &Spectrogram, cfg: &MinStatsConfig) -> Result<Vec<f64>> {
    let track = track_noise(spec, cfg)?;
    let mut acc = vec![0.0; spec.n_bins()];
    for frame in &track {
        for (a, v) in acc.iter_mut().zip(frame) {
            *a += v;
        }
    }
    let n = track.len() as f64;
    Ok(acc.iter().map(|s| 10.0 * (s / n + LOG_EPS).log10()).collect())
}
