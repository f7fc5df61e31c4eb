//! Auditory-spectrum loudness: Bark-band energies, equal-loudness
//! pre-emphasis, cube-root intensity-to-loudness compression, band sum.
//! Absolute values are implementation-defined; the scaling law (power ×k ⇒
//! loudness ×k^(1/3)) and ordering are what downstream code relies on.

use std::f64::consts::PI;

use crate::dsp::{stft_power, Spectrogram, StftConfig, Waveform};
use crate::error::Result;

pub const N_BARK_BANDS: usize = 24;

pub fn hz_to_bark(f: f64) -> f64 {
    6.0 * (f / 600.0).asinh()
}

/// Equal-loudness weight used in perceptual linear prediction.
pub fn equal_loudness(f: f64) -> f64 {
    let w2 = (2.0 * PI * f).powi(2);
    (w2 + 56.8e6) * w2 * w2 / ((w2 + 6.3e6).powi(2) * (w2 + 0.38e9))
}

/// Per-frame loudness from a power spectrogram.
pub fn frame_loudness(spec: &Spectrogram) -> Vec<f64> {
    let n_bins = spec.n_bins();
    let nyquist_bark = hz_to_bark(spec.bin_hz * (n_bins - 1) as f64);
    let band_width = nyquist_bark / N_BARK_BANDS as f64;
    let assignment: Vec<(usize, f64)> = (0..n_bins)
        .map(|k| {
            let f = k as f64 * spec.bin_hz;
            let band = ((hz_to_bark(f) / band_width) as usize).min(N_BARK_BANDS - 1);
            (band, equal_loudness(f))
        })
        .collect();
    spec.frames()
        .map(|frame| {
            let mut bands = [0.0; N_BARK_BANDS];
            for (p, &(b, e)) in frame.iter().zip(&assignment) {
                bands[b] += e * p;
            }
            bands.iter().map(|v| v.cbrt()).sum()
        })
        .collect()
}

pub fn compute_loudness_mean(w: &Waveform) -> Result<f64> {
    let spec = stft_power(w, &StftConfig::ANALYSIS)?;
    let per_frame = frame_loudness(&spec);
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}
