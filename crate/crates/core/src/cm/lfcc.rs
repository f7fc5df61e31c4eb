//! Linear-frequency cepstral coefficients: 20 ms Hamming frames, 512-point
//! power spectra, 20 triangular filters spaced linearly over 0-8 kHz.

use crate::dsp::{stft_power, StftConfig, Waveform, WindowKind};
use crate::error::{Error, Result};

use super::{dct2_ortho, FeatureKind, FeatureMatrix};

pub const N_FILTERS: usize = 20;
pub const N_CEPS: usize = 20;
const LOG_FLOOR: f64 = 1e-30;

pub const LFCC_STFT: StftConfig = StftConfig {
    frame_len: 320,
    shift: 160,
    fft_size: 512,
    window: WindowKind::Hamming,
};

/// `[N_FILTERS × n_bins]` triangular weights with edges equally spaced from 0 Hz to Nyquist.
pub fn linear_filterbank(n_bins: usize, bin_hz: f64, nyquist: f64) -> Vec<Vec<f64>> {
    let step = nyquist / (N_FILTERS + 1) as f64;
    (0..N_FILTERS)
        .map(|m| {
            let (lo, mid, hi) = (m as f64 * step, (m + 1) as f64 * step, (m + 2) as f64 * step);
            (0..n_bins)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Static coefficients, row-major `[n_frames × N_CEPS]`.
pub fn lfcc_static(w: &Waveform) -> Result<Vec<f64>> {
    let n_frames = LFCC_STFT.n_frames(w.len());
    if n_frames < 3 {
        return Err(Error::TooShort(format!(
            "LFCC needs 3 frames of 20 ms, got {} samples",
            w.len()
        )));
    }
    let spec = stft_power(w, &LFCC_STFT)?;
    let fb = linear_filterbank(spec.n_bins(), spec.bin_hz, f64::from(w.sample_rate()) / 2.0);
    let mut out = Vec::with_capacity(n_frames * N_CEPS);
    for frame in spec.frames() {
        let log_e: Vec<f64> = fb
            .iter()
            .map(|filt| (filt.iter().zip(frame).map(|(a, p)| a * p).sum::<f64>() + LOG_FLOOR).ln())
            .collect();
        out.extend(dct2_ortho(&log_e, N_CEPS));
    }
    Ok(out)
}

/// 20 static LFCCs plus Δ and ΔΔ, 60 per frame.
pub fn compute_lfcc(utt_id: &str, w: &Waveform) -> Result<FeatureMatrix> {
    super::extract(FeatureKind::Lfcc, utt_id, w)
}
