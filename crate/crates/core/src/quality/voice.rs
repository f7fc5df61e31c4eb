//! Voice descriptors: mean F0 in semitones and mean LPC formant frequencies.

use nalgebra::{DMatrix, Schur};

use crate::dsp::{window, Waveform, WindowKind};
use crate::error::{Error, Result};

/// 40 ms analysis frames.
pub const VOICE_FRAME: usize = 640;
/// 10 ms shift.
pub const VOICE_SHIFT: usize = 160;
pub const F0_MIN_HZ: f64 = 55.0;
pub const F0_MAX_HZ: f64 = 500.0;
pub const VOICING_THRESHOLD: f64 = 0.3;
/// Semitone reference (A0).
pub const SEMITONE_BASE_HZ: f64 = 27.5;

fn n_voice_frames(len: usize) -> usize {
    if len < VOICE_FRAME {
        0
    } else {
        1 + (len - VOICE_FRAME) / VOICE_SHIFT
    }
}

/// Normalized cross-correlation of a frame with itself at lag `tau`.
fn nccf(frame: &[f64], tau: usize) -> f64 {
    let n = frame.len() - tau;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let a = frame[i];
        let b = frame[i + tau];
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        0.0
    } else {
        xy / (xx * yy).sqrt()
    }
}

/// Per-frame F0 in Hz (`None` when unvoiced).
pub fn pitch_track(w: &Waveform) -> Vec<Option<f64>> {
    let fs = f64::from(w.sample_rate());
    let min_lag = (fs / F0_MAX_HZ).floor() as usize;
    let max_lag = (fs / F0_MIN_HZ).ceil() as usize;
    let x = w.samples();
    (0..n_voice_frames(x.len()))
        .map(|t| {
            let frame = &x[t * VOICE_SHIFT..t * VOICE_SHIFT + VOICE_FRAME];
            let mean = frame.iter().sum::<f64>() / frame.len() as f64;
            let frame: Vec<f64> = frame.iter().map(|v| v - mean).collect();
            // one extra lag on each side for peak tests and interpolation
            let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(|tau| nccf(&frame, tau)).collect();
            let inner = 1..r.len() - 1;
            let best = inner.clone().map(|i| r[i]).fold(f64::NEG_INFINITY, f64::max);
            if best < VOICING_THRESHOLD {
                return None;
            }
            // earliest local maximum close to the global one avoids sub-octave picks
            let i = inner
                .clone()
                .find(|&i| r[i] >= 0.9 * best && r[i] >= r[i - 1] && r[i] >= r[i + 1])?;
            let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
            let denom = a - 2.0 * b + c;
            let offset = if denom.abs() > 1e-12 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let lag = (min_lag - 1 + i) as f64 + offset;
            Some(fs / lag)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Estimate {
    /// Mean of `12·log2(f0 / 27.5)` over voiced frames; 0 when unvoiced.
    pub semitones: f64,
    pub voiced_frames: usize,
}

impl F0Estimate {
    pub fn is_voiced(&self) -> bool {
        self.voiced_frames > 0
    }
}

pub fn compute_f0_mean(w: &Waveform) -> Result<F0Estimate> {
    if n_voice_frames(w.len()) < 3 {
        return Err(Error::TooShort(format!(
            "F0 analysis needs 3 frames of 40 ms, got {} samples",
            w.len()
        )));
    }
    let voiced: Vec<f64> = pitch_track(w).into_iter().flatten().collect();
    if voiced.is_empty() {
        return Ok(F0Estimate { semitones: 0.0, voiced_frames: 0 });
    }
    let st = voiced
        .iter()
        .map(|f| 12.0 * (f / SEMITONE_BASE_HZ).log2())
        .sum::<f64>()
        / voiced.len() as f64;
    Ok(F0Estimate { semitones: st, voiced_frames: voiced.len() })
}

pub const LPC_ORDER: usize = 18;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const FORMANT_MIN_HZ: f64 = 90.0;
pub const FORMANT_MAX_HZ: f64 = 7900.0;
pub const FORMANT_MAX_BW_HZ: f64 = 400.0;
/// Frames whose residual-to-energy ratio falls below this are line spectra
/// (pure tones) and carry no usable resonance structure.
const MIN_PREDICTION_ERROR: f64 = 1e-6;
// frames whose companion matrix needs more are rejected
const SCHUR_MAX_ITERS: usize = 500;

/// Levinson-Durbin on autocorrelation `r[0..=order]`. Returns the predictor
/// polynomial `[1, a1, …, a_order]` and the final prediction error.
pub fn levinson(r: &[f64], order: usize) -> Option<(Vec<f64>, f64)> {
    if r[0] <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return None;
        }
    }
    Some((a, err))
}

/// Resonances of an all-pole polynomial as (frequency Hz, bandwidth Hz),
/// ascending; `None` when the eigenvalue iteration does not converge.
pub fn lpc_resonances(a: &[f64], fs: f64) -> Option<Vec<(f64, f64)>> {
    let p = a.len() - 1;
    let mut companion = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        companion[(0, j)] = -a[j + 1];
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    let schur = Schur::try_new(companion, f64::EPSILON, SCHUR_MAX_ITERS)?;
    let mut out: Vec<(f64, f64)> = schur
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im > 0.0)
        .map(|z| {
            let f = z.im.atan2(z.re) * fs / (2.0 * std::f64::consts::PI);
            let bw = -(fs / std::f64::consts::PI) * z.norm().ln();
            (f, bw)
        })
        .collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Some(out)
}

/// First four accepted formants of one frame, if the frame yields four.
fn frame_formants(frame: &[f64], win: &[f64], fs: f64) -> Option<[f64; 4]> {
    let xw: Vec<f64> = frame.iter().zip(win).map(|(x, w)| x * w).collect();
    let r: Vec<f64> = (0..=LPC_ORDER)
        .map(|lag| xw.iter().zip(&xw[lag..]).map(|(a, b)| a * b).sum())
        .collect();
    let (a, err) = levinson(&r, LPC_ORDER)?;
    if err / r[0] < MIN_PREDICTION_ERROR {
        return None;
    }
    let accepted: Vec<f64> = lpc_resonances(&a, fs)?
        .into_iter()
        .filter(|&(f, bw)| f > FORMANT_MIN_HZ && f < FORMANT_MAX_HZ && bw < FORMANT_MAX_BW_HZ)
        .map(|(f, _)| f)
        .collect();
    (accepted.len() >= 4).then(|| [accepted[0], accepted[1], accepted[2], accepted[3]])
}

/// Mean F1..F4 in Hz over voiced frames.
pub fn compute_formant_means(w: &Waveform) -> Result<[f64; 4]> {
    let fs = f64::from(w.sample_rate());
    let x = w.samples();
    let mut emphasized = Vec::with_capacity(x.len());
    emphasized.push(x[0]);
    emphasized.extend(x.windows(2).map(|p| p[1] - PRE_EMPHASIS * p[0]));
    let win = window(WindowKind::Hamming, VOICE_FRAME);
    let mut sum = [0.0; 4];
    let mut n = 0usize;
    for (t, f0) in pitch_track(w).into_iter().enumerate() {
        if f0.is_none() {
            continue;
        }
        let frame = &emphasized[t * VOICE_SHIFT..t * VOICE_SHIFT + VOICE_FRAME];
        if let Some(fm) = frame_formants(frame, &win, fs) {
            for (s, f) in sum.iter_mut().zip(fm) {
                *s += f;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Unvoiced("no voiced frame yielded four formants".into()));
    }
    Ok(sum.map(|s| s / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn sine(freq: f64, n: usize) -> Waveform {
        Waveform::from_samples(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16000.0).sin())
                .collect(),
        )
    }

    fn white(n: usize, seed: u64) -> Waveform {
        let mut r = rng::stream(seed, "voice-noise");
        Waveform::from_samples((0..n).map(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect())
    }

    /// Pulse train at `f0` through a cascade of two-pole resonators.
    pub(crate) fn synthetic_vowel(f0: f64, formants: &[(f64, f64)], n: usize) -> Waveform {
        let fs = 16000.0;
        let period = fs / f0;
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                let phase = i as f64 % period;
                if phase < 1.0 { 1.0 } else { 0.0 }
            })
            .collect();
        for &(f, bw) in formants {
            let r = (-PI * bw / fs).exp();
            let c1 = 2.0 * r * (2.0 * PI * f / fs).cos();
            let c2 = -r * r;
            let (mut y1, mut y2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let y = *v + c1 * y1 + c2 * y2;
                y2 = y1;
                y1 = y;
                *v = y;
            }
        }
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Waveform::from_samples(x.iter().map(|v| 0.8 * v / peak).collect())
    }

    #[test]
    fn tone_220_is_36_semitones() {
        let e = compute_f0_mean(&sine(220.0, 16000)).unwrap();
        assert!((e.semitones - 36.0).abs() <= 0.3, "{e:?}");
        let low = compute_f0_mean(&sine(110.0, 16000)).unwrap();
        assert!((e.semitones - low.semitones - 12.0).abs() <= 0.3, "{low:?}");
    }

    #[test]
    fn white_noise_is_unvoiced() {
        let e = compute_f0_mean(&white(32000, 1)).unwrap();
        assert!(!e.is_voiced());
        assert_eq!(e.semitones, 0.0);
    }

    #[test]
    fn too_short_for_three_frames() {
        assert!(matches!(compute_f0_mean(&sine(220.0, 900)), Err(Error::TooShort(_))));
    }

    #[test]
    fn levinson_recovers_ar2() {
        // x[n] = 1.2 x[n-1] - 0.5 x[n-2] + e: theoretical autocorrelation via Yule-Walker
        let (a1, a2) = (1.2, -0.5);
        let rho1 = a1 / (1.0 - a2);
        let rho2 = a1 * rho1 + a2;
        let (a, _) = levinson(&[1.0, rho1, rho2], 2).unwrap();
        assert!((a[1] + a1).abs() < 1e-12 && (a[2] + a2).abs() < 1e-12);
    }

    #[test]
    fn vowel_formants_recovered() {
        let targets = [(700.0, 60.0), (1220.0, 80.0), (2600.0, 120.0), (3400.0, 150.0)];
        let w = synthetic_vowel(120.0, &targets, 32000);
        let fm = compute_formant_means(&w).unwrap();
        for (got, (want, _)) in fm.iter().zip(targets) {
            assert!((got - want).abs() <= 60.0, "{fm:?}");
        }
        assert!(fm.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn pure_tone_has_no_formants() {
        assert!(matches!(compute_formant_means(&sine(220.0, 16000)), Err(Error::Unvoiced(_))));
        assert!(matches!(compute_formant_means(&white(16000, 2)), Err(Error::Unvoiced(_))));
    }
}
