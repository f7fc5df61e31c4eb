//! Constant-Q cepstral coefficients.
//!
//! Each CQT bin `k` is the inner product of the signal with a Hann-windowed
//! complex exponential of length `N_k = round(Q fs / f_k)`, centred on the
//! frame. The inner products are evaluated in the DFT domain: the kernel
//! spectrum has a closed form, only its main lobe and first sidelobes (±12
//! window bins, cosine-tapered over the last 4) are kept, and the products
//! are folded modulo `L / hop` so that a short inverse FFT yields the bin's
//! value at every frame centre at once.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

use super::{dct2_ortho, FeatureKind, FeatureMatrix};

pub const BINS_PER_OCTAVE: usize = 96;
pub const N_OCTAVES: usize = 9;
pub const N_BINS: usize = BINS_PER_OCTAVE * N_OCTAVES;
pub const F_MAX: f64 = 8000.0;
pub const N_LINEAR: usize = 1024;
pub const N_CEPS: usize = 30;
/// Frame centres every 10 ms, aligned with the 20 ms LFCC frames.
pub const HOP: usize = 160;
const FRAME_SPAN: usize = 320;
const MIN_SAMPLES: usize = 8000;
const SUPPORT: f64 = 12.0;
const TAPER_START: f64 = 8.0;
/// Log floor relative to the utterance's peak CQT power (100 dB below it),
/// so rounding noise in empty bins never reaches the cepstrum.
const DYNAMIC_RANGE: f64 = 1e-10;
const ABSOLUTE_FLOOR: f64 = 1e-30;

pub fn f_min() -> f64 {
    F_MAX / (1u64 << N_OCTAVES) as f64
}

pub fn q_factor() -> f64 {
    1.0 / (2f64.powf(1.0 / BINS_PER_OCTAVE as f64) - 1.0)
}

pub fn bin_frequency(k: usize) -> f64 {
    f_min() * 2f64.powf(k as f64 / BINS_PER_OCTAVE as f64)
}

pub fn n_frames(len: usize) -> usize {
    if len < FRAME_SPAN {
        0
    } else {
        1 + (len - FRAME_SPAN) / HOP
    }
}

/// `Σ_{n<N} e^{-jφn}`.
fn dirichlet(phi: f64, n: usize) -> Complex<f64> {
    let half = 0.5 * phi;
    let s = half.sin();
    let mag = if s.abs() < 1e-12 {
        // φ at a multiple of 2π
        n as f64 * (half * n as f64).cos() / half.cos()
    } else {
        (half * n as f64).sin() / s
    };
    Complex::from_polar(mag, -half * (n as f64 - 1.0))
}

/// DTFT of the centred, 1/N-normalized Hann kernel at offset `phi = θ - ω_k`.
fn kernel_spectrum(phi: f64, n: usize) -> Complex<f64> {
    let step = 2.0 * PI / n as f64;
    let s = dirichlet(phi, n) * 0.5 - (dirichlet(phi - step, n) + dirichlet(phi + step, n)) * 0.25;
    let centre = (n / 2) as f64;
    Complex::from_polar(1.0 / n as f64, phi * centre) * s
}

struct BinKernel {
    /// log2 of the decimation from the master DFT grid to this bin's grid.
    shift: u32,
    first: usize,
    weights: Vec<Complex<f64>>,
}

/// Precomputed kernels and FFTs for one signal length.
pub struct CqtPlan {
    len: usize,
    master_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
    bins: Vec<BinKernel>,
}

fn grid_len(min_len: usize) -> usize {
    let mut l = HOP;
    while l < min_len {
        l *= 2;
    }
    l
}

impl CqtPlan {
    pub fn new(len: usize) -> Self {
        let fs = f64::from(crate::dsp::SAMPLE_RATE);
        let q = q_factor();
        let lens: Vec<usize> = (0..N_BINS).map(|k| (q * fs / bin_frequency(k)).round() as usize).collect();
        let master_len = grid_len(len + lens[0]);
        let mut planner = FftPlanner::new();
        let mut inverse = HashMap::new();
        let bins = (0..N_BINS)
            .map(|k| {
                let n = lens[k];
                let l = grid_len(len + n);
                let shift = (master_len / l).trailing_zeros();
                inverse
                    .entry(l / HOP)
                    .or_insert_with(|| planner.plan_fft_inverse(l / HOP));
                let per_bin = l as f64 / n as f64;
                let centre = bin_frequency(k) * l as f64 / fs;
                let first = (centre - SUPPORT * per_bin).ceil().max(0.0) as usize;
                let last = ((centre + SUPPORT * per_bin).floor() as usize).min(l - 1);
                let omega = 2.0 * PI * bin_frequency(k) / fs;
                let weights = (first..=last)
                    .map(|nu| {
                        let d = (nu as f64 - centre).abs() / per_bin;
                        let taper = if d <= TAPER_START {
                            1.0
                        } else {
                            0.5 * (1.0 + (PI * (d - TAPER_START) / (SUPPORT - TAPER_START)).cos())
                        };
                        let phi = 2.0 * PI * nu as f64 / l as f64 - omega;
                        kernel_spectrum(phi, n).conj() * (taper / l as f64)
                    })
                    .collect();
                BinKernel { shift, first, weights }
            })
            .collect();
        Self { len, master_len, forward: planner.plan_fft_forward(master_len), inverse, bins }
    }

    /// For a shared plan across utterances of equal length.
    pub fn cached(len: usize) -> Arc<CqtPlan> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<CqtPlan>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(p) = cache.lock().expect("plan cache poisoned").get(&len) {
            return Arc::clone(p);
        }
        let plan = Arc::new(CqtPlan::new(len));
        let mut guard = cache.lock().expect("plan cache poisoned");
        if guard.len() >= 8 {
            guard.clear();
        }
        Arc::clone(guard.entry(len).or_insert(plan))
    }

    /// Complex CQT, row-major `[n_frames × N_BINS]`.
    pub fn transform(&self, x: &[f64]) -> Vec<Complex<f64>> {
        assert_eq!(x.len(), self.len, "plan built for another length");
        let frames = n_frames(x.len());
        let mut spec: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        spec.resize(self.master_len, Complex::new(0.0, 0.0));
        self.forward.process(&mut spec);
        let mut out = vec![Complex::new(0.0, 0.0); frames * N_BINS];
        for (k, bin) in self.bins.iter().enumerate() {
            let m = (self.master_len >> bin.shift) / HOP;
            let mut fold = vec![Complex::new(0.0, 0.0); m];
            for (i, w) in bin.weights.iter().enumerate() {
                let nu = bin.first + i;
                fold[nu % m] += spec[nu << bin.shift] * w;
            }
            self.inverse[&m].process(&mut fold);
            for t in 0..frames {
                out[t * N_BINS + k] = fold[t + 1];
            }
        }
        out
    }
}

/// Log-power CQT, row-major `[n_frames × N_BINS]`.
pub fn cqt_log_power(w: &Waveform) -> Result<Vec<f64>> {
    if w.len() < MIN_SAMPLES {
        return Err(Error::TooShort(format!("CQCC needs >= 0.5 s, got {} samples", w.len())));
    }
    let plan = CqtPlan::cached(w.len());
    let power: Vec<f64> = plan.transform(w.samples()).iter().map(|c| c.norm_sqr()).collect();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    let floor = (peak * DYNAMIC_RANGE).max(ABSOLUTE_FLOOR);
    Ok(power.iter().map(|p| (p + floor).ln()).collect())
}

/// Linear-interpolation positions mapping the geometric bin axis onto
/// `N_LINEAR` equally spaced frequencies between the first and last bin.
fn linear_grid() -> &'static [(usize, f64)] {
    static GRID: OnceLock<Vec<(usize, f64)>> = OnceLock::new();
    GRID.get_or_init(|| {
        let (lo, hi) = (bin_frequency(0), bin_frequency(N_BINS - 1));
        (0..N_LINEAR)
            .map(|i| {
                let f = lo + (hi - lo) * i as f64 / (N_LINEAR - 1) as f64;
                let pos = BINS_PER_OCTAVE as f64 * (f / lo).log2();
                let k = (pos.floor() as usize).min(N_BINS - 2);
                let (fa, fb) = (bin_frequency(k), bin_frequency(k + 1));
                (k, ((f - fa) / (fb - fa)).clamp(0.0, 1.0))
            })
            .collect()
    })
}

/// Static coefficients, row-major `[n_frames × N_CEPS]`.
pub fn cqcc_static(w: &Waveform) -> Result<Vec<f64>> {
    let logp = cqt_log_power(w)?;
    let grid = linear_grid();
    let mut out = Vec::with_capacity(logp.len() / N_BINS * N_CEPS);
    for frame in logp.chunks_exact(N_BINS) {
        let lin: Vec<f64> = grid
            .iter()
            .map(|&(k, a)| frame[k] * (1.0 - a) + frame[k + 1] * a)
            .collect();
        out.extend(dct2_ortho(&lin, N_CEPS));
    }
    Ok(out)
}

/// 30 static CQCCs plus Δ and ΔΔ, 90 per frame.
pub fn compute_cqcc(utt_id: &str, w: &Waveform) -> Result<FeatureMatrix> {
    super::extract(FeatureKind::Cqcc, utt_id, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn tone(freq: f64, n: usize) -> Waveform {
        Waveform::from_samples(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16000.0).sin())
                .collect(),
        )
    }

    fn white(n: usize, seed: u64) -> Waveform {
        let mut r = rng::stream(seed, "cqcc");
        Waveform::from_samples(
            (0..n)
                .map(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut r))
                .collect(),
        )
    }

    /// Direct time-domain inner product for one bin and frame.
    fn direct(x: &[f64], k: usize, frame: usize) -> Complex<f64> {
        let fs = 16000.0;
        let n = (q_factor() * fs / bin_frequency(k)).round() as usize;
        let centre = (frame + 1) * HOP;
        let omega = 2.0 * PI * bin_frequency(k) / fs;
        let mut acc = Complex::new(0.0, 0.0);
        for i in 0..n {
            let s = centre as i64 + i as i64 - (n / 2) as i64;
            if s < 0 || s as usize >= x.len() {
                continue;
            }
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
            let m = i as f64 - (n / 2) as f64;
            acc += Complex::from_polar(w / n as f64, -omega * m) * x[s as usize];
        }
        acc
    }

    #[test]
    fn geometry() {
        assert_eq!(f_min(), 15.625);
        assert!((bin_frequency(576) - 1000.0).abs() < 1e-9);
        assert!((bin_frequency(672) - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn matches_direct_inner_products() {
        let w = white(16_000, 5);
        let plan = CqtPlan::new(w.len());
        let cqt = plan.transform(w.samples());
        for &k in &[0usize, 100, 300, 576, 700, 863] {
            for &t in &[0usize, 40, 97] {
                let d = direct(w.samples(), k, t);
                let f = cqt[t * N_BINS + k];
                // truncated sidelobes of the kernel spectrum bound the error
                assert!((d - f).norm() <= 5e-3 * d.norm(), "bin {k} frame {t}: {d} vs {f}");
            }
        }
    }

    #[test]
    fn octave_shift_is_96_bins() {
        let peak = |f: f64| {
            let lp = cqt_log_power(&tone(f, 16_000)).unwrap();
            let row = &lp[50 * N_BINS..51 * N_BINS];
            (0..N_BINS).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
        };
        let (a, b) = (peak(1000.0), peak(2000.0));
        assert_eq!(a, 576);
        assert_eq!(b, 672);
    }

    #[test]
    fn output_is_90_dim() {
        let m = compute_cqcc("u", &white(8_000, 6)).unwrap();
        assert_eq!(m.dim(), 90);
        assert_eq!(m.n_frames(), n_frames(8_000));
    }

    #[test]
    fn gain_shifts_only_c0() {
        let w = white(12_000, 7);
        let a = compute_cqcc("u", &w).unwrap();
        let b = compute_cqcc("u", &w.scaled(0.25)).unwrap();
        for (ra, rb) in a.rows().zip(b.rows()) {
            for k in 1..90 {
                assert!((ra[k] - rb[k]).abs() < 1e-6, "coef {k}: {} {}", ra[k], rb[k]);
            }
        }
    }

    #[test]
    fn stationary_tone_has_flat_deltas() {
        // 12 s so that interior frames see the tone across the longest (8.8 s) kernel
        let m = compute_cqcc("u", &tone(1000.0, 192_000)).unwrap();
        let interior = 460..740;
        let scale = interior
            .clone()
            .flat_map(|t| m.row(t)[..30].to_vec())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let worst = interior
            .clone()
            .flat_map(|t| m.row(t)[30..].to_vec())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst < 1e-6 * scale, "max |delta| {worst} vs static scale {scale}");
    }

    #[test]
    #[ignore]
    fn timing() {
        let w = white(32_000, 9);
        let t0 = std::time::Instant::now();
        compute_cqcc("u", &w).unwrap();
        let t1 = std::time::Instant::now();
        compute_cqcc("u", &w).unwrap();
        eprintln!("TIMING first {:?} second {:?}", t1 - t0, t1.elapsed());
    }

    #[test]
    fn too_short() {
        assert!(matches!(compute_cqcc("u", &white(7_999, 8)), Err(Error::TooShort(_))));
    }
}
