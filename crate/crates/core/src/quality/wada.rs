//! Waveform-amplitude-distribution SNR.
//!
//! Clean speech amplitudes are modelled as Gamma(shape 0.4), additive noise as
//! Gaussian. The statistic `β = ln(mean|x|) − mean(ln|x|)` is scale-free and
//! rises monotonically from the Gaussian value (≈0.409) to the Gamma(0.4)
//! value (≈1.645) as SNR grows, so a β→SNR lookup table inverts it.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::rng;

pub const GAMMA_SHAPE: f64 = 0.4;
pub const SNR_MIN_DB: f64 = -20.0;
pub const SNR_MAX_DB: f64 = 100.0;
const AMPLITUDE_FLOOR: f64 = 1e-10;
const MONOTONE_STEP: f64 = 1e-9;
const MIN_DURATION_S: f64 = 0.5;

const BUILTIN_TABLE: &str = include_str!("../../data/wada_gamma04_v1.tsv");

/// Monotone β↔SNR table on a 1 dB grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WadaTable {
    pub snr_db: Vec<f64>,
    pub beta: Vec<f64>,
    pub header: String,
}

impl WadaTable {
    /// The versioned table shipped with the crate.
    pub fn builtin() -> &'static WadaTable {
        static TABLE: OnceLock<WadaTable> = OnceLock::new();
        TABLE.get_or_init(|| WadaTable::parse(BUILTIN_TABLE).expect("builtin WADA table parses"))
    }

    /// Monte Carlo table: `samples` Gamma/Gaussian pairs shared by every grid
    /// point (common random numbers keep the curve smooth).
    pub fn generate(samples: usize, seed: u64) -> WadaTable {
        let grid: Vec<f64> = (0..=((SNR_MAX_DB - SNR_MIN_DB) as usize))
            .map(|i| SNR_MIN_DB + i as f64)
            .collect();
        let speech_power = GAMMA_SHAPE * (GAMMA_SHAPE + 1.0);
        let noise_gain: Vec<f64> = grid
            .iter()
            .map(|snr| (speech_power / 10f64.powf(snr / 10.0)).sqrt())
            .collect();
        let mut sum_abs = vec![0.0; grid.len()];
        let mut sum_log = vec![0.0; grid.len()];
        let mut rng = rng::stream(seed, "wada-table");
        let gamma = Gamma::new(GAMMA_SHAPE, 1.0).expect("valid gamma");
        for _ in 0..samples {
            let mag: f64 = gamma.sample(&mut rng);
            let s = if rng.random::<bool>() { mag } else { -mag };
            let n: f64 = StandardNormal.sample(&mut rng);
            for (j, g) in noise_gain.iter().enumerate() {
                let a = (s + g * n).abs().max(AMPLITUDE_FLOOR);
                sum_abs[j] += a;
                sum_log[j] += a.ln();
            }
        }
        let n = samples as f64;
        let mut beta: Vec<f64> = sum_abs
            .iter()
            .zip(&sum_log)
            .map(|(a, l)| (a / n).ln() - l / n)
            .collect();
        // The curve is nearly flat below about -10 dB, where Monte Carlo noise
        // can invert neighbours; repair with a strictly increasing running max.
        for i in 1..beta.len() {
            beta[i] = beta[i].max(beta[i - 1] + MONOTONE_STEP);
        }
        WadaTable {
            snr_db: grid,
            beta,
            header: format!("wada-gamma0.4 v1 samples={samples} seed={seed}"),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# {}\nsnr_db\tbeta\n", self.header);
        for (s, b) in self.snr_db.iter().zip(&self.beta) {
            out.push_str(&format!("{s}\t{b}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<WadaTable> {
        let mut header = String::new();
        let mut snr_db = Vec::new();
        let mut beta = Vec::new();
        for line in text.lines() {
            if let Some(h) = line.strip_prefix("# ") {
                header = h.to_string();
                continue;
            }
            if line.starts_with("snr_db") || line.trim().is_empty() {
                continue;
            }
            let mut it = line.split('\t');
            let parse = |v: Option<&str>| -> Result<f64> {
                v.and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad WADA table line {line:?}")))
            };
            snr_db.push(parse(it.next())?);
            beta.push(parse(it.next())?);
        }
        let table = WadaTable { snr_db, beta, header };
        table.check_monotone()?;
        Ok(table)
    }

    pub fn check_monotone(&self) -> Result<()> {
        if self.beta.len() < 2 || self.beta.len() != self.snr_db.len() {
            return Err(Error::Format("WADA table needs at least two points".into()));
        }
        if self.beta.windows(2).any(|w| w[1] <= w[0]) || self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("WADA table must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Linear interpolation of SNR at `beta`, clamped to the table range.
    pub fn snr_for_beta(&self, beta: f64) -> f64 {
        let last = self.beta.len() - 1;
        if beta <= self.beta[0] {
            return self.snr_db[0];
        }
        if beta >= self.beta[last] {
            return self.snr_db[last];
        }
        let hi = self.beta.partition_point(|&b| b < beta);
        let lo = hi - 1;
        let t = (beta - self.beta[lo]) / (self.beta[hi] - self.beta[lo]);
        self.snr_db[lo] + t * (self.snr_db[hi] - self.snr_db[lo])
    }
}

/// `ln(mean|x|) − mean(ln|x|)` after DC removal and peak normalization.
pub fn amplitude_statistic(x: &[f64]) -> Result<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let peak = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Degenerate("all-zero (or constant) signal".into()));
    }
    let mut sum_abs = 0.0;
    let mut sum_log = 0.0;
    for v in x {
        let a = ((v - mean) / peak).abs().max(AMPLITUDE_FLOOR);
        sum_abs += a;
        sum_log += a.ln();
    }
    let n = x.len() as f64;
    Ok((sum_abs / n).ln() - sum_log / n)
}

pub fn estimate_snr_wada(w: &Waveform) -> Result<f64> {
    estimate_snr_wada_with(w, WadaTable::builtin())
}

pub fn estimate_snr_wada_with(w: &Waveform, table: &WadaTable) -> Result<f64> {
    if w.duration_s() < MIN_DURATION_S {
        return Err(Error::TooShort(format!(
            "WADA SNR needs >= {MIN_DURATION_S} s, got {:.3} s",
            w.duration_s()
        )));
    }
    let beta = amplitude_statistic(w.samples())?;
    Ok(table.snr_for_beta(beta).clamp(SNR_MIN_DB, SNR_MAX_DB))
}

/// Test-signal generator: Gamma(0.4) "speech" plus Gaussian noise at `snr_db`
/// (`None` for clean). Speech is scaled to unit power.
pub fn synth_gamma_mixture(n: usize, snr_db: Option<f64>, seed: u64) -> Waveform {
    let mut rng = rng::stream(seed, "wada-synth");
    let gamma = Gamma::new(GAMMA_SHAPE, 1.0).expect("valid gamma");
    let norm = (GAMMA_SHAPE * (GAMMA_SHAPE + 1.0)).sqrt();
    let noise_sd = snr_db.map(|s| 10f64.powf(-s / 20.0));
    let samples = (0..n)
        .map(|_| {
            let mag: f64 = gamma.sample(&mut rng);
            let s = if rng.random::<bool>() { mag } else { -mag } / norm;
            let n: f64 = StandardNormal.sample(&mut rng);
            s + noise_sd.map_or(0.0, |sd| sd * n)
        })
        .collect();
    Waveform::from_samples(samples)
}
