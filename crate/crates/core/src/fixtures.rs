//! Synthetic corpora standing in for real anti-spoofing databases.
//!
//! Each corpus has its own channel (a cascade of peaking biquads), noise level,
//! speaker pitch range and spoofing transform. Bonafide speech is a
//! vowel-filtered harmonic source with a syllabic envelope plus white noise,
//! coloured by the channel. Spoofed speech is the same kind of signal passed
//! additionally through a spectral tilt and a soft band limit.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_manifest, CorpusManifest, Label, Split, UtteranceRecord};
use crate::dsp::{write_wav, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::quality::{VectorStore, XVECTOR_DIM};
use crate::rng;

const FS: f64 = SAMPLE_RATE as f64;
const PEAK: f64 = 0.9;

/// Direct-form biquad, `a[0]` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Peaking equaliser section (audio EQ cookbook form).
    pub fn peaking(f0: f64, gain_db: f64, q: f64) -> Self {
        let amp = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * f0 / FS;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha / amp;
        Biquad {
            b: [(1.0 + alpha * amp) / a0, -2.0 * w0.cos() / a0, (1.0 - alpha * amp) / a0],
            a: [1.0, -2.0 * w0.cos() / a0, (1.0 - alpha / amp) / a0],
        }
    }

    /// Two-pole resonator with unit gain at DC.
    pub fn resonator(f: f64, bw: f64) -> Self {
        let r = (-PI * bw / FS).exp();
        let a1 = -2.0 * r * (2.0 * PI * f / FS).cos();
        let a2 = r * r;
        Biquad { b: [1.0 + a1 + a2, 0.0, 0.0], a: [1.0, a1, a2] }
    }

    pub fn apply(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[1] * y1 - self.a[2] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }

    /// Magnitude response in dB at `f` Hz.
    pub fn response_db(&self, f: f64) -> f64 {
        let z = Complex::from_polar(1.0, -2.0 * PI * f / FS);
        let num = self.b[0] + z * self.b[1] + z * z * self.b[2];
        let den = self.a[0] + z * self.a[1] + z * z * self.a[2];
        20.0 * (num.norm() / den.norm()).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpoofTransform {
    /// Attenuation per octave above 1 kHz (and boost below).
    pub tilt_db_per_octave: f64,
    /// Centre of the soft band limit.
    pub cutoff_hz: f64,
    /// Attenuation reached well above the cutoff.
    pub depth_db: f64,
    /// Relative per-utterance spread of tilt and cutoff.
    pub jitter: f64,
}

impl SpoofTransform {
    pub fn gain_db(&self, f: f64, tilt: f64, cutoff: f64) -> f64 {
        let octaves = (f.clamp(100.0, FS / 2.0) / 1000.0).log2();
        let band = 1.0 / (1.0 + (-(f - cutoff) / 250.0).exp());
        -tilt * octaves - self.depth_db * band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub corpus_id: String,
    pub n_speakers: usize,
    /// The first this many speakers get `split=train`, the rest `split=eval`.
    pub n_train_speakers: usize,
    pub n_bona_per_spk: usize,
    pub n_spoof_per_spk: usize,
    pub duration_s: f64,
    pub coloration: Vec<Biquad>,
    /// Mean speech-to-noise ratio before the channel.
    pub snr_db: f64,
    /// Per-utterance standard deviation around `snr_db`.
    pub snr_spread_db: f64,
    pub f0_base_hz: f64,
    pub spoof: SpoofTransform,
    pub seed: u64,
}

impl SyntheticCorpusSpec {
    pub fn n_utterances(&self) -> usize {
        self.n_speakers * (self.n_bona_per_spk + self.n_spoof_per_spk)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("fixture {}: {m}", self.corpus_id)));
        if self.corpus_id.is_empty() || self.corpus_id.contains([',', '/', ' ']) {
            return bad("corpus_id must be non-empty without commas, slashes or spaces");
        }
        if self.n_train_speakers == 0 || self.n_train_speakers >= self.n_speakers {
            return bad("need at least one train and one eval speaker");
        }
        if self.n_bona_per_spk == 0 || self.n_spoof_per_spk == 0 {
            return bad("need both classes per speaker");
        }
        if !(0.5..=30.0).contains(&self.duration_s) {
            return bad("duration must be within 0.5..30 s");
        }
        if !(50.0..=400.0).contains(&self.f0_base_hz) {
            return bad("f0 base must be within 50..400 Hz");
        }
        Ok(())
    }
}

/// Channel, noise and spoofing settings of the built-in corpora:
/// (peaking sections (Hz, dB, Q), SNR dB, F0 base, tilt dB/oct, cutoff Hz, depth dB).
#[allow(clippy::type_complexity)]
const PRESETS: [(&[(f64, f64, f64)], f64, f64, f64, f64, f64); 7] = [
    (&[(300.0, 8.0, 1.0), (3000.0, -8.0, 1.0)], 30.0, 120.0, 1.2, 6000.0, 12.0),
    (&[(800.0, -8.0, 0.8), (5000.0, 9.0, 1.0)], 18.0, 190.0, 0.3, 7200.0, 3.0),
    (&[(1500.0, 9.0, 0.7)], 25.0, 140.0, 1.6, 5200.0, 10.0),
    (&[(200.0, -9.0, 0.7), (2500.0, 8.0, 1.2)], 12.0, 210.0, 0.5, 7000.0, 4.0),
    (&[(4000.0, -10.0, 0.8)], 35.0, 105.0, 2.0, 5800.0, 14.0),
    (&[(600.0, 8.0, 1.5), (6000.0, -12.0, 0.7)], 8.0, 160.0, 0.4, 6800.0, 3.0),
    (&[(1000.0, -7.0, 0.5), (3500.0, 8.0, 0.5)], 22.0, 230.0, 0.8, 4800.0, 6.0),
];

/// `m` corpora named `c1`..`cm`, 4 speakers × (3 bonafide + 6 spoof) of 2 s
/// each. The first seven use fixed presets; further ones are drawn from `seed`.
pub fn default_fixture_specs(m: usize, seed: u64) -> Vec<SyntheticCorpusSpec> {
    (0..m)
        .map(|i| {
            let corpus_id = format!("c{}", i + 1);
            let (coloration, snr_db, f0, tilt, cutoff, depth) = match PRESETS.get(i) {
                Some(&(peaks, snr, f0, tilt, cutoff, depth)) => (
                    peaks.iter().map(|&(f, g, q)| Biquad::peaking(f, g, q)).collect(),
                    snr,
                    f0,
                    tilt,
                    cutoff,
                    depth,
                ),
                None => {
                    let mut r = rng::stream(seed, &format!("fixture-spec/{corpus_id}"));
                    let peaks = (0..2)
                        .map(|_| {
                            let f = 200.0 * 30f64.powf(r.random::<f64>());
                            let g = if r.random::<bool>() { 1.0 } else { -1.0 } * r.random_range(6.0..11.0);
                            Biquad::peaking(f, g, r.random_range(0.5..1.5))
                        })
                        .collect();
                    (
                        peaks,
                        r.random_range(8.0..35.0),
                        r.random_range(100.0..240.0),
                        r.random_range(0.6..2.0),
                        r.random_range(4800.0..7000.0),
                        r.random_range(8.0..14.0),
                    )
                }
            };
            SyntheticCorpusSpec {
                seed: rng::derive_seed(seed, &format!("fixture/{corpus_id}")),
                corpus_id,
                n_speakers: 4,
                n_train_speakers: 2,
                n_bona_per_spk: 3,
                n_spoof_per_spk: 6,
                duration_s: 2.0,
                coloration,
                snr_db,
                snr_spread_db: 3.0,
                f0_base_hz: f0,
                spoof: SpoofTransform { tilt_db_per_octave: tilt, cutoff_hz: cutoff, depth_db: depth, jitter: 0.3 },
            }
        })
        .collect()
}

fn gauss(r: &mut rng::StreamRng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, r)
}

/// Vowel formant targets (Hz) scaled per speaker.
const VOWELS: [[f64; 4]; 5] = [
    [730.0, 1090.0, 2440.0, 3400.0],
    [270.0, 2290.0, 3010.0, 3600.0],
    [530.0, 1840.0, 2480.0, 3500.0],
    [570.0, 840.0, 2410.0, 3300.0],
    [440.0, 1020.0, 2240.0, 3300.0],
];

struct Speaker {
    f0: f64,
    formant_scale: f64,
}

fn speaker(spec: &SyntheticCorpusSpec, spk: usize) -> Speaker {
    let mut r = rng::stream(spec.seed, &format!("speaker/{spk}"));
    Speaker {
        f0: spec.f0_base_hz * 2f64.powf(r.random_range(-3.0..3.0) / 12.0),
        formant_scale: r.random_range(0.9..1.12),
    }
}

/// Clean speech-like signal: harmonic source, vowel resonances, syllabic envelope.
fn speech(spk: &Speaker, n: usize, r: &mut rng::StreamRng) -> Vec<f64> {
    let vibrato_hz = r.random_range(0.5..1.5);
    let vibrato_phase = r.random_range(0.0..2.0 * PI);
    let f0 = spk.f0 * 2f64.powf(r.random_range(-1.0..1.0) / 12.0);
    let mut phase = 0.0;
    let mut x = vec![0.0; n];
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / FS;
        let f = f0 * (1.0 + 0.04 * (2.0 * PI * vibrato_hz * t + vibrato_phase).sin());
        phase += 2.0 * PI * f / FS;
        let mut s = 0.0;
        let mut k = 1.0;
        while k * f < 7600.0 {
            s += (k * phase).sin() / k;
            k += 1.0;
        }
        *v = s;
    }
    let vowel = VOWELS[r.random_range(0..VOWELS.len())];
    for (j, f) in vowel.iter().enumerate() {
        Biquad::resonator(f * spk.formant_scale, 60.0 + 40.0 * j as f64).apply(&mut x);
    }
    let rate = r.random_range(2.5..4.5);
    let env_phase = r.random_range(0.0..2.0 * PI);
    for (i, v) in x.iter_mut().enumerate() {
        let c = 0.5 - 0.5 * (2.0 * PI * rate * i as f64 / FS + env_phase).cos();
        *v *= c * c;
    }
    x
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Applies a real, zero-phase gain curve (dB as a function of Hz) through one FFT.
fn apply_gain_curve(x: &mut [f64], gain_db: impl Fn(f64) -> f64) {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * FS / n as f64;
        *c *= 10f64.powf(gain_db(f) / 20.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    for (v, c) in x.iter_mut().zip(&buf) {
        *v = c.re / n as f64;
    }
}

/// One utterance of `spec`; deterministic in (spec, speaker, label, index).
pub fn synthesize(spec: &SyntheticCorpusSpec, spk: usize, label: Label, idx: usize) -> Waveform {
    let n = (spec.duration_s * FS).round() as usize;
    let mut r = rng::stream(spec.seed, &format!("utt/{spk}/{label}/{idx}"));
    let mut x = speech(&speaker(spec, spk), n, &mut r);
    let snr = spec.snr_db + spec.snr_spread_db * gauss(&mut r);
    let noise_sd = (power(&x) / 10f64.powf(snr / 10.0)).sqrt();
    for v in x.iter_mut() {
        *v += noise_sd * gauss(&mut r);
    }
    for section in &spec.coloration {
        section.apply(&mut x);
    }
    if label == Label::Spoof {
        let t = &spec.spoof;
        let tilt = t.tilt_db_per_octave * (1.0 + t.jitter * r.random_range(-1.0..1.0));
        let cutoff = t.cutoff_hz * (1.0 + 0.3 * t.jitter * r.random_range(-1.0..1.0));
        apply_gain_curve(&mut x, |f| t.gain_db(f, tilt, cutoff));
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { PEAK / peak } else { 1.0 };
    Waveform::from_samples(x.into_iter().map(|v| v * gain).collect())
}

/// Synthetic x-vector: speaker and corpus directions, a spoof offset and noise.
fn synthetic_xvector(spec: &SyntheticCorpusSpec, spk: usize, label: Label, idx: usize) -> Vec<f64> {
    let dir = |label: &str| -> Vec<f64> {
        let mut r = rng::stream(spec.seed, label);
        (0..XVECTOR_DIM).map(|_| gauss(&mut r) / (XVECTOR_DIM as f64).sqrt()).collect()
    };
    let s = dir(&format!("xvec/speaker/{spk}"));
    let c = dir("xvec/corpus");
    let sp = dir("xvec/spoof");
    let mut r = rng::stream(spec.seed, &format!("xvec/utt/{spk}/{label}/{idx}"));
    let spoof_w = if label == Label::Spoof { 0.5 } else { 0.0 };
    (0..XVECTOR_DIM)
        .map(|d| 3.0 * (s[d] + 0.8 * c[d] + spoof_w * sp[d] + 0.3 * gauss(&mut r) / (XVECTOR_DIM as f64).sqrt()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub root: PathBuf,
    pub manifests: Vec<PathBuf>,
    pub xvectors: PathBuf,
    /// A ready-to-run pipeline configuration referencing the manifests.
    pub config: PathBuf,
}

/// Writes `<root>/<corpus_id>/manifest.csv` with PCM16 audio under `wav/`,
/// `<root>/xvectors.txt`, `<root>/fixtures.json` and `<root>/pipeline.toml`.
pub fn generate_fixture_corpora(specs: &[SyntheticCorpusSpec], root: &Path) -> Result<FixtureSet> {
    use rayon::prelude::*;

    let mut ids = std::collections::BTreeSet::new();
    for s in specs {
        s.validate()?;
        if !ids.insert(&s.corpus_id) {
            return Err(Error::Config(format!("duplicate fixture corpus_id {}", s.corpus_id)));
        }
    }
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(root)?;
    let mut xvectors = VectorStore::new(XVECTOR_DIM);
    let mut manifests = Vec::new();
    for spec in specs {
        let dir = root.join(&spec.corpus_id);
        mkdir(&dir.join("wav"))?;
        let mut jobs = Vec::new();
        for spk in 0..spec.n_speakers {
            for (label, count) in [(Label::Bonafide, spec.n_bona_per_spk), (Label::Spoof, spec.n_spoof_per_spk)] {
                for idx in 0..count {
                    jobs.push((spk, label, idx));
                }
            }
        }
        let records = jobs
            .par_iter()
            .map(|&(spk, label, idx)| {
                let tag = if label == Label::Bonafide { 'b' } else { 's' };
                let utt_id = format!("{}_s{}_{tag}{idx:02}", spec.corpus_id, spk + 1);
                let rel = PathBuf::from("wav").join(format!("{utt_id}.wav"));
                write_wav(&dir.join(&rel), &synthesize(spec, spk, label, idx))?;
                Ok(UtteranceRecord {
                    corpus_id: spec.corpus_id.clone(),
                    utt_id,
                    speaker_id: format!("{}_s{}", spec.corpus_id, spk + 1),
                    label,
                    split: if spk < spec.n_train_speakers { Split::Train } else { Split::Eval },
                    audio_path: rel,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (r, &(spk, label, idx)) in records.iter().zip(&jobs) {
            xvectors.insert(r.utt_id.clone(), synthetic_xvector(spec, spk, label, idx))?;
        }
        let manifest = CorpusManifest::new(records, &dir)?;
        let path = dir.join("manifest.csv");
        write_manifest(&path, &manifest)?;
        manifests.push(path);
    }
    let xvec_path = root.join("xvectors.txt");
    xvectors.save(&xvec_path)?;
    let spec_path = root.join("fixtures.json");
    let json = serde_json::to_string_pretty(specs).expect("fixture specs serialize");
    std::fs::write(&spec_path, json).map_err(|e| Error::io(&spec_path, e))?;

    let config = root.join("pipeline.toml");
    let mut text = String::from("manifests = [\n");
    for s in specs {
        text.push_str(&format!("  \"{}/manifest.csv\",\n", s.corpus_id));
    }
    text.push_str("]\nxvectors = \"xvectors.txt\"\n");
    std::fs::write(&config, text).map_err(|e| Error::io(&config, e))?;
    Ok(FixtureSet { root: root.to_path_buf(), manifests, xvectors: xvec_path, config })
}
