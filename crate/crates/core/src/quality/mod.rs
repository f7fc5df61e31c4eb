//! Per-utterance quality measurements: LTAS, WADA SNR, noise spectrum,
//! x-vector, mean F0, mean formants and mean loudness.
//!
//! Each measurement is a point in its own space; the distance engine later
//! compares clouds of these points between training and test partitions.

pub mod loudness;
pub mod spectral;
pub mod voice;
pub mod wada;
pub mod xvector;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::UtteranceRecord;
use crate::dsp::{read_wav, stft_power, StftConfig, Waveform};
use crate::error::{Error, Result};

pub use loudness::compute_loudness_mean;
pub use spectral::{compute_ltas, estimate_noise_spectrum};
pub use voice::{compute_f0_mean, compute_formant_means, F0Estimate};
pub use wada::estimate_snr_wada;
pub use xvector::{ingest_xvector, VectorStore, XVECTOR_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureName {
    Ltas,
    Snr,
    NoiseSpectrum,
    Xvector,
    F0Mean,
    FormantMeans,
    LoudnessMean,
}

impl FeatureName {
    pub const ALL: [FeatureName; 7] = [
        FeatureName::Ltas,
        FeatureName::Snr,
        FeatureName::NoiseSpectrum,
        FeatureName::Xvector,
        FeatureName::F0Mean,
        FeatureName::FormantMeans,
        FeatureName::LoudnessMean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureName::Ltas => "ltas",
            FeatureName::Snr => "snr",
            FeatureName::NoiseSpectrum => "noise_spectrum",
            FeatureName::Xvector => "xvector",
            FeatureName::F0Mean => "f0_mean",
            FeatureName::FormantMeans => "formant_means",
            FeatureName::LoudnessMean => "loudness_mean",
        }
    }

    /// Short form used by the command line (`--features ltas,snr,noise,…`).
    pub fn short(self) -> &'static str {
        match self {
            FeatureName::Ltas => "ltas",
            FeatureName::Snr => "snr",
            FeatureName::NoiseSpectrum => "noise",
            FeatureName::Xvector => "xvec",
            FeatureName::F0Mean => "f0",
            FeatureName::FormantMeans => "formants",
            FeatureName::LoudnessMean => "loudness",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            FeatureName::Ltas | FeatureName::NoiseSpectrum => 257,
            FeatureName::Xvector => XVECTOR_DIM,
            FeatureName::FormantMeans => 4,
            FeatureName::Snr | FeatureName::F0Mean | FeatureName::LoudnessMean => 1,
        }
    }

    /// Bumped whenever the extraction of this feature changes; part of the cache key.
    pub fn version(self) -> &'static str {
        match self {
            FeatureName::Ltas => "ltas-v1-hann512-h160",
            FeatureName::Snr => "snr-v1-wada-gamma0.4",
            FeatureName::NoiseSpectrum => "noise-v1-ms-a0.85-d150-b1.5",
            FeatureName::Xvector => "xvec-v1-lnorm",
            FeatureName::F0Mean => "f0-v1-nccf-40ms-0.3",
            FeatureName::FormantMeans => "formants-v1-lpc18",
            FeatureName::LoudnessMean => "loudness-v1-bark24-cbrt",
        }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureName::ALL
            .into_iter()
            .find(|f| f.as_str() == s || f.short() == s)
            .ok_or_else(|| Error::Config(format!("unknown quality feature {s:?}")))
    }
}

/// The enabled quality vectors for one utterance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QualityFeatureSet {
    pub utt_id: String,
    pub features: BTreeMap<FeatureName, Vec<f64>>,
    /// Features that could not be measured on this utterance, with the reason.
    pub missing: BTreeMap<FeatureName, String>,
    /// Set when F0 analysis found no voiced frame (the F0 value is then the 0 sentinel).
    pub unvoiced: bool,
}

impl QualityFeatureSet {
    pub fn dims(&self) -> BTreeMap<FeatureName, usize> {
        self.features.iter().map(|(k, v)| (*k, v.len())).collect()
    }

    pub fn get(&self, name: FeatureName) -> Option<&[f64]> {
        self.features.get(&name).map(Vec::as_slice)
    }

    /// Dimensionality, finiteness and unit-norm contracts.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in &self.features {
            if v.len() != name.dim() {
                return Err(Error::Dimension { expected: name.dim(), got: v.len() })
                    .map_err(|e| e.in_stage(name.as_str(), None, Some(&self.utt_id)));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("{name} of {} is not finite", self.utt_id)));
            }
            if *name == FeatureName::Xvector {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::Numeric(format!("x-vector of {} has norm {norm}", self.utt_id)));
                }
            }
            if *name == FeatureName::FormantMeans && !v.windows(2).all(|p| p[0] < p[1]) {
                return Err(Error::Numeric(format!("formants of {} not ascending", self.utt_id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct QualityConfig<'a> {
    pub enabled: Vec<FeatureName>,
    /// Raw x-vectors keyed by utterance id; required when `Xvector` is enabled.
    pub xvectors: Option<&'a VectorStore>,
}

impl<'a> QualityConfig<'a> {
    pub fn all(xvectors: Option<&'a VectorStore>) -> Self {
        Self { enabled: FeatureName::ALL.to_vec(), xvectors }
    }
}

/// Computes every enabled feature for an already-loaded waveform.
pub fn extract_quality(utt_id: &str, w: &Waveform, cfg: &QualityConfig<'_>) -> Result<QualityFeatureSet> {
    let mut set = QualityFeatureSet { utt_id: utt_id.to_string(), ..Default::default() };
    let tag = |name: FeatureName| move |e: Error| e.in_stage(name.as_str(), None, Some(utt_id));
    let needs_spec = cfg
        .enabled
        .iter()
        .any(|f| matches!(f, FeatureName::Ltas | FeatureName::NoiseSpectrum));
    let spec = if needs_spec {
        Some(stft_power(w, &StftConfig::ANALYSIS).map_err(tag(FeatureName::Ltas))?)
    } else {
        None
    };
    for &name in &cfg.enabled {
        let value = match name {
            FeatureName::Ltas => compute_ltas(spec.as_ref().expect("spectrogram computed")),
            FeatureName::NoiseSpectrum => {
                estimate_noise_spectrum(spec.as_ref().expect("spectrogram computed")).map_err(tag(name))?
            }
            FeatureName::Snr => vec![estimate_snr_wada(w).map_err(tag(name))?],
            FeatureName::Xvector => {
                let store = cfg
                    .xvectors
                    .ok_or_else(|| Error::Config("x-vector feature enabled without a vector file".into()))?;
                store.normalized(utt_id).map_err(tag(name))?
            }
            FeatureName::F0Mean => {
                let e = compute_f0_mean(w).map_err(tag(name))?;
                set.unvoiced = !e.is_voiced();
                vec![e.semitones]
            }
            FeatureName::FormantMeans => match compute_formant_means(w) {
                Ok(f) => f.to_vec(),
                Err(Error::Unvoiced(reason)) => {
                    set.missing.insert(name, reason);
                    continue;
                }
                Err(e) => return Err(tag(name)(e)),
            },
            FeatureName::LoudnessMean => vec![compute_loudness_mean(w).map_err(tag(name))?],
        };
        set.features.insert(name, value);
    }
    set.validate()?;
    Ok(set)
}

/// Reads the utterance audio and computes its quality set.
pub fn build_quality_set(utt: &UtteranceRecord, audio_path: &Path, cfg: &QualityConfig<'_>) -> Result<QualityFeatureSet> {
    let w = read_wav(audio_path).map_err(|e| e.in_stage("read_wav", Some(&utt.corpus_id), Some(&utt.utt_id)))?;
    extract_quality(&utt.utt_id, &w, cfg)
        .map_err(|e| e.in_stage("quality", Some(&utt.corpus_id), Some(&utt.utt_id)))
}
