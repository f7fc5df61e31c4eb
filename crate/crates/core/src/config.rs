//! Pipeline configuration: a flat TOML key-value file plus command-line overrides.
//!
//! ```toml
//! manifests = ["c1/manifest.csv", "c2/manifest.csv"]
//! seed = 7
//! out = "run"
//! classifiers = ["lfcc-gmm", "cqcc-gmm"]
//! features = ["ltas", "snr", "noise", "f0", "formants", "loudness"]
//! components = 8
//! ntest = 20
//! ```
//!
//! Relative paths in a file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cm::FeatureKind;
use crate::corpus::{SamplingConfig, SpeakerMode};
use crate::error::{Error, Result};
use crate::quality::FeatureName;

pub const DEFAULT_SEED: u64 = 20200901;
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

/// A GMM countermeasure on one front-end; named `<kind>-gmm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GmmClassifier(pub FeatureKind);

impl GmmClassifier {
    pub fn name(self) -> String {
        format!("{}-gmm", self.0.as_str())
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.strip_suffix("-gmm")
            .and_then(|k| k.parse().ok())
            .map(GmmClassifier)
            .ok_or_else(|| Error::Config(format!("unknown classifier {s:?} (expected lfcc-gmm or cqcc-gmm)")))
    }
}

/// Values as read from a file or the command line; `None` means "use the default".
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub manifests: Option<Vec<PathBuf>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub classifiers: Option<Vec<String>>,
    pub features: Option<Vec<String>>,
    pub components: Option<usize>,
    pub ntest: Option<usize>,
    pub trial_size: Option<usize>,
    pub n_speakers: Option<usize>,
    pub bona_per_speaker: Option<usize>,
    pub spoof_per_speaker: Option<usize>,
    pub speaker_mode: Option<SpeakerMode>,
    pub xvectors: Option<PathBuf>,
    pub external_scores: Option<Vec<PathBuf>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut raw = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        raw.manifests.iter_mut().flatten().for_each(fix);
        raw.external_scores.iter_mut().flatten().for_each(fix);
        raw.out.iter_mut().for_each(fix);
        raw.cache.iter_mut().for_each(fix);
        raw.xvectors.iter_mut().for_each(fix);
        Ok(raw)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: RawConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            manifests, seed, out, cache, classifiers, features, components, ntest, trial_size, n_speakers,
            bona_per_speaker, spoof_per_speaker, speaker_mode, xvectors, external_scores
        );
        self
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub manifests: Vec<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub cache: PathBuf,
    pub classifiers: Vec<String>,
    pub features: Vec<String>,
    pub components: usize,
    pub ntest: usize,
    pub trial_size: usize,
    pub n_speakers: usize,
    pub bona_per_speaker: usize,
    pub spoof_per_speaker: usize,
    pub speaker_mode: SpeakerMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xvectors: Option<PathBuf>,
    pub external_scores: Vec<PathBuf>,
}

impl PipelineConfig {
    pub fn resolve(raw: RawConfig) -> Result<Self> {
        let out = raw.out.unwrap_or_else(|| PathBuf::from("spoofgap-out"));
        let features = match raw.features {
            Some(f) => f,
            None => FeatureName::ALL
                .iter()
                .filter(|f| **f != FeatureName::Xvector || raw.xvectors.is_some())
                .map(|f| f.as_str().to_string())
                .collect(),
        };
        let cfg = PipelineConfig {
            manifests: raw.manifests.unwrap_or_default(),
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            cache: raw.cache.unwrap_or_else(|| out.join("cache")),
            out,
            classifiers: raw.classifiers.unwrap_or_else(|| vec!["lfcc-gmm".into(), "cqcc-gmm".into()]),
            features,
            components: raw.components.unwrap_or(8),
            ntest: raw.ntest.unwrap_or(20),
            trial_size: raw.trial_size.unwrap_or(12),
            n_speakers: raw.n_speakers.unwrap_or(2),
            bona_per_speaker: raw.bona_per_speaker.unwrap_or(2),
            spoof_per_speaker: raw.spoof_per_speaker.unwrap_or(4),
            speaker_mode: raw.speaker_mode.unwrap_or_default(),
            xvectors: raw.xvectors,
            external_scores: raw.external_scores.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults for the given manifests, writing under `out`.
    pub fn for_manifests(manifests: Vec<PathBuf>, out: impl Into<PathBuf>) -> Result<Self> {
        Self::resolve(RawConfig { manifests: Some(manifests), out: Some(out.into()), ..Default::default() })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.manifests.len() < 2 {
            return bad(format!("need at least 2 manifests, got {}", self.manifests.len()));
        }
        if self.components == 0 || self.ntest == 0 || self.n_speakers == 0 {
            return bad("components, ntest and n_speakers must be positive".into());
        }
        if self.trial_size < 2 {
            return bad("trial_size must be at least 2".into());
        }
        if self.classifiers.is_empty() && self.external_scores.is_empty() {
            return bad("no classifiers and no external scores configured".into());
        }
        self.gmm_classifiers()?;
        let features = self.feature_names()?;
        if features.contains(&FeatureName::Xvector) && self.xvectors.is_none() {
            return bad("feature xvector enabled without an xvectors file".into());
        }
        Ok(())
    }

    pub fn gmm_classifiers(&self) -> Result<Vec<GmmClassifier>> {
        self.classifiers.iter().map(|c| GmmClassifier::parse(c)).collect()
    }

    /// Enabled quality features in canonical order, without duplicates.
    pub fn feature_names(&self) -> Result<Vec<FeatureName>> {
        let mut names = self.features.iter().map(|f| f.parse()).collect::<Result<Vec<FeatureName>>>()?;
        names.sort();
        names.dedup();
        Ok(names)
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            n_speakers: self.n_speakers,
            n_bona_per_spk: self.bona_per_speaker,
            n_spoof_per_spk: self.spoof_per_speaker,
            n_trial_lists: self.ntest,
            trial_size: self.trial_size,
            seed: self.seed,
            speaker_mode: self.speaker_mode,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Records the resolved configuration next to the outputs.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let file = RawConfig::parse("manifests = [\"a.csv\", \"b.csv\"]\nseed = 3\ncomponents = 4\n").unwrap();
        let cli = RawConfig { seed: Some(11), ntest: Some(2), ..Default::default() };
        let cfg = PipelineConfig::resolve(file.overlay(cli)).unwrap();
        assert_eq!((cfg.seed, cfg.components, cfg.ntest, cfg.trial_size), (11, 4, 2, 12));
        assert_eq!(cfg.feature_names().unwrap().len(), 6);
        assert_eq!(cfg.cache, PathBuf::from("spoofgap-out/cache"));
    }

    #[test]
    fn resolved_file_reparses_to_the_same_config() {
        let cfg = PipelineConfig::for_manifests(vec!["/x/a.csv".into(), "/x/b.csv".into()], "/tmp/o").unwrap();
        let raw: RawConfig = RawConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(PipelineConfig::resolve(raw).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let one = RawConfig::parse("manifests = [\"a.csv\"]").unwrap();
        assert!(matches!(PipelineConfig::resolve(one), Err(Error::Config(_))));
        assert!(matches!(RawConfig::parse("colour = 1"), Err(Error::Config(_))));
        let xv = RawConfig::parse("manifests = [\"a\", \"b\"]\nfeatures = [\"xvec\"]").unwrap();
        assert!(matches!(PipelineConfig::resolve(xv), Err(Error::Config(_))));
        let clf = RawConfig::parse("manifests = [\"a\", \"b\"]\nclassifiers = [\"mfcc-gmm\"]").unwrap();
        assert!(matches!(PipelineConfig::resolve(clf), Err(Error::Config(_))));
    }
}
