//! End-to-end driver: protocols, features, models, scores, distances,
//! experiment table, analysis and report.
//!
//! Every stage reads its inputs from and writes its outputs to the run
//! directory, so stages can be run one at a time from the command line or all
//! at once through [`run_pipeline`].
//!
//! ```text
//! <out>/config.resolved.toml
//! <out>/protocols/<corpus>.json
//! <out>/models/<classifier>/<corpus>.{bonafide,spoof}.json
//! <out>/scores/<classifier>/<train corpus>/<test corpus>.csv
//! <out>/{experiments,distances,correlations,feature_models,eer_matrix,eer_distribution,ltas_matrix}.csv
//! <out>/summary.json
//! <cache>/quality/<corpus>/<feature version>/<feature>.vec
//! <cache>/cm/<corpus>/<front-end version>/<utt_id>.txt
//! ```
//!
//! External classifiers supply scores in the same layout as `scores/<classifier>`:
//! a directory with one `<test corpus>.csv` per `<train corpus>` subdirectory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cm::{self, FeatureKind, FeatureMatrix};
use crate::config::PipelineConfig;
use crate::corpus::{load_manifest, sample_protocol, validate_disjoint, CorpusManifest, Label, ProtocolSet};
use crate::distance::{six_distances, PartitionQuad};
use crate::error::{Error, Result, StageContext};
use crate::gmm::{fit_gmm, score_llr, FitConfig, GmmModel};
use crate::metrics::compute_eer;
use crate::quality::{extract_quality, FeatureName, QualityConfig, QualityFeatureSet, VectorStore, XVECTOR_DIM};
use crate::regression::{correlation_table, feature_model_table, CorrelationTable, ExperimentRow, RegressionFit, Scope, SkippedFit};
use crate::report::{self, DistanceRow};
use crate::rng;
use crate::scores::CmScoreSet;
use crate::dsp::read_wav;

const MODEL_FITS: &str = "models/fits.json";

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Quality sets of one corpus keyed by utt_id.
pub type QualityTable = BTreeMap<String, QualityFeatureSet>;

/// Utterances a protocol touches: the training subset, then every trial
/// utterance in order of first appearance.
pub fn needed_utterances(p: &ProtocolSet) -> Vec<String> {
    let mut seen = BTreeSet::new();
    p.train_subset
        .iter()
        .chain(p.trial_lists.iter().flatten())
        .filter(|u| seen.insert(u.as_str()))
        .cloned()
        .collect()
}

fn eval_utterances(p: &ProtocolSet) -> Vec<String> {
    let mut seen = BTreeSet::new();
    p.trial_lists.iter().flatten().filter(|u| seen.insert(u.as_str())).cloned().collect()
}

/// Score set for an external classifier; the name comes from the
/// `# classifier=` header, else from the enclosing score directory.
pub fn ingest_external_scores(path: &Path) -> Result<CmScoreSet> {
    let mut set = CmScoreSet::load(path)?;
    if set.classifier.is_none() {
        let dir = path.parent().and_then(Path::parent).and_then(Path::file_name);
        set.classifier = dir.map(|d| d.to_string_lossy().into_owned());
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub classifier: String,
    pub corpus: String,
    pub label: Label,
    pub n_frames: usize,
    pub em_iterations: usize,
    pub converged: bool,
    /// Largest drop of the per-frame average log-likelihood across EM iterations.
    pub worst_decrease: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub correlations: Vec<CorrelationTable>,
    pub fits: Vec<RegressionFit>,
    pub skipped: Vec<SkippedFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridCounts {
    pub within: usize,
    pub across: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub corpora: Vec<String>,
    pub n_test: usize,
    pub classifiers: Vec<String>,
    pub features: Vec<String>,
    pub rows: BTreeMap<String, GridCounts>,
    pub models_trained: BTreeMap<String, usize>,
    pub worst_em_decrease: f64,
    pub mean_eer: BTreeMap<String, BTreeMap<String, f64>>,
    pub dimension_checks: usize,
    pub warnings: Vec<String>,
}

/// Score sets of one classifier keyed by (train corpus, test corpus).
type ScoreGrid = BTreeMap<(String, String), CmScoreSet>;

/// A configured run over loaded manifests.
pub struct Run {
    pub cfg: PipelineConfig,
    pub manifests: Vec<CorpusManifest>,
    xvectors: Option<VectorStore>,
}

impl Run {
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let manifests = cfg
            .manifests
            .iter()
            .map(|p| load_manifest(p).stage("manifest", None, None))
            .collect::<Result<Vec<_>>>()?;
        let mut ids = BTreeSet::new();
        for m in &manifests {
            if !ids.insert(m.corpus_id.as_str()) {
                return Err(Error::Config(format!("corpus {} listed twice", m.corpus_id)));
            }
            m.validate_audio().stage("manifest", Some(&m.corpus_id), None)?;
        }
        let xvectors = match (&cfg.xvectors, cfg.feature_names()?.contains(&FeatureName::Xvector)) {
            (Some(p), true) => Some(VectorStore::load(p, XVECTOR_DIM).stage("xvectors", None, None)?),
            _ => None,
        };
        Ok(Run { cfg, manifests, xvectors })
    }

    pub fn corpus_ids(&self) -> Vec<String> {
        self.manifests.iter().map(|m| m.corpus_id.clone()).collect()
    }

    fn out(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.cfg.out.join(rel)
    }

    fn protocol_path(&self, corpus: &str) -> PathBuf {
        self.out(format!("protocols/{corpus}.json"))
    }

    fn model_path(&self, classifier: &str, corpus: &str, label: Label) -> PathBuf {
        self.out(format!("models/{classifier}/{corpus}.{label}.json"))
    }

    fn score_path(&self, classifier: &str, train: &str, test: &str) -> PathBuf {
        self.out(format!("scores/{classifier}/{train}/{test}.csv"))
    }

    /// Samples and writes one protocol per corpus.
    pub fn sample_protocols(&self) -> Result<Vec<ProtocolSet>> {
        let sampling = self.cfg.sampling();
        mkdir(&self.out("protocols"))?;
        self.manifests
            .iter()
            .map(|m| {
                let p = sample_protocol(m, &sampling).stage("protocol", Some(&m.corpus_id), None)?;
                let report = validate_disjoint(&p, m)?;
                if let Some((list, spk)) = report.overlaps.first() {
                    return Err(Error::Integrity(format!(
                        "corpus {}: trial list {list} shares speakers {spk:?} with training",
                        m.corpus_id
                    )));
                }
                let path = self.protocol_path(&m.corpus_id);
                std::fs::write(&path, p.to_json()).map_err(|e| Error::io(&path, e))?;
                Ok(p)
            })
            .collect()
    }

    /// Protocols written by an earlier `sample_protocols`.
    pub fn protocols(&self) -> Result<Vec<ProtocolSet>> {
        self.manifests
            .iter()
            .map(|m| {
                let path = self.protocol_path(&m.corpus_id);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let p = ProtocolSet::from_json(&text)?;
                if p.corpus_id != m.corpus_id || p.trial_lists.len() != self.cfg.ntest {
                    return Err(Error::Integrity(format!("{} does not match the configuration", path.display())));
                }
                for u in needed_utterances(&p) {
                    if m.get(&u).is_none() {
                        return Err(Error::Integrity(format!("protocol of {} names unknown utterance {u}", m.corpus_id)));
                    }
                }
                Ok(p)
            })
            .collect()
    }

    fn quality_dir(&self, corpus: &str, f: FeatureName) -> PathBuf {
        self.cfg.cache.join("quality").join(corpus).join(f.version())
    }

    /// Quality features for every utterance the protocols touch, from the
    /// cache where present. Utterances missing a feature keep a `missing` entry.
    pub fn quality(&self, protocols: &[ProtocolSet]) -> Result<Vec<QualityTable>> {
        let features = self.cfg.feature_names()?;
        self.manifests
            .iter()
            .zip(protocols)
            .map(|(m, p)| {
                let ids = needed_utterances(p);
                let mut stores: BTreeMap<FeatureName, (VectorStore, BTreeMap<String, String>)> = BTreeMap::new();
                for &f in &features {
                    let dir = self.quality_dir(&m.corpus_id, f);
                    let vec_path = dir.join(format!("{}.vec", f.as_str()));
                    let store = if vec_path.exists() { VectorStore::load(&vec_path, f.dim())? } else { VectorStore::new(f.dim()) };
                    let miss_path = dir.join(format!("{}.missing", f.as_str()));
                    let missing = match std::fs::read_to_string(&miss_path) {
                        Ok(t) => t
                            .lines()
                            .filter_map(|l| l.split_once('\t'))
                            .map(|(u, r)| (u.to_string(), r.to_string()))
                            .collect(),
                        Err(_) => BTreeMap::new(),
                    };
                    stores.insert(f, (store, missing));
                }
                let todo: Vec<(&String, Vec<FeatureName>)> = ids
                    .iter()
                    .map(|u| {
                        let need = features
                            .iter()
                            .copied()
                            .filter(|f| {
                                let (s, miss) = &stores[f];
                                s.get(u).is_none() && !miss.contains_key(u)
                            })
                            .collect::<Vec<_>>();
                        (u, need)
                    })
                    .filter(|(_, need)| !need.is_empty())
                    .collect();
                if !todo.is_empty() {
                    info!("{}: computing quality features for {} utterances", m.corpus_id, todo.len());
                    let computed = todo
                        .par_iter()
                        .map(|(u, need)| {
                            let rec = m.get(u).expect("protocol utterances exist");
                            let w = read_wav(&m.audio_path(rec)).stage("read_wav", Some(&m.corpus_id), Some(u))?;
                            let qc = QualityConfig { enabled: need.clone(), xvectors: self.xvectors.as_ref() };
                            extract_quality(u, &w, &qc).stage("quality", Some(&m.corpus_id), Some(u))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let mut touched = BTreeSet::new();
                    for set in computed {
                        for (f, v) in set.features {
                            stores.get_mut(&f).expect("enabled").0.insert(set.utt_id.clone(), v)?;
                            touched.insert(f);
                        }
                        for (f, reason) in set.missing {
                            stores.get_mut(&f).expect("enabled").1.insert(set.utt_id.clone(), reason.replace(['\t', '\n'], " "));
                            touched.insert(f);
                        }
                    }
                    for f in touched {
                        let dir = self.quality_dir(&m.corpus_id, f);
                        mkdir(&dir)?;
                        let (store, missing) = &stores[&f];
                        store.save(&dir.join(format!("{}.vec", f.as_str())))?;
                        if !missing.is_empty() {
                            let text: String = missing.iter().map(|(u, r)| format!("{u}\t{r}\n")).collect();
                            report::write(&dir.join(format!("{}.missing", f.as_str())), &text)?;
                        }
                    }
                }
                let mut table = QualityTable::new();
                for u in ids {
                    let mut set = QualityFeatureSet { utt_id: u.clone(), ..Default::default() };
                    for (&f, (store, missing)) in &stores {
                        match store.get(&u) {
                            Some(v) => {
                                set.features.insert(f, v.to_vec());
                            }
                            None => {
                                let reason = missing.get(&u).cloned().unwrap_or_else(|| "not computed".into());
                                set.missing.insert(f, reason);
                            }
                        }
                    }
                    set.validate().stage("quality", Some(&m.corpus_id), Some(&u))?;
                    table.insert(u, set);
                }
                Ok(table)
            })
            .collect()
    }

    fn cm_path(&self, corpus: &str, kind: FeatureKind, utt: &str) -> PathBuf {
        self.cfg.cache.join("cm").join(corpus).join(kind.version()).join(format!("{utt}.txt"))
    }

    /// Front-end features of `utt_ids` from corpus `m`, computing and caching misses.
    pub fn cm_features(&self, m: &CorpusManifest, kind: FeatureKind, utt_ids: &[String]) -> Result<Vec<FeatureMatrix>> {
        utt_ids
            .par_iter()
            .map(|u| {
                let path = self.cm_path(&m.corpus_id, kind, u);
                let fm = if path.exists() {
                    FeatureMatrix::load(&path)?
                } else {
                    let rec = m.get(u).ok_or_else(|| Error::Lookup(format!("{u} not in corpus {}", m.corpus_id)))?;
                    let w = read_wav(&m.audio_path(rec)).stage("read_wav", Some(&m.corpus_id), Some(u))?;
                    let fm = cm::extract(kind, u, &w).stage(kind.as_str(), Some(&m.corpus_id), Some(u))?;
                    mkdir(path.parent().expect("cache file has a directory"))?;
                    fm.save(&path)?;
                    fm
                };
                if fm.kind != kind || fm.dim() != kind.dim() || fm.utt_id != *u {
                    return Err(Error::Integrity(format!("cached {} features of {u} do not match", kind.as_str())));
                }
                Ok(fm)
            })
            .collect()
    }

    /// Fills the front-end caches for every configured GMM classifier.
    pub fn extract_cm(&self, protocols: &[ProtocolSet]) -> Result<usize> {
        let mut n = 0;
        for g in self.cfg.gmm_classifiers()? {
            for (m, p) in self.manifests.iter().zip(protocols) {
                n += self.cm_features(m, g.0, &needed_utterances(p))?.len();
            }
        }
        Ok(n)
    }

    /// Fits one bonafide and one spoof GMM per corpus and GMM classifier.
    pub fn train(&self, protocols: &[ProtocolSet]) -> Result<Vec<ModelFit>> {
        let mut jobs = Vec::new();
        for g in self.cfg.gmm_classifiers()? {
            for (m, p) in self.manifests.iter().zip(protocols) {
                for label in [Label::Bonafide, Label::Spoof] {
                    jobs.push((g, m, p, label));
                }
            }
        }
        let fits = jobs
            .par_iter()
            .map(|&(g, m, p, label)| {
                let name = g.name();
                let ids: Vec<String> = p
                    .train_subset
                    .iter()
                    .filter(|u| m.get(u).map(|r| r.label) == Some(label))
                    .cloned()
                    .collect();
                let feats = self.cm_features(m, g.0, &ids)?;
                let frames: Vec<f64> = feats.iter().flat_map(|f| f.as_slice().iter().copied()).collect();
                let seed = rng::derive_seed(self.cfg.seed, &format!("gmm/{name}/{}/{label}", m.corpus_id));
                let (model, fit) = fit_gmm(&frames, g.0.dim(), &FitConfig::new(self.cfg.components, seed))
                    .stage(&format!("train {name}"), Some(&m.corpus_id), None)?;
                let path = self.model_path(&name, &m.corpus_id, label);
                mkdir(path.parent().expect("model file has a directory"))?;
                model.save(&path)?;
                Ok(ModelFit {
                    classifier: name,
                    corpus: m.corpus_id.clone(),
                    label,
                    n_frames: frames.len() / g.0.dim(),
                    em_iterations: fit.trace.len(),
                    converged: fit.converged,
                    worst_decrease: fit.worst_decrease(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let json = serde_json::to_string_pretty(&fits).expect("fit records serialize");
        report::write(&self.out(MODEL_FITS), &json)?;
        Ok(fits)
    }

    /// Fit records written by `train`.
    pub fn model_fits(&self) -> Result<Vec<ModelFit>> {
        let path = self.out(MODEL_FITS);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Scores every evaluation utterance of every corpus with every model.
    pub fn score(&self, protocols: &[ProtocolSet]) -> Result<usize> {
        let mut n = 0;
        for g in self.cfg.gmm_classifiers()? {
            let name = g.name();
            for train in &self.manifests {
                let bona = GmmModel::load(&self.model_path(&name, &train.corpus_id, Label::Bonafide))?;
                let spoof = GmmModel::load(&self.model_path(&name, &train.corpus_id, Label::Spoof))?;
                for (test, p) in self.manifests.iter().zip(protocols) {
                    let ids = eval_utterances(p);
                    let feats = self.cm_features(test, g.0, &ids)?;
                    let scores = feats
                        .par_iter()
                        .map(|f| score_llr(&bona, &spoof, f.as_slice()).stage("score", Some(&test.corpus_id), Some(&f.utt_id)))
                        .collect::<Result<Vec<f64>>>()?;
                    let mut set = CmScoreSet { classifier: Some(name.clone()), records: Vec::new() };
                    for (u, s) in ids.iter().zip(scores) {
                        set.push(u.clone(), test.get(u).expect("protocol utterance").label, s);
                    }
                    let path = self.score_path(&name, &train.corpus_id, &test.corpus_id);
                    mkdir(path.parent().expect("score file has a directory"))?;
                    set.save(&path)?;
                    n += set.records.len();
                }
            }
        }
        Ok(n)
    }

    /// Six distances per (train corpus, test corpus, trial list, feature).
    /// Features with an empty cloud are left out for that experiment.
    pub fn distances(&self, protocols: &[ProtocolSet], quality: &[QualityTable]) -> Result<Vec<DistanceRow>> {
        let features = self.cfg.feature_names()?;
        let cloud = |table: &QualityTable, ids: &[String], m: &CorpusManifest, label: Label, f: FeatureName| -> Vec<Vec<f64>> {
            ids.iter()
                .filter(|u| m.get(u).map(|r| r.label) == Some(label))
                .filter_map(|u| table[u.as_str()].get(f).map(<[f64]>::to_vec))
                .collect()
        };
        let mut jobs = Vec::new();
        for i in 0..self.manifests.len() {
            for j in 0..self.manifests.len() {
                for t in 0..self.cfg.ntest {
                    jobs.push((i, j, t));
                }
            }
        }
        let rows = jobs
            .par_iter()
            .map(|&(i, j, t)| {
                let (mi, mj) = (&self.manifests[i], &self.manifests[j]);
                let train = &protocols[i].train_subset;
                let list = &protocols[j].trial_lists[t];
                let mut out = Vec::new();
                for &f in &features {
                    let clouds = [
                        cloud(&quality[i], train, mi, Label::Bonafide, f),
                        cloud(&quality[i], train, mi, Label::Spoof, f),
                        cloud(&quality[j], list, mj, Label::Bonafide, f),
                        cloud(&quality[j], list, mj, Label::Spoof, f),
                    ];
                    if clouds.iter().any(Vec::is_empty) {
                        continue;
                    }
                    let quad = PartitionQuad::new(f.as_str(), clouds)?;
                    out.push(DistanceRow {
                        train_corpus: mi.corpus_id.clone(),
                        test_corpus: mj.corpus_id.clone(),
                        trial_idx: t,
                        feature: f.as_str().to_string(),
                        distances: six_distances(&quad)?,
                    });
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(rows.into_iter().flatten().collect())
    }

    /// Score sets per classifier, keyed by (train corpus, test corpus).
    fn score_sets(&self) -> Result<Vec<(String, ScoreGrid)>> {
        let mut out = Vec::new();
        for g in self.cfg.gmm_classifiers()? {
            let name = g.name();
            let mut sets = BTreeMap::new();
            for a in self.corpus_ids() {
                for b in self.corpus_ids() {
                    let set = CmScoreSet::load(&self.score_path(&name, &a, &b))?;
                    sets.insert((a.clone(), b), set);
                }
            }
            out.push((name, sets));
        }
        for dir in &self.cfg.external_scores {
            let mut sets = BTreeMap::new();
            let mut names = BTreeSet::new();
            for a in self.corpus_ids() {
                for b in self.corpus_ids() {
                    let path = dir.join(&a).join(format!("{b}.csv"));
                    let set = ingest_external_scores(&path).stage("external scores", Some(&b), None)?;
                    names.extend(set.classifier.clone());
                    sets.insert((a.clone(), b), set);
                }
            }
            if names.len() != 1 {
                return Err(Error::Data(format!("{}: score files name classifiers {names:?}", dir.display())));
            }
            out.push((names.into_iter().next().expect("one name"), sets));
        }
        Ok(out)
    }

    /// One row per (classifier, train corpus, test corpus, trial list).
    pub fn experiments(&self, protocols: &[ProtocolSet], distances: &[DistanceRow]) -> Result<Vec<ExperimentRow>> {
        let mut by_key: BTreeMap<(&str, &str, usize), BTreeMap<String, _>> = BTreeMap::new();
        for d in distances {
            by_key.entry((&d.train_corpus, &d.test_corpus, d.trial_idx)).or_default().insert(d.feature.clone(), d.distances);
        }
        let mut rows = Vec::new();
        for (classifier, sets) in self.score_sets()? {
            for train in self.corpus_ids() {
                for (test, p) in self.corpus_ids().into_iter().zip(protocols) {
                    let set = &sets[&(train.clone(), test.clone())];
                    for (t, list) in p.trial_lists.iter().enumerate() {
                        let sel = set.select(list).stage(&format!("scores {classifier}"), Some(&test), None)?;
                        // labels come from the manifest, not from the score file
                        let manifest = &self.manifests[self.corpus_ids().iter().position(|c| *c == test).expect("known")];
                        let (mut b, mut s) = (Vec::new(), Vec::new());
                        for r in &sel.records {
                            match manifest.get(&r.utt_id).map(|x| x.label) {
                                Some(Label::Bonafide) => b.push(r.score),
                                Some(Label::Spoof) => s.push(r.score),
                                None => return Err(Error::Integrity(format!("score for unknown utterance {}", r.utt_id))),
                            }
                        }
                        let eer = compute_eer(&b, &s).stage("eer", Some(&test), None)?;
                        rows.push(ExperimentRow {
                            scope: Scope::of(&train, &test),
                            train_corpus: train.clone(),
                            test_corpus: test.clone(),
                            trial_idx: t,
                            classifier: classifier.clone(),
                            eer: eer.eer,
                            threshold: eer.threshold,
                            distances: by_key.get(&(train.as_str(), test.as_str(), t)).cloned().unwrap_or_default(),
                        });
                    }
                }
            }
        }
        Ok(rows)
    }

    pub fn classifier_names(&self, rows: &[ExperimentRow]) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in rows {
            if !names.contains(&r.classifier) {
                names.push(r.classifier.clone());
            }
        }
        names
    }

    pub fn analyze(&self, rows: &[ExperimentRow]) -> Result<Analysis> {
        let classifiers = self.classifier_names(rows);
        let features: Vec<String> = self.cfg.feature_names()?.iter().map(|f| f.as_str().to_string()).collect();
        let mut correlations = Vec::new();
        for f in &features {
            for c in &classifiers {
                correlations.push(correlation_table(rows, f, c));
            }
        }
        let (fits, skipped) = feature_model_table(rows, &classifiers, &features);
        for s in &skipped {
            warn!("regression {} / {} / {} skipped: {}", s.feature, s.classifier, s.scope, s.reason);
        }
        Ok(Analysis { correlations, fits, skipped })
    }

    pub fn write_analysis(&self, rows: &[ExperimentRow], analysis: &Analysis) -> Result<()> {
        report::write(&self.out(report::EXPERIMENTS), &report::experiments_csv(rows))?;
        report::write(&self.out(report::CORRELATIONS), &report::correlations_csv(&analysis.correlations))?;
        report::write(&self.out(report::FEATURE_MODELS), &report::feature_models_csv(&analysis.fits))
    }

    pub fn read_distances(&self) -> Result<Vec<DistanceRow>> {
        report::read_distances(&self.out(report::DISTANCES))
    }

    pub fn read_experiments(&self) -> Result<Vec<ExperimentRow>> {
        report::read_experiments(&self.out(report::EXPERIMENTS), &self.read_distances()?)
    }

    /// EER matrix, EER distribution, LTAS export and the JSON summary.
    pub fn emit_report(
        &self,
        rows: &[ExperimentRow],
        analysis: &Analysis,
        quality: &[QualityTable],
        fits: &[ModelFit],
    ) -> Result<Summary> {
        let corpora = self.corpus_ids();
        report::write(&self.out(report::EER_MATRIX), &report::eer_matrix_csv(rows, &corpora))?;
        report::write(&self.out(report::EER_DISTRIBUTION), &report::eer_distribution_csv(rows))?;
        let mut ltas = Vec::new();
        let mut dimension_checks = 0;
        for (m, table) in self.manifests.iter().zip(quality) {
            for (u, set) in table {
                set.validate()?;
                dimension_checks += set.features.len();
                if let Some(v) = set.get(FeatureName::Ltas) {
                    let label = m.get(u).expect("protocol utterance").label;
                    ltas.push((m.corpus_id.clone(), u.clone(), label.to_string(), v.to_vec()));
                }
            }
        }
        if !ltas.is_empty() {
            report::write(&self.out(report::LTAS_MATRIX), &report::ltas_matrix_csv(&ltas))?;
        }
        let classifiers = self.classifier_names(rows);
        let mut counts = BTreeMap::new();
        let mut mean_eer = BTreeMap::new();
        for c in &classifiers {
            let of = |s: Scope| rows.iter().filter(|r| r.classifier == *c && r.scope == s).map(|r| r.eer).collect::<Vec<_>>();
            let (w, a) = (of(Scope::Within), of(Scope::Across));
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            mean_eer.insert(c.clone(), [("within".to_string(), mean(&w)), ("across".to_string(), mean(&a))].into());
            counts.insert(c.clone(), GridCounts { within: w.len(), across: a.len() });
        }
        let mut models_trained = BTreeMap::new();
        for f in fits {
            *models_trained.entry(f.classifier.clone()).or_insert(0) += usize::from(f.label == Label::Bonafide);
        }
        let summary = Summary {
            seed: self.cfg.seed,
            corpora,
            n_test: self.cfg.ntest,
            classifiers,
            features: self.cfg.feature_names()?.iter().map(|f| f.as_str().to_string()).collect(),
            rows: counts,
            models_trained,
            worst_em_decrease: fits.iter().map(|f| f.worst_decrease).fold(0.0, f64::max),
            mean_eer,
            dimension_checks,
            warnings: analysis
                .skipped
                .iter()
                .map(|s| format!("regression {}/{}/{} skipped: {}", s.feature, s.classifier, s.scope, s.reason))
                .collect(),
        };
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        report::write(&self.out(report::SUMMARY), &json)?;
        Ok(summary)
    }

    /// Marks the run directory as incomplete until `f` succeeds. On failure
    /// the marker keeps the error text.
    pub fn guarded<T>(&self, f: impl FnOnce(&Self) -> Result<T>) -> Result<T> {
        let marker = self.out(report::INCOMPLETE);
        report::write(&marker, "running\n")?;
        match f(self) {
            Ok(v) => {
                std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
                Ok(v)
            }
            Err(e) => {
                let _ = std::fs::write(&marker, format!("{e}\n"));
                Err(e)
            }
        }
    }
}

/// Everything a full run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub protocols: Vec<ProtocolSet>,
    pub rows: Vec<ExperimentRow>,
    pub distances: Vec<DistanceRow>,
    pub analysis: Analysis,
    pub model_fits: Vec<ModelFit>,
    pub summary: Summary,
}

/// All stages in order, writing every output under `cfg.out`.
pub fn run_pipeline(cfg: PipelineConfig) -> Result<RunOutput> {
    let run = Run::open(cfg)?;
    run.cfg.write_resolved()?;
    run.guarded(|run| {
        let protocols = run.sample_protocols()?;
        let quality = run.quality(&protocols)?;
        run.extract_cm(&protocols)?;
        let model_fits = run.train(&protocols)?;
        run.score(&protocols)?;
        let distances = run.distances(&protocols, &quality)?;
        report::write(&run.out(report::DISTANCES), &report::distances_csv(&distances))?;
        let rows = run.experiments(&protocols, &distances)?;
        let analysis = run.analyze(&rows)?;
        run.write_analysis(&rows, &analysis)?;
        let summary = run.emit_report(&rows, &analysis, &quality, &model_fits)?;
        Ok(RunOutput { protocols, rows, distances, analysis, model_fits, summary })
    })
}
