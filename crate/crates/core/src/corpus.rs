//! Corpus manifests and randomized train/test protocol sampling.
//!
//! A corpus is described by a flat CSV manifest. For each corpus a single
//! training subset is drawn together with many random trial lists; only the
//! test side is resampled, so one countermeasure per corpus suffices.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MANIFEST_HEADER: [&str; 6] = [
    "corpus_id",
    "utt_id",
    "speaker_id",
    "label",
    "split",
    "audio_path",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(format!("invalid label {other:?} (expected bonafide|spoof)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            other => Err(format!("invalid split {other:?} (expected train|eval)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub corpus_id: String,
    pub utt_id: String,
    pub speaker_id: String,
    pub label: Label,
    pub split: Split,
    /// As written in the manifest; relative paths resolve against the manifest directory.
    pub audio_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub records: Vec<UtteranceRecord>,
    root: PathBuf,
    index: BTreeMap<String, usize>,
}

impl CorpusManifest {
    /// Builds a manifest from records, enforcing the integrity invariants.
    pub fn new(records: Vec<UtteranceRecord>, root: impl Into<PathBuf>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Integrity("manifest has no records".into()))?;
        let corpus_id = first.corpus_id.clone();
        let mut index = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.corpus_id != corpus_id {
                return Err(Error::Integrity(format!(
                    "manifest mixes corpora {corpus_id:?} and {:?}",
                    r.corpus_id
                )));
            }
            if index.insert(r.utt_id.clone(), i).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate utt_id {:?} in corpus {corpus_id}",
                    r.utt_id
                )));
            }
        }
        for label in [Label::Bonafide, Label::Spoof] {
            if !records.iter().any(|r| r.label == label) {
                return Err(Error::Integrity(format!(
                    "corpus {corpus_id} has no {label} records"
                )));
            }
        }
        Ok(Self {
            corpus_id,
            records,
            root: root.into(),
            index,
        })
    }

    pub fn get(&self, utt_id: &str) -> Option<&UtteranceRecord> {
        self.index.get(utt_id).map(|&i| &self.records[i])
    }

    pub fn audio_path(&self, record: &UtteranceRecord) -> PathBuf {
        if record.audio_path.is_absolute() {
            record.audio_path.clone()
        } else {
            self.root.join(&record.audio_path)
        }
    }

    /// Number of records per (split, label).
    pub fn class_counts(&self, split: Split) -> (usize, usize) {
        let mut bona = 0;
        let mut spoof = 0;
        for r in self.records.iter().filter(|r| r.split == split) {
            match r.label {
                Label::Bonafide => bona += 1,
                Label::Spoof => spoof += 1,
            }
        }
        (bona, spoof)
    }

    /// Total (bonafide, spoof) counts over both splits.
    pub fn total_counts(&self) -> (usize, usize) {
        let (a, b) = self.class_counts(Split::Train);
        let (c, d) = self.class_counts(Split::Eval);
        (a + c, b + d)
    }

    pub fn speakers(&self, split: Split) -> BTreeSet<String> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.speaker_id.clone())
            .collect()
    }

    /// Checks that every referenced audio file is a mono 16 kHz PCM16 WAV.
    pub fn validate_audio(&self) -> Result<()> {
        for r in &self.records {
            let path = self.audio_path(r);
            let reader = hound::WavReader::open(&path)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            crate::dsp::check_wav_spec(&reader.spec())
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Reads a manifest CSV.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, path, root)
}

pub fn parse_manifest(text: &str, origin: &Path, root: PathBuf) -> Result<CorpusManifest> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(parse_err(
            1,
            format!("header must be exactly {}", MANIFEST_HEADER.join(",")),
        ));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", MANIFEST_HEADER.len(), row.len()),
            ));
        }
        let field = |i: usize| -> Result<String> {
            let v = row[i].trim();
            if v.is_empty() {
                Err(parse_err(line, format!("empty {}", MANIFEST_HEADER[i])))
            } else {
                Ok(v.to_string())
            }
        };
        records.push(UtteranceRecord {
            corpus_id: field(0)?,
            utt_id: field(1)?,
            speaker_id: field(2)?,
            label: field(3)?.parse().map_err(|m| parse_err(line, m))?,
            split: field(4)?.parse().map_err(|m| parse_err(line, m))?,
            audio_path: PathBuf::from(field(5)?),
        });
    }
    CorpusManifest::new(records, root)
}

pub fn write_manifest(path: &Path, manifest: &CorpusManifest) -> Result<()> {
    let mut out = String::new();
    out.push_str(&MANIFEST_HEADER.join(","));
    out.push('\n');
    for r in &manifest.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.corpus_id,
            r.utt_id,
            r.speaker_id,
            r.label,
            r.split,
            r.audio_path.display()
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// How speakers are assigned to the training and test sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeakerMode {
    /// Train from `split=train`, trials from `split=eval`.
    #[default]
    PredefinedSplit,
    /// Ignore the manifest split; partition speakers randomly into disjoint pools.
    DisjointFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_speakers: usize,
    pub n_bona_per_spk: usize,
    pub n_spoof_per_spk: usize,
    pub n_trial_lists: usize,
    pub trial_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub speaker_mode: SpeakerMode,
}

impl SamplingConfig {
    /// Five speakers, 10 bonafide + 50 spoof each, 20 trial lists of 300.
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            n_speakers: 5,
            n_bona_per_spk: 10,
            n_spoof_per_spk: 50,
            n_trial_lists: 20,
            trial_size: 300,
            seed,
            speaker_mode: SpeakerMode::PredefinedSplit,
        }
    }

    pub fn train_size(&self) -> usize {
        self.n_speakers * (self.n_bona_per_spk + self.n_spoof_per_spk)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSet {
    pub corpus_id: String,
    pub train_subset: Vec<String>,
    pub trial_lists: Vec<Vec<String>>,
    pub seed: u64,
}

impl ProtocolSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("protocol serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("protocol json: {e}")))
    }
}

/// Pick `k` of `items` uniformly without replacement; all of them when `k == len`.
fn choose<T: Clone>(items: &[T], k: usize, rng: &mut rng::StreamRng) -> Vec<T> {
    if k == items.len() {
        return items.to_vec();
    }
    index::sample(rng, items.len(), k)
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}

/// Draws the training subset and the trial lists for one corpus.
pub fn sample_protocol(manifest: &CorpusManifest, cfg: &SamplingConfig) -> Result<ProtocolSet> {
    if cfg.n_speakers == 0 || cfg.trial_size < 2 || cfg.n_trial_lists == 0 {
        return Err(Error::Config(
            "sampling config needs n_speakers >= 1, trial_size >= 2, n_trial_lists >= 1".into(),
        ));
    }
    let mut rng = rng::stream(cfg.seed, &format!("protocol/{}", manifest.corpus_id));

    // speaker -> (bonafide utts, spoof utts), sorted for determinism
    type Pool = BTreeMap<String, (Vec<String>, Vec<String>)>;
    let pool_of = |filter: &dyn Fn(&UtteranceRecord) -> bool| -> Pool {
        let mut pool: Pool = BTreeMap::new();
        for r in manifest.records.iter().filter(|r| filter(r)) {
            let entry = pool.entry(r.speaker_id.clone()).or_default();
            match r.label {
                Label::Bonafide => entry.0.push(r.utt_id.clone()),
                Label::Spoof => entry.1.push(r.utt_id.clone()),
            }
        }
        pool
    };
    let eligible = |pool: &Pool| -> Vec<String> {
        pool.iter()
            .filter(|(_, (b, s))| b.len() >= cfg.n_bona_per_spk && s.len() >= cfg.n_spoof_per_spk)
            .map(|(spk, _)| spk.clone())
            .collect()
    };

    let (train_pool, train_speakers, eval_pool) = match cfg.speaker_mode {
        SpeakerMode::PredefinedSplit => {
            let train_pool = pool_of(&|r| r.split == Split::Train);
            let candidates = eligible(&train_pool);
            if candidates.len() < cfg.n_speakers {
                return Err(Error::Capacity(format!(
                    "corpus {}: need {} eligible training speakers (>= {} bonafide and >= {} spoof each), found {} (deficit {})",
                    manifest.corpus_id,
                    cfg.n_speakers,
                    cfg.n_bona_per_spk,
                    cfg.n_spoof_per_spk,
                    candidates.len(),
                    cfg.n_speakers - candidates.len()
                )));
            }
            let chosen = choose(&candidates, cfg.n_speakers, &mut rng);
            let eval_pool = pool_of(&|r| r.split == Split::Eval);
            (train_pool, chosen, eval_pool)
        }
        SpeakerMode::DisjointFallback => {
            let all = pool_of(&|_| true);
            let mut speakers: Vec<String> = all.keys().cloned().collect();
            speakers.shuffle(&mut rng);
            let train_speakers: Vec<String> = speakers
                .iter()
                .filter(|s| {
                    let (b, sp) = &all[*s];
                    b.len() >= cfg.n_bona_per_spk && sp.len() >= cfg.n_spoof_per_spk
                })
                .take(cfg.n_speakers)
                .cloned()
                .collect();
            let deficit = if train_speakers.len() < cfg.n_speakers {
                cfg.n_speakers - train_speakers.len()
            } else if speakers.len() <= cfg.n_speakers {
                1
            } else {
                0
            };
            if deficit > 0 {
                return Err(Error::Capacity(format!(
                    "corpus {}: disjoint-speaker mode needs {} eligible training speakers plus at least one evaluation speaker; {} speakers available (deficit {deficit})",
                    manifest.corpus_id,
                    cfg.n_speakers,
                    speakers.len(),
                )));
            }
            let taken: HashSet<&String> = train_speakers.iter().collect();
            let mut eval_pool = Pool::new();
            for (spk, utts) in &all {
                if !taken.contains(spk) {
                    eval_pool.insert(spk.clone(), utts.clone());
                }
            }
            (all, train_speakers, eval_pool)
        }
    };

    let mut train_subset = Vec::with_capacity(cfg.train_size());
    for spk in &train_speakers {
        let (bona, spoof) = &train_pool[spk];
        train_subset.extend(choose(bona, cfg.n_bona_per_spk, &mut rng));
        train_subset.extend(choose(spoof, cfg.n_spoof_per_spk, &mut rng));
    }

    let eval_bona: Vec<String> = eval_pool.values().flat_map(|(b, _)| b.clone()).collect();
    let eval_spoof: Vec<String> = eval_pool.values().flat_map(|(_, s)| s.clone()).collect();
    let total = eval_bona.len() + eval_spoof.len();
    if eval_bona.is_empty() || eval_spoof.is_empty() {
        return Err(Error::Capacity(format!(
            "corpus {}: evaluation pool needs both classes (bonafide {}, spoof {})",
            manifest.corpus_id,
            eval_bona.len(),
            eval_spoof.len()
        )));
    }
    let n_bona = ((cfg.trial_size as f64) * eval_bona.len() as f64 / total as f64)
        .round()
        .clamp(1.0, (cfg.trial_size - 1) as f64) as usize;
    let n_spoof = cfg.trial_size - n_bona;
    if n_bona > eval_bona.len() || n_spoof > eval_spoof.len() {
        return Err(Error::Capacity(format!(
            "corpus {}: trial list of {} needs {} bonafide and {} spoof evaluation utterances, pool has {} and {} (deficit {})",
            manifest.corpus_id,
            cfg.trial_size,
            n_bona,
            n_spoof,
            eval_bona.len(),
            eval_spoof.len(),
            n_bona.saturating_sub(eval_bona.len()) + n_spoof.saturating_sub(eval_spoof.len())
        )));
    }
    let trial_lists = (0..cfg.n_trial_lists)
        .map(|_| {
            let mut list = choose(&eval_bona, n_bona, &mut rng);
            list.extend(choose(&eval_spoof, n_spoof, &mut rng));
            list
        })
        .collect();

    Ok(ProtocolSet {
        corpus_id: manifest.corpus_id.clone(),
        train_subset,
        trial_lists,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DisjointReport {
    /// (trial list index, speakers shared with the training subset)
    pub overlaps: Vec<(usize, Vec<String>)>,
}

impl DisjointReport {
    pub fn passed(&self) -> bool {
        self.overlaps.is_empty()
    }
}

pub fn validate_disjoint(protocol: &ProtocolSet, manifest: &CorpusManifest) -> Result<DisjointReport> {
    let speaker_of = |utt: &str| -> Result<&str> {
        manifest
            .get(utt)
            .map(|r| r.speaker_id.as_str())
            .ok_or_else(|| {
                Error::Integrity(format!(
                    "protocol references utt_id {utt:?} absent from corpus {}",
                    manifest.corpus_id
                ))
            })
    };
    let train: BTreeSet<&str> = protocol
        .train_subset
        .iter()
        .map(|u| speaker_of(u))
        .collect::<Result<_>>()?;
    let mut report = DisjointReport::default();
    for (i, list) in protocol.trial_lists.iter().enumerate() {
        let test: BTreeSet<&str> = list.iter().map(|u| speaker_of(u)).collect::<Result<_>>()?;
        let shared: Vec<String> = train.intersection(&test).map(|s| s.to_string()).collect();
        if !shared.is_empty() {
            report.overlaps.push((i, shared));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(utt: &str, spk: &str, label: Label, split: Split) -> UtteranceRecord {
        UtteranceRecord {
            corpus_id: "toy".into(),
            utt_id: utt.into(),
            speaker_id: spk.into(),
            label,
            split,
            audio_path: format!("{utt}.wav").into(),
        }
    }

    fn parse(text: &str) -> Result<CorpusManifest> {
        parse_manifest(text, Path::new("m.csv"), PathBuf::new())
    }

    const HEADER: &str = "corpus_id,utt_id,speaker_id,label,split,audio_path\n";

    #[test]
    fn six_rows_three_per_class() {
        let mut text = HEADER.to_string();
        for i in 0..6 {
            let label = if i < 3 { "bonafide" } else { "spoof" };
            text.push_str(&format!("c,u{i},s1,{label},train,u{i}.wav\n"));
        }
        let m = parse(&text).unwrap();
        assert_eq!(m.records.len(), 6);
        assert_eq!(m.total_counts(), (3, 3));
    }

    #[test]
    fn bad_label_names_line() {
        let text = format!("{HEADER}c,u0,s1,bonafide,train,a.wav\nc,u1,s1,human,train,b.wav\n");
        match parse(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("human"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_and_header() {
        let text = format!("{HEADER}c,u0,s1,bonafide,train\n");
        assert!(matches!(parse(&text), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse("corpus,utt,speaker,label,split,path\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_and_single_class_are_integrity_errors() {
        let dup = format!("{HEADER}c,u0,s1,bonafide,train,a\nc,u0,s1,spoof,train,b\n");
        assert!(matches!(parse(&dup), Err(Error::Integrity(_))));
        let one = format!("{HEADER}c,u0,s1,bonafide,train,a\nc,u1,s1,bonafide,train,b\n");
        assert!(matches!(parse(&one), Err(Error::Integrity(_))));
    }

    #[test]
    fn speaker_sets_per_split() {
        let mut text = HEADER.to_string();
        for split in ["train", "eval"] {
            for spk in ["s1", "s2"] {
                for (label, n) in [("bonafide", 2), ("spoof", 2)] {
                    for k in 0..n {
                        text.push_str(&format!("c,{split}-{spk}-{label}-{k},{spk},{label},{split},x.wav\n"));
                    }
                }
            }
        }
        let m = parse(&text).unwrap();
        let expect: BTreeSet<String> = ["s1", "s2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(m.speakers(Split::Train), expect);
        assert_eq!(m.speakers(Split::Eval), expect);
        assert_eq!(m.class_counts(Split::Train), (4, 4));
    }

    fn toy_two_speakers() -> CorpusManifest {
        let recs = vec![
            rec("a1", "s1", Label::Bonafide, Split::Train),
            rec("a2", "s1", Label::Spoof, Split::Train),
            rec("b1", "s2", Label::Bonafide, Split::Eval),
            rec("b2", "s2", Label::Spoof, Split::Eval),
        ];
        CorpusManifest::new(recs, "").unwrap()
    }

    #[test]
    fn minimal_counts() {
        let cfg = SamplingConfig {
            n_speakers: 1,
            n_bona_per_spk: 1,
            n_spoof_per_spk: 1,
            n_trial_lists: 1,
            trial_size: 2,
            seed: 3,
            speaker_mode: SpeakerMode::PredefinedSplit,
        };
        let p = sample_protocol(&toy_two_speakers(), &cfg).unwrap();
        assert_eq!(p.train_subset, vec!["a1", "a2"]);
        assert_eq!(p.trial_lists.len(), 1);
        assert_eq!(p.trial_lists[0], vec!["b1", "b2"]);
        assert!(validate_disjoint(&p, &toy_two_speakers()).unwrap().passed());
        let back = ProtocolSet::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn planted_overlap_is_reported() {
        let m = toy_two_speakers();
        let p = ProtocolSet {
            corpus_id: "toy".into(),
            train_subset: vec!["a1".into(), "a2".into()],
            trial_lists: vec![vec!["a1".into(), "b2".into()], vec!["b1".into(), "b2".into()]],
            seed: 0,
        };
        let r = validate_disjoint(&p, &m).unwrap();
        assert_eq!(r.overlaps, vec![(0, vec!["s1".to_string()])]);
        assert!(!r.passed());
    }

    #[test]
    fn dangling_utt_is_integrity_error() {
        let p = ProtocolSet {
            corpus_id: "toy".into(),
            train_subset: vec!["zz".into()],
            trial_lists: vec![],
            seed: 0,
        };
        assert!(matches!(validate_disjoint(&p, &toy_two_speakers()), Err(Error::Integrity(_))));
    }

    #[test]
    fn one_speaker_disjoint_mode_is_capacity_error() {
        let recs = vec![
            rec("a1", "s1", Label::Bonafide, Split::Train),
            rec("a2", "s1", Label::Spoof, Split::Train),
            rec("a3", "s1", Label::Bonafide, Split::Eval),
            rec("a4", "s1", Label::Spoof, Split::Eval),
        ];
        let m = CorpusManifest::new(recs, "").unwrap();
        let cfg = SamplingConfig {
            n_speakers: 1,
            n_bona_per_spk: 1,
            n_spoof_per_spk: 1,
            n_trial_lists: 1,
            trial_size: 2,
            seed: 1,
            speaker_mode: SpeakerMode::DisjointFallback,
        };
        assert!(matches!(sample_protocol(&m, &cfg), Err(Error::Capacity(_))));
    }

    #[test]
    fn not_enough_speakers_names_deficit() {
        let cfg = SamplingConfig {
            n_speakers: 3,
            n_bona_per_spk: 1,
            n_spoof_per_spk: 1,
            n_trial_lists: 1,
            trial_size: 2,
            seed: 1,
            speaker_mode: SpeakerMode::PredefinedSplit,
        };
        match sample_protocol(&toy_two_speakers(), &cfg) {
            Err(Error::Capacity(msg)) => assert!(msg.contains("deficit 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
