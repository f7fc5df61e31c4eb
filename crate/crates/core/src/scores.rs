//! Countermeasure score sets and the `utt_id,label,score` CSV format.
//!
//! A score file may start with a `# classifier=<name>` line naming the system
//! that produced it; externally computed scores use this to label their rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::Label;
use crate::error::{Error, Result};

pub const SCORE_HEADER: &str = "utt_id,label,score";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub utt_id: String,
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CmScoreSet {
    pub classifier: Option<String>,
    pub records: Vec<ScoreRecord>,
}

impl CmScoreSet {
    pub fn new(records: Vec<ScoreRecord>) -> Self {
        Self { classifier: None, records }
    }

    pub fn push(&mut self, utt_id: impl Into<String>, label: Label, score: f64) {
        self.records.push(ScoreRecord { utt_id: utt_id.into(), label, score });
    }

    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        let mut bona = Vec::new();
        let mut spoof = Vec::new();
        for r in &self.records {
            match r.label {
                Label::Bonafide => bona.push(r.score),
                Label::Spoof => spoof.push(r.score),
            }
        }
        (bona, spoof)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !r.score.is_finite() {
                return Err(Error::Numeric(format!("score of {} is not finite", r.utt_id)));
            }
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::Integrity(format!("duplicate score for {}", r.utt_id)));
            }
        }
        Ok(())
    }

    /// Restricts the set to `utt_ids`, failing with every id that has no score.
    pub fn select(&self, utt_ids: &[String]) -> Result<CmScoreSet> {
        let index: BTreeMap<&str, &ScoreRecord> = self.records.iter().map(|r| (r.utt_id.as_str(), r)).collect();
        let missing: Vec<String> = utt_ids.iter().filter(|u| !index.contains_key(u.as_str())).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingScores(missing));
        }
        Ok(CmScoreSet {
            classifier: self.classifier.clone(),
            records: utt_ids.iter().map(|u| index[u.as_str()].clone()).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(c) = &self.classifier {
            writeln!(out, "# classifier={c}").unwrap();
        }
        out.push_str(SCORE_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(out, "{},{},{}", r.utt_id, r.label, r.score).unwrap();
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { path: origin.to_path_buf(), line, message };
        let mut classifier = None;
        let mut records = Vec::new();
        let mut header_seen = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(name) = comment.trim().strip_prefix("classifier=") {
                    classifier = Some(name.trim().to_string());
                }
                continue;
            }
            if !header_seen {
                if line != SCORE_HEADER {
                    return Err(err(line_no, format!("header must be {SCORE_HEADER}")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(line_no, format!("expected 3 columns, found {}", fields.len())));
            }
            let label = fields[1].parse().map_err(|m| err(line_no, m))?;
            let score: f64 = fields[2].parse().map_err(|e| err(line_no, format!("score: {e}")))?;
            records.push(ScoreRecord { utt_id: fields[0].to_string(), label, score });
        }
        if !header_seen {
            return Err(err(1, format!("missing header {SCORE_HEADER}")));
        }
        let set = CmScoreSet { classifier, records };
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
