//! Output tables of a run and their readers.
//!
//! | file | columns |
//! |---|---|
//! | `experiments.csv` | `classifier,train_corpus,test_corpus,trial_idx,scope,eer,threshold` |
//! | `distances.csv` | `train_corpus,test_corpus,trial_idx,feature,d12,d13,d23,d14,d24,d34` |
//! | `correlations.csv` | `feature,classifier,scope,n,d12,…,d34` (empty cell: undefined) |
//! | `feature_models.csv` | `feature,classifier,scope,n,r2,adj_r2,coef_intercept,coef_d12,…,coef_d34,dropped` |
//! | `eer_matrix.csv` | `classifier,train_corpus,<test corpus ids…>`, mean EER per cell |
//! | `eer_distribution.csv` | `classifier,scope,train_corpus,test_corpus,trial_idx,eer` |
//! | `ltas_matrix.csv` | `corpus_id,utt_id,label,b0,…,b256` |
//!
//! Floats are written in shortest round-trip form, so reading a table back
//! reproduces the values bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::distance::{DistanceVector, PAIR_NAMES};
use crate::error::{Error, Result};
use crate::regression::{CorrelationTable, ExperimentRow, RegressionFit, Scope};

pub const EXPERIMENTS: &str = "experiments.csv";
pub const DISTANCES: &str = "distances.csv";
pub const CORRELATIONS: &str = "correlations.csv";
pub const FEATURE_MODELS: &str = "feature_models.csv";
pub const EER_MATRIX: &str = "eer_matrix.csv";
pub const EER_DISTRIBUTION: &str = "eer_distribution.csv";
pub const LTAS_MATRIX: &str = "ltas_matrix.csv";
pub const SUMMARY: &str = "summary.json";
pub const INCOMPLETE: &str = "INCOMPLETE";

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One `distances.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub train_corpus: String,
    pub test_corpus: String,
    pub trial_idx: usize,
    pub feature: String,
    pub distances: DistanceVector,
}

pub fn distances_csv(rows: &[DistanceRow]) -> String {
    let mut out = format!("train_corpus,test_corpus,trial_idx,feature,{}\n", PAIR_NAMES.join(","));
    for r in rows {
        write!(out, "{},{},{},{}", r.train_corpus, r.test_corpus, r.trial_idx, r.feature).unwrap();
        for d in r.distances.as_array() {
            write!(out, ",{d}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn records(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let got = reader.headers().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, message: format!("header must be {}", header.join(",")) });
    }
    reader
        .records()
        .enumerate()
        .map(|(i, r)| {
            r.map(|rec| (i + 2, rec))
                .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 2, message: e.to_string() })
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    rec[i].parse().map_err(|e: T::Err| Error::Parse { path: path.to_path_buf(), line, message: format!("column {}: {e}", i + 1) })
}

pub fn read_distances(path: &Path) -> Result<Vec<DistanceRow>> {
    let header: Vec<&str> = ["train_corpus", "test_corpus", "trial_idx", "feature"].into_iter().chain(PAIR_NAMES).collect();
    records(path, &header)?
        .into_iter()
        .map(|(line, rec)| {
            let mut d = [0.0; 6];
            for (k, v) in d.iter_mut().enumerate() {
                *v = field(path, line, &rec, 4 + k)?;
            }
            Ok(DistanceRow {
                train_corpus: rec[0].to_string(),
                test_corpus: rec[1].to_string(),
                trial_idx: field(path, line, &rec, 2)?,
                feature: rec[3].to_string(),
                distances: DistanceVector::from_array(d),
            })
        })
        .collect()
}

const EXPERIMENT_HEADER: [&str; 7] = ["classifier", "train_corpus", "test_corpus", "trial_idx", "scope", "eer", "threshold"];

pub fn experiments_csv(rows: &[ExperimentRow]) -> String {
    let mut out = EXPERIMENT_HEADER.join(",") + "\n";
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.classifier, r.train_corpus, r.test_corpus, r.trial_idx, r.scope, r.eer, r.threshold
        )
        .unwrap();
    }
    out
}

/// Reads `experiments.csv`, attaching the matching rows of `distances`.
pub fn read_experiments(path: &Path, distances: &[DistanceRow]) -> Result<Vec<ExperimentRow>> {
    let mut by_key: BTreeMap<(&str, &str, usize), BTreeMap<String, DistanceVector>> = BTreeMap::new();
    for d in distances {
        by_key
            .entry((&d.train_corpus, &d.test_corpus, d.trial_idx))
            .or_default()
            .insert(d.feature.clone(), d.distances);
    }
    records(path, &EXPERIMENT_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let trial_idx = field(path, line, &rec, 3)?;
            let row = ExperimentRow {
                classifier: rec[0].to_string(),
                train_corpus: rec[1].to_string(),
                test_corpus: rec[2].to_string(),
                trial_idx,
                scope: field(path, line, &rec, 4)?,
                eer: field(path, line, &rec, 5)?,
                threshold: field(path, line, &rec, 6)?,
                distances: by_key.get(&(&rec[1], &rec[2], trial_idx)).cloned().unwrap_or_default(),
            };
            row.validate()?;
            Ok(row)
        })
        .collect()
}

pub fn correlations_csv(tables: &[CorrelationTable]) -> String {
    let mut out = format!("feature,classifier,scope,n,{}\n", PAIR_NAMES.join(","));
    for t in tables {
        for (si, scope) in Scope::ALL.into_iter().enumerate() {
            write!(out, "{},{},{},{}", t.feature, t.classifier, scope, t.n[si]).unwrap();
            for c in t.cells[si] {
                match c {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn feature_models_csv(fits: &[RegressionFit]) -> String {
    let coefs: Vec<String> = std::iter::once("coef_intercept".to_string())
        .chain(PAIR_NAMES.iter().map(|p| format!("coef_{p}")))
        .collect();
    let mut out = format!("feature,classifier,scope,n,r2,adj_r2,{},dropped\n", coefs.join(","));
    let names: Vec<&str> = std::iter::once("intercept").chain(PAIR_NAMES).collect();
    for f in fits {
        write!(out, "{},{},{},{},{},{}", f.feature, f.classifier, f.scope, f.n, f.r_squared, f.adj_r_squared).unwrap();
        for c in f.coefficients {
            write!(out, ",{c}").unwrap();
        }
        let dropped: Vec<&str> = f.dropped.iter().map(|&i| names[i]).collect();
        writeln!(out, ",{}", dropped.join(";")).unwrap();
    }
    out
}

/// Mean EER per (train, test) cell, one block of rows per classifier.
pub fn eer_matrix_csv(rows: &[ExperimentRow], corpora: &[String]) -> String {
    let mut out = format!("classifier,train_corpus,{}\n", corpora.join(","));
    let mut cells: BTreeMap<(&str, &str, &str), (f64, usize)> = BTreeMap::new();
    let mut classifiers: Vec<&str> = Vec::new();
    for r in rows {
        if !classifiers.contains(&r.classifier.as_str()) {
            classifiers.push(&r.classifier);
        }
        let c = cells.entry((&r.classifier, &r.train_corpus, &r.test_corpus)).or_default();
        c.0 += r.eer;
        c.1 += 1;
    }
    for clf in classifiers {
        for train in corpora {
            write!(out, "{clf},{train}").unwrap();
            for test in corpora {
                match cells.get(&(clf, train.as_str(), test.as_str())) {
                    Some((sum, n)) => write!(out, ",{}", sum / *n as f64).unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn eer_distribution_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from("classifier,scope,train_corpus,test_corpus,trial_idx,eer\n");
    let mut sorted: Vec<&ExperimentRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.classifier, a.scope).cmp(&(&b.classifier, b.scope)));
    for r in sorted {
        writeln!(out, "{},{},{},{},{},{}", r.classifier, r.scope, r.train_corpus, r.test_corpus, r.trial_idx, r.eer).unwrap();
    }
    out
}

/// One LTAS vector per utterance for external projection.
pub fn ltas_matrix_csv(rows: &[(String, String, String, Vec<f64>)]) -> String {
    let dim = rows.first().map_or(0, |r| r.3.len());
    let mut out = String::from("corpus_id,utt_id,label");
    for b in 0..dim {
        write!(out, ",b{b}").unwrap();
    }
    out.push('\n');
    for (corpus, utt, label, v) in rows {
        write!(out, "{corpus},{utt},{label}").unwrap();
        for x in v {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiments_and_distances_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = DistanceRow {
            train_corpus: "a".into(),
            test_corpus: "b".into(),
            trial_idx: 3,
            feature: "ltas".into(),
            distances: DistanceVector::from_array([0.1, 1.0 / 3.0, 2.5e-17, 4.0, 5.0, 6.0]),
        };
        let row = ExperimentRow {
            classifier: "lfcc-gmm".into(),
            train_corpus: "a".into(),
            test_corpus: "b".into(),
            trial_idx: 3,
            scope: Scope::Across,
            eer: 100.0 / 3.0,
            threshold: -0.125,
            distances: [("ltas".to_string(), d.distances)].into(),
        };
        let dp = dir.path().join(DISTANCES);
        let ep = dir.path().join(EXPERIMENTS);
        write(&dp, &distances_csv(std::slice::from_ref(&d))).unwrap();
        write(&ep, &experiments_csv(std::slice::from_ref(&row))).unwrap();
        let ds = read_distances(&dp).unwrap();
        assert_eq!(ds, vec![d]);
        assert_eq!(read_experiments(&ep, &ds).unwrap(), vec![row]);
    }

    #[test]
    fn eer_matrix_shape() {
        let mk = |tr: &str, te: &str, eer: f64| ExperimentRow {
            classifier: "x".into(),
            train_corpus: tr.into(),
            test_corpus: te.into(),
            trial_idx: 0,
            scope: Scope::of(tr, te),
            eer,
            threshold: 0.0,
            distances: BTreeMap::new(),
        };
        let rows = vec![mk("a", "a", 1.0), mk("a", "a", 3.0), mk("a", "b", 10.0), mk("b", "a", 20.0), mk("b", "b", 4.0)];
        let text = eer_matrix_csv(&rows, &["a".into(), "b".into()]);
        assert_eq!(text, "classifier,train_corpus,a,b\nx,a,2,10\nx,b,20,4\n");
    }
}
