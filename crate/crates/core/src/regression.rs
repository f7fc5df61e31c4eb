//! Pearson correlations and per-feature multiple regressions of EER on the
//! six Chamfer distances, split by within-corpus and across-corpus scope.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distance::DistanceVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Within,
    Across,
}

impl Scope {
    pub const ALL: [Scope; 2] = [Scope::Within, Scope::Across];

    pub fn of(train_corpus: &str, test_corpus: &str) -> Self {
        if train_corpus == test_corpus {
            Scope::Within
        } else {
            Scope::Across
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Within => "within",
            Scope::Across => "across",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" => Ok(Scope::Within),
            "across" => Ok(Scope::Across),
            _ => Err(Error::Format(format!("invalid scope {s:?}"))),
        }
    }
}

/// One (training corpus, test corpus, trial list, classifier) experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub train_corpus: String,
    pub test_corpus: String,
    pub trial_idx: usize,
    pub scope: Scope,
    pub classifier: String,
    /// Percent.
    pub eer: f64,
    pub threshold: f64,
    /// Absent features had an empty cloud for this experiment.
    pub distances: BTreeMap<String, DistanceVector>,
}

impl ExperimentRow {
    pub fn validate(&self) -> Result<()> {
        if self.scope != Scope::of(&self.train_corpus, &self.test_corpus) {
            return Err(Error::Integrity(format!(
                "scope {} inconsistent with {} -> {}",
                self.scope, self.train_corpus, self.test_corpus
            )));
        }
        if !(0.0..=100.0).contains(&self.eer) {
            return Err(Error::Numeric(format!("EER {} outside [0, 100]", self.eer)));
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!("pearson needs 3 pairs, got {}", x.len())));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance("constant sequence".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// One per design column; 0 for dropped columns.
    pub coefficients: Vec<f64>,
    /// Design columns dropped as numerically dependent.
    pub dropped: Vec<usize>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub n: usize,
    /// Predictors excluding the intercept.
    pub p: usize,
}

pub fn adjusted_r2(r2: f64, n: usize, p: usize) -> f64 {
    1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0)
}

/// Least squares by Householder QR with column pivoting.
///
/// `x` holds the rows of the design matrix, first column the intercept.
/// Columns whose remaining norm falls below `1e-10 ‖X‖_F` are dropped.
pub fn ols_fit(x: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let n = x.len();
    let m = x.first().map_or(0, Vec::len);
    let p = m.saturating_sub(1);
    if n != y.len() {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    if m == 0 || n <= p + 1 {
        return Err(Error::InsufficientData(format!("{n} observations for {p} predictors")));
    }
    if x.iter().any(|r| r.len() != m) {
        return Err(Error::Data("ragged design matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite design or response value".into()));
    }
    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..m).map(|j| x.iter().map(|r| r[j]).collect()).collect();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..m).collect();
    let fro = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let tol = 1e-10 * fro;
    let mut rank = 0;
    for j in 0..m {
        let norm_below = |col: &Vec<f64>| col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let (best, best_norm) = (j..m)
            .map(|c| (c, norm_below(&a[c])))
            .fold((j, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_norm <= tol {
            break;
        }
        a.swap(j, best);
        perm.swap(j, best);
        // reflector v with H = I - 2 v vᵀ / vᵀv mapping a[j][j..] to -sign·norm e1
        let alpha = if a[j][j] >= 0.0 { -best_norm } else { best_norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|t| t * t).sum();
        if vtv > 0.0 {
            for col in a.iter_mut().skip(j) {
                let s = 2.0 * v.iter().zip(&col[j..]).map(|(p, q)| p * q).sum::<f64>() / vtv;
                for (c, vi) in col[j..].iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            let s = 2.0 * v.iter().zip(&qty[j..]).map(|(p, q)| p * q).sum::<f64>() / vtv;
            for (c, vi) in qty[j..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        rank += 1;
    }
    // back substitution on the leading rank×rank triangle
    let mut b_piv = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for (k, bk) in b_piv.iter().enumerate().skip(i + 1) {
            s -= a[k][i] * bk;
        }
        b_piv[i] = s / a[i][i];
    }
    let mut coefficients = vec![0.0; m];
    for (i, &col) in perm.iter().enumerate().take(rank) {
        coefficients[col] = b_piv[i];
    }
    let mut dropped: Vec<usize> = perm[rank..].to_vec();
    dropped.sort_unstable();

    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(row, yi)| yi - row.iter().zip(&coefficients).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let my = mean(y);
    let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sst == 0.0 {
        return Err(Error::DegenerateVariance("constant response".into()));
    }
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = (1.0 - ssr / sst).clamp(0.0, 1.0);
    Ok(OlsFit { coefficients, dropped, residuals, r_squared, adj_r_squared: adjusted_r2(r_squared, n, p), n, p })
}

/// Pearson of each distance against EER, per scope. `None` marks a cell with
/// a constant input (degenerate variance) or too few rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub feature: String,
    pub classifier: String,
    /// `cells[scope][pair]`, scope order `Scope::ALL`, pair order `distance::PAIRS`.
    pub cells: [[Option<f64>; 6]; 2],
    pub n: [usize; 2],
}

fn group<'a>(rows: &'a [ExperimentRow], feature: &str, classifier: &str, scope: Scope) -> Vec<(&'a ExperimentRow, [f64; 6])> {
    rows.iter()
        .filter(|r| r.classifier == classifier && r.scope == scope)
        .filter_map(|r| r.distances.get(feature).map(|d| (r, d.as_array())))
        .collect()
}

pub fn correlation_table(rows: &[ExperimentRow], feature: &str, classifier: &str) -> CorrelationTable {
    let mut cells = [[None; 6]; 2];
    let mut n = [0; 2];
    for (si, scope) in Scope::ALL.into_iter().enumerate() {
        let g = group(rows, feature, classifier, scope);
        n[si] = g.len();
        let eer: Vec<f64> = g.iter().map(|(r, _)| r.eer).collect();
        for (k, cell) in cells[si].iter_mut().enumerate() {
            let d: Vec<f64> = g.iter().map(|(_, d)| d[k]).collect();
            *cell = pearson(&d, &eer).ok();
        }
    }
    CorrelationTable { feature: feature.to_string(), classifier: classifier.to_string(), cells, n }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub feature: String,
    pub classifier: String,
    pub scope: Scope,
    /// Intercept then d12, d13, d23, d14, d24, d34.
    pub coefficients: [f64; 7],
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub n: usize,
    pub p: usize,
    pub dropped: Vec<usize>,
}

/// A (feature, classifier, scope) group that could not be fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedFit {
    pub feature: String,
    pub classifier: String,
    pub scope: Scope,
    pub reason: String,
}

pub fn feature_model_table(
    rows: &[ExperimentRow],
    classifiers: &[String],
    features: &[String],
) -> (Vec<RegressionFit>, Vec<SkippedFit>) {
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for feature in features {
        for classifier in classifiers {
            for scope in Scope::ALL {
                let g = group(rows, feature, classifier, scope);
                let design: Vec<Vec<f64>> = g
                    .iter()
                    .map(|(_, d)| std::iter::once(1.0).chain(d.iter().copied()).collect())
                    .collect();
                let y: Vec<f64> = g.iter().map(|(r, _)| r.eer).collect();
                let skip = |reason: String| SkippedFit {
                    feature: feature.clone(),
                    classifier: classifier.clone(),
                    scope,
                    reason,
                };
                if g.len() <= 7 {
                    skipped.push(skip(format!("{} rows, need more than 7", g.len())));
                    continue;
                }
                match ols_fit(&design, &y) {
                    Ok(fit) => fits.push(RegressionFit {
                        feature: feature.clone(),
                        classifier: classifier.clone(),
                        scope,
                        coefficients: fit.coefficients.try_into().expect("seven design columns"),
                        r_squared: fit.r_squared,
                        adj_r_squared: fit.adj_r_squared,
                        n: fit.n,
                        p: fit.p,
                        dropped: fit.dropped,
                    }),
                    Err(e) => skipped.push(skip(e.to_string())),
                }
            }
        }
    }
    (fits, skipped)
}
