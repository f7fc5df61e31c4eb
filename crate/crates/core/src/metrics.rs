//! Equal error rate of a bonafide-vs-spoof score set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::CmScoreSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    /// Percent, in `[0, 100]`.
    pub eer: f64,
    pub threshold: f64,
}

/// EER from raw bonafide and spoof scores.
///
/// At threshold `t` a bonafide score below `t` is a miss and a spoof score at
/// or above `t` is a false alarm. Thresholds run over the sorted unique scores
/// plus a final point past the maximum (all missed, none accepted); the EER is
/// read where `miss - fa` changes sign, interpolating linearly between the two
/// operating points that bracket the crossing.
pub fn compute_eer(bona: &[f64], spoof: &[f64]) -> Result<EerResult> {
    if bona.is_empty() || spoof.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "EER needs both classes, got {} bonafide and {} spoof",
            bona.len(),
            spoof.len()
        )));
    }
    if bona.iter().chain(spoof).any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let (nb, ns) = (bona.len() as i128, spoof.len() as i128);
    let mut b = bona.to_vec();
    let mut s = spoof.to_vec();
    b.sort_by(f64::total_cmp);
    s.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = b.iter().chain(&s).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    // miss_c = #bona < t, fa_c = #spoof >= t
    let (mut ib, mut is) = (0usize, 0usize);
    let mut prev: Option<(i128, i128, f64)> = None;
    let finish = |m0: i128, f0: i128, t0: f64, m1: i128, f1: i128, t1: f64| {
        let d0 = m0 * ns - f0 * nb;
        let d1 = m1 * ns - f1 * nb;
        let lambda = if d1 == d0 { 0.0 } else { -(d0 as f64) / (d1 - d0) as f64 };
        let miss0 = m0 as f64 / nb as f64;
        let miss1 = m1 as f64 / nb as f64;
        let eer = miss0 + lambda * (miss1 - miss0);
        let threshold = if t1.is_finite() { t0 + lambda * (t1 - t0) } else { t0 };
        EerResult { eer: 100.0 * eer, threshold }
    };
    for &t in thresholds.iter().chain(std::iter::once(&f64::INFINITY)) {
        while ib < b.len() && b[ib] < t {
            ib += 1;
        }
        while is < s.len() && s[is] < t {
            is += 1;
        }
        let miss_c = ib as i128;
        let fa_c = (s.len() - is) as i128;
        let d = miss_c * ns - fa_c * nb;
        if d == 0 {
            let threshold = if t.is_finite() { t } else { thresholds[thresholds.len() - 1] };
            return Ok(EerResult { eer: 100.0 * miss_c as f64 / nb as f64, threshold });
        }
        if d > 0 {
            let (m0, f0, t0) = prev.expect("the lowest threshold accepts every spoof score");
            return Ok(finish(m0, f0, t0, miss_c, fa_c, t));
        }
        prev = Some((miss_c, fa_c, t));
    }
    unreachable!("the final threshold rejects every score")
}

pub fn eer_of(scores: &CmScoreSet) -> Result<EerResult> {
    let (b, s) = scores.split();
    compute_eer(&b, &s)
}
