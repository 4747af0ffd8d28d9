//! Soft-confusion precision / F1, rank-statistic ROC-AUC and resource
//! profiling.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};

/// Confusion sums built from confidences instead of hard decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftConfusion {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub tn: f64,
}

pub fn soft_confusion(confidences: &[f64], is_id: &[bool]) -> Result<SoftConfusion> {
    check_dim(confidences.len(), is_id.len())?;
    if confidences.is_empty() {
        return Err(invalid("soft confusion of an empty set"));
    }
    if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(invalid("confidences must lie in [0, 1]"));
    }
    let mut c = SoftConfusion { tp: 0.0, fp: 0.0, fn_: 0.0, tn: 0.0 };
    for (&p, &id) in confidences.iter().zip(is_id) {
        if id {
            c.tp += p;
            c.fn_ += 1.0 - p;
        } else {
            c.fp += p;
            c.tn += 1.0 - p;
        }
    }
    Ok(c)
}

/// Precision and F1; degenerate denominators yield 0.
pub fn precision_f1(c: &SoftConfusion) -> (f64, f64) {
    let precision = if c.tp + c.fp > 0.0 { c.tp / (c.tp + c.fp) } else { 0.0 };
    let recall = if c.tp + c.fn_ > 0.0 { c.tp / (c.tp + c.fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    (precision, f1)
}

/// Probability that an ID point is more confident than an OOD point, ties
/// counting half, computed from mid-ranks in `O(n log n)`.
pub fn roc_auc(confidences: &[f64], is_id: &[bool]) -> Result<f64> {
    check_dim(confidences.len(), is_id.len())?;
    let n_id = is_id.iter().filter(|&&b| b).count() as u64;
    let n_ood = is_id.len() as u64 - n_id;
    if n_id == 0 || n_ood == 0 {
        return Err(invalid("ROC-AUC needs both ID and OOD points"));
    }
    if confidences.iter().any(|c| c.is_nan()) {
        return Err(invalid("confidences contain NaN"));
    }
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]));
    // twice the rank sum of ID points, with 1-based mid-ranks (always integral when doubled)
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && confidences[order[j + 1]] == confidences[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        let ids = order[i..=j].iter().filter(|&&k| is_id[k]).count() as u64;
        twice_rank_sum += twice_mid * ids;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - n_id * (n_id + 1);
    Ok(twice_u as f64 / (2 * n_id * n_ood) as f64)
}

/// One report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub detector: String,
    pub toy: String,
    pub precision: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub fit_time_s: f64,
    pub score_time_s: f64,
    pub memory_kib: f64,
}

pub const REPORT_COLUMNS: [&str; 8] =
    ["detector", "toy", "precision", "f1", "roc_auc", "fit_time_s", "score_time_s", "memory_kib"];

/// Precision, F1 and ROC-AUC from confidences and ground truth.
pub fn evaluate(confidences: &[f64], is_id: &[bool]) -> Result<(f64, f64, f64)> {
    let (p, f) = precision_f1(&soft_confusion(confidences, is_id)?);
    Ok((p, f, roc_auc(confidences, is_id)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub fit_time_s: f64,
    pub score_time_s: f64,
    pub memory_kib: f64,
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

/// Median-of-three wall-clock timings of fitting and scoring, plus the
/// serialised size of the last fitted model.
pub fn profile<M, E>(
    mut fit: impl FnMut() -> std::result::Result<M, E>,
    mut score: impl FnMut(&M) -> std::result::Result<(), E>,
    serialize: impl Fn(&M) -> std::result::Result<Vec<u8>, E>,
) -> std::result::Result<Profile, E> {
    let mut fit_t = [0.0; 3];
    let mut score_t = [0.0; 3];
    let mut model = None;
    for i in 0..3 {
        let t = Instant::now();
        let m = fit()?;
        fit_t[i] = t.elapsed().as_secs_f64();
        let t = Instant::now();
        score(&m)?;
        score_t[i] = t.elapsed().as_secs_f64();
        model = Some(m);
    }
    let bytes = serialize(model.as_ref().expect("three runs"))?;
    Ok(Profile { fit_time_s: median3(fit_t), score_time_s: median3(score_t), memory_kib: bytes.len() as f64 / 1024.0 })
}
