//! Evaluation metrics: class-distance errors, the classification report,
//! median-mapped regression errors, and rank-based AUC.
//!
//! Dwell metrics are computed over clicked instances only; AUC covers all
//! impressions. Argmax ties break toward the lowest bin index. Macro averages
//! run over all `m` classes including absent ones (0/0 treated as 0);
//! weighted F1 weights by true support.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::binning::BinningSpec;
use crate::error::{OrcaError, Result};

/// The full metric suite for one evaluation split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae_class: f64,
    pub rmse_class: f64,
    pub weighted_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub mae_seconds: f64,
    pub rmse_seconds: f64,
    pub auc: f64,
    pub n_clicked: usize,
    pub n_total: usize,
}

/// Argmax with ties resolved to the lowest index.
pub fn argmax_bin(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted bins from debiased logits, row by row.
pub fn pred_bins_from_logits(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| argmax_bin(r.as_slice().unwrap()))
        .collect()
}

/// Mean absolute and root-mean-square bin distance.
pub fn mae_rmse_class(pred_bins: &[usize], true_bins: &[usize]) -> Result<(f64, f64)> {
    if pred_bins.is_empty() || pred_bins.len() != true_bins.len() {
        return Err(OrcaError::data("mae_rmse_class needs equal non-empty inputs"));
    }
    let n = pred_bins.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (&p, &t) in pred_bins.iter().zip(true_bins) {
        let d = p as f64 - t as f64;
        abs += d.abs();
        sq += d * d;
    }
    Ok((abs / n, (sq / n).sqrt()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassRow {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub weighted_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub per_class: Vec<ClassRow>,
}

/// Per-class precision / recall / F1 with macro and support-weighted
/// aggregates over all `m` classes.
pub fn classification_report(
    pred_bins: &[usize],
    true_bins: &[usize],
    m: usize,
) -> Result<ClassificationReport> {
    if pred_bins.is_empty() || pred_bins.len() != true_bins.len() {
        return Err(OrcaError::data("classification_report needs equal non-empty inputs"));
    }
    if pred_bins.iter().chain(true_bins).any(|&b| b >= m) {
        return Err(OrcaError::data("bin index out of range"));
    }
    let mut tp = vec![0usize; m];
    let mut pred_count = vec![0usize; m];
    let mut true_count = vec![0usize; m];
    for (&p, &t) in pred_bins.iter().zip(true_bins) {
        pred_count[p] += 1;
        true_count[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_class: Vec<ClassRow> = (0..m)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], true_count[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassRow { class: c, precision, recall, f1, support: true_count[c] }
        })
        .collect();
    let n = pred_bins.len() as f64;
    Ok(ClassificationReport {
        weighted_f1: per_class.iter().map(|r| r.f1 * r.support as f64 / n).sum(),
        macro_precision: per_class.iter().map(|r| r.precision).sum::<f64>() / m as f64,
        macro_recall: per_class.iter().map(|r| r.recall).sum::<f64>() / m as f64,
        per_class,
    })
}

/// Regression errors after mapping each predicted bin to its median dwell.
pub fn mae_rmse_seconds(
    pred_bins: &[usize],
    true_dwell_seconds: &[f64],
    spec: &BinningSpec,
) -> Result<(f64, f64)> {
    if pred_bins.is_empty() || pred_bins.len() != true_dwell_seconds.len() {
        return Err(OrcaError::data("mae_rmse_seconds needs equal non-empty inputs"));
    }
    let n = pred_bins.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (&p, &t) in pred_bins.iter().zip(true_dwell_seconds) {
        let med = crate::binning::bin_median(p, spec)?;
        let d = med - t;
        abs += d.abs();
        sq += d * d;
    }
    Ok((abs / n, (sq / n).sqrt()))
}

/// Rank-based AUC: the probability that a random positive outranks a random
/// negative, ties counting one half. Errors when either class is absent.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(OrcaError::data("auc needs equal non-empty inputs"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(OrcaError::data("AUC undefined: one class absent"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average ranks across ties, then sum positive ranks.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0; // 1-based ranks i+1 ..= j+1
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}
