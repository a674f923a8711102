//! Training losses and inverse instance weighting.
//!
//! Three losses add into the batch total: mean binary cross-entropy on click
//! logits over all impressions, softmax cross-entropy on dwell logits over
//! clicked instances only, and a weighted softmax cross-entropy on the
//! debiased logits, normalized by the weight sum. Instance weights follow
//! `w_i = max(l_ctr_i, clamp_eps)^(-alpha) * l_dt_i + gamma`: instances whose
//! click prediction is accurate but whose dwell prediction is poor get more
//! weight, steering the extractor toward spurious click-dwell shortcuts.
//!
//! These are the pure reporting implementations; the tape ops used for
//! gradients must agree with them (covered by tests).

use crate::error::{OrcaError, Result};

/// Eq-style instance weight: low click loss and high dwell loss raise it.
/// The click loss is clamped below at `clamp_eps` before the negative power
/// so the weight stays finite; the result is clamped at zero.
pub fn instance_weight(l_ctr: f64, l_dt: f64, alpha: f64, gamma: f64, clamp_eps: f64) -> f64 {
    (l_ctr.max(clamp_eps).powf(-alpha) * l_dt + gamma).max(0.0)
}

/// Batch instance weights; counts how many were clamped at zero (negative
/// `gamma` can push weights below zero, which is floored and reported).
pub fn instance_weights(
    l_ctr: &[f64],
    l_dt: &[f64],
    alpha: f64,
    gamma: f64,
    clamp_eps: f64,
) -> (Vec<f64>, usize) {
    let mut clamped = 0usize;
    let weights = l_ctr
        .iter()
        .zip(l_dt)
        .map(|(&c, &d)| {
            let raw = c.max(clamp_eps).powf(-alpha) * d + gamma;
            if raw < 0.0 {
                clamped += 1;
            }
            raw.max(0.0)
        })
        .collect();
    (weights, clamped)
}

const PROB_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all impressions, on probabilities clipped
/// into `(0, 1)`. Returns the mean and the per-instance vector.
pub fn loss_ctr(ctr_probs: &[f64], clicked: &[f64]) -> Result<(f64, Vec<f64>)> {
    if ctr_probs.is_empty() || ctr_probs.len() != clicked.len() {
        return Err(OrcaError::data("loss_ctr needs equal non-empty inputs"));
    }
    let per: Vec<f64> = ctr_probs
        .iter()
        .zip(clicked)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .collect();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((mean, per))
}

/// Softmax cross-entropy averaged over clicked instances only; unclicked
/// instances contribute zero and are excluded from the denominator. The
/// boolean is false when the batch has no clicked instance (loss 0, no
/// gradient).
pub fn loss_dt(
    dt_logits: &ndarray::Array2<f64>,
    dwell_bins: &[usize],
    clicked_mask: &[bool],
) -> Result<(f64, Vec<f64>, bool)> {
    if dt_logits.nrows() != dwell_bins.len() || dwell_bins.len() != clicked_mask.len() {
        return Err(OrcaError::data("loss_dt inputs have mismatched lengths"));
    }
    let per = crate::nn::tape::ce_per_instance(dt_logits, dwell_bins, clicked_mask);
    let n = clicked_mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Ok((0.0, per, false));
    }
    Ok((per.iter().sum::<f64>() / n as f64, per, true))
}

/// Weighted softmax cross-entropy over clicked instances, normalized by the
/// sum of the weights. The boolean is false when the effective weight mass is
/// zero (loss 0, no gradient).
pub fn loss_orca(
    orca_logits: &ndarray::Array2<f64>,
    dwell_bins: &[usize],
    weights: &[f64],
    clicked_mask: &[bool],
) -> Result<(f64, bool)> {
    if orca_logits.nrows() != dwell_bins.len()
        || weights.len() != dwell_bins.len()
        || clicked_mask.len() != dwell_bins.len()
    {
        return Err(OrcaError::data("loss_orca inputs have mismatched lengths"));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(OrcaError::data("loss_orca weights must be non-negative"));
    }
    let per = crate::nn::tape::ce_per_instance(orca_logits, dwell_bins, clicked_mask);
    let wsum: f64 = weights
        .iter()
        .zip(clicked_mask)
        .filter(|&(_, &m)| m)
        .map(|(&w, _)| w)
        .sum();
    if wsum <= 0.0 {
        return Ok((0.0, false));
    }
    let total: f64 = per
        .iter()
        .zip(weights)
        .zip(clicked_mask)
        .filter(|&(_, &m)| m)
        .map(|((&l, &w), _)| w * l)
        .sum();
    Ok((total / wsum, true))
}

/// Per-batch loss summary.
#[derive(Debug, Clone)]
pub struct BatchLosses {
    pub loss_ctr: f64,
    pub loss_dt: f64,
    pub loss_orca: f64,
    pub total: f64,
    pub per_instance_ctr: Vec<f64>,
    pub per_instance_dt: Vec<f64>,
    pub weights: Vec<f64>,
}
