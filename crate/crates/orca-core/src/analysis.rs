//! Diagnostic analyses over predictions: click-probability / dwell-bin
//! heatmaps, moderate-bin mass recovery, click-conditioned signed bin error,
//! and the leave-one-feature-out probe that identifies post-click fields.

use serde::Serialize;

use crate::error::{OrcaError, Result};
use crate::metrics::{auc, mae_rmse_class};
use crate::model::OrcaModel;
use crate::schema::{FeatureSchema, InteractionRecord, UNKNOWN_INDEX};

/// Rank-based quantile group per instance: stable-sorts by score and cuts
/// into `n_groups` near-equal parts, so constant scores still split evenly.
fn rank_groups(scores: &[f64], n_groups: usize) -> Vec<usize> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut groups = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        groups[i] = (rank * n_groups / n).min(n_groups - 1);
    }
    groups
}

#[derive(Debug, Clone, Serialize)]
pub struct Heatmap {
    /// `counts[decile][bin]`.
    pub counts: Vec<Vec<usize>>,
    pub row_marginals: Vec<usize>,
    pub col_marginals: Vec<usize>,
}

/// Count clicked instances per (click-probability decile, dwell bin) cell.
pub fn heatmap(ctr_probs: &[f64], bins: &[usize], m: usize, n_deciles: usize) -> Result<Heatmap> {
    if ctr_probs.is_empty() || ctr_probs.len() != bins.len() {
        return Err(OrcaError::data("heatmap needs equal non-empty inputs"));
    }
    if n_deciles == 0 {
        return Err(OrcaError::config("n_deciles must be positive"));
    }
    let groups = rank_groups(ctr_probs, n_deciles);
    let mut counts = vec![vec![0usize; m]; n_deciles];
    for (&g, &b) in groups.iter().zip(bins) {
        if b >= m {
            return Err(OrcaError::data(format!("bin {b} out of range")));
        }
        counts[g][b] += 1;
    }
    let row_marginals: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_marginals: Vec<usize> =
        (0..m).map(|c| counts.iter().map(|r| r[c]).sum()).collect();
    Ok(Heatmap { counts, row_marginals, col_marginals })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModerateMass {
    pub moderate_set: Vec<usize>,
    pub pred_mass: f64,
    pub true_mass: f64,
    /// `pred_mass / true_mass`; absent when the true mass is zero.
    pub ratio: Option<f64>,
}

/// Fraction of predictions vs ground truth falling in the moderate bin set.
pub fn moderate_mass(
    pred_bins: &[usize],
    true_bins: &[usize],
    moderate_set: &[usize],
) -> Result<ModerateMass> {
    if pred_bins.is_empty() || pred_bins.len() != true_bins.len() {
        return Err(OrcaError::data("moderate_mass needs equal non-empty inputs"));
    }
    let in_set = |b: usize| moderate_set.contains(&b);
    let n = pred_bins.len() as f64;
    let pred_mass = pred_bins.iter().filter(|&&b| in_set(b)).count() as f64 / n;
    let true_mass = true_bins.iter().filter(|&&b| in_set(b)).count() as f64 / n;
    Ok(ModerateMass {
        moderate_set: moderate_set.to_vec(),
        pred_mass,
        true_mass,
        ratio: (true_mass > 0.0).then(|| pred_mass / true_mass),
    })
}

/// The fixed default moderate set for the eight-bin configuration.
pub const DEFAULT_MODERATE_SET_M8: [usize; 4] = [2, 3, 4, 6];

/// Data-driven moderate set: interior bins (neither first nor last) whose
/// ground-truth mass reaches `min_mass`.
pub fn moderate_set_from_truth(true_bins: &[usize], m: usize, min_mass: f64) -> Vec<usize> {
    let n = true_bins.len() as f64;
    (1..m.saturating_sub(1))
        .filter(|&b| true_bins.iter().filter(|&&t| t == b).count() as f64 / n >= min_mass)
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasCurve {
    /// Mean signed bin error (pred - true) per click-probability group.
    pub group_bias: Vec<f64>,
    /// Least-squares slope of bias against group index.
    pub slope: f64,
}

/// Signed bin error conditioned on predicted click probability.
pub fn ctr_conditioned_bias(
    ctr_probs: &[f64],
    pred_bins: &[usize],
    true_bins: &[usize],
    n_groups: usize,
) -> Result<BiasCurve> {
    if ctr_probs.is_empty()
        || ctr_probs.len() != pred_bins.len()
        || pred_bins.len() != true_bins.len()
    {
        return Err(OrcaError::data("bias curve needs equal non-empty inputs"));
    }
    if n_groups == 0 {
        return Err(OrcaError::config("n_groups must be positive"));
    }
    let groups = rank_groups(ctr_probs, n_groups);
    let mut sums = vec![0.0f64; n_groups];
    let mut counts = vec![0usize; n_groups];
    for i in 0..ctr_probs.len() {
        sums[groups[i]] += pred_bins[i] as f64 - true_bins[i] as f64;
        counts[groups[i]] += 1;
    }
    let group_bias: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(BiasCurve { slope: least_squares_slope(&group_bias), group_bias })
}

fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        num += dx * (y - my);
        den += dx * dx;
    }
    num / den
}

#[derive(Debug, Clone, Serialize)]
pub struct LofoResult {
    pub field: String,
    pub delta_auc: f64,
    pub delta_mae_class: f64,
    /// Small click impact, large dwell impact: a post-click candidate.
    pub post_click_candidate: bool,
}

/// Leave-one-feature-out probe: re-evaluate with one field's indices forced
/// to the unknown token and report the metric deltas (ablated minus intact).
pub fn leave_one_feature_out(
    model: &OrcaModel,
    schema: &FeatureSchema,
    records: &[InteractionRecord],
    field_name: &str,
    auc_threshold: f64,
    mae_threshold: f64,
) -> Result<LofoResult> {
    let field = schema
        .field_index(field_name)
        .ok_or_else(|| OrcaError::data(format!("unknown field '{field_name}'")))?;

    let eval = |recs: &[InteractionRecord]| -> Result<(f64, f64)> {
        let preds = model.predict(recs, 1024);
        let labels: Vec<bool> = recs.iter().map(|r| r.clicked).collect();
        let auc_val = auc(&preds.ctr_probs, &labels)?;
        let mut pred_bins = Vec::new();
        let mut true_bins = Vec::new();
        for (i, r) in recs.iter().enumerate() {
            if let Some(b) = r.dwell_bin {
                pred_bins.push(preds.pred_bins[i]);
                true_bins.push(b);
            }
        }
        let (mae, _) = mae_rmse_class(&pred_bins, &true_bins)?;
        Ok((auc_val, mae))
    };

    let (auc_full, mae_full) = eval(records)?;
    let ablated: Vec<InteractionRecord> = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.feature_ids[field] = UNKNOWN_INDEX;
            r
        })
        .collect();
    let (auc_ablate, mae_ablate) = eval(&ablated)?;

    let delta_auc = auc_ablate - auc_full;
    let delta_mae_class = mae_ablate - mae_full;
    Ok(LofoResult {
        field: field_name.to_owned(),
        delta_auc,
        delta_mae_class,
        post_click_candidate: delta_auc.abs() < auc_threshold
            && delta_mae_class.abs() > mae_threshold,
    })
}
