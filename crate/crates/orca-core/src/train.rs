//! The optimization loop: per-batch loss graph, Adam updates, seeded
//! shuffling, early stopping on validation bin error, and divergence guards.
//!
//! Loss wiring per batch: `total = loss_ctr + loss_dt + loss_orca`. The
//! debiased loss supervises `orca_logits = dt_logits - nde_logits`, where the
//! extractor's inputs come from a second, masked forward pass whose values
//! are re-injected as constants. Gradients from the extractor path therefore
//! stop at those constants and can only reach backbone parameters through the
//! `dt_logits` term of the subtraction. Instance weights are computed from
//! the current batch's per-instance losses and treated as constants.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OrcaError, Result};
use crate::head::{interact, nde_forward};
use crate::loss::{instance_weights, BatchLosses};
use crate::metrics::{auc, mae_rmse_class};
use crate::model::{Batch, OrcaModel, Variant};
use crate::nn::tape::{bce_per_instance, ce_per_instance};
use crate::nn::{Adam, GradStore, Tape, Var};
use crate::schema::InteractionRecord;

const SALT_SHUFFLE: u64 = 0x5452_4e5f_5348;
const SALT_MASK: u64 = 0x5452_4e5f_4d53;
const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Exponent on the inverse click loss in the instance weight.
    pub alpha: f64,
    /// Additive offset in the instance weight.
    pub gamma: f64,
    /// Lower clamp on the per-instance click loss before the negative power.
    pub clamp_eps: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            gamma: 1.0,
            clamp_eps: 1e-3,
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 30,
            early_stop_patience: 3,
            seed: 42,
            variant: Variant::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(OrcaError::config("alpha must be >= 0"));
        }
        if self.clamp_eps <= 0.0 {
            return Err(OrcaError::config("clamp_eps must be > 0"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(OrcaError::config("batch_size and max_epochs must be positive"));
        }
        if self.learning_rate <= 0.0 {
            return Err(OrcaError::config("learning_rate must be > 0"));
        }
        Ok(())
    }
}

/// The detached extractor inputs of one batch: the shared, click, and dwell
/// representations from the masked pass.
pub type MaskedReps = (
    ndarray::Array2<f64>,
    ndarray::Array2<f64>,
    ndarray::Array2<f64>,
);

/// Quantities the loss graph treats as constants (stop-gradient inputs and
/// instance weights). Finite-difference probes of the analytic gradient must
/// re-evaluate the loss with these held at their base-point values; training
/// recomputes them each batch.
#[derive(Default)]
pub struct Frozen<'a> {
    pub weights: Option<&'a [f64]>,
    pub masked_reps: Option<&'a MaskedReps>,
}

/// Tape vars of one batch's loss graph, exposed for gradient tests.
pub struct LossGraph {
    pub l_ctr: Var,
    pub l_dt: Var,
    pub l_orca: Option<Var>,
    pub total: Var,
    pub dt_logits: Var,
    pub nde_logits: Option<Var>,
    pub masked_reps: Option<MaskedReps>,
    pub losses: BatchLosses,
}

/// Build the full loss graph for one batch on `tape`.
///
/// `mask_decisions` are the per-instance masking draws (ignored unless the
/// variant masks); passing them in keeps finite-difference re-evaluations on
/// identical masks.
pub fn build_loss_graph(
    tape: &mut Tape,
    model: &OrcaModel,
    batch: &Batch,
    cfg: &TrainConfig,
    mask_decisions: &[bool],
    frozen: Frozen<'_>,
) -> LossGraph {
    let vars = crate::backbone::backbone_forward(tape, &model.backbone, &batch.features);
    let l_ctr = tape.bce_logits(vars.ctr_logit, batch.clicked.clone());
    let l_dt = tape.masked_ce(vars.dt_logits, batch.bins.clone(), batch.clicked_mask.clone());

    let per_ctr = bce_per_instance(tape.value(vars.ctr_logit), &batch.clicked);
    let per_dt = ce_per_instance(tape.value(vars.dt_logits), &batch.bins, &batch.clicked_mask);

    let (l_orca, nde_logits, masked_reps, weights) = if cfg.variant.nde_active() {
        // Masked pass: recompute representations on masked features and
        // detach them. Without masking the unmasked values are reused.
        let (e_s_m, e_c_m, e_t_m) = match frozen.masked_reps {
            Some((s, c, t)) => (s.clone(), c.clone(), t.clone()),
            None if model.orca_cfg.enable_fci => {
                let mut masked = batch.features.clone();
                let post = model.schema.post_click_indices();
                for &f in &post {
                    for (i, &m) in mask_decisions.iter().enumerate() {
                        if m {
                            masked[f][i] = crate::schema::MASK_INDEX as usize;
                        }
                    }
                }
                let masked_vars =
                    crate::backbone::backbone_forward(tape, &model.backbone, &masked);
                (
                    tape.value(masked_vars.e_s).clone(),
                    tape.value(masked_vars.e_c).clone(),
                    tape.value(masked_vars.e_t).clone(),
                )
            }
            None => (
                tape.value(vars.e_s).clone(),
                tape.value(vars.e_c).clone(),
                tape.value(vars.e_t).clone(),
            ),
        };
        let reps = (e_s_m.clone(), e_c_m.clone(), e_t_m.clone());
        let e_s_d = tape.constant(e_s_m);
        let inter = if model.orca_cfg.enable_scd {
            let e_c_d = tape.constant(e_c_m);
            let e_t_d = tape.constant(e_t_m);
            Some(interact(tape, &model.head, e_c_d, e_t_d).vector)
        } else {
            None
        };
        let nde = nde_forward(tape, &model.head, e_s_d, inter);
        let orca = tape.sub(vars.dt_logits, nde);

        let weights = match frozen.weights {
            Some(w) => w.to_vec(),
            None if model.orca_cfg.enable_scd => {
                let (w, clamped) =
                    instance_weights(&per_ctr, &per_dt, cfg.alpha, cfg.gamma, cfg.clamp_eps);
                if clamped > 0 {
                    log::warn!("{clamped} instance weights clamped at zero");
                }
                w
            }
            None => vec![1.0; batch.len()],
        };
        let l_orca = tape.weighted_ce(
            orca,
            batch.bins.clone(),
            weights.clone(),
            batch.clicked_mask.clone(),
        );
        (Some(l_orca), Some(nde), Some(reps), weights)
    } else {
        (None, None, None, vec![1.0; batch.len()])
    };

    let partial = tape.add(l_ctr, l_dt);
    let total = match l_orca {
        Some(l) => tape.add(partial, l),
        None => partial,
    };

    let losses = BatchLosses {
        loss_ctr: tape.scalar(l_ctr),
        loss_dt: tape.scalar(l_dt),
        loss_orca: l_orca.map_or(0.0, |l| tape.scalar(l)),
        total: tape.scalar(total),
        per_instance_ctr: per_ctr,
        per_instance_dt: per_dt,
        weights,
    };

    LossGraph {
        l_ctr,
        l_dt,
        l_orca,
        total,
        dt_logits: vars.dt_logits,
        nde_logits,
        masked_reps,
        losses,
    }
}

/// One optimizer update on `batch`. Errors on a non-finite loss.
pub fn train_step(
    model: &mut OrcaModel,
    batch: &Batch,
    cfg: &TrainConfig,
    mask_rng: &mut ChaCha8Rng,
    opt: &mut Adam,
) -> Result<BatchLosses> {
    let mask_decisions = draw_mask_decisions(model, batch, mask_rng);
    let mut grads = GradStore::zeros_like(&model.store);
    let losses = {
        let mut tape = Tape::new(&model.store);
        let graph =
            build_loss_graph(&mut tape, model, batch, cfg, &mask_decisions, Frozen::default());
        if !graph.losses.total.is_finite() {
            return Err(OrcaError::Divergence(format!(
                "non-finite batch loss (ctr {}, dt {}, orca {})",
                graph.losses.loss_ctr, graph.losses.loss_dt, graph.losses.loss_orca
            )));
        }
        tape.backward(graph.total, &mut grads);
        graph.losses
    };
    opt.step(&mut model.store, &grads);
    Ok(losses)
}

/// Per-instance masking draws for one batch, from its seeded substream.
pub fn draw_mask_decisions(
    model: &OrcaModel,
    batch: &Batch,
    mask_rng: &mut ChaCha8Rng,
) -> Vec<bool> {
    use rand::Rng;
    if model.orca_cfg.enable_fci {
        (0..batch.len())
            .map(|_| mask_rng.gen::<f64>() < model.orca_cfg.p_fea)
            .collect()
    } else {
        vec![false; batch.len()]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_ctr: f64,
    pub loss_dt: f64,
    pub loss_orca: f64,
    pub loss_total: f64,
    pub val_mae_class: f64,
    pub val_auc: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mae_class: f64,
    pub diverged: bool,
}

fn mix(seed: u64, salt: u64, a: u64, b: u64) -> u64 {
    seed ^ salt
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Validation metrics used by the epoch loop: bin error over clicked
/// instances and click AUC over everything.
pub fn validation_metrics(model: &OrcaModel, records: &[InteractionRecord]) -> Result<(f64, f64)> {
    let preds = model.predict(records, 1024);
    let mut pred_bins = Vec::new();
    let mut true_bins = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if let Some(b) = r.dwell_bin {
            pred_bins.push(preds.pred_bins[i]);
            true_bins.push(b);
        }
    }
    let (mae, _) = mae_rmse_class(&pred_bins, &true_bins)?;
    let labels: Vec<bool> = records.iter().map(|r| r.clicked).collect();
    let auc_val = auc(&preds.ctr_probs, &labels)?;
    Ok((mae, auc_val))
}

/// Train `model` in place, retaining the best-validation parameters.
///
/// Divergence (non-finite or exploding loss) stops training and restores the
/// last good parameters; the result carries the flag.
pub fn train(
    model: &mut OrcaModel,
    train_records: &[InteractionRecord],
    val_records: &[InteractionRecord],
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if train_records.is_empty() || val_records.is_empty() {
        return Err(OrcaError::data("train and validation splits must be non-empty"));
    }
    if !val_records.iter().any(|r| r.clicked) {
        return Err(OrcaError::data("validation split has no clicked instances"));
    }
    if val_records.iter().all(|r| r.clicked) {
        return Err(OrcaError::data("validation split has no unclicked instances"));
    }

    let mut opt = Adam::new(&model.store, cfg.learning_rate);
    let n_fields = model.schema.n_fields();
    let mut history = Vec::new();
    let mut best_store = model.store.clone();
    let mut best_mae = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut bad_epochs = 0usize;
    let mut diverged = false;

    'epochs: for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_records.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(mix(cfg.seed, SALT_SHUFFLE, epoch as u64, 0));
        order.shuffle(&mut shuffle_rng);

        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::from_records(train_records, chunk, n_fields);
            let mut mask_rng = ChaCha8Rng::seed_from_u64(mix(
                cfg.seed,
                SALT_MASK,
                epoch as u64,
                batch_idx as u64,
            ));
            let losses = match train_step(model, &batch, cfg, &mut mask_rng, &mut opt) {
                Ok(l) => l,
                Err(OrcaError::Divergence(msg)) => {
                    log::warn!("divergence at epoch {epoch}: {msg}; restoring best parameters");
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if losses.total > DIVERGENCE_LIMIT {
                log::warn!(
                    "loss {} exceeded divergence limit at epoch {epoch}; restoring best parameters",
                    losses.total
                );
                diverged = true;
                break 'epochs;
            }
            let w = batch.len() as f64;
            sums.0 += losses.loss_ctr * w;
            sums.1 += losses.loss_dt * w;
            sums.2 += losses.loss_orca * w;
            sums.3 += losses.total * w;
            seen += batch.len();
        }

        let (val_mae, val_auc) = validation_metrics(model, val_records)?;
        let n = seen.max(1) as f64;
        history.push(EpochStats {
            epoch,
            loss_ctr: sums.0 / n,
            loss_dt: sums.1 / n,
            loss_orca: sums.2 / n,
            loss_total: sums.3 / n,
            val_mae_class: val_mae,
            val_auc,
        });

        if val_mae < best_mae {
            best_mae = val_mae;
            best_epoch = epoch;
            best_store = model.store.clone();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > cfg.early_stop_patience {
                break;
            }
        }
    }

    model.store = best_store;
    Ok(TrainResult {
        history,
        best_epoch,
        best_val_mae_class: best_mae,
        diverged,
    })
}

/// Write the per-epoch history in CSV form.
pub fn write_history_csv(path: &std::path::Path, history: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "loss_ctr",
        "loss_dt",
        "loss_orca",
        "loss_total",
        "val_mae_class",
        "val_auc",
    ])?;
    for e in history {
        w.write_record([
            e.epoch.to_string(),
            e.loss_ctr.to_string(),
            e.loss_dt.to_string(),
            e.loss_orca.to_string(),
            e.loss_total.to_string(),
            e.val_mae_class.to_string(),
            e.val_auc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
