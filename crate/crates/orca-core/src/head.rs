//! The debiasing head: feature-level counterfactual masking, cross-task
//! attention interaction, the negative-dependency extractor tower, and
//! logit-space subtraction.
//!
//! The extractor tower estimates the click-induced component of the dwell
//! logits from the shared representation (optionally augmented with the
//! attention interaction of the two task representations) computed on a
//! *masked* second pass where post-click fields are replaced by the MASK
//! token with probability `p_fea`. Subtracting the extractor's logits from
//! the raw dwell logits yields the refined prediction:
//! `orca_logits = dt_logits - nde_logits`.
//!
//! During training the extractor's inputs are detached, so its gradients
//! never reach backbone parameters; see the training module for the loss
//! wiring.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{tower_forward, MlpIds};
use crate::error::{OrcaError, Result};
use crate::nn::params::glorot;
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::schema::{FeatureSchema, InteractionRecord, MASK_INDEX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrcaConfig {
    /// Probability of masking an instance's post-click fields (one draw per
    /// instance; all post-click fields mask together).
    pub p_fea: f64,
    pub n_heads: usize,
    /// Attention width; `None` uses the backbone representation width.
    pub attn_dim: Option<usize>,
    pub nde_tower_hidden: Vec<usize>,
    /// Ablation switch: counterfactual masking of post-click features.
    pub enable_fci: bool,
    /// Ablation switch: cross-task interaction input and inverse instance
    /// weighting.
    pub enable_scd: bool,
}

impl Default for OrcaConfig {
    fn default() -> Self {
        OrcaConfig {
            p_fea: 0.5,
            n_heads: 2,
            attn_dim: None,
            nde_tower_hidden: vec![32],
            enable_fci: true,
            enable_scd: true,
        }
    }
}

impl OrcaConfig {
    pub fn validate(&self, repr_dim: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_fea) {
            return Err(OrcaError::config("p_fea must be in [0, 1]"));
        }
        if self.n_heads == 0 {
            return Err(OrcaError::config("n_heads must be >= 1"));
        }
        let attn = self.attn_dim.unwrap_or(repr_dim);
        if attn == 0 || attn % self.n_heads != 0 {
            return Err(OrcaError::config(format!(
                "n_heads {} must divide attn_dim {attn}",
                self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct HeadProj {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
}

/// Parameter layout of the debiasing head.
#[derive(Debug)]
pub struct HeadParams {
    heads: Vec<HeadProj>,
    wo: ParamId,
    bo: ParamId,
    pub nde_tower: MlpIds,
    head_dim: usize,
}

/// Allocate head parameters. The extractor's output layer starts at zero, so
/// an untrained head is a no-op (`orca_logits == dt_logits`).
pub fn build_head(
    store: &mut ParamStore,
    cfg: &OrcaConfig,
    repr_dim: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<HeadParams> {
    cfg.validate(repr_dim)?;
    let attn_dim = cfg.attn_dim.unwrap_or(repr_dim);
    let head_dim = attn_dim / cfg.n_heads;
    let heads = (0..cfg.n_heads)
        .map(|h| HeadProj {
            wq: store.add(format!("attn.h{h}.wq"), glorot(rng, repr_dim, head_dim)),
            wk: store.add(format!("attn.h{h}.wk"), glorot(rng, repr_dim, head_dim)),
            wv: store.add(format!("attn.h{h}.wv"), glorot(rng, repr_dim, head_dim)),
        })
        .collect();
    let wo = store.add("attn.wo", glorot(rng, attn_dim, attn_dim));
    let bo = store.add("attn.bo", Array2::zeros((1, attn_dim)));

    let nde_in = if cfg.enable_scd { repr_dim + 2 * attn_dim } else { repr_dim };
    let mut dims = vec![nde_in];
    dims.extend_from_slice(&cfg.nde_tower_hidden);
    dims.push(m);
    let nde_tower = build_nde_tower(store, &dims, rng);

    Ok(HeadParams { heads, wo, bo, nde_tower, head_dim })
}

fn build_nde_tower(store: &mut ParamStore, dims: &[usize], rng: &mut ChaCha8Rng) -> MlpIds {
    let mut layers = Vec::new();
    for (l, w) in dims.windows(2).enumerate() {
        let last = l == dims.len() - 2;
        let weights = if last {
            Array2::zeros((w[0], w[1]))
        } else {
            glorot(rng, w[0], w[1])
        };
        let wid = store.add(format!("nde.w{l}"), weights);
        let bid = store.add(format!("nde.b{l}"), Array2::zeros((1, w[1])));
        layers.push((wid, bid));
    }
    MlpIds { layers }
}

impl HeadParams {
    pub fn all_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for h in &self.heads {
            ids.extend([h.wq, h.wk, h.wv]);
        }
        ids.extend([self.wo, self.bo]);
        for &(w, b) in &self.nde_tower.layers {
            ids.push(w);
            ids.push(b);
        }
        ids
    }
}

/// Replace an instance's post-click field indices with MASK, with probability
/// `p_fea` (a single draw covering all post-click fields). Non-post-click
/// fields never change.
pub fn mask_post_click(
    record: &InteractionRecord,
    schema: &FeatureSchema,
    p_fea: f64,
    rng: &mut ChaCha8Rng,
) -> InteractionRecord {
    let mut out = record.clone();
    if rng.gen::<f64>() < p_fea {
        for f in schema.post_click_indices() {
            out.feature_ids[f] = MASK_INDEX;
        }
    }
    out
}

/// Batch variant over field-major features; returns the per-instance mask
/// decisions.
pub fn mask_features(
    features: &mut [Vec<usize>],
    post_fields: &[usize],
    p_fea: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<bool> {
    let n = features.first().map_or(0, |f| f.len());
    let decisions: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < p_fea).collect();
    for &f in post_fields {
        for (i, &masked) in decisions.iter().enumerate() {
            if masked {
                features[f][i] = MASK_INDEX as usize;
            }
        }
    }
    decisions
}

/// The cross-task interaction output plus the attention weight matrices
/// (one `n x 2` row-stochastic matrix per head per query token).
pub struct Interaction {
    pub vector: Var,
    pub attn_weights: Vec<Var>,
}

/// Two-token multi-head self-attention over `[e_c; e_t]`, flattened to one
/// interaction vector per instance.
pub fn interact(tape: &mut Tape, head: &HeadParams, e_c: Var, e_t: Var) -> Interaction {
    let scale = 1.0 / (head.head_dim as f64).sqrt();
    let mut out_c_parts = Vec::with_capacity(head.heads.len());
    let mut out_t_parts = Vec::with_capacity(head.heads.len());
    let mut attn_weights = Vec::new();
    for proj in &head.heads {
        let wq = tape.param(proj.wq);
        let wk = tape.param(proj.wk);
        let wv = tape.param(proj.wv);
        let q_c = tape.matmul(e_c, wq);
        let q_t = tape.matmul(e_t, wq);
        let k_c = tape.matmul(e_c, wk);
        let k_t = tape.matmul(e_t, wk);
        let v_c = tape.matmul(e_c, wv);
        let v_t = tape.matmul(e_t, wv);

        let token_out = |tape: &mut Tape, q: Var| -> (Var, Var) {
            let s_c = tape.row_dot(q, k_c);
            let s_c = tape.scale(s_c, scale);
            let s_t = tape.row_dot(q, k_t);
            let s_t = tape.scale(s_t, scale);
            let scores = tape.concat_cols(&[s_c, s_t]);
            let weights = tape.softmax_rows(scores);
            let w_c = tape.col(weights, 0);
            let w_t = tape.col(weights, 1);
            let part_c = tape.scale_rows(v_c, w_c);
            let part_t = tape.scale_rows(v_t, w_t);
            (tape.add(part_c, part_t), weights)
        };
        let (o_c, w_qc) = token_out(tape, q_c);
        let (o_t, w_qt) = token_out(tape, q_t);
        out_c_parts.push(o_c);
        out_t_parts.push(o_t);
        attn_weights.push(w_qc);
        attn_weights.push(w_qt);
    }
    let cat_c = tape.concat_cols(&out_c_parts);
    let cat_t = tape.concat_cols(&out_t_parts);
    let wo = tape.param(head.wo);
    let bo = tape.param(head.bo);
    let proj_c = tape.matmul(cat_c, wo);
    let proj_c = tape.add_row(proj_c, bo);
    let proj_t = tape.matmul(cat_t, wo);
    let proj_t = tape.add_row(proj_t, bo);
    let vector = tape.concat_cols(&[proj_c, proj_t]);
    Interaction { vector, attn_weights }
}

/// Extractor tower over the (detached) shared representation, plus the
/// interaction vector when the cross-task input is enabled.
pub fn nde_forward(
    tape: &mut Tape,
    head: &HeadParams,
    e_s_detached: Var,
    interaction: Option<Var>,
) -> Var {
    let input = match interaction {
        Some(inter) => tape.concat_cols(&[e_s_detached, inter]),
        None => e_s_detached,
    };
    tower_forward(tape, &head.nde_tower, input)
}

/// Elementwise logit-space subtraction.
pub fn debias(dt_logits: &Array2<f64>, nde_logits: &Array2<f64>) -> Result<Array2<f64>> {
    if dt_logits.dim() != nde_logits.dim() {
        return Err(OrcaError::data(format!(
            "logit shape mismatch: {:?} vs {:?}",
            dt_logits.dim(),
            nde_logits.dim()
        )));
    }
    Ok(dt_logits - nde_logits)
}

/// Batch outputs of the debiasing head.
#[derive(Debug, Clone)]
pub struct OrcaOutputs {
    pub nde_logits: Array2<f64>,
    pub orca_logits: Array2<f64>,
}
