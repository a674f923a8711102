//! Multi-task backbone: field embeddings, shared / task-specific experts with
//! softmax gating (MMoE or PLE wiring), and the two prediction towers.
//!
//! The backbone produces three representations per instance: a shared one
//! `e_s`, a click-task one `e_c`, and a dwell-task one `e_t`. The click tower
//! consumes `[e_s, e_c]` and emits one logit; the dwell tower consumes
//! `[e_s, e_t]` and emits `m` bin logits. Under MMoE every expert is shared
//! and `e_s` is the uniform mixture of the expert pool; under PLE each level
//! keeps separate click / shared / dwell expert groups with per-group gates.
//!
//! Expert nets are ReLU MLPs; towers have ReLU hidden layers and a linear,
//! zero-initialized output layer, so an untrained model predicts probability
//! one half for clicks and a uniform bin distribution.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OrcaError, Result};
use crate::nn::params::{embedding_init, glorot};
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mmoe,
    Ple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub arch: Arch,
    pub embedding_dim: usize,
    pub n_shared_experts: usize,
    pub n_task_experts: usize,
    pub expert_hidden: Vec<usize>,
    pub tower_hidden: Vec<usize>,
    /// PLE only; MMoE ignores it.
    pub n_ple_levels: usize,
    /// Dwell bin count (dwell-tower output width).
    pub m: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            arch: Arch::Mmoe,
            embedding_dim: 16,
            n_shared_experts: 2,
            n_task_experts: 2,
            expert_hidden: vec![64, 32],
            tower_hidden: vec![32],
            n_ple_levels: 1,
            m: 8,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(OrcaError::config("embedding_dim must be >= 1"));
        }
        if self.expert_hidden.is_empty() || self.expert_hidden.iter().any(|&w| w == 0) {
            return Err(OrcaError::config("expert_hidden must be non-empty positive widths"));
        }
        if self.tower_hidden.iter().any(|&w| w == 0) {
            return Err(OrcaError::config("tower_hidden widths must be positive"));
        }
        if self.m < 2 {
            return Err(OrcaError::config("bin count m must be >= 2"));
        }
        if self.n_shared_experts == 0 {
            return Err(OrcaError::config("n_shared_experts must be >= 1"));
        }
        if self.n_ple_levels == 0 {
            return Err(OrcaError::config("n_ple_levels must be >= 1"));
        }
        Ok(())
    }

    /// Width of the expert-output representations.
    pub fn repr_dim(&self) -> usize {
        *self.expert_hidden.last().unwrap()
    }

    /// MMoE pools the shared and task expert budgets into one shared set.
    pub fn mmoe_pool(&self) -> usize {
        self.n_shared_experts + self.n_task_experts
    }
}

/// A dense MLP as parameter ids: one (weights, bias) pair per layer.
#[derive(Debug, Clone)]
pub struct MlpIds {
    pub layers: Vec<(ParamId, ParamId)>,
}

/// Build an MLP; `zero_out` zero-initializes the final layer.
fn build_mlp(
    store: &mut ParamStore,
    name: &str,
    dims: &[usize],
    rng: &mut ChaCha8Rng,
    zero_out: bool,
) -> MlpIds {
    let mut layers = Vec::new();
    for (l, w) in dims.windows(2).enumerate() {
        let last = l == dims.len() - 2;
        let weights = if zero_out && last {
            Array2::zeros((w[0], w[1]))
        } else {
            glorot(rng, w[0], w[1])
        };
        let wid = store.add(format!("{name}.w{l}"), weights);
        let bid = store.add(format!("{name}.b{l}"), Array2::zeros((1, w[1])));
        layers.push((wid, bid));
    }
    MlpIds { layers }
}

/// Expert forward: ReLU after every layer.
pub fn expert_forward(tape: &mut Tape, mlp: &MlpIds, mut x: Var) -> Var {
    for &(w, b) in &mlp.layers {
        let wv = tape.param(w);
        let bv = tape.param(b);
        let lin = tape.matmul(x, wv);
        let lin = tape.add_row(lin, bv);
        x = tape.relu(lin);
    }
    x
}

/// Tower forward: ReLU hidden layers, linear output.
pub fn tower_forward(tape: &mut Tape, mlp: &MlpIds, mut x: Var) -> Var {
    let n = mlp.layers.len();
    for (l, &(w, b)) in mlp.layers.iter().enumerate() {
        let wv = tape.param(w);
        let bv = tape.param(b);
        let lin = tape.matmul(x, wv);
        let lin = tape.add_row(lin, bv);
        x = if l + 1 < n { tape.relu(lin) } else { lin };
    }
    x
}

fn gate_mix(
    tape: &mut Tape,
    gate: (ParamId, ParamId),
    gate_input: Var,
    experts: &[Var],
) -> Var {
    let wv = tape.param(gate.0);
    let bv = tape.param(gate.1);
    let logits = tape.matmul(gate_input, wv);
    let logits = tape.add_row(logits, bv);
    let weights = tape.softmax_rows(logits);
    let mut acc: Option<Var> = None;
    for (k, &e) in experts.iter().enumerate() {
        let col = tape.col(weights, k);
        let scaled = tape.scale_rows(e, col);
        acc = Some(match acc {
            Some(a) => tape.add(a, scaled),
            None => scaled,
        });
    }
    acc.expect("gate over empty expert list")
}

fn mean_of(tape: &mut Tape, vars: &[Var]) -> Var {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = tape.add(acc, v);
    }
    tape.scale(acc, 1.0 / vars.len() as f64)
}

#[derive(Debug, Clone)]
struct PleLevel {
    ctr_experts: Vec<MlpIds>,
    shared_experts: Vec<MlpIds>,
    dt_experts: Vec<MlpIds>,
    gate_ctr: (ParamId, ParamId),
    gate_shared: (ParamId, ParamId),
    gate_dt: (ParamId, ParamId),
}

#[derive(Debug, Clone)]
enum ArchParams {
    Mmoe {
        experts: Vec<MlpIds>,
        gate_ctr: (ParamId, ParamId),
        gate_dt: (ParamId, ParamId),
    },
    Ple {
        levels: Vec<PleLevel>,
    },
}

/// Parameter layout of the backbone.
#[derive(Debug, Clone)]
pub struct BackboneParams {
    pub embeddings: Vec<ParamId>,
    arch: ArchParams,
    pub ctr_tower: MlpIds,
    pub dt_tower: MlpIds,
    input_dim: usize,
}

fn gate_pair(store: &mut ParamStore, name: &str, in_dim: usize, n: usize, rng: &mut ChaCha8Rng) -> (ParamId, ParamId) {
    let w = store.add(format!("{name}.w"), glorot(rng, in_dim, n));
    let b = store.add(format!("{name}.b"), Array2::zeros((1, n)));
    (w, b)
}

/// Allocate all backbone parameters for `schema` under `cfg`.
pub fn build_backbone(
    store: &mut ParamStore,
    schema: &FeatureSchema,
    cfg: &BackboneConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BackboneParams> {
    cfg.validate()?;
    let d = cfg.embedding_dim;
    let embeddings: Vec<ParamId> = schema
        .fields
        .iter()
        .map(|f| {
            store.add(
                format!("embed.{}", f.name),
                embedding_init(rng, f.vocab_size as usize, d, 0.05),
            )
        })
        .collect();

    let input_dim = schema.n_fields() * d;
    let r = cfg.repr_dim();
    let expert_dims = |in_dim: usize| -> Vec<usize> {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(&cfg.expert_hidden);
        dims
    };

    let arch = match cfg.arch {
        Arch::Mmoe => {
            let pool = cfg.mmoe_pool();
            let experts = (0..pool)
                .map(|k| build_mlp(store, &format!("mmoe.expert{k}"), &expert_dims(input_dim), rng, false))
                .collect();
            ArchParams::Mmoe {
                experts,
                gate_ctr: gate_pair(store, "mmoe.gate_ctr", input_dim, pool, rng),
                gate_dt: gate_pair(store, "mmoe.gate_dt", input_dim, pool, rng),
            }
        }
        Arch::Ple => {
            let mut levels = Vec::with_capacity(cfg.n_ple_levels);
            for l in 0..cfg.n_ple_levels {
                let in_dim = if l == 0 { input_dim } else { r };
                let dims = expert_dims(in_dim);
                let group = |store: &mut ParamStore, rng: &mut ChaCha8Rng, tag: &str, n: usize| {
                    (0..n)
                        .map(|k| build_mlp(store, &format!("ple{l}.{tag}{k}"), &dims, rng, false))
                        .collect::<Vec<_>>()
                };
                let ctr_experts = group(store, rng, "ctr_expert", cfg.n_task_experts);
                let shared_experts = group(store, rng, "shared_expert", cfg.n_shared_experts);
                let dt_experts = group(store, rng, "dt_expert", cfg.n_task_experts);
                let n_task_gate = cfg.n_task_experts + cfg.n_shared_experts;
                let n_all = 2 * cfg.n_task_experts + cfg.n_shared_experts;
                levels.push(PleLevel {
                    ctr_experts,
                    shared_experts,
                    dt_experts,
                    gate_ctr: gate_pair(store, &format!("ple{l}.gate_ctr"), in_dim, n_task_gate, rng),
                    gate_shared: gate_pair(store, &format!("ple{l}.gate_shared"), in_dim, n_all, rng),
                    gate_dt: gate_pair(store, &format!("ple{l}.gate_dt"), in_dim, n_task_gate, rng),
                });
            }
            ArchParams::Ple { levels }
        }
    };

    let mut ctr_dims = vec![2 * r];
    ctr_dims.extend_from_slice(&cfg.tower_hidden);
    ctr_dims.push(1);
    let mut dt_dims = vec![2 * r];
    dt_dims.extend_from_slice(&cfg.tower_hidden);
    dt_dims.push(cfg.m);

    Ok(BackboneParams {
        embeddings,
        arch,
        ctr_tower: build_mlp(store, "tower_ctr", &ctr_dims, rng, true),
        dt_tower: build_mlp(store, "tower_dt", &dt_dims, rng, true),
        input_dim,
    })
}

/// Tape vars for one backbone pass.
#[derive(Debug, Clone, Copy)]
pub struct BackboneVars {
    pub x: Var,
    pub e_s: Var,
    pub e_c: Var,
    pub e_t: Var,
    pub ctr_logit: Var,
    pub dt_logits: Var,
}

/// Per-field lookup and concatenation in schema order. `features` is
/// field-major: `features[f][i]` is instance `i`'s index in field `f`.
pub fn embed_concat(tape: &mut Tape, params: &BackboneParams, features: &[Vec<usize>]) -> Var {
    let parts: Vec<Var> = params
        .embeddings
        .iter()
        .zip(features)
        .map(|(&table, rows)| tape.embed(table, rows.clone()))
        .collect();
    tape.concat_cols(&parts)
}

/// Experts-and-gates forward from embedded input to `(e_s, e_c, e_t)`.
pub fn experts_forward(
    tape: &mut Tape,
    params: &BackboneParams,
    x: Var,
) -> (Var, Var, Var) {
    match &params.arch {
        ArchParams::Mmoe { experts, gate_ctr, gate_dt } => {
            let outs: Vec<Var> = experts.iter().map(|e| expert_forward(tape, e, x)).collect();
            let e_c = gate_mix(tape, *gate_ctr, x, &outs);
            let e_t = gate_mix(tape, *gate_dt, x, &outs);
            let e_s = mean_of(tape, &outs);
            (e_s, e_c, e_t)
        }
        ArchParams::Ple { levels } => {
            let (mut x_c, mut x_s, mut x_t) = (x, x, x);
            for level in levels {
                let ctr_outs: Vec<Var> =
                    level.ctr_experts.iter().map(|e| expert_forward(tape, e, x_c)).collect();
                let shared_outs: Vec<Var> =
                    level.shared_experts.iter().map(|e| expert_forward(tape, e, x_s)).collect();
                let dt_outs: Vec<Var> =
                    level.dt_experts.iter().map(|e| expert_forward(tape, e, x_t)).collect();

                let mut ctr_pool = ctr_outs.clone();
                ctr_pool.extend_from_slice(&shared_outs);
                let mut dt_pool = dt_outs.clone();
                dt_pool.extend_from_slice(&shared_outs);
                let mut all_pool = ctr_outs;
                all_pool.extend_from_slice(&shared_outs);
                all_pool.extend(dt_outs);

                let next_c = gate_mix(tape, level.gate_ctr, x_c, &ctr_pool);
                let next_s = gate_mix(tape, level.gate_shared, x_s, &all_pool);
                let next_t = gate_mix(tape, level.gate_dt, x_t, &dt_pool);
                x_c = next_c;
                x_s = next_s;
                x_t = next_t;
            }
            (x_s, x_c, x_t)
        }
    }
}

/// Tower heads over the backbone representations.
pub fn towers_forward(
    tape: &mut Tape,
    params: &BackboneParams,
    e_s: Var,
    e_c: Var,
    e_t: Var,
) -> (Var, Var) {
    let ctr_in = tape.concat_cols(&[e_s, e_c]);
    let dt_in = tape.concat_cols(&[e_s, e_t]);
    let ctr_logit = tower_forward(tape, &params.ctr_tower, ctr_in);
    let dt_logits = tower_forward(tape, &params.dt_tower, dt_in);
    (ctr_logit, dt_logits)
}

/// Full backbone pass over field-major feature indices.
pub fn backbone_forward(
    tape: &mut Tape,
    params: &BackboneParams,
    features: &[Vec<usize>],
) -> BackboneVars {
    let x = embed_concat(tape, params, features);
    let (e_s, e_c, e_t) = experts_forward(tape, params, x);
    let (ctr_logit, dt_logits) = towers_forward(tape, params, e_s, e_c, e_t);
    BackboneVars { x, e_s, e_c, e_t, ctr_logit, dt_logits }
}

/// Per-batch outputs of a backbone (plus head) evaluation.
#[derive(Debug, Clone)]
pub struct ForwardOutputs {
    pub e_shared: Array2<f64>,
    pub e_ctr: Array2<f64>,
    pub e_dt: Array2<f64>,
    pub ctr_logits: Vec<f64>,
    pub ctr_probs: Vec<f64>,
    pub dt_logits: Array2<f64>,
}

impl ForwardOutputs {
    pub fn from_tape(tape: &Tape, vars: &BackboneVars) -> Self {
        let ctr_logits: Vec<f64> = tape.value(vars.ctr_logit).column(0).to_vec();
        let ctr_probs = ctr_logits.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect();
        ForwardOutputs {
            e_shared: tape.value(vars.e_s).clone(),
            e_ctr: tape.value(vars.e_c).clone(),
            e_dt: tape.value(vars.e_t).clone(),
            ctr_logits,
            ctr_probs,
            dt_logits: tape.value(vars.dt_logits).clone(),
        }
    }
}

impl BackboneParams {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Ids of every backbone parameter (used by gradient accounting).
    pub fn all_ids(&self) -> Vec<ParamId> {
        let mut ids = self.embeddings.clone();
        let push_mlp = |ids: &mut Vec<ParamId>, m: &MlpIds| {
            for &(w, b) in &m.layers {
                ids.push(w);
                ids.push(b);
            }
        };
        match &self.arch {
            ArchParams::Mmoe { experts, gate_ctr, gate_dt } => {
                for e in experts {
                    push_mlp(&mut ids, e);
                }
                ids.extend([gate_ctr.0, gate_ctr.1, gate_dt.0, gate_dt.1]);
            }
            ArchParams::Ple { levels } => {
                for l in levels {
                    for e in l.ctr_experts.iter().chain(&l.shared_experts).chain(&l.dt_experts) {
                        push_mlp(&mut ids, e);
                    }
                    ids.extend([
                        l.gate_ctr.0,
                        l.gate_ctr.1,
                        l.gate_shared.0,
                        l.gate_shared.1,
                        l.gate_dt.0,
                        l.gate_dt.1,
                    ]);
                }
            }
        }
        push_mlp(&mut ids, &self.ctr_tower);
        push_mlp(&mut ids, &self.dt_tower);
        ids
    }

    #[cfg(test)]
    fn mmoe_parts(&self) -> (&[MlpIds], (ParamId, ParamId), (ParamId, ParamId)) {
        match &self.arch {
            ArchParams::Mmoe { experts, gate_ctr, gate_dt } => (experts, *gate_ctr, *gate_dt),
            _ => panic!("not mmoe"),
        }
    }
}
