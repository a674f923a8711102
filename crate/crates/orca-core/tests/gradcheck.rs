//! Gradient correctness on a tiny full-variant model: analytic gradients of
//! each loss against central finite differences, and the stop-gradient
//! contract of the extractor path.
//!
//! The extractor's inputs and the instance weights are stop-gradient
//! quantities: the optimized objective holds them constant. The probes
//! therefore re-evaluate the loss with both frozen at their base-point
//! values, which is the surface the analytic gradient differentiates.

use ndarray::Array2;
use orca_core::backbone::{Arch, BackboneConfig};
use orca_core::head::OrcaConfig;
use orca_core::model::{Batch, OrcaModel, Variant};
use orca_core::nn::{GradStore, Tape, Var};
use orca_core::schema::{FeatureSchema, FieldKind, FieldSpec, InteractionRecord};
use orca_core::train::{build_loss_graph, Frozen, MaskedReps, TrainConfig};

fn tiny_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FieldSpec { name: "u".into(), kind: FieldKind::Categorical, vocab_size: 3, is_post_click: false },
        FieldSpec { name: "z".into(), kind: FieldKind::Categorical, vocab_size: 3, is_post_click: true },
    ])
    .unwrap()
}

fn tiny_model(variant: Variant, seed: u64) -> OrcaModel {
    let backbone_cfg = BackboneConfig {
        arch: Arch::Mmoe,
        embedding_dim: 1,
        n_shared_experts: 2,
        n_task_experts: 0,
        expert_hidden: vec![2],
        tower_hidden: vec![],
        n_ple_levels: 1,
        m: 3,
    };
    let orca_cfg = OrcaConfig {
        p_fea: 0.5,
        n_heads: 1,
        attn_dim: Some(2),
        nde_tower_hidden: vec![],
        ..OrcaConfig::default()
    };
    OrcaModel::new(tiny_schema(), backbone_cfg, orca_cfg, variant, seed).unwrap()
}

fn tiny_batch() -> Batch {
    let records: Vec<InteractionRecord> = [
        (2u32, 2u32, true, 1usize),
        (0, 1, false, 0),
        (1, 2, true, 2),
        (2, 0, true, 0),
        (1, 1, false, 0),
        (0, 2, true, 1),
        (2, 1, false, 0),
        (1, 0, true, 2),
    ]
    .iter()
    .map(|&(a, b, clicked, bin)| InteractionRecord {
        feature_ids: vec![a, b],
        clicked,
        dwell_seconds: clicked.then_some(5.0),
        dwell_bin: clicked.then_some(bin),
    })
    .collect();
    let idx: Vec<usize> = (0..records.len()).collect();
    Batch::from_records(&records, &idx, 2)
}

fn fixed_masks() -> Vec<bool> {
    vec![true, false, false, true, false, true, false, false]
}

/// Randomize the zero-initialized output layers so every path carries signal.
fn randomize_output_layers(model: &mut OrcaModel, seed: u64) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let t = model.store.get_mut(id);
        if t.iter().all(|&v| v == 0.0) {
            for v in t.iter_mut() {
                *v = rng.gen_range(-0.4..0.4);
            }
        }
    }
}

/// Base-point stop-gradient state: instance weights and masked reps.
fn base_frozen_state(model: &OrcaModel, batch: &Batch, cfg: &TrainConfig, masks: &[bool]) -> (Vec<f64>, MaskedReps) {
    let mut tape = Tape::new(&model.store);
    let graph = build_loss_graph(&mut tape, model, batch, cfg, masks, Frozen::default());
    (graph.losses.weights, graph.masked_reps.expect("variant has an extractor"))
}

enum LossPick {
    Ctr,
    Dt,
    Orca,
    Total,
}

fn pick(g_ctr: Var, g_dt: Var, g_orca: Option<Var>, g_total: Var, which: &LossPick) -> Var {
    match which {
        LossPick::Ctr => g_ctr,
        LossPick::Dt => g_dt,
        LossPick::Orca => g_orca.expect("variant has no debiased loss"),
        LossPick::Total => g_total,
    }
}

fn check_gradients(model: &mut OrcaModel, which: LossPick, min_live_coords: usize) {
    let batch = tiny_batch();
    let cfg = TrainConfig::default();
    let masks = fixed_masks();
    let (weights, reps) = base_frozen_state(model, &batch, &cfg, &masks);
    let frozen = || Frozen { weights: Some(&weights), masked_reps: Some(&reps) };

    let mut grads = GradStore::zeros_like(&model.store);
    {
        let mut tape = Tape::new(&model.store);
        let g = build_loss_graph(&mut tape, model, &batch, &cfg, &masks, frozen());
        let root = pick(g.l_ctr, g.l_dt, g.l_orca, g.total, &which);
        tape.backward(root, &mut grads);
    }

    let eval = |model: &OrcaModel| -> f64 {
        let mut tape = Tape::new(&model.store);
        let g = build_loss_graph(&mut tape, model, &batch, &cfg, &masks, frozen());
        tape.scalar(pick(g.l_ctr, g.l_dt, g.l_orca, g.total, &which))
    };

    let h = 1e-5;
    let n = model.store.n_elements();
    let mut live = 0usize;
    for coord in 0..n {
        let orig = model.store.get_flat(coord);
        model.store.set_flat(coord, orig + h);
        let up = eval(model);
        model.store.set_flat(coord, orig - h);
        let down = eval(model);
        model.store.set_flat(coord, orig);
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get_flat(coord);
        let denom = numeric.abs().max(analytic.abs());
        if denom < 1e-6 {
            // Below the central-difference noise floor; only the absolute
            // agreement is meaningful here.
            assert!(
                (numeric - analytic).abs() < 1e-8,
                "coordinate {coord}: analytic {analytic}, numeric {numeric}"
            );
            continue;
        }
        let rel = (numeric - analytic).abs() / denom;
        assert!(
            rel < 1e-4,
            "coordinate {coord}: analytic {analytic}, numeric {numeric}, rel {rel}"
        );
        live += 1;
    }
    assert!(live >= min_live_coords, "only {live} coordinates carried gradient");
}

#[test]
fn ctr_loss_gradients_match_finite_differences() {
    let mut model = tiny_model(Variant::Full, 1234);
    randomize_output_layers(&mut model, 99);
    assert!(
        model.store.n_elements() <= 100,
        "gradient-check model has {} parameters",
        model.store.n_elements()
    );
    check_gradients(&mut model, LossPick::Ctr, 20);
}

#[test]
fn dt_loss_gradients_match_finite_differences() {
    let mut model = tiny_model(Variant::Full, 1234);
    randomize_output_layers(&mut model, 99);
    check_gradients(&mut model, LossPick::Dt, 20);
}

#[test]
fn orca_loss_gradients_match_finite_differences() {
    let mut model = tiny_model(Variant::Full, 1234);
    randomize_output_layers(&mut model, 99);
    check_gradients(&mut model, LossPick::Orca, 20);
}

#[test]
fn total_loss_gradients_match_finite_differences_on_ple() {
    // Same check through the PLE wiring, on the summed loss.
    let backbone_cfg = BackboneConfig {
        arch: Arch::Ple,
        embedding_dim: 1,
        n_shared_experts: 1,
        n_task_experts: 1,
        expert_hidden: vec![2],
        tower_hidden: vec![],
        n_ple_levels: 2,
        m: 3,
    };
    let orca_cfg = OrcaConfig {
        n_heads: 1,
        attn_dim: Some(2),
        nde_tower_hidden: vec![],
        ..OrcaConfig::default()
    };
    let mut model =
        OrcaModel::new(tiny_schema(), backbone_cfg, orca_cfg, Variant::Full, 77).unwrap();
    randomize_output_layers(&mut model, 5);
    check_gradients(&mut model, LossPick::Total, 20);
}

#[test]
fn extractor_path_gradients_never_reach_the_backbone() {
    let mut model = tiny_model(Variant::Full, 4321);
    randomize_output_layers(&mut model, 7);
    let batch = tiny_batch();
    let cfg = TrainConfig::default();
    let masks = fixed_masks();

    // Backprop the extractor logits alone: every backbone parameter gradient
    // must be exactly zero, while head parameters receive signal.
    let mut grads = GradStore::zeros_like(&model.store);
    {
        let mut tape = Tape::new(&model.store);
        let graph = build_loss_graph(&mut tape, &model, &batch, &cfg, &masks, Frozen::default());
        let nde = graph.nde_logits.expect("full variant has an extractor");
        let probe = tape.sum_all(nde);
        tape.backward(probe, &mut grads);
    }
    for id in model.backbone.all_ids() {
        assert!(
            grads.get(id).iter().all(|&g| g == 0.0),
            "backbone parameter '{}' received gradient through the extractor path",
            model.store.name(id)
        );
    }
    let head_signal: f64 = model
        .head
        .all_ids()
        .iter()
        .map(|&id| grads.get(id).iter().map(|g| g.abs()).sum::<f64>())
        .sum();
    assert!(head_signal > 0.0, "extractor parameters received no gradient");
}

#[test]
fn orca_loss_reaches_backbone_only_through_the_dwell_logits() {
    let mut model = tiny_model(Variant::Full, 999);
    randomize_output_layers(&mut model, 13);
    let batch = tiny_batch();
    let cfg = TrainConfig::default();
    let masks = fixed_masks();
    let (weights, reps) = base_frozen_state(&model, &batch, &cfg, &masks);

    let nde_values: Array2<f64> = {
        let mut tape = Tape::new(&model.store);
        let graph = build_loss_graph(
            &mut tape,
            &model,
            &batch,
            &cfg,
            &masks,
            Frozen { weights: Some(&weights), masked_reps: Some(&reps) },
        );
        tape.value(graph.nde_logits.unwrap()).clone()
    };

    // Gradient of the debiased loss.
    let mut grads_full = GradStore::zeros_like(&model.store);
    {
        let mut tape = Tape::new(&model.store);
        let graph = build_loss_graph(
            &mut tape,
            &model,
            &batch,
            &cfg,
            &masks,
            Frozen { weights: Some(&weights), masked_reps: Some(&reps) },
        );
        tape.backward(graph.l_orca.unwrap(), &mut grads_full);
    }

    // Reference: same weighted loss on dt_logits minus a constant copy of the
    // extractor outputs. Backbone gradients must agree exactly.
    let mut grads_ref = GradStore::zeros_like(&model.store);
    {
        let mut tape = Tape::new(&model.store);
        let graph = build_loss_graph(
            &mut tape,
            &model,
            &batch,
            &cfg,
            &masks,
            Frozen { weights: Some(&weights), masked_reps: Some(&reps) },
        );
        let frozen_nde = tape.constant(nde_values.clone());
        let orca = tape.sub(graph.dt_logits, frozen_nde);
        let l = tape.weighted_ce(
            orca,
            batch.bins.clone(),
            weights.clone(),
            batch.clicked_mask.clone(),
        );
        tape.backward(l, &mut grads_ref);
    }
    for id in model.backbone.all_ids() {
        let a = grads_full.get(id);
        let b = grads_ref.get(id);
        assert_eq!(a, b, "mismatch on '{}'", model.store.name(id));
    }
}
