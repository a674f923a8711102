//! Full model assembly: backbone plus debiasing head, with the ablation
//! variant deciding which head components are active.
//!
//! At inference nothing is masked: the extractor runs on the unmasked
//! representations and the refined dwell logits are
//! `orca_logits = dt_logits - nde_logits` (the extractor stays identically
//! zero under the base variant, whose head is never trained).

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{backbone_forward, build_backbone, BackboneConfig, BackboneParams};
use crate::error::{OrcaError, Result};
use crate::head::{build_head, interact, nde_forward, HeadParams, OrcaConfig};
use crate::metrics::pred_bins_from_logits;
use crate::nn::{ParamStore, Tape};
use crate::schema::{FeatureSchema, InteractionRecord};

pub const SALT_INIT: u64 = 0x4f52_4341_494e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Backbone only.
    Base,
    /// Extractor tower plus counterfactual feature masking.
    Fci,
    /// Extractor tower plus cross-task interaction and instance weighting.
    Scd,
    /// Everything.
    Full,
}

impl Variant {
    pub fn nde_active(self) -> bool {
        self != Variant::Base
    }

    pub fn fci(self) -> bool {
        matches!(self, Variant::Fci | Variant::Full)
    }

    pub fn scd(self) -> bool {
        matches!(self, Variant::Scd | Variant::Full)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Fci => "fci",
            Variant::Scd => "scd",
            Variant::Full => "full",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = OrcaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "fci" => Ok(Variant::Fci),
            "scd" => Ok(Variant::Scd),
            "full" => Ok(Variant::Full),
            other => Err(OrcaError::config(format!(
                "unknown variant '{other}' (expected base|fci|scd|full)"
            ))),
        }
    }
}

/// Field-major batch view used by the forward passes.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `features[f][i]`: instance `i`'s index in field `f`.
    pub features: Vec<Vec<usize>>,
    pub clicked: Vec<f64>,
    pub clicked_mask: Vec<bool>,
    /// Dwell bin per instance; 0 for unclicked (excluded via the mask).
    pub bins: Vec<usize>,
    pub dwell: Vec<f64>,
}

impl Batch {
    pub fn from_records(records: &[InteractionRecord], idx: &[usize], n_fields: usize) -> Batch {
        let n = idx.len();
        let mut features = vec![Vec::with_capacity(n); n_fields];
        let mut clicked = Vec::with_capacity(n);
        let mut clicked_mask = Vec::with_capacity(n);
        let mut bins = Vec::with_capacity(n);
        let mut dwell = Vec::with_capacity(n);
        for &i in idx {
            let r = &records[i];
            for (f, feat) in features.iter_mut().enumerate() {
                feat.push(r.feature_ids[f] as usize);
            }
            clicked.push(if r.clicked { 1.0 } else { 0.0 });
            clicked_mask.push(r.clicked);
            bins.push(r.dwell_bin.unwrap_or(0));
            dwell.push(r.dwell_seconds.unwrap_or(0.0));
        }
        Batch { features, clicked, clicked_mask, bins, dwell }
    }

    pub fn len(&self) -> usize {
        self.clicked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicked.is_empty()
    }
}

/// Backbone + head with resolved configuration.
#[derive(Debug)]
pub struct OrcaModel {
    pub store: ParamStore,
    pub backbone: BackboneParams,
    pub head: HeadParams,
    pub schema: FeatureSchema,
    pub backbone_cfg: BackboneConfig,
    pub orca_cfg: OrcaConfig,
    pub variant: Variant,
    pub init_seed: u64,
}

impl OrcaModel {
    /// Build a fresh model. The variant overrides the head's ablation flags;
    /// masking requires at least one post-click field in the schema.
    pub fn new(
        schema: FeatureSchema,
        backbone_cfg: BackboneConfig,
        orca_cfg: OrcaConfig,
        variant: Variant,
        seed: u64,
    ) -> Result<OrcaModel> {
        Self::build(schema, backbone_cfg, orca_cfg, variant, seed, false)
    }

    /// Like [`OrcaModel::new`], but a schema without post-click fields
    /// downgrades masking with a logged warning instead of erroring (the
    /// extractor then consumes unmasked, detached representations).
    pub fn new_lenient(
        schema: FeatureSchema,
        backbone_cfg: BackboneConfig,
        orca_cfg: OrcaConfig,
        variant: Variant,
        seed: u64,
    ) -> Result<OrcaModel> {
        Self::build(schema, backbone_cfg, orca_cfg, variant, seed, true)
    }

    fn build(
        schema: FeatureSchema,
        backbone_cfg: BackboneConfig,
        mut orca_cfg: OrcaConfig,
        variant: Variant,
        seed: u64,
        lenient: bool,
    ) -> Result<OrcaModel> {
        schema.validate()?;
        orca_cfg.enable_fci = variant.fci();
        orca_cfg.enable_scd = variant.scd();
        if orca_cfg.enable_fci && schema.post_click_indices().is_empty() {
            if lenient {
                log::warn!(
                    "schema has no post-click fields; disabling counterfactual masking"
                );
                orca_cfg.enable_fci = false;
            } else {
                return Err(OrcaError::config(
                    "counterfactual masking enabled but the schema has no post-click fields",
                ));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SALT_INIT);
        let mut store = ParamStore::new();
        let backbone = build_backbone(&mut store, &schema, &backbone_cfg, &mut rng)?;
        let head = build_head(
            &mut store,
            &orca_cfg,
            backbone_cfg.repr_dim(),
            backbone_cfg.m,
            &mut rng,
        )?;
        Ok(OrcaModel {
            store,
            backbone,
            head,
            schema,
            backbone_cfg,
            orca_cfg,
            variant,
            init_seed: seed,
        })
    }

    /// Evaluation pass over `records`: no masking, extractor on the unmasked
    /// representations, zero extractor under the base variant.
    pub fn predict(&self, records: &[InteractionRecord], batch_size: usize) -> ModelPredictions {
        let m = self.backbone_cfg.m;
        let n = records.len();
        let mut ctr_probs = Vec::with_capacity(n);
        let mut dt_logits = Array2::zeros((n, m));
        let mut nde_logits = Array2::zeros((n, m));

        let idx_all: Vec<usize> = (0..n).collect();
        for chunk in idx_all.chunks(batch_size.max(1)) {
            let batch = Batch::from_records(records, chunk, self.schema.n_fields());
            let mut tape = Tape::new(&self.store);
            let vars = backbone_forward(&mut tape, &self.backbone, &batch.features);
            let nde = if self.variant.nde_active() {
                let inter = if self.orca_cfg.enable_scd {
                    Some(interact(&mut tape, &self.head, vars.e_c, vars.e_t).vector)
                } else {
                    None
                };
                let v = nde_forward(&mut tape, &self.head, vars.e_s, inter);
                tape.value(v).clone()
            } else {
                Array2::zeros((batch.len(), m))
            };
            let start = chunk[0];
            for &z in tape.value(vars.ctr_logit).column(0).iter() {
                ctr_probs.push(1.0 / (1.0 + (-z).exp()));
            }
            dt_logits
                .slice_mut(ndarray::s![start..start + chunk.len(), ..])
                .assign(tape.value(vars.dt_logits));
            nde_logits
                .slice_mut(ndarray::s![start..start + chunk.len(), ..])
                .assign(&nde);
        }

        let orca_logits = &dt_logits - &nde_logits;
        let pred_bins = pred_bins_from_logits(&orca_logits);
        ModelPredictions { ctr_probs, dt_logits, nde_logits, orca_logits, pred_bins }
    }
}

/// Stacked evaluation outputs over a record list.
#[derive(Debug, Clone)]
pub struct ModelPredictions {
    pub ctr_probs: Vec<f64>,
    pub dt_logits: Array2<f64>,
    pub nde_logits: Array2<f64>,
    pub orca_logits: Array2<f64>,
    pub pred_bins: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FieldKind, FieldSpec};

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FieldSpec { name: "u".into(), kind: FieldKind::Categorical, vocab_size: 8, is_post_click: false },
            FieldSpec { name: "z".into(), kind: FieldKind::Categorical, vocab_size: 8, is_post_click: true },
        ])
        .unwrap()
    }

    fn records(n: usize) -> Vec<InteractionRecord> {
        (0..n)
            .map(|i| InteractionRecord {
                feature_ids: vec![(i % 6) as u32 + 2, ((i * 3) % 6) as u32 + 2],
                clicked: i % 3 == 0,
                dwell_seconds: (i % 3 == 0).then_some(5.0 + i as f64),
                dwell_bin: (i % 3 == 0).then_some(i % 8),
            })
            .collect()
    }

    #[test]
    fn variant_wiring() {
        assert!(!Variant::Base.nde_active());
        assert!(Variant::Fci.fci() && !Variant::Fci.scd());
        assert!(!Variant::Scd.fci() && Variant::Scd.scd());
        assert!(Variant::Full.fci() && Variant::Full.scd());
        assert_eq!("scd".parse::<Variant>().unwrap(), Variant::Scd);
        assert!("ple".parse::<Variant>().is_err());
    }

    #[test]
    fn fci_without_post_click_fields_is_a_config_error() {
        let schema = FeatureSchema::new(vec![FieldSpec {
            name: "u".into(),
            kind: FieldKind::Categorical,
            vocab_size: 8,
            is_post_click: false,
        }])
        .unwrap();
        let err = OrcaModel::new(
            schema,
            BackboneConfig::default(),
            OrcaConfig::default(),
            Variant::Full,
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("post-click"));
    }

    #[test]
    fn untrained_model_satisfies_the_subtraction_identity() {
        let model = OrcaModel::new(
            schema(),
            BackboneConfig { embedding_dim: 4, expert_hidden: vec![8], tower_hidden: vec![4], ..BackboneConfig::default() },
            OrcaConfig::default(),
            Variant::Full,
            7,
        )
        .unwrap();
        let recs = records(13);
        let preds = model.predict(&recs, 5);
        assert_eq!(preds.pred_bins.len(), 13);
        let recon = &preds.orca_logits + &preds.nde_logits;
        for (a, b) in recon.iter().zip(preds.dt_logits.iter()) {
            assert_eq!(a, b);
        }
        // Untrained extractor output layer is zero.
        assert!(preds.nde_logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn base_variant_prediction_equals_backbone_logits() {
        let cfg = BackboneConfig { embedding_dim: 4, expert_hidden: vec![8], tower_hidden: vec![4], ..BackboneConfig::default() };
        let base = OrcaModel::new(schema(), cfg.clone(), OrcaConfig::default(), Variant::Base, 3).unwrap();
        let recs = records(9);
        let preds = base.predict(&recs, 4);
        assert_eq!(preds.orca_logits, preds.dt_logits);
    }

    #[test]
    fn same_seed_builds_identical_models() {
        let a = OrcaModel::new(schema(), BackboneConfig::default(), OrcaConfig::default(), Variant::Full, 11).unwrap();
        let b = OrcaModel::new(schema(), BackboneConfig::default(), OrcaConfig::default(), Variant::Full, 11).unwrap();
        for (ia, ib) in a.store.ids().zip(b.store.ids()) {
            assert_eq!(a.store.get(ia), b.store.get(ib));
        }
    }
}
