//! Checkpoint directory layout: a JSON manifest carrying configs, schema,
//! vocabulary, binning spec, and the tensor index, plus a raw little-endian
//! `f32` blob with the parameter values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneConfig;
use crate::binning::BinningSpec;
use crate::error::{OrcaError, Result};
use crate::head::OrcaConfig;
use crate::ingest::{SplitConfig, Vocabulary};
use crate::model::OrcaModel;
use crate::nn::params::{load_blob, tensor_blob, TensorEntry};
use crate::schema::FeatureSchema;
use crate::train::TrainConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const BINNING_FILE: &str = "binning.json";

/// How the training data was split and encoded; evaluation reconstructs the
/// identical partition from these.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DataMeta {
    pub split: SplitConfig,
    pub min_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema: FeatureSchema,
    pub vocab: Vocabulary,
    pub binning: BinningSpec,
    pub backbone: BackboneConfig,
    pub orca: OrcaConfig,
    pub train: TrainConfig,
    pub data: DataMeta,
    pub tensors: Vec<TensorEntry>,
}

/// Write `dir/manifest.json`, `dir/params.bin`, and the binning spec JSON
/// (duplicated beside the model per the dataset contract).
pub fn save_checkpoint(
    dir: &Path,
    model: &OrcaModel,
    vocab: &Vocabulary,
    binning: &BinningSpec,
    train_cfg: &TrainConfig,
    data: &DataMeta,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (tensors, blob) = tensor_blob(&model.store);
    let manifest = CheckpointManifest {
        schema: model.schema.clone(),
        vocab: vocab.clone(),
        binning: binning.clone(),
        backbone: model.backbone_cfg.clone(),
        orca: model.orca_cfg.clone(),
        train: train_cfg.clone(),
        data: data.clone(),
        tensors,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    std::fs::write(dir.join(PARAMS_FILE), blob)?;
    std::fs::write(dir.join(BINNING_FILE), binning.to_json()?)?;
    Ok(())
}

/// Rebuild the model from a checkpoint directory.
pub fn load_checkpoint(
    dir: &Path,
) -> Result<(OrcaModel, Vocabulary, BinningSpec, TrainConfig, DataMeta)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        OrcaError::data(format!("missing checkpoint manifest {}: {e}", manifest_path.display()))
    })?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    manifest.binning.validate()?;

    let mut model = OrcaModel::new(
        manifest.schema,
        manifest.backbone,
        manifest.orca,
        manifest.train.variant,
        manifest.train.seed,
    )?;
    let blob_path = dir.join(PARAMS_FILE);
    let blob = std::fs::read(&blob_path).map_err(|e| {
        OrcaError::data(format!("missing checkpoint params {}: {e}", blob_path.display()))
    })?;
    load_blob(&mut model.store, &manifest.tensors, &blob)?;
    Ok((model, manifest.vocab, manifest.binning, manifest.train, manifest.data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::schema::{FieldKind, FieldSpec};

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let schema = FeatureSchema::new(vec![
            FieldSpec { name: "u".into(), kind: FieldKind::Categorical, vocab_size: 6, is_post_click: false },
            FieldSpec { name: "z".into(), kind: FieldKind::Categorical, vocab_size: 6, is_post_click: true },
        ])
        .unwrap();
        let model = OrcaModel::new(
            schema.clone(),
            BackboneConfig { embedding_dim: 3, expert_hidden: vec![6], tower_hidden: vec![4], ..BackboneConfig::default() },
            OrcaConfig::default(),
            Variant::Full,
            5,
        )
        .unwrap();
        let vocab = Vocabulary { per_field: vec![Default::default(), Default::default()] };
        let binning = crate::binning::build_binning(&[1.0, 4.0, 9.0, 30.0], 4, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(
            dir.path(),
            &model,
            &vocab,
            &binning,
            &TrainConfig::default(),
            &DataMeta::default(),
        )
        .unwrap();

        let (loaded, _, loaded_binning, _, _) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded_binning, binning);

        let records: Vec<crate::schema::InteractionRecord> = (0..7)
            .map(|i| crate::schema::InteractionRecord {
                feature_ids: vec![(i % 4) as u32 + 2, ((i * 2) % 4) as u32 + 2],
                clicked: i % 2 == 0,
                dwell_seconds: (i % 2 == 0).then_some(4.0),
                dwell_bin: (i % 2 == 0).then_some(1),
            })
            .collect();
        let a = model.predict(&records, 4);
        let b = loaded.predict(&records, 4);
        // Values round-trip through f32, so compare at f32 resolution.
        for (x, y) in a.orca_logits.iter().zip(b.orca_logits.iter()) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
        assert_eq!(a.pred_bins, b.pred_bins);
    }
}
