//! The run configuration: one structured JSON file covering generation,
//! ingestion, model, training, and metric options, with dotted-path CLI
//! overrides. Unknown keys are rejected everywhere.

use std::path::Path;

use orca_core::backbone::BackboneConfig;
use orca_core::error::{OrcaError, Result};
use orca_core::head::OrcaConfig;
use orca_core::ingest::SplitConfig;
use orca_core::scm::ScmConfig;
use orca_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory (holds dataset.csv / schema.json); CLI --data
    /// overrides.
    pub dir: Option<String>,
    pub n_impressions: usize,
    #[serde(flatten)]
    pub split: SplitConfig,
    /// Raw values seen fewer times than this in the training split encode to
    /// the unknown index.
    pub min_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: None,
            n_impressions: 100_000,
            split: SplitConfig::default(),
            min_count: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinningOptions {
    pub m: usize,
    pub log_offset: f64,
}

impl Default for BinningOptions {
    fn default() -> Self {
        BinningOptions { m: 8, log_offset: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    pub n_ctr_deciles: usize,
    pub n_bias_groups: usize,
    /// Explicit moderate bin set; `None` uses {2,3,4,6} when m = 8, else the
    /// interior bins holding at least 2% of the ground truth.
    pub moderate_set: Option<Vec<usize>>,
    pub lofo_auc_threshold: f64,
    pub lofo_mae_threshold: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            n_ctr_deciles: 10,
            n_bias_groups: 10,
            moderate_set: None,
            lofo_auc_threshold: 0.01,
            lofo_mae_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scm: ScmConfig,
    pub data: DataConfig,
    pub binning: BinningOptions,
    pub backbone: BackboneConfig,
    pub orca: OrcaConfig,
    pub train: TrainConfig,
    pub metrics: MetricsOptions,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scm.validate()?;
        self.backbone.validate()?;
        self.train.validate()?;
        if self.binning.m != self.backbone.m {
            return Err(OrcaError::config(format!(
                "binning.m ({}) and backbone.m ({}) disagree",
                self.binning.m, self.backbone.m
            )));
        }
        if self.binning.m < 2 {
            return Err(OrcaError::config("binning.m must be >= 2"));
        }
        Ok(())
    }
}

/// Load a config file (or defaults when absent) and apply `key.path=value`
/// overrides. A run-manifest file (object with a `config` key) is accepted
/// directly, making any run re-executable from its manifest.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut value: serde_json::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                OrcaError::config(format!("cannot read config {}: {e}", p.display()))
            })?;
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| OrcaError::config(format!("config is not valid JSON: {e}")))?;
            match v.get("config") {
                Some(inner) if v.get("dataset_sha256").is_some() => inner.clone(),
                _ => v,
            }
        }
        None => serde_json::json!({}),
    };

    for entry in overrides {
        let (key, raw) = entry
            .split_once('=')
            .ok_or_else(|| OrcaError::config(format!("override '{entry}' is not key=value")))?;
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_owned()));
        set_path(&mut value, key, parsed)?;
    }

    let cfg: RunConfig = serde_json::from_value(value)
        .map_err(|e| OrcaError::config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn set_path(root: &mut serde_json::Value, dotted: &str, new: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            return Err(OrcaError::config(format!("override path '{dotted}' crosses a non-object")));
        }
        let map = cur.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert((*part).to_owned(), new);
            return Ok(());
        }
        cur = map.entry((*part).to_owned()).or_insert(serde_json::json!({}));
    }
    Err(OrcaError::config(format!("empty override path '{dotted}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use orca_core::model::Variant;

    #[test]
    fn defaults_validate() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg.binning.m, 8);
        cfg.validate().unwrap();
    }

    #[test]
    fn dotted_overrides_reach_nested_fields() {
        let cfg = load_config(
            None,
            &[
                "scm.clickbait_fraction=0.4".into(),
                "train.variant=\"scd\"".into(),
                "train.variant=scd".into(),
                "data.min_count=7".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.scm.clickbait_fraction, 0.4);
        assert_eq!(cfg.train.variant, Variant::Scd);
        assert_eq!(cfg.data.min_count, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load_config(None, &["train.varinat=full".into()]).unwrap_err();
        assert!(err.to_string().contains("invalid config"), "{err}");
    }

    #[test]
    fn disagreeing_bin_counts_are_rejected() {
        let err = load_config(None, &["binning.m=6".into()]).unwrap_err();
        assert!(err.to_string().contains("disagree"));
    }
}
