//! Shared data-preparation steps for the train / eval / analyze / ablate
//! commands: load the CSV contract, split, build or reuse vocabularies and
//! bin boundaries, and encode.

use std::path::Path;

use orca_core::binning::{build_binning, BinningSpec};
use orca_core::error::{OrcaError, Result};
use orca_core::ingest::{
    assign_bins, build_vocab, encode, load_csv, read_schema, schema_with_vocab, SplitConfig,
    Vocabulary, DATASET_FILE, SCHEMA_FILE,
};
use orca_core::metrics::{auc, classification_report, mae_rmse_class, mae_rmse_seconds, MetricsReport};
use orca_core::model::{ModelPredictions, OrcaModel};
use orca_core::schema::{FeatureSchema, InteractionRecord, RawRecord};

pub struct RawSplits {
    pub schema: FeatureSchema,
    pub train: Vec<RawRecord>,
    pub val: Vec<RawRecord>,
    pub test: Vec<RawRecord>,
    pub n_rejects: usize,
}

/// Read `dataset.csv` + `schema.json` from `dir` and split.
pub fn load_and_split(dir: &Path, split: &SplitConfig) -> Result<RawSplits> {
    let schema = read_schema(&dir.join(SCHEMA_FILE))?;
    let outcome = load_csv(&dir.join(DATASET_FILE), &schema)?;
    if !outcome.rejects.is_empty() {
        log::warn!(
            "{} malformed rows rejected (first: row {}: {})",
            outcome.rejects.len(),
            outcome.rejects[0].row,
            outcome.rejects[0].reason
        );
    }
    if outcome.records.is_empty() {
        return Err(OrcaError::data("dataset has no valid rows"));
    }
    let (train, val, test) = split.apply(&outcome.records)?;
    Ok(RawSplits { schema, train, val, test, n_rejects: outcome.rejects.len() })
}

pub struct EncodedSplits {
    pub schema: FeatureSchema,
    pub vocab: Vocabulary,
    pub binning: BinningSpec,
    pub train: Vec<InteractionRecord>,
    pub val: Vec<InteractionRecord>,
    pub test: Vec<InteractionRecord>,
}

/// Fit vocabulary and binning on the training split, then encode all splits.
pub fn fit_and_encode(
    raw: &RawSplits,
    min_count: usize,
    m: usize,
    log_offset: f64,
) -> Result<EncodedSplits> {
    let vocab = build_vocab(&raw.train, &raw.schema, min_count);
    let schema = schema_with_vocab(&raw.schema, &vocab);
    let dwells: Vec<f64> = raw.train.iter().filter_map(|r| r.dwell_seconds).collect();
    if dwells.is_empty() {
        return Err(OrcaError::data("training split has no clicked instances"));
    }
    let binning = build_binning(&dwells, m, log_offset)?;
    let enc = |records: &[RawRecord]| -> Result<Vec<InteractionRecord>> {
        let mut e = encode(records, &vocab);
        assign_bins(&mut e, &binning)?;
        Ok(e)
    };
    Ok(EncodedSplits {
        schema,
        train: enc(&raw.train)?,
        val: enc(&raw.val)?,
        test: enc(&raw.test)?,
        vocab,
        binning,
    })
}

/// Encode pre-split raw records with an existing vocabulary and binning
/// (checkpoint evaluation path).
pub fn encode_with(
    records: &[RawRecord],
    vocab: &Vocabulary,
    binning: &BinningSpec,
) -> Result<Vec<InteractionRecord>> {
    let mut e = encode(records, vocab);
    assign_bins(&mut e, binning)?;
    Ok(e)
}

/// Clicked-only views used by the dwell metrics.
pub struct ClickedView {
    pub pred_bins: Vec<usize>,
    pub true_bins: Vec<usize>,
    pub dwell_seconds: Vec<f64>,
    pub ctr_probs: Vec<f64>,
}

pub fn clicked_view(records: &[InteractionRecord], preds: &ModelPredictions) -> ClickedView {
    let mut view = ClickedView {
        pred_bins: Vec::new(),
        true_bins: Vec::new(),
        dwell_seconds: Vec::new(),
        ctr_probs: Vec::new(),
    };
    for (i, r) in records.iter().enumerate() {
        if let (Some(bin), Some(t)) = (r.dwell_bin, r.dwell_seconds) {
            view.pred_bins.push(preds.pred_bins[i]);
            view.true_bins.push(bin);
            view.dwell_seconds.push(t);
            view.ctr_probs.push(preds.ctr_probs[i]);
        }
    }
    view
}

/// The full metric suite over one split.
pub fn compute_report(
    model: &OrcaModel,
    records: &[InteractionRecord],
    binning: &BinningSpec,
) -> Result<MetricsReport> {
    let preds = model.predict(records, 1024);
    let view = clicked_view(records, &preds);
    if view.pred_bins.is_empty() {
        return Err(OrcaError::data("split has no clicked instances"));
    }
    let (mae_class, rmse_class) = mae_rmse_class(&view.pred_bins, &view.true_bins)?;
    let report = classification_report(&view.pred_bins, &view.true_bins, binning.m)?;
    let (mae_seconds, rmse_seconds) =
        mae_rmse_seconds(&view.pred_bins, &view.dwell_seconds, binning)?;
    let labels: Vec<bool> = records.iter().map(|r| r.clicked).collect();
    let auc_value = auc(&preds.ctr_probs, &labels)?;
    Ok(MetricsReport {
        mae_class,
        rmse_class,
        weighted_f1: report.weighted_f1,
        macro_precision: report.macro_precision,
        macro_recall: report.macro_recall,
        mae_seconds,
        rmse_seconds,
        auc: auc_value,
        n_clicked: view.pred_bins.len(),
        n_total: records.len(),
    })
}
