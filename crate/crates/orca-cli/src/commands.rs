//! The five subcommands: generate, train, eval, analyze, ablate.

use std::path::{Path, PathBuf};

use orca_core::analysis::{
    ctr_conditioned_bias, heatmap, leave_one_feature_out, moderate_mass, moderate_set_from_truth,
    Heatmap, DEFAULT_MODERATE_SET_M8,
};
use orca_core::binning::build_binning;
use orca_core::checkpoint::{load_checkpoint, save_checkpoint, DataMeta};
use orca_core::error::{OrcaError, Result};
use orca_core::ingest::{write_dataset, SplitConfig};
use orca_core::metrics::MetricsReport;
use orca_core::model::{OrcaModel, Variant};
use orca_core::scm::{dataset_stats, generate_dataset, item_ctr_dwell_correlation, FIELD_ITEM};
use orca_core::stats::paired_t_test;
use orca_core::train::{train, write_history_csv, TrainConfig, TrainResult};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::pipeline::{
    clicked_view, compute_report, encode_with, fit_and_encode, load_and_split, EncodedSplits,
};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Serialize)]
struct Environment {
    os: &'static str,
    arch: &'static str,
    version: &'static str,
}

impl Environment {
    fn current() -> Self {
        Environment {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config: &'a RunConfig,
    dataset_sha256: String,
    schema_sha256: String,
    environment: Environment,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| OrcaError::data(format!("cannot hash {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Generate a synthetic dataset and print its summary statistics.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = generate_dataset(&cfg.scm, cfg.data.n_impressions)?;
    write_dataset(out, &ds)?;

    let dwells: Vec<f64> = ds.records.iter().filter_map(|r| r.dwell_seconds).collect();
    if dwells.is_empty() {
        return Err(OrcaError::data("generated dataset has no clicked impressions"));
    }
    let binning = build_binning(&dwells, cfg.binning.m, cfg.binning.log_offset)?;
    let stats = dataset_stats(&ds.records, &binning)?;
    let item_field = ds.schema.field_index(FIELD_ITEM).unwrap();
    let corr = item_ctr_dwell_correlation(&ds.records, item_field);

    println!("wrote {} impressions to {}", stats.n_impressions, out.display());
    println!(
        "clicks: {} (rate {:.4}, supervision ratio {})",
        stats.n_clicks,
        stats.click_rate,
        stats
            .supervision_ratio
            .map(|r| format!("{r:.1}:1"))
            .unwrap_or_else(|| "n/a".into())
    );
    println!("dwell-bin histogram (clicked): {:?}", stats.dwell_bin_histogram);
    match corr {
        Some(c) => println!("item-level CTR/dwell correlation: {c:.4}"),
        None => println!("item-level CTR/dwell correlation: undefined"),
    }
    let stats_json = serde_json::json!({
        "stats": stats,
        "item_ctr_dwell_correlation": corr,
    });
    std::fs::write(out.join("stats.json"), serde_json::to_string_pretty(&stats_json)?)?;
    Ok(())
}

fn write_run_manifest(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    let manifest = RunManifest {
        config: cfg,
        dataset_sha256: sha256_file(&data_dir.join(orca_core::ingest::DATASET_FILE))?,
        schema_sha256: sha256_file(&data_dir.join(orca_core::ingest::SCHEMA_FILE))?,
        environment: Environment::current(),
    };
    std::fs::write(out.join(RUN_MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Train one model; returns the result for exit-code mapping.
pub fn cmd_train(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<TrainResult> {
    std::fs::create_dir_all(out)?;
    let raw = load_and_split(data_dir, &cfg.data.split)?;
    let enc = fit_and_encode(&raw, cfg.data.min_count, cfg.binning.m, cfg.binning.log_offset)?;

    let mut model = OrcaModel::new_lenient(
        enc.schema.clone(),
        cfg.backbone.clone(),
        cfg.orca.clone(),
        cfg.train.variant,
        cfg.train.seed,
    )?;
    let result = train(&mut model, &enc.train, &enc.val, &cfg.train)?;

    let data_meta = DataMeta { split: cfg.data.split.clone(), min_count: cfg.data.min_count };
    save_checkpoint(
        &out.join(CHECKPOINT_DIR),
        &model,
        &enc.vocab,
        &enc.binning,
        &cfg.train,
        &data_meta,
    )?;
    write_history_csv(&out.join(HISTORY_FILE), &result.history)?;
    write_run_manifest(cfg, data_dir, out)?;

    let report = compute_report(&model, &enc.test, &enc.binning)?;
    println!(
        "trained variant={} epochs={} best_epoch={} val_mae_class={:.4}",
        cfg.train.variant.as_str(),
        result.history.len(),
        result.best_epoch,
        result.best_val_mae_class
    );
    println!("test: {}", serde_json::to_string(&report)?);
    if result.diverged {
        log::warn!("training diverged; checkpoint holds the last good parameters");
    }
    Ok(result)
}

pub enum SplitChoice {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitChoice {
    type Err = OrcaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitChoice::Train),
            "val" => Ok(SplitChoice::Val),
            "test" => Ok(SplitChoice::Test),
            other => Err(OrcaError::config(format!(
                "unknown split '{other}' (expected train|val|test)"
            ))),
        }
    }
}

struct CheckpointEval {
    model: OrcaModel,
    binning: orca_core::binning::BinningSpec,
    records: Vec<orca_core::schema::InteractionRecord>,
}

fn load_for_eval(checkpoint: &Path, data_dir: &Path, split: &SplitChoice) -> Result<CheckpointEval> {
    let (model, vocab, binning, _train_cfg, data_meta) = load_checkpoint(checkpoint)?;
    let raw = load_and_split(data_dir, &data_meta.split)?;
    let chosen = match split {
        SplitChoice::Train => &raw.train,
        SplitChoice::Val => &raw.val,
        SplitChoice::Test => &raw.test,
    };
    let records = encode_with(chosen, &vocab, &binning)?;
    Ok(CheckpointEval { model, binning, records })
}

/// Evaluate a checkpoint on one split and print the metric report as JSON.
pub fn cmd_eval(
    checkpoint: &Path,
    data_dir: &Path,
    split: &SplitChoice,
    out: Option<&Path>,
) -> Result<MetricsReport> {
    let ev = load_for_eval(checkpoint, data_dir, split)?;
    let report = compute_report(&ev.model, &ev.records, &ev.binning)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = out {
        std::fs::write(path, &json)?;
    }
    Ok(report)
}

fn write_heatmap_csv(path: &Path, hm: &Heatmap) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = hm.col_marginals.len();
    let mut header = vec!["ctr_decile".to_string()];
    header.extend((0..m).map(|b| format!("bin_{b}")));
    header.push("row_total".into());
    w.write_record(&header)?;
    for (d, row) in hm.counts.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        rec.push(hm.row_marginals[d].to_string());
        w.write_record(&rec)?;
    }
    let mut last = vec!["col_total".to_string()];
    last.extend(hm.col_marginals.iter().map(|c| c.to_string()));
    last.push(hm.col_marginals.iter().sum::<usize>().to_string());
    w.write_record(&last)?;
    w.flush()?;
    Ok(())
}

fn moderate_set_for(
    explicit: Option<&Vec<usize>>,
    m: usize,
    true_bins: &[usize],
) -> Vec<usize> {
    match explicit {
        Some(set) => set.clone(),
        None if m == 8 => DEFAULT_MODERATE_SET_M8.to_vec(),
        None => moderate_set_from_truth(true_bins, m, 0.02),
    }
}

/// Heatmaps, moderate-mass report, bias curve, and the leave-one-feature-out
/// table for one checkpoint; optionally a slope comparison against a second.
pub fn cmd_analyze(
    cfg: &RunConfig,
    checkpoint: &Path,
    data_dir: &Path,
    split: &SplitChoice,
    out: &Path,
    compare: Option<&Path>,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let ev = load_for_eval(checkpoint, data_dir, split)?;
    let preds = ev.model.predict(&ev.records, 1024);
    let view = clicked_view(&ev.records, &preds);
    if view.pred_bins.is_empty() {
        return Err(OrcaError::data("split has no clicked instances"));
    }
    let m = ev.binning.m;

    let hm_true = heatmap(&view.ctr_probs, &view.true_bins, m, cfg.metrics.n_ctr_deciles)?;
    let hm_pred = heatmap(&view.ctr_probs, &view.pred_bins, m, cfg.metrics.n_ctr_deciles)?;
    write_heatmap_csv(&out.join("heatmap_true.csv"), &hm_true)?;
    write_heatmap_csv(&out.join("heatmap_pred.csv"), &hm_pred)?;

    let mset = moderate_set_for(cfg.metrics.moderate_set.as_ref(), m, &view.true_bins);
    let mm = moderate_mass(&view.pred_bins, &view.true_bins, &mset)?;
    std::fs::write(out.join("moderate_mass.json"), serde_json::to_string_pretty(&mm)?)?;

    let bias = ctr_conditioned_bias(
        &view.ctr_probs,
        &view.pred_bins,
        &view.true_bins,
        cfg.metrics.n_bias_groups,
    )?;
    let mut w = csv::Writer::from_path(out.join("bias_curve.csv"))?;
    w.write_record(["ctr_group", "mean_signed_bin_error"])?;
    for (g, b) in bias.group_bias.iter().enumerate() {
        w.write_record([g.to_string(), b.to_string()])?;
    }
    w.flush()?;

    let mut lofo_w = csv::Writer::from_path(out.join("lofo.csv"))?;
    lofo_w.write_record(["field", "delta_auc", "delta_mae_class", "post_click_candidate"])?;
    for field in &ev.model.schema.fields.clone() {
        let r = leave_one_feature_out(
            &ev.model,
            &ev.model.schema,
            &ev.records,
            &field.name,
            cfg.metrics.lofo_auc_threshold,
            cfg.metrics.lofo_mae_threshold,
        )?;
        lofo_w.write_record([
            r.field,
            r.delta_auc.to_string(),
            r.delta_mae_class.to_string(),
            r.post_click_candidate.to_string(),
        ])?;
    }
    lofo_w.flush()?;

    let mut summary = serde_json::json!({
        "moderate_mass": mm,
        "bias_slope": bias.slope,
    });
    if let Some(other) = compare {
        let ev2 = load_for_eval(other, data_dir, split)?;
        let preds2 = ev2.model.predict(&ev2.records, 1024);
        let view2 = clicked_view(&ev2.records, &preds2);
        let bias2 = ctr_conditioned_bias(
            &view2.ctr_probs,
            &view2.pred_bins,
            &view2.true_bins,
            cfg.metrics.n_bias_groups,
        )?;
        summary["compare_bias_slope"] = serde_json::json!(bias2.slope);
    }
    std::fs::write(out.join("analysis.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "analysis written to {} (moderate ratio {:?}, bias slope {:.4})",
        out.display(),
        mm.ratio,
        bias.slope
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct AblationRow {
    variant: &'static str,
    seed: u64,
    #[serde(flatten)]
    report: MetricsReport,
}

/// Train every variant for every seed and tabulate metrics plus paired
/// t-tests against the base variant.
pub fn cmd_ablate(cfg: &RunConfig, data_dir: &Path, out: &Path, seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(OrcaError::config("ablation needs at least one seed"));
    }
    std::fs::create_dir_all(out)?;
    let raw = load_and_split(data_dir, &cfg.data.split)?;
    let enc = fit_and_encode(&raw, cfg.data.min_count, cfg.binning.m, cfg.binning.log_offset)?;

    let variants = [Variant::Base, Variant::Fci, Variant::Scd, Variant::Full];
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();

    let rows: Result<Vec<AblationRow>> = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let report = run_one(cfg, &enc, variant, seed)?;
            Ok(AblationRow { variant: variant.as_str(), seed, report })
        })
        .collect();
    let rows = rows?;

    let mut w = csv::Writer::from_path(out.join("ablation.csv"))?;
    w.write_record([
        "variant",
        "seed",
        "mae_class",
        "rmse_class",
        "weighted_f1",
        "macro_precision",
        "macro_recall",
        "mae_seconds",
        "rmse_seconds",
        "auc",
    ])?;
    for r in &rows {
        w.write_record([
            r.variant.to_string(),
            r.seed.to_string(),
            r.report.mae_class.to_string(),
            r.report.rmse_class.to_string(),
            r.report.weighted_f1.to_string(),
            r.report.macro_precision.to_string(),
            r.report.macro_recall.to_string(),
            r.report.mae_seconds.to_string(),
            r.report.rmse_seconds.to_string(),
            r.report.auc.to_string(),
        ])?;
    }
    w.flush()?;

    if seeds.len() < 2 {
        log::warn!("fewer than 2 seeds: skipping paired t-tests");
        println!("{} runs recorded (t-tests skipped: need >= 2 seeds)", rows.len());
        return Ok(());
    }

    let metric_of = |r: &MetricsReport, name: &str| -> f64 {
        match name {
            "mae_class" => r.mae_class,
            "rmse_class" => r.rmse_class,
            "weighted_f1" => r.weighted_f1,
            "macro_precision" => r.macro_precision,
            "macro_recall" => r.macro_recall,
            "mae_seconds" => r.mae_seconds,
            "rmse_seconds" => r.rmse_seconds,
            "auc" => r.auc,
            _ => unreachable!(),
        }
    };
    let series = |variant: Variant, name: &str| -> Vec<f64> {
        seeds
            .iter()
            .map(|&s| {
                let row = rows
                    .iter()
                    .find(|r| r.variant == variant.as_str() && r.seed == s)
                    .expect("every job produced a row");
                metric_of(&row.report, name)
            })
            .collect()
    };

    let mut tw = csv::Writer::from_path(out.join("ttests.csv"))?;
    tw.write_record(["metric", "variant", "t", "p", "df"])?;
    for name in [
        "mae_class",
        "rmse_class",
        "weighted_f1",
        "macro_precision",
        "macro_recall",
        "mae_seconds",
        "rmse_seconds",
        "auc",
    ] {
        let base = series(Variant::Base, name);
        for variant in [Variant::Fci, Variant::Scd, Variant::Full] {
            let other = series(variant, name);
            let t = paired_t_test(&other, &base)?;
            tw.write_record([
                name.to_string(),
                variant.as_str().to_string(),
                t.t.to_string(),
                t.p.to_string(),
                t.df.to_string(),
            ])?;
        }
    }
    tw.flush()?;
    println!(
        "{} runs recorded to {}; t-tests in ttests.csv",
        rows.len(),
        out.display()
    );
    Ok(())
}

fn run_one(
    cfg: &RunConfig,
    enc: &EncodedSplits,
    variant: Variant,
    seed: u64,
) -> Result<MetricsReport> {
    let mut model = OrcaModel::new_lenient(
        enc.schema.clone(),
        cfg.backbone.clone(),
        cfg.orca.clone(),
        variant,
        seed,
    )?;
    let train_cfg = TrainConfig { variant, seed, ..cfg.train.clone() };
    let result = train(&mut model, &enc.train, &enc.val, &train_cfg)?;
    if result.diverged {
        return Err(OrcaError::Divergence(format!(
            "variant {} seed {seed} diverged",
            variant.as_str()
        )));
    }
    compute_report(&model, &enc.test, &enc.binning)
}

/// Resolve the data directory from the CLI flag or the config.
pub fn resolve_data_dir(flag: Option<&PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    match (flag, &cfg.data.dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) => Ok(PathBuf::from(p)),
        (None, None) => Err(OrcaError::config(
            "no dataset directory: pass --data DIR or set data.dir in the config",
        )),
    }
}
