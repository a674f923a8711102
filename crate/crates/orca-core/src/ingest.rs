//! Dataset loading, vocabulary construction, encoding, and splits.
//!
//! The CSV contract: one row per impression, one column per schema field
//! (raw categorical values), plus `clicked` (0/1) and `dwell_seconds` (empty
//! when unclicked), plus the schema's optional timestamp column. Malformed
//! rows are collected into a rejects report, never silently dropped.
//!
//! Vocabularies map raw values to dense indices with index 0 reserved for
//! unknown/out-of-vocabulary values and index 1 reserved for the MASK token,
//! which encoding of raw data can never produce. Vocabularies and bin
//! boundaries are fit on the training split only.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{assign_bin, BinningSpec};
use crate::error::{OrcaError, Result};
use crate::schema::{FeatureSchema, InteractionRecord, RawRecord, N_RESERVED, UNKNOWN_INDEX};
use crate::scm::SynthDataset;

pub const COL_CLICKED: &str = "clicked";
pub const COL_DWELL: &str = "dwell_seconds";

pub const DATASET_FILE: &str = "dataset.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const ITEMS_FILE: &str = "items.json";

/// A row that failed parsing, with its 1-based data row number.
#[derive(Debug, Clone, Serialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub records: Vec<RawRecord>,
    pub rejects: Vec<RejectedRow>,
}

/// Write a generated dataset to `dir` as `dataset.csv`, `schema.json`, and
/// `items.json` (ground-truth item attributes).
pub fn write_dataset(dir: &Path, ds: &SynthDataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(DATASET_FILE))?;
    let mut header: Vec<&str> = ds.schema.fields.iter().map(|f| f.name.as_str()).collect();
    header.push(COL_CLICKED);
    header.push(COL_DWELL);
    w.write_record(&header)?;
    for r in &ds.records {
        let mut row: Vec<String> = r.values.clone();
        row.push(if r.clicked { "1".into() } else { "0".into() });
        row.push(r.dwell_seconds.map(|t| t.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;

    std::fs::write(
        dir.join(SCHEMA_FILE),
        serde_json::to_string_pretty(&ds.schema)?,
    )?;
    std::fs::write(
        dir.join(ITEMS_FILE),
        serde_json::to_string_pretty(&ds.items)?,
    )?;
    Ok(())
}

pub fn read_schema(path: &Path) -> Result<FeatureSchema> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OrcaError::data(format!("cannot read schema {}: {e}", path.display())))?;
    let schema: FeatureSchema = serde_json::from_str(&text)?;
    schema.validate()?;
    Ok(schema)
}

/// Parse a dataset CSV against a declared schema.
///
/// The header must contain every schema field plus `clicked` and
/// `dwell_seconds` (in any column order); unknown columns are an error.
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<LoadOutcome> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| OrcaError::data(format!("cannot open {}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| OrcaError::data(format!("cannot read header: {e}")))?
        .clone();

    let col_of = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| OrcaError::data(format!("missing column '{name}'")))
    };
    let field_cols: Vec<usize> = schema
        .fields
        .iter()
        .map(|f| col_of(&f.name))
        .collect::<Result<_>>()?;
    let clicked_col = col_of(COL_CLICKED)?;
    let dwell_col = col_of(COL_DWELL)?;
    let ts_col = match &schema.timestamp_column {
        Some(name) => Some(col_of(name)?),
        None => None,
    };

    let mut known = vec![false; header.len()];
    for &c in field_cols.iter().chain([&clicked_col, &dwell_col]) {
        known[c] = true;
    }
    if let Some(c) = ts_col {
        known[c] = true;
    }
    if let Some(extra) = header.iter().enumerate().find(|(i, _)| !known[*i]) {
        return Err(OrcaError::data(format!("unknown column '{}'", extra.1)));
    }

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejects.push(RejectedRow { row: row_no, reason: e.to_string() });
                continue;
            }
        };
        match parse_row(&row, &field_cols, clicked_col, dwell_col, ts_col) {
            Ok(rec) => records.push(rec),
            Err(reason) => rejects.push(RejectedRow { row: row_no, reason }),
        }
    }
    Ok(LoadOutcome { records, rejects })
}

fn parse_row(
    row: &csv::StringRecord,
    field_cols: &[usize],
    clicked_col: usize,
    dwell_col: usize,
    ts_col: Option<usize>,
) -> std::result::Result<RawRecord, String> {
    let get = |c: usize| row.get(c).ok_or_else(|| format!("short row ({} cells)", row.len()));
    let clicked = match get(clicked_col)? {
        "0" => false,
        "1" => true,
        other => return Err(format!("clicked must be 0 or 1, got '{other}'")),
    };
    let dwell_raw = get(dwell_col)?;
    let dwell_seconds = if dwell_raw.is_empty() {
        None
    } else {
        let t: f64 = dwell_raw
            .parse()
            .map_err(|_| format!("unparseable dwell_seconds '{dwell_raw}'"))?;
        if t < 0.0 {
            return Err(format!("negative dwell_seconds {t}"));
        }
        Some(t)
    };
    if clicked && dwell_seconds.is_none() {
        return Err("clicked row lacks dwell_seconds".into());
    }
    if !clicked && dwell_seconds.is_some() {
        return Err("unclicked row has dwell_seconds".into());
    }
    let timestamp = match ts_col {
        None => None,
        Some(c) => {
            let raw = get(c)?;
            Some(raw.parse::<f64>().map_err(|_| format!("unparseable timestamp '{raw}'"))?)
        }
    };
    let values = field_cols
        .iter()
        .map(|&c| get(c).map(str::to_owned))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RawRecord { values, clicked, dwell_seconds, timestamp })
}

/// Per-field raw-value -> dense-index maps. Indices 0 (unknown) and 1 (MASK)
/// are reserved; encoding raw data never yields MASK.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub per_field: Vec<HashMap<String, u32>>,
}

impl Vocabulary {
    pub fn vocab_size(&self, field: usize) -> u32 {
        self.per_field[field].len() as u32 + N_RESERVED
    }

    pub fn encode_value(&self, field: usize, raw: &str) -> u32 {
        self.per_field[field].get(raw).copied().unwrap_or(UNKNOWN_INDEX)
    }
}

/// Build per-field vocabularies from training records. Values with count
/// below `min_count` are left unmapped (they encode to unknown). Index order
/// is deterministic: count descending, then value ascending.
pub fn build_vocab(records: &[RawRecord], schema: &FeatureSchema, min_count: usize) -> Vocabulary {
    let n_fields = schema.fields.len();
    let mut per_field = Vec::with_capacity(n_fields);
    for f in 0..n_fields {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for r in records {
            *counts.entry(r.values[f].as_str()).or_insert(0) += 1;
        }
        let mut entries: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let map: HashMap<String, u32> = entries
            .into_iter()
            .enumerate()
            .map(|(i, (v, _))| (v.to_owned(), i as u32 + N_RESERVED))
            .collect();
        per_field.push(map);
    }
    Vocabulary { per_field }
}

/// Copy of `schema` with vocab sizes replaced by the built vocabulary's.
pub fn schema_with_vocab(schema: &FeatureSchema, vocab: &Vocabulary) -> FeatureSchema {
    let mut out = schema.clone();
    for (f, spec) in out.fields.iter_mut().enumerate() {
        spec.vocab_size = vocab.vocab_size(f);
    }
    out
}

/// Encode raw records to dense indices. Bins are not assigned here; see
/// [`assign_bins`].
pub fn encode(records: &[RawRecord], vocab: &Vocabulary) -> Vec<InteractionRecord> {
    records
        .iter()
        .map(|r| InteractionRecord {
            feature_ids: r
                .values
                .iter()
                .enumerate()
                .map(|(f, v)| vocab.encode_value(f, v))
                .collect(),
            clicked: r.clicked,
            dwell_seconds: r.dwell_seconds,
            dwell_bin: None,
        })
        .collect()
}

/// Fill in `dwell_bin` for clicked records from a fitted binning spec.
pub fn assign_bins(records: &mut [InteractionRecord], binning: &BinningSpec) -> Result<()> {
    for r in records.iter_mut() {
        r.dwell_bin = match r.dwell_seconds {
            Some(t) => Some(assign_bin(t, binning)?),
            None => None,
        };
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    Random,
    ByTime,
}

/// Split parameters, kept in checkpoints so later evaluation reconstructs
/// the exact same train/val/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: (f64, f64, f64),
    pub strategy: SplitStrategy,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: (0.8, 0.1, 0.1), strategy: SplitStrategy::Random, seed: 1234 }
    }
}

impl SplitConfig {
    pub fn apply(
        &self,
        records: &[RawRecord],
    ) -> Result<(Vec<RawRecord>, Vec<RawRecord>, Vec<RawRecord>)> {
        split(records, self.ratios, self.strategy, self.seed)
    }
}

/// Split records into train/val/test.
///
/// Ratios must be positive and sum to 1. The random strategy is a seeded
/// shuffle; by-time sorts on the record timestamp (stable, so input order
/// breaks ties) and errors when timestamps are absent.
pub fn split(
    records: &[RawRecord],
    ratios: (f64, f64, f64),
    strategy: SplitStrategy,
    seed: u64,
) -> Result<(Vec<RawRecord>, Vec<RawRecord>, Vec<RawRecord>)> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 {
        return Err(OrcaError::config("split ratios must be positive"));
    }
    if ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(OrcaError::config("split ratios must sum to 1"));
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    match strategy {
        SplitStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
        }
        SplitStrategy::ByTime => {
            if records.iter().any(|r| r.timestamp.is_none()) {
                return Err(OrcaError::data(
                    "by-time split requires a timestamp column on every record",
                ));
            }
            order.sort_by(|&a, &b| {
                records[a]
                    .timestamp
                    .partial_cmp(&records[b].timestamp)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
    }

    let n = records.len();
    let n_train = (rt * n as f64).round() as usize;
    let n_val = ((rv * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let take = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::MASK_INDEX;
    use crate::scm::{generate_dataset, ScmConfig};

    fn tiny_synth() -> SynthDataset {
        let cfg = ScmConfig { n_users: 30, n_items: 40, ..ScmConfig::default() };
        generate_dataset(&cfg, 1000).unwrap()
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let ds = tiny_synth();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let schema = read_schema(&dir.path().join(SCHEMA_FILE)).unwrap();
        let out = load_csv(&dir.path().join(DATASET_FILE), &schema).unwrap();
        assert!(out.rejects.is_empty());
        assert_eq!(out.records, ds.records);
    }

    #[test]
    fn empty_file_with_header_gives_empty_list() {
        let ds = tiny_synth();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "user_id,item_id,title_appeal,content_depth,clicked,dwell_seconds\n")
            .unwrap();
        let out = load_csv(&path, &ds.schema).unwrap();
        assert!(out.records.is_empty());
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn clicked_without_dwell_is_rejected_with_reason() {
        let ds = tiny_synth();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "user_id,item_id,title_appeal,content_depth,clicked,dwell_seconds\n1,2,3,4,1,\n1,2,3,4,0,\n",
        )
        .unwrap();
        let out = load_csv(&path, &ds.schema).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.rejects.len(), 1);
        assert!(out.rejects[0].reason.contains("lacks dwell_seconds"));
    }

    #[test]
    fn missing_column_error_names_it() {
        let ds = tiny_synth();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.csv");
        std::fs::write(&path, "user_id,item_id,title_appeal,clicked,dwell_seconds\n").unwrap();
        let err = load_csv(&path, &ds.schema).unwrap_err();
        assert!(err.to_string().contains("content_depth"));
    }

    #[test]
    fn vocab_indexes_every_value_at_min_count_zero() {
        let ds = tiny_synth();
        let vocab = build_vocab(&ds.records, &ds.schema, 0);
        for f in 0..ds.schema.n_fields() {
            let distinct: std::collections::HashSet<&str> =
                ds.records.iter().map(|r| r.values[f].as_str()).collect();
            assert_eq!(vocab.per_field[f].len(), distinct.len());
        }
    }

    #[test]
    fn unseen_value_encodes_to_unknown_and_mask_is_unreachable() {
        let ds = tiny_synth();
        let vocab = build_vocab(&ds.records, &ds.schema, 0);
        assert_eq!(vocab.encode_value(0, "value-never-seen"), UNKNOWN_INDEX);
        for f in 0..ds.schema.n_fields() {
            assert!(vocab.per_field[f].values().all(|&i| i != MASK_INDEX && i != UNKNOWN_INDEX));
        }
    }

    #[test]
    fn vocab_ties_break_by_value_and_are_stable() {
        let schema = tiny_synth().schema;
        let mk = |v: &str| RawRecord {
            values: vec![v.into(), "0".into(), "0".into(), "0".into()],
            clicked: false,
            dwell_seconds: None,
            timestamp: None,
        };
        let records = vec![mk("b"), mk("a"), mk("b"), mk("a")];
        let v1 = build_vocab(&records, &schema, 0);
        let v2 = build_vocab(&records, &schema, 0);
        assert_eq!(v1.per_field[0]["a"], 2);
        assert_eq!(v1.per_field[0]["b"], 3);
        assert_eq!(v1.per_field, v2.per_field);
    }

    #[test]
    fn split_sizes_determinism_and_conservation() {
        let ds = tiny_synth();
        let (a1, b1, c1) = split(&ds.records, (0.8, 0.1, 0.1), SplitStrategy::Random, 9).unwrap();
        let (a2, b2, c2) = split(&ds.records, (0.8, 0.1, 0.1), SplitStrategy::Random, 9).unwrap();
        assert_eq!(a1.len(), 800);
        assert_eq!(b1.len(), 100);
        assert_eq!(c1.len(), 100);
        assert_eq!((&a1, &b1, &c1), (&a2, &b2, &c2));

        // Union of the splits equals the input as a multiset.
        let mut all: Vec<String> = a1.iter().chain(&b1).chain(&c1).map(|r| format!("{r:?}")).collect();
        let mut orig: Vec<String> = ds.records.iter().map(|r| format!("{r:?}")).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn by_time_without_timestamps_is_an_error() {
        let ds = tiny_synth();
        assert!(split(&ds.records, (0.8, 0.1, 0.1), SplitStrategy::ByTime, 1).is_err());
    }
}
