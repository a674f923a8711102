//! Feature schema and the impression record model shared by every other module.
//!
//! A dataset is described by a [`FeatureSchema`]: an ordered list of categorical
//! fields, each with a vocabulary size and a flag marking whether the field is
//! a *post-click* feature (one that carries dwell-time signal but essentially
//! no click signal, e.g. content depth). Records come in two forms: a
//! [`RawRecord`] straight out of a CSV, holding raw string values, and an
//! encoded [`InteractionRecord`] whose feature values are dense vocabulary
//! indices ready for embedding lookup.

use serde::{Deserialize, Serialize};

use crate::error::{OrcaError, Result};

/// Reserved vocabulary index for unknown / out-of-vocabulary values.
pub const UNKNOWN_INDEX: u32 = 0;
/// Reserved vocabulary index for the learned MASK token used by
/// counterfactual feature masking. Never produced by encoding raw data.
pub const MASK_INDEX: u32 = 1;
/// Number of reserved indices at the front of every field vocabulary.
pub const N_RESERVED: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Categorical,
    /// A numeric raw feature already discretized to integer bucket labels.
    NumericBucketized,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Total embedding-table rows for this field, including the two reserved
    /// indices. Always >= 2.
    pub vocab_size: u32,
    pub is_post_click: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub fields: Vec<FieldSpec>,
    /// Name of an optional impression-timestamp column (used by time-based
    /// splitting); not a feature field.
    #[serde(default)]
    pub timestamp_column: Option<String>,
}

impl FeatureSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        let schema = FeatureSchema {
            fields,
            timestamp_column: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() {
            return Err(OrcaError::config("schema has no fields"));
        }
        let mut names: Vec<&str> = self.fields.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.fields.len() {
            return Err(OrcaError::config("schema field names must be unique"));
        }
        for f in &self.fields {
            if f.vocab_size < N_RESERVED {
                return Err(OrcaError::config(format!(
                    "field '{}' has vocab_size {} < {}",
                    f.name, f.vocab_size, N_RESERVED
                )));
            }
        }
        if self.fields.iter().all(|f| f.is_post_click) {
            return Err(OrcaError::config(
                "at least one field must not be post-click",
            ));
        }
        Ok(())
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn post_click_indices(&self) -> Vec<usize> {
        self.fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_post_click)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One impression as parsed from CSV, feature values still raw strings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub values: Vec<String>,
    pub clicked: bool,
    /// Present iff clicked.
    pub dwell_seconds: Option<f64>,
    pub timestamp: Option<f64>,
}

/// One impression with features encoded to dense vocabulary indices.
///
/// `dwell_seconds` and `dwell_bin` are present iff `clicked`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub feature_ids: Vec<u32>,
    pub clicked: bool,
    pub dwell_seconds: Option<f64>,
    pub dwell_bin: Option<usize>,
}

/// A single integrity violation found in a record. Violations are data, not
/// errors: `validate_record` always returns the full list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    FieldCountMismatch { expected: usize, got: usize },
    IndexOutOfRange { field: String, index: u32, vocab_size: u32 },
    DwellOnUnclicked,
    BinOnUnclicked,
    MissingDwellOnClicked,
    NegativeDwell,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::FieldCountMismatch { expected, got } => {
                write!(f, "expected {expected} feature values, got {got}")
            }
            Violation::IndexOutOfRange { field, index, vocab_size } => {
                write!(f, "field '{field}': index {index} out of range (vocab {vocab_size})")
            }
            Violation::DwellOnUnclicked => write!(f, "dwell_seconds present on unclicked record"),
            Violation::BinOnUnclicked => write!(f, "dwell_bin present on unclicked record"),
            Violation::MissingDwellOnClicked => write!(f, "clicked record lacks dwell_seconds"),
            Violation::NegativeDwell => write!(f, "dwell_seconds is negative"),
        }
    }
}

/// Check index ranges and the clicked/dwell invariants. Returns every
/// violation found, not just the first.
pub fn validate_record(schema: &FeatureSchema, record: &InteractionRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.feature_ids.len() != schema.fields.len() {
        out.push(Violation::FieldCountMismatch {
            expected: schema.fields.len(),
            got: record.feature_ids.len(),
        });
    }
    for (field, &idx) in schema.fields.iter().zip(&record.feature_ids) {
        if idx >= field.vocab_size {
            out.push(Violation::IndexOutOfRange {
                field: field.name.clone(),
                index: idx,
                vocab_size: field.vocab_size,
            });
        }
    }
    if record.clicked {
        match record.dwell_seconds {
            None => out.push(Violation::MissingDwellOnClicked),
            Some(t) if t < 0.0 => out.push(Violation::NegativeDwell),
            _ => {}
        }
    } else {
        if record.dwell_seconds.is_some() {
            out.push(Violation::DwellOnUnclicked);
        }
        if record.dwell_bin.is_some() {
            out.push(Violation::BinOnUnclicked);
        }
    }
    out
}
