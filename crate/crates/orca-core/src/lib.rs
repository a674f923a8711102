//! Joint click-through-rate and dwell-time modeling with causal decoupling.
//!
//! The crate bundles:
//! - a feature schema, record model, and log-equidistant dwell discretization
//!   ([`schema`], [`binning`]);
//! - a structural-causal-model impression generator with a plantable
//!   clickbait shortcut and a Monte-Carlo mediation oracle ([`scm`]);
//! - dataset ingestion, vocabularies, and reproducible splits ([`ingest`]);
//! - a differentiable multi-task backbone (MMoE / PLE) and the ORCA
//!   debiasing head — counterfactual feature masking, cross-task attention,
//!   and a negative-dependency extractor subtracted in logit space
//!   ([`backbone`], [`head`], [`model`]);
//! - losses with inverse instance weighting, the training loop, and
//!   checkpointing ([`loss`], [`train`], [`checkpoint`]);
//! - the evaluation metric suite and diagnostic analyses ([`metrics`],
//!   [`analysis`], [`stats`]).

pub mod analysis;
pub mod backbone;
pub mod binning;
pub mod checkpoint;
pub mod error;
pub mod head;
pub mod ingest;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod schema;
pub mod scm;
pub mod stats;
pub mod train;

pub use error::{OrcaError, Result};
