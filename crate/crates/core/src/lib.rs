//! Rule application and confidence aggregation for knowledge-graph link
//! prediction.
//!
//! The crate loads a knowledge graph, mines or ingests first-order Horn
//! rules, applies them to rank candidate entities for `(h, r, ?)` and
//! `(?, r, t)` tasks, and aggregates per-rule confidences with Maximum,
//! Noisy-OR, or Non-redundant Noisy-OR. The latter clusters redundant rules
//! (MinHash-estimated Jaccard similarity of their inferred triple sets,
//! thresholded per relation, direction, and rule-type pair) and applies
//! Maximum inside clusters and Noisy-OR across them. Thresholds are learned
//! on a validation split by grid or random search; evaluation reports
//! filtered MRR and Hits@k under five same-score policies.

pub mod agg;
pub mod cluster;
pub mod config;
pub mod error;
pub mod eval;
pub mod hash;
pub mod infer;
pub mod kg;
pub mod mine;
pub mod pipeline;
pub mod rules;
pub mod search;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};

/// Version string recorded in output file headers.
pub const VERSION: &str = concat!("rulerank ", env!("CARGO_PKG_VERSION"));
