//! Two-level decision set approximations of black-box classifiers.
//!
//! The pipeline labels a dataset with a black box, mines candidate
//! conjunctions, and selects rules `(q, s, c)` by approximate local search
//! over a weighted fidelity / unambiguity / interpretability objective.

pub mod bitset;
pub mod cli;
pub mod data;
pub mod decision_set;
pub mod error;
pub mod format;
pub mod local_search;
pub mod metrics;
pub mod objective;
pub mod miner;
pub mod oracle;
pub mod pipeline;
pub mod planted;
pub mod predicate;
pub mod service;
pub mod testing;

pub use error::{Error, Result};
