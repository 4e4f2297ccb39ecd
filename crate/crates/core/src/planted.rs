//! Synthetic data labeled by a known two-level decision set.
//!
//! Features `x0..x{m-1}` are uniform binary. Three descriptors partition the
//! space (`x0=1`, `x0=0 ∧ x1=1`, `x0=0 ∧ x1=0`) and each holds two rules that
//! split on one further feature with opposite labels.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::RawTable;
use crate::decision_set::Rule;
use crate::error::{Error, Result};
use crate::predicate::{Conjunction, Predicate};

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedConfig {
    pub n: usize,
    pub n_features: usize,
    /// Probability of flipping each label.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig { n: 2000, n_features: 10, noise: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub table: RawTable,
    pub rules: Vec<Rule>,
}

fn feature(i: usize) -> String {
    format!("x{i}")
}

fn conj(preds: &[(usize, u8)]) -> Conjunction {
    Conjunction::new(preds.iter().map(|&(f, v)| Predicate::eq(feature(f), v.to_string())))
        .expect("planted conjunctions are consistent")
}

/// The ground-truth rules; they cover every instance exactly once.
pub fn planted_rules() -> Vec<Rule> {
    let descriptors = [
        (conj(&[(0, 1)]), 2, "Pos"),
        (conj(&[(0, 0), (1, 1)]), 3, "Neg"),
        (conj(&[(0, 0), (1, 0)]), 4, "Pos"),
    ];
    let mut rules = Vec::new();
    for (q, f, on) in descriptors {
        let off = if on == "Pos" { "Neg" } else { "Pos" };
        rules.push(Rule::new(q.clone(), conj(&[(f, 1)]), on).unwrap());
        rules.push(Rule::new(q, conj(&[(f, 0)]), off).unwrap());
    }
    rules
}

fn label_of(row: &[u8]) -> &'static str {
    match (row[0], row[1]) {
        (1, _) => if row[2] == 1 { "Pos" } else { "Neg" },
        (0, 1) => if row[3] == 1 { "Neg" } else { "Pos" },
        _ => if row[4] == 1 { "Pos" } else { "Neg" },
    }
}

pub fn generate(cfg: &PlantedConfig) -> Result<Planted> {
    if cfg.n_features < 5 {
        return Err(Error::Config("planted model needs at least 5 features".into()));
    }
    if cfg.n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::Config("noise must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut header: Vec<String> = (0..cfg.n_features).map(feature).collect();
    header.push(LABEL_COLUMN.to_string());
    let mut rows = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let bits: Vec<u8> = (0..cfg.n_features).map(|_| rng.random_bool(0.5) as u8).collect();
        let mut label = label_of(&bits);
        if cfg.noise > 0.0 && rng.random_bool(cfg.noise) {
            label = if label == "Pos" { "Neg" } else { "Pos" };
        }
        let mut row: Vec<String> = bits.iter().map(|b| b.to_string()).collect();
        row.push(label.to_string());
        rows.push(row);
    }
    Ok(Planted { table: RawTable { header, rows }, rules: planted_rules() })
}

pub fn write_csv(table: &RawTable, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&table.header)?;
    for row in &table.rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}
