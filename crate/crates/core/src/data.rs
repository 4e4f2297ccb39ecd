//! Tabular data loading, binarization into predicates, and coverage views.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::predicate::{Cell, Conjunction, Predicate};

pub type LabelId = u32;
pub type PredId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSchema {
    pub name: String,
    pub kind: FeatureKind,
    /// Observed categories, sorted (categorical only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    /// Strictly ascending cut points (numeric only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
}

/// Numeric binarization settings, e.g. `{"quantiles": 4, "per_feature_overrides": {"age": [30, 50]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinConfig {
    #[serde(default = "default_quantiles")]
    pub quantiles: usize,
    #[serde(default)]
    pub per_feature_overrides: BTreeMap<String, Vec<f64>>,
}

fn default_quantiles() -> usize {
    4
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            quantiles: default_quantiles(),
            per_feature_overrides: BTreeMap::new(),
        }
    }
}

impl BinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quantiles < 2 {
            return Err(Error::Config(format!(
                "quantiles must be >= 2, got {}",
                self.quantiles
            )));
        }
        for (name, cuts) in &self.per_feature_overrides {
            if cuts.is_empty() || cuts.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!(
                    "override for '{name}' needs at least one finite cut point"
                )));
            }
            if cuts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "override cut points for '{name}' must be strictly ascending"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: BinConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Untyped CSV contents: header plus string cells.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref()).map_err(|e| {
            Error::Schema(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse {
                row: 0,
                msg: e.to_string(),
            })?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Schema("missing header row".into()));
        }
        let mut seen = HashSet::new();
        for h in &header {
            if h.is_empty() {
                return Err(Error::Schema("empty column name in header".into()));
            }
            if !seen.insert(h) {
                return Err(Error::Schema(format!("duplicate column '{h}'")));
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row,
                msg: e.to_string(),
            })?;
            if rec.len() != header.len() {
                return Err(Error::Parse {
                    row,
                    msg: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(RawTable { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<String>> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[idx].clone()).collect())
    }
}

/// Typed feature columns with their inferred schema; no labels yet.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    schema: Vec<FeatureSchema>,
    rows: Vec<Vec<Cell>>,
}

impl FeatureTable {
    /// Infer the schema of every column except `exclude` and binarize numeric columns.
    ///
    /// A column is numeric when every value parses as a finite number and it
    /// has more than two distinct values (or has a cut-point override);
    /// anything else, including 0/1 indicator columns, is categorical.
    pub fn from_raw(table: &RawTable, exclude: &[&str], bins: &BinConfig) -> Result<Self> {
        bins.validate()?;
        if table.rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for name in exclude {
            table.column_index(name)?;
        }
        for name in bins.per_feature_overrides.keys() {
            if !table.header.contains(name) || exclude.contains(&name.as_str()) {
                return Err(Error::Schema(format!(
                    "bin override for unknown feature '{name}'"
                )));
            }
        }
        let missing: Vec<usize> = table
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.iter().any(String::is_empty))
            .map(|(i, _)| i + 1)
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingValues { rows: missing });
        }

        let cols: Vec<usize> = (0..table.header.len())
            .filter(|&c| !exclude.contains(&table.header[c].as_str()))
            .collect();
        if cols.is_empty() {
            return Err(Error::Schema("no feature columns".into()));
        }

        let mut schema = Vec::with_capacity(cols.len());
        let mut columns: Vec<Vec<Cell>> = Vec::with_capacity(cols.len());
        for &c in &cols {
            let name = &table.header[c];
            let raw: Vec<&str> = table.rows.iter().map(|r| r[c].as_str()).collect();
            let parsed: Option<Vec<f64>> = raw
                .iter()
                .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect();
            let distinct: BTreeSet<&str> = raw.iter().copied().collect();
            let override_cuts = bins.per_feature_overrides.get(name);
            match parsed {
                Some(nums) if override_cuts.is_some() || distinct.len() > 2 => {
                    let thresholds = match override_cuts {
                        Some(cuts) => cuts.clone(),
                        None => quantile_cuts(&nums, bins.quantiles),
                    };
                    schema.push(FeatureSchema {
                        name: name.clone(),
                        kind: FeatureKind::Numeric,
                        values: Vec::new(),
                        thresholds,
                    });
                    columns.push(nums.into_iter().map(Cell::Num).collect());
                }
                Some(_) | None => {
                    if override_cuts.is_some() {
                        return Err(Error::Schema(format!(
                            "bin override for non-numeric feature '{name}'"
                        )));
                    }
                    schema.push(FeatureSchema {
                        name: name.clone(),
                        kind: FeatureKind::Categorical,
                        values: distinct.iter().map(|s| s.to_string()).collect(),
                        thresholds: Vec::new(),
                    });
                    columns.push(raw.iter().map(|s| Cell::Cat(s.to_string())).collect());
                }
            }
        }
        let n = table.rows.len();
        let rows = (0..n)
            .map(|i| columns.iter().map(|col| col[i].clone()).collect())
            .collect();
        Ok(FeatureTable { schema, rows })
    }

    pub fn schema(&self) -> &[FeatureSchema] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        &self.rows[i]
    }

    /// Row `i` as a JSON object keyed by feature name.
    pub fn row_json(&self, i: usize) -> serde_json::Map<String, Json> {
        self.schema
            .iter()
            .zip(&self.rows[i])
            .map(|(f, c)| (f.name.clone(), c.to_json()))
            .collect()
    }
}

/// Cut points at the `k/q` empirical quantiles, deduplicated; only cuts that
/// leave at least one value on each side are kept.
fn quantile_cuts(values: &[f64], quantiles: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let min = sorted[0];
    let mut cuts: Vec<f64> = (1..quantiles)
        .map(|k| sorted[(k * n / quantiles).min(n - 1)])
        .filter(|&c| c > min)
        .collect();
    cuts.dedup();
    if cuts.is_empty() {
        if let Some(&next) = sorted.iter().find(|&&x| x > min) {
            cuts.push(next);
        }
    }
    cuts
}

/// Immutable instances with black-box labels and a per-predicate coverage index.
#[derive(Debug)]
pub struct Dataset {
    features: FeatureTable,
    label_names: Vec<String>,
    labels: Vec<LabelId>,
    label_counts: Vec<u32>,
    predicates: Vec<Predicate>,
    pred_feature: Vec<usize>,
    pred_ids: HashMap<Predicate, PredId>,
    pred_cover: Vec<Bitset>,
    cache: RwLock<HashMap<Vec<PredId>, Arc<Bitset>>>,
}

impl Dataset {
    pub fn new(features: FeatureTable, labels: Vec<String>) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != n {
            return Err(Error::Label(format!(
                "{} labels for {} instances",
                labels.len(),
                n
            )));
        }
        let missing: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.trim().is_empty())
            .map(|(i, _)| i + 1)
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingValues { rows: missing });
        }
        let label_names: Vec<String> = labels
            .iter()
            .map(|l| l.trim().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let label_ids: Vec<LabelId> = labels
            .iter()
            .map(|l| label_names.binary_search(&l.trim().to_string()).unwrap() as LabelId)
            .collect();
        let mut label_counts = vec![0u32; label_names.len()];
        for &l in &label_ids {
            label_counts[l as usize] += 1;
        }

        let mut preds: Vec<(Predicate, usize)> = Vec::new();
        for (fi, f) in features.schema.iter().enumerate() {
            match f.kind {
                FeatureKind::Categorical => {
                    for v in &f.values {
                        preds.push((Predicate::eq(&f.name, v), fi));
                    }
                }
                FeatureKind::Numeric => {
                    for &t in &f.thresholds {
                        preds.push((Predicate::ge(&f.name, t), fi));
                        preds.push((Predicate::lt(&f.name, t), fi));
                    }
                }
            }
        }
        preds.sort();
        let mut pred_cover = Vec::with_capacity(preds.len());
        for (p, fi) in &preds {
            let mut b = Bitset::new(n);
            for i in 0..n {
                if p.cond.matches(&features.rows[i][*fi]) {
                    b.insert(i);
                }
            }
            pred_cover.push(b);
        }
        let pred_ids = preds
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.clone(), i as PredId))
            .collect();
        let (predicates, pred_feature) = preds.into_iter().unzip();
        Ok(Dataset {
            features,
            label_names,
            labels: label_ids,
            label_counts,
            predicates,
            pred_feature,
            pred_ids,
            pred_cover,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn from_raw(
        table: &RawTable,
        label_column: &str,
        bins: &BinConfig,
    ) -> Result<Self> {
        let labels = table.column(label_column)?;
        let features = FeatureTable::from_raw(table, &[label_column], bins)?;
        Dataset::new(features, labels)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn schema(&self) -> &[FeatureSchema] {
        &self.features.schema
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.schema.iter().position(|f| f.name == name)
    }

    /// Sorted distinct labels; a label id indexes this list.
    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn label_name(&self, id: LabelId) -> &str {
        &self.label_names[id as usize]
    }

    pub fn label_id(&self, name: &str) -> Option<LabelId> {
        self.label_names
            .binary_search_by(|l| l.as_str().cmp(name))
            .ok()
            .map(|i| i as LabelId)
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> LabelId {
        self.labels[i]
    }

    pub fn label_counts(&self) -> &[u32] {
        &self.label_counts
    }

    /// Most frequent label among the instances in `subset`, ties broken by
    /// global frequency and then by the lexicographically smallest label.
    /// An empty subset yields the global majority.
    pub fn majority_label(&self, subset: &Bitset) -> LabelId {
        let mut counts = vec![0u32; self.label_names.len()];
        for i in subset.iter() {
            counts[self.labels[i] as usize] += 1;
        }
        if counts.iter().all(|&c| c == 0) {
            return majority_of(&self.label_counts, &self.label_counts);
        }
        majority_of(&counts, &self.label_counts)
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn predicate_id(&self, p: &Predicate) -> Option<PredId> {
        self.pred_ids.get(p).copied()
    }

    /// Schema index of the feature a predicate tests.
    pub fn predicate_feature(&self, id: PredId) -> usize {
        self.pred_feature[id as usize]
    }

    pub fn predicate_coverage(&self, id: PredId) -> &Bitset {
        &self.pred_cover[id as usize]
    }

    pub fn conjunction_ids(&self, conj: &Conjunction) -> Result<Vec<PredId>> {
        conj.predicates()
            .iter()
            .map(|p| {
                self.predicate_id(p)
                    .ok_or_else(|| Error::UnknownPredicate(p.to_string()))
            })
            .collect()
    }

    /// AND of the member predicates' bitsets, cached per conjunction.
    pub fn coverage(&self, conj: &Conjunction) -> Result<Arc<Bitset>> {
        let ids = self.conjunction_ids(conj)?;
        Ok(self.coverage_of_ids(&ids))
    }

    pub fn coverage_of_ids(&self, ids: &[PredId]) -> Arc<Bitset> {
        if let Some(b) = self.cache.read().unwrap().get(ids) {
            return Arc::clone(b);
        }
        let mut b = Bitset::full(self.n());
        for &id in ids {
            b.and_assign(&self.pred_cover[id as usize]);
        }
        let b = Arc::new(b);
        self.cache
            .write()
            .unwrap()
            .entry(ids.to_vec())
            .or_insert(b)
            .clone()
    }

    pub fn satisfies(&self, conj: &Conjunction, index: usize) -> Result<bool> {
        if index >= self.n() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.n(),
            });
        }
        let ids = self.conjunction_ids(conj)?;
        Ok(ids
            .iter()
            .all(|&id| self.pred_cover[id as usize].contains(index)))
    }

    /// Direct evaluation of a predicate against the stored row, bypassing the index.
    pub fn eval_raw(&self, p: &Predicate, index: usize) -> bool {
        match self.feature_index(&p.feature) {
            Some(fi) => p.cond.matches(&self.features.rows[index][fi]),
            None => false,
        }
    }
}

/// Index of the largest count; ties go to the higher global count, then the lower id.
pub fn majority_of(counts: &[u32], global: &[u32]) -> LabelId {
    let mut best = 0usize;
    for i in 1..counts.len() {
        let better = counts[i] > counts[best]
            || (counts[i] == counts[best] && global[i] > global[best]);
        if better {
            best = i;
        }
    }
    best as LabelId
}

/// Load a CSV whose `label_column` holds the black-box labels.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, bins: &BinConfig) -> Result<Dataset> {
    let table = RawTable::from_path(path)?;
    Dataset::from_raw(&table, label_column, bins)
}
