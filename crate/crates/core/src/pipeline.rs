//! End-to-end runs: label, mine, search, fit, report. Also one-axis sweeps.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BinConfig, Dataset, FeatureTable, RawTable};
use crate::decision_set::{fit_default_and_ties, HighestAgreement, Rule, TwoLevelDecisionSet};
use crate::error::{Error, Result};
use crate::format::{fixed6, serialize_fixed6, serialize_fixed6_vec};
use crate::local_search::{optimize, SearchLimits, SearchResult};
use crate::metrics::{self, MetricsReport};
use crate::miner::{build_domain, CandidateDomain, MinerConfig};
use crate::objective::{BoundConstants, GroundSet, Objective, ObjectiveConfig};
use crate::oracle::{Instance, Oracle, OracleSource};
use crate::predicate::Conjunction;

/// Build a labeled dataset: features from every column except the label
/// column, labels from the oracle.
pub fn prepare_dataset(
    table: &RawTable,
    label_column: Option<&str>,
    oracle: &OracleSource,
    bins: &BinConfig,
) -> Result<Dataset> {
    let mut exclude: Vec<&str> = label_column.into_iter().collect();
    if let Some(c) = oracle.label_column() {
        if !exclude.contains(&c) {
            exclude.push(c);
        }
    }
    let features = FeatureTable::from_raw(table, &exclude, bins)?;
    let labels = Oracle::new(oracle.clone())?.label_table(table, &features)?;
    Dataset::new(features, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainRequest {
    pub miner: MinerConfig,
    pub objective: ObjectiveConfig,
    /// Features descriptors may use; decision logic is unrestricted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    pub seed: u64,
    pub max_moves_per_round: usize,
}

impl Default for ExplainRequest {
    fn default() -> Self {
        ExplainRequest {
            miner: MinerConfig::default(),
            objective: ObjectiveConfig::default(),
            features: None,
            seed: 0,
            max_moves_per_round: SearchLimits::default().max_moves_per_round,
        }
    }
}

impl ExplainRequest {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        self.objective.validate()?;
        self.miner.validate(ds)?;
        if self.miner.user_features.is_some() {
            return Err(Error::Config(
                "set the descriptor feature restriction through 'features'".into(),
            ));
        }
        if let Some(u) = &self.features {
            if u.is_empty() {
                return Err(Error::Config("'features' must not be empty".into()));
            }
            for f in u {
                if ds.feature_index(f).is_none() {
                    return Err(Error::Config(format!("unknown feature '{f}' in 'features'")));
                }
            }
        }
        if self.max_moves_per_round == 0 {
            return Err(Error::Config("max_moves_per_round must be >= 1".into()));
        }
        Ok(())
    }

    /// Miner configs for descriptors and decision logic; widths capped by ε2.
    pub fn miner_configs(&self) -> (MinerConfig, MinerConfig) {
        let mut dl = self.miner.clone();
        dl.max_width = dl.max_width.min(self.objective.max_width());
        dl.user_features = None;
        let mut nd = dl.clone();
        nd.user_features = self.features.as_ref().map(|u| u.iter().cloned().collect());
        (nd, dl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedRule {
    pub q: Conjunction,
    pub s: Conjunction,
    pub c: String,
    pub cover: u64,
    #[serde(serialize_with = "serialize_fixed6")]
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    #[serde(serialize_with = "serialize_fixed6")]
    pub best_value: f64,
    pub best_round: usize,
    #[serde(serialize_with = "serialize_fixed6_vec")]
    pub round_values: Vec<f64>,
    pub moves_per_round: Vec<usize>,
    pub ground_set_size: usize,
    pub nd_size: usize,
    pub dl_size: usize,
    pub empty_ground_set: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub rules: Vec<ExplainedRule>,
    pub default_label: String,
    pub metrics: MetricsReport,
    pub params: ExplainRequest,
    pub search: SearchSummary,
}

impl Explanation {
    pub fn decision_set(&self) -> Result<TwoLevelDecisionSet> {
        let rules: Vec<Rule> = self
            .rules
            .iter()
            .map(|r| Rule::new(r.q.clone(), r.s.clone(), r.c.clone()))
            .collect::<Result<_>>()?;
        let agreement = self.rules.iter().map(|r| r.agreement).collect();
        TwoLevelDecisionSet::new(rules, self.default_label.clone(), agreement)
    }

    pub fn rule_list(&self) -> Vec<Rule> {
        self.rules
            .iter()
            .map(|r| Rule { q: r.q.clone(), s: r.s.clone(), c: r.c.clone() })
            .collect()
    }

    /// Pretty JSON with a trailing newline; identical inputs give identical bytes.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Explanation = serde_json::from_str(s)?;
        e.decision_set()?;
        Ok(e)
    }
}

/// Prediction with the rule that produced it, as returned to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOutput {
    pub label: String,
    /// `rule`, `tie-break` or `default`.
    pub provenance: String,
    pub rule: Option<usize>,
    pub fired_rules: Vec<usize>,
}

pub fn predict_instance(set: &TwoLevelDecisionSet, instance: &Instance) -> Result<PredictOutput> {
    let fired = set.fired_json(instance)?;
    let p = set.resolve(&fired, &HighestAgreement);
    Ok(PredictOutput {
        label: p.label,
        provenance: p.provenance.kind().to_string(),
        rule: p.provenance.rule(),
        fired_rules: fired,
    })
}

pub fn explain(ds: &Dataset, req: &ExplainRequest) -> Result<Explanation> {
    req.validate(ds)?;
    let (nd, dl) = req.miner_configs();
    let domain = build_domain(ds, &nd, &dl)?;
    explain_with_domain(ds, req, &domain).map(|(e, _)| e)
}

/// Search and report over an already mined domain.
pub fn explain_with_domain(
    ds: &Dataset,
    req: &ExplainRequest,
    domain: &CandidateDomain,
) -> Result<(Explanation, SearchResult)> {
    let bounds = BoundConstants::for_domain(domain, ds)?;
    let gs = GroundSet::new(domain, &req.objective, ds.n());
    let obj = Objective::new(req.objective.clone(), bounds);
    let limits = SearchLimits {
        max_moves_per_round: req.max_moves_per_round,
        seed: req.seed,
        verify: false,
    };
    let result = optimize(&gs, &obj, &limits);
    info!(
        "search over {} elements: {} rules, value {}, {:?}",
        gs.len(),
        result.best.len(),
        result.best_value,
        result.wall_time
    );
    let set = fit_default_and_ties(gs.rules(&result.best, domain, ds), ds)?;
    let metrics = metrics::report(&set, ds)?;
    let rules = set
        .rules()
        .iter()
        .zip(set.agreement())
        .map(|(r, &a)| {
            Ok(ExplainedRule {
                q: r.q.clone(),
                s: r.s.clone(),
                c: r.c.clone(),
                cover: r.coverage(ds)?.count() as u64,
                agreement: a,
            })
        })
        .collect::<Result<_>>()?;
    let explanation = Explanation {
        rules,
        default_label: set.default_label().to_string(),
        metrics,
        params: req.clone(),
        search: SearchSummary {
            best_value: result.best_value,
            best_round: result.best_round,
            round_values: result.round_values.clone(),
            moves_per_round: result.moves_per_round.clone(),
            ground_set_size: gs.len(),
            nd_size: domain.nd.len(),
            dl_size: domain.dl.len(),
            empty_ground_set: result.empty_ground_set,
        },
    };
    Ok((explanation, result))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Eps1,
    Eps2,
    Eps3,
    MinSupport,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eps1" => Ok(SweepAxis::Eps1),
            "eps2" => Ok(SweepAxis::Eps2),
            "eps3" => Ok(SweepAxis::Eps3),
            "min_support" | "support" => Ok(SweepAxis::MinSupport),
            _ => Err(Error::Config(format!(
                "unknown sweep axis '{s}' (eps1, eps2, eps3, min_support)"
            ))),
        }
    }

    fn is_integer(self) -> bool {
        self != SweepAxis::MinSupport
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub base: ExplainRequest,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one axis value".into()));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep axis values must be strictly ascending".into()));
        }
        if self.axis.is_integer()
            && self.values.iter().any(|v| v.fract() != 0.0 || *v < 0.0)
        {
            return Err(Error::Config("eps axis values must be non-negative integers".into()));
        }
        Ok(())
    }

    /// The base request with the axis set to `value`.
    pub fn request_at(&self, value: f64) -> ExplainRequest {
        let mut r = self.base.clone();
        match self.axis {
            SweepAxis::Eps1 => r.objective.eps[0] = value as usize,
            SweepAxis::Eps2 => r.objective.eps[1] = value as usize,
            SweepAxis::Eps3 => r.objective.eps[2] = value as usize,
            SweepAxis::MinSupport => r.miner.min_support = value,
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: f64,
    pub outcome: std::result::Result<MetricsReport, String>,
}

impl SweepRow {
    pub fn avg_numpreds(m: &MetricsReport) -> f64 {
        if m.size == 0 {
            0.0
        } else {
            m.numpreds as f64 / m.size as f64
        }
    }
}

/// One explain per axis value. Points sharing a mining configuration share
/// the mined domain. Failed points become error rows.
pub fn sweep(ds: &Dataset, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let requests: Vec<ExplainRequest> = spec.values.iter().map(|&v| spec.request_at(v)).collect();

    let mut domains: HashMap<String, std::result::Result<Arc<CandidateDomain>, String>> = HashMap::new();
    for r in &requests {
        if r.validate(ds).is_err() {
            continue;
        }
        let (nd, dl) = r.miner_configs();
        let key = serde_json::to_string(&(&nd, &dl))?;
        domains.entry(key).or_insert_with(|| {
            build_domain(ds, &nd, &dl).map(Arc::new).map_err(|e| e.to_string())
        });
    }

    let rows = spec
        .values
        .par_iter()
        .zip(requests.par_iter())
        .map(|(&axis, r)| {
            let outcome = (|| -> std::result::Result<MetricsReport, String> {
                r.validate(ds).map_err(|e| e.to_string())?;
                let (nd, dl) = r.miner_configs();
                let key = serde_json::to_string(&(&nd, &dl)).map_err(|e| e.to_string())?;
                let domain = domains[&key].clone()?;
                explain_with_domain(ds, r, &domain)
                    .map(|(e, _)| e.metrics)
                    .map_err(|e| e.to_string())
            })();
            SweepRow { axis, outcome }
        })
        .collect();
    Ok(rows)
}

pub const SWEEP_HEADER: [&str; 8] = [
    "axis",
    "agreement_rate",
    "size",
    "avg_numpreds",
    "numdsets",
    "cover_fraction",
    "ruleoverlap_fraction",
    "error",
];

pub fn write_sweep_csv(rows: &[SweepRow], axis: SweepAxis, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for row in rows {
        let axis_text = if axis.is_integer() {
            format!("{}", row.axis as i64)
        } else {
            format!("{}", row.axis)
        };
        let record: Vec<String> = match &row.outcome {
            Ok(m) => vec![
                axis_text,
                fixed6(m.agreement_rate).to_string(),
                m.size.to_string(),
                fixed6(SweepRow::avg_numpreds(m)).to_string(),
                m.numdsets.to_string(),
                fixed6(m.cover_fraction).to_string(),
                fixed6(m.ruleoverlap_fraction).to_string(),
                String::new(),
            ],
            Err(e) => {
                let mut r = vec![axis_text];
                r.extend(std::iter::repeat_n(String::new(), 6));
                r.push(e.clone());
                r
            }
        };
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::toy8;

    fn toy_request() -> ExplainRequest {
        ExplainRequest {
            miner: MinerConfig { min_support: 0.25, max_width: 2, ..MinerConfig::default() },
            objective: ObjectiveConfig { eps: [4, 2, 2], ..ObjectiveConfig::default() },
            ..ExplainRequest::default()
        }
    }

    #[test]
    fn explanation_is_self_consistent() {
        let ds = toy8();
        let e = explain(&ds, &toy_request()).unwrap();
        let set = e.decision_set().unwrap();
        assert_eq!(e.metrics.agreement_rate, set.agreement_rate(&ds).unwrap());
        assert_eq!(e.metrics, metrics::report(&set, &ds).unwrap());
        for r in &e.rules {
            let rule = Rule::new(r.q.clone(), r.s.clone(), r.c.clone()).unwrap();
            assert_eq!(r.cover, rule.coverage(&ds).unwrap().count() as u64);
        }
    }

    #[test]
    fn json_roundtrip_and_determinism() {
        let ds = toy8();
        let a = explain(&ds, &toy_request()).unwrap().to_json().unwrap();
        let b = explain(&ds, &toy_request()).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let parsed = Explanation::from_json(&a).unwrap();
        assert_eq!(parsed.to_json().unwrap(), a);
        let keys: Vec<usize> = ["\"rules\"", "\"default_label\"", "\"metrics\"", "\"params\"", "\"search\""]
            .iter()
            .map(|k| a.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn restriction_only_touches_descriptors() {
        let ds = toy8();
        let req = ExplainRequest { features: Some(vec!["Old".into()]), ..toy_request() };
        let e = explain(&ds, &req).unwrap();
        for r in &e.rules {
            assert!(r.q.features().iter().all(|f| *f == "Old"));
        }
        let bad = ExplainRequest { features: Some(vec!["Height".into()]), ..toy_request() };
        assert!(matches!(explain(&ds, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn empty_candidates_hint() {
        let ds = toy8();
        let req = ExplainRequest {
            miner: MinerConfig { min_support: 1.0, ..MinerConfig::default() },
            ..toy_request()
        };
        let err = explain(&ds, &req).unwrap_err();
        assert!(err.to_string().contains("min_support"), "{err}");
    }

    #[test]
    fn sweep_rows_and_csv() {
        let ds = toy8();
        let spec = SweepSpec { axis: SweepAxis::Eps1, values: vec![1.0, 2.0, 4.0], base: toy_request() };
        let rows = sweep(&ds, &spec).unwrap();
        assert_eq!(rows.len(), 3);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, SweepAxis::Eps1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_HEADER.join(","));
        assert!(lines.next().unwrap().starts_with("1,"));

        let spec = SweepSpec { axis: SweepAxis::MinSupport, values: vec![0.25, 1.0], base: toy_request() };
        let rows = sweep(&ds, &spec).unwrap();
        assert!(rows[0].outcome.is_ok());
        assert!(rows[1].outcome.is_err());
        let mut buf = Vec::new();
        write_sweep_csv(&rows, SweepAxis::MinSupport, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("1,,,,,,,"));
    }

    #[test]
    fn sweep_spec_validation() {
        let base = toy_request();
        let bad = SweepSpec { axis: SweepAxis::Eps1, values: vec![2.0, 1.0], base: base.clone() };
        assert!(bad.validate().is_err());
        let frac = SweepSpec { axis: SweepAxis::Eps2, values: vec![1.5], base };
        assert!(frac.validate().is_err());
        assert_eq!(SweepAxis::parse("eps3").unwrap(), SweepAxis::Eps3);
        assert!(SweepAxis::parse("lambda").is_err());
    }

    #[test]
    fn oracle_column_preparation() {
        let table = RawTable::from_reader(crate::testing::TOY8_CSV.as_bytes()).unwrap();
        let ds = prepare_dataset(&table, Some("label"), &OracleSource::column("label"), &BinConfig::default()).unwrap();
        assert_eq!(ds.n(), 8);
        assert!(ds.feature_index("label").is_none());
    }
}
