//! Two-level decision sets and their labeling semantics.
//!
//! A rule `(q, s, c)` fires on an instance satisfying both the neighborhood
//! descriptor `q` and the decision-logic condition `s`. An instance firing
//! exactly one rule gets that rule's label; one firing none gets the default
//! label; one firing several is resolved by the tie-breaking policy.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::bitset::Bitset;
use crate::data::{Dataset, LabelId};
use crate::error::{Error, Result};
use crate::predicate::Conjunction;

/// Rules order by `(q, s, c)`; this canonical order is the one stored in a
/// decision set and the final tie-breaker.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub q: Conjunction,
    pub s: Conjunction,
    pub c: String,
}

impl Rule {
    pub fn new(q: Conjunction, s: Conjunction, c: impl Into<String>) -> Result<Self> {
        Conjunction::new(q.predicates().iter().chain(s.predicates()).cloned())?;
        Ok(Rule { q, s, c: c.into() })
    }

    /// The rule body `q ∧ s`.
    pub fn body(&self) -> Conjunction {
        Conjunction::new(self.q.predicates().iter().chain(self.s.predicates()).cloned())
            .expect("rule bodies are satisfiable")
    }

    pub fn coverage(&self, ds: &Dataset) -> Result<Bitset> {
        let q = ds.coverage(&self.q)?;
        let s = ds.coverage(&self.s)?;
        Ok(q.and(&s))
    }

    pub fn fires_json(&self, instance: &Map<String, Json>) -> Result<bool> {
        Ok(self.q.eval_json(instance)? && self.s.eval_json(instance)?)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IF {} THEN IF {} THEN {}", self.q, self.s, self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Rule(usize),
    Default,
    TieBreak { chosen: usize, among: Vec<usize> },
}

impl Provenance {
    pub fn kind(&self) -> &'static str {
        match self {
            Provenance::Rule(_) => "rule",
            Provenance::Default => "default",
            Provenance::TieBreak { .. } => "tie-break",
        }
    }

    pub fn rule(&self) -> Option<usize> {
        match self {
            Provenance::Rule(i) | Provenance::TieBreak { chosen: i, .. } => Some(*i),
            Provenance::Default => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub label: String,
    pub provenance: Provenance,
}

/// Chooses the label for instances no rule covers.
pub trait DefaultPolicy {
    fn default_label(&self, ds: &Dataset, uncovered: &Bitset) -> LabelId;
}

/// Majority black-box label of the uncovered instances (global majority when
/// every instance is covered).
#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityDefault;

impl DefaultPolicy for MajorityDefault {
    fn default_label(&self, ds: &Dataset, uncovered: &Bitset) -> LabelId {
        ds.majority_label(uncovered)
    }
}

/// Chooses among several fired rules, given as ascending indices.
pub trait TieBreak {
    fn choose(&self, set: &TwoLevelDecisionSet, fired: &[usize]) -> usize;
}

/// Highest agreement rate; equal rates go to the earlier rule in canonical order.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighestAgreement;

impl TieBreak for HighestAgreement {
    fn choose(&self, set: &TwoLevelDecisionSet, fired: &[usize]) -> usize {
        let mut best = fired[0];
        for &i in &fired[1..] {
            if set.agreement[i] > set.agreement[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelDecisionSet {
    rules: Vec<Rule>,
    default_label: String,
    agreement: Vec<f64>,
}

impl TwoLevelDecisionSet {
    /// Rules are stored in canonical order, each keeping its agreement rate.
    pub fn new(rules: Vec<Rule>, default_label: impl Into<String>, agreement: Vec<f64>) -> Result<Self> {
        if rules.len() != agreement.len() {
            return Err(Error::Config(format!(
                "{} rules but {} agreement rates",
                rules.len(),
                agreement.len()
            )));
        }
        let mut paired: Vec<(Rule, f64)> = rules.into_iter().zip(agreement).collect();
        paired.sort_by(|a, b| a.0.cmp(&b.0));
        let (rules, agreement) = paired.into_iter().unzip();
        Ok(TwoLevelDecisionSet {
            rules,
            default_label: default_label.into(),
            agreement,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn default_label(&self) -> &str {
        &self.default_label
    }

    pub fn agreement(&self) -> &[f64] {
        &self.agreement
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Indices of the rules whose body instance `index` satisfies.
    pub fn fired(&self, ds: &Dataset, index: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (i, r) in self.rules.iter().enumerate() {
            if ds.satisfies(&r.q, index)? && ds.satisfies(&r.s, index)? {
                out.push(i);
            }
        }
        Ok(out)
    }

    pub fn fired_json(&self, instance: &Map<String, Json>) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (i, r) in self.rules.iter().enumerate() {
            if r.fires_json(instance)? {
                out.push(i);
            }
        }
        Ok(out)
    }

    pub fn resolve(&self, fired: &[usize], tie: &dyn TieBreak) -> Prediction {
        match fired {
            [] => Prediction {
                label: self.default_label.clone(),
                provenance: Provenance::Default,
            },
            [only] => Prediction {
                label: self.rules[*only].c.clone(),
                provenance: Provenance::Rule(*only),
            },
            many => {
                let chosen = tie.choose(self, many);
                Prediction {
                    label: self.rules[chosen].c.clone(),
                    provenance: Provenance::TieBreak {
                        chosen,
                        among: many.to_vec(),
                    },
                }
            }
        }
    }

    pub fn predict(&self, ds: &Dataset, index: usize) -> Result<Prediction> {
        Ok(self.resolve(&self.fired(ds, index)?, &HighestAgreement))
    }

    pub fn predict_json(&self, instance: &Map<String, Json>) -> Result<Prediction> {
        Ok(self.resolve(&self.fired_json(instance)?, &HighestAgreement))
    }

    /// Fraction of instances where the prediction equals the black-box label.
    pub fn agreement_rate(&self, ds: &Dataset) -> Result<f64> {
        let mut hits = 0usize;
        for i in 0..ds.n() {
            if self.predict(ds, i)?.label == ds.label_name(ds.label(i)) {
                hits += 1;
            }
        }
        Ok(hits as f64 / ds.n() as f64)
    }
}

/// Fit the default label and per-rule agreement rates with the standard policies.
pub fn fit_default_and_ties(rules: Vec<Rule>, ds: &Dataset) -> Result<TwoLevelDecisionSet> {
    fit_with(rules, ds, &MajorityDefault)
}

pub fn fit_with(rules: Vec<Rule>, ds: &Dataset, policy: &dyn DefaultPolicy) -> Result<TwoLevelDecisionSet> {
    let mut covered = Bitset::new(ds.n());
    let mut agreement = Vec::with_capacity(rules.len());
    for r in &rules {
        let label = ds
            .label_id(&r.c)
            .ok_or_else(|| Error::Label(format!("rule label '{}' is not a black-box label", r.c)))?;
        let cov = r.coverage(ds)?;
        let n = cov.count();
        let agree = cov.iter().filter(|&i| ds.label(i) == label).count();
        agreement.push(if n == 0 { 0.0 } else { agree as f64 / n as f64 });
        covered.or_assign(&cov);
    }
    let mut uncovered = Bitset::full(ds.n());
    for i in covered.iter() {
        uncovered.remove(i);
    }
    let default = policy.default_label(ds, &uncovered);
    TwoLevelDecisionSet::new(rules, ds.label_name(default), agreement)
}
