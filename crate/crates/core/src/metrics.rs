//! Fidelity, unambiguity and interpretability measures of a rule list.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decision_set::{Rule, TwoLevelDecisionSet};
use crate::error::{Error, Result};
use crate::format::serialize_fixed6;
use crate::predicate::Conjunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub disagreement: u64,
    pub ruleoverlap: u64,
    pub cover: u64,
    pub size: u64,
    pub maxwidth: u64,
    pub numpreds: u64,
    pub numdsets: u64,
    pub featureoverlap: u64,
    #[serde(serialize_with = "serialize_fixed6")]
    pub agreement_rate: f64,
    #[serde(serialize_with = "serialize_fixed6")]
    pub cover_fraction: f64,
    #[serde(serialize_with = "serialize_fixed6")]
    pub ruleoverlap_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Interpretability {
    pub size: u64,
    pub maxwidth: u64,
    pub numpreds: u64,
    pub numdsets: u64,
    pub featureoverlap: u64,
}

/// Rule-instance incidences where a covered instance's black-box label differs
/// from the rule's label; an instance counts once per disagreeing rule.
pub fn disagreement(rules: &[Rule], ds: &Dataset) -> Result<u64> {
    let mut total = 0u64;
    for r in rules {
        let cov = r.coverage(ds)?;
        total += match ds.label_id(&r.c) {
            Some(c) => cov.iter().filter(|&i| ds.label(i) != c).count() as u64,
            None => cov.count() as u64,
        };
    }
    Ok(total)
}

/// `(ruleoverlap, cover)`: ruleoverlap sums the joint coverage over ordered
/// pairs of distinct rule positions, cover is the size of the union.
pub fn unambiguity(rules: &[Rule], ds: &Dataset) -> Result<(u64, u64)> {
    let mut per_instance = vec![0u64; ds.n()];
    for r in rules {
        for i in r.coverage(ds)?.iter() {
            per_instance[i] += 1;
        }
    }
    let overlap = per_instance.iter().map(|&c| c * c.saturating_sub(1)).sum();
    let cover = per_instance.iter().filter(|&&c| c > 0).count() as u64;
    Ok((overlap, cover))
}

/// Number of features mentioned in both conjunctions.
pub fn feature_overlap(q: &Conjunction, s: &Conjunction) -> u64 {
    q.features().intersection(&s.features()).count() as u64
}

pub fn interpretability(rules: &[Rule]) -> Interpretability {
    let dset: BTreeSet<&Conjunction> = rules.iter().map(|r| &r.q).collect();
    let featureoverlap = dset
        .iter()
        .map(|q| rules.iter().map(|r| feature_overlap(q, &r.s)).sum::<u64>())
        .sum();
    Interpretability {
        size: rules.len() as u64,
        maxwidth: rules
            .iter()
            .map(|r| r.q.width().max(r.s.width()))
            .max()
            .unwrap_or(0) as u64,
        numpreds: rules.iter().map(|r| (r.q.width() + r.s.width()) as u64).sum(),
        numdsets: dset.len() as u64,
        featureoverlap,
    }
}

/// All measures plus the decision set's agreement rate.
pub fn report(set: &TwoLevelDecisionSet, ds: &Dataset) -> Result<MetricsReport> {
    let rules = set.rules();
    let disagreement = disagreement(rules, ds)?;
    let (ruleoverlap, cover) = unambiguity(rules, ds)?;
    let interp = interpretability(rules);
    let n = ds.n() as f64;
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(MetricsReport {
        disagreement,
        ruleoverlap,
        cover,
        size: interp.size,
        maxwidth: interp.maxwidth,
        numpreds: interp.numpreds,
        numdsets: interp.numdsets,
        featureoverlap: interp.featureoverlap,
        agreement_rate: set.agreement_rate(ds)?,
        cover_fraction: cover as f64 / n,
        ruleoverlap_fraction: ruleoverlap as f64 / n,
    })
}
