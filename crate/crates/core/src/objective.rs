//! The weighted rule-set objective, its upper-bound constants, the budget
//! constraints, and exact incremental evaluation over a ground set of
//! candidate rules.
//!
//! With penalties `numpreds`, `featureoverlap`, `ruleoverlap`,
//! `disagreement` and the reward `cover`, the objective is
//!
//! ```text
//! λ1 (P_max - numpreds) + λ2 (O_max - featureoverlap) + λ3 (O'_max - ruleoverlap)
//!   + λ4 cover + λ5 (F_max - disagreement)
//! ```
//!
//! subject to `size <= ε1`, `maxwidth <= ε2` and `numdsets <= ε3`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::data::{Dataset, LabelId};
use crate::decision_set::Rule;
use crate::error::{Error, Result};
use crate::metrics::{self, Interpretability};
use crate::miner::CandidateDomain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub lambda: [f64; 5],
    /// `[ε1, ε2, ε3]`: max rules, max conjunction width, max distinct descriptors.
    pub eps: [usize; 3],
    pub delta: f64,
    /// Divide each term by its upper bound before weighting.
    pub normalize: bool,
    /// Max elements removed by one exchange move; the number of active constraints.
    pub k: usize,
    /// Offer every label for each (q, s) pair instead of only the majority label.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub all_labels: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda: [1.0, 1.0, 1.0, 1.0, 3.0],
            eps: [10, 5, 4],
            delta: 0.01,
            normalize: false,
            k: 2,
            all_labels: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Config("lambda weights must be finite and >= 0".into()));
        }
        if self.eps.contains(&0) {
            return Err(Error::Config(format!(
                "eps budgets must all be >= 1, got {:?}",
                self.eps
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config("delta must be > 0".into()));
        }
        if !(self.k == 2 || self.k == 3) {
            return Err(Error::Config(format!("k must be 2 or 3, got {}", self.k)));
        }
        Ok(())
    }

    pub fn max_size(&self) -> usize {
        self.eps[0]
    }

    pub fn max_width(&self) -> usize {
        self.eps[1]
    }

    pub fn max_dsets(&self) -> usize {
        self.eps[2]
    }
}

/// Upper bounds subtracted from the penalty terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundConstants {
    pub p_max: u64,
    pub o_max: u64,
    pub oprime_max: u64,
    pub f_max: u64,
    pub w_max: u64,
    pub nd_size: u64,
    pub dl_size: u64,
    pub n: u64,
}

impl BoundConstants {
    pub fn compute(w_max: usize, nd_size: usize, dl_size: usize, n: usize) -> Result<Self> {
        let overflow = || {
            Error::Config(
                "objective bounds overflow 64-bit range; lower max_candidates".to_string(),
            )
        };
        let (w, nd, dl, n64) = (w_max as u64, nd_size as u64, dl_size as u64, n as u64);
        let pairs = nd.checked_mul(dl).ok_or_else(overflow)?;
        let o_max = w.checked_mul(pairs).ok_or_else(overflow)?;
        let p_max = o_max.checked_mul(2).ok_or_else(overflow)?;
        let oprime_max = pairs
            .checked_mul(pairs)
            .and_then(|p| p.checked_mul(n64))
            .filter(|&v| v < i64::MAX as u64)
            .ok_or_else(overflow)?;
        let f_max = n64.checked_mul(pairs).ok_or_else(overflow)?;
        Ok(BoundConstants {
            p_max,
            o_max,
            oprime_max,
            f_max,
            w_max: w,
            nd_size: nd,
            dl_size: dl,
            n: n64,
        })
    }

    pub fn for_domain(domain: &CandidateDomain, ds: &Dataset) -> Result<Self> {
        if domain.nd.is_empty() || domain.dl.is_empty() {
            return Err(Error::EmptyCandidates("empty candidate domain".into()));
        }
        Self::compute(domain.w_max, domain.nd.len(), domain.dl.len(), ds.n())
    }
}

/// Raw metric values that enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Penalties {
    pub numpreds: i64,
    pub featureoverlap: i64,
    pub ruleoverlap: i64,
    pub cover: i64,
    pub disagreement: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Size,
    MaxWidth,
    NumDsets,
}

/// `None` when feasible, else the first violated constraint in the order
/// size, maxwidth, numdsets.
pub fn first_violation(m: &Interpretability, cfg: &ObjectiveConfig) -> Option<Constraint> {
    if m.size > cfg.eps[0] as u64 {
        Some(Constraint::Size)
    } else if m.maxwidth > cfg.eps[1] as u64 {
        Some(Constraint::MaxWidth)
    } else if m.numdsets > cfg.eps[2] as u64 {
        Some(Constraint::NumDsets)
    } else {
        None
    }
}

pub fn feasible(rules: &[Rule], cfg: &ObjectiveConfig) -> (bool, Option<Constraint>) {
    let v = first_violation(&metrics::interpretability(rules), cfg);
    (v.is_none(), v)
}

/// Weights plus bounds: turns penalties into objective values.
#[derive(Debug, Clone)]
pub struct Objective {
    pub cfg: ObjectiveConfig,
    pub bounds: BoundConstants,
}

impl Objective {
    pub fn new(cfg: ObjectiveConfig, bounds: BoundConstants) -> Self {
        Objective { cfg, bounds }
    }

    /// The five reward terms `f1..f5`, exact.
    pub fn rewards(&self, p: &Penalties) -> [i128; 5] {
        let b = &self.bounds;
        [
            b.p_max as i128 - p.numpreds as i128,
            b.o_max as i128 - p.featureoverlap as i128,
            b.oprime_max as i128 - p.ruleoverlap as i128,
            p.cover as i128,
            b.f_max as i128 - p.disagreement as i128,
        ]
    }

    fn scales(&self) -> [f64; 5] {
        let b = &self.bounds;
        if self.cfg.normalize {
            [
                b.p_max.max(1) as f64,
                b.o_max.max(1) as f64,
                b.oprime_max.max(1) as f64,
                b.n.max(1) as f64,
                b.f_max.max(1) as f64,
            ]
        } else {
            [1.0; 5]
        }
    }

    pub fn value(&self, p: &Penalties) -> f64 {
        let r = self.rewards(p);
        let s = self.scales();
        (0..5).map(|i| self.cfg.lambda[i] * (r[i] as f64 / s[i])).sum()
    }

    /// `value(after) - value(before)`, computed from the exact term differences.
    pub fn delta(&self, before: &Penalties, after: &Penalties) -> f64 {
        let a = self.rewards(after);
        let b = self.rewards(before);
        let s = self.scales();
        (0..5)
            .map(|i| self.cfg.lambda[i] * ((a[i] - b[i]) as f64 / s[i]))
            .sum()
    }

    /// Unweighted `Σ fi`, exact.
    pub fn raw_sum(&self, p: &Penalties) -> i128 {
        self.rewards(p).iter().sum()
    }

    /// Objective value of an arbitrary rule list, through the metric definitions.
    pub fn value_of_rules(&self, rules: &[Rule], ds: &Dataset) -> Result<f64> {
        Ok(self.value(&penalties_of_rules(rules, ds)?))
    }
}

pub fn penalties_of_rules(rules: &[Rule], ds: &Dataset) -> Result<Penalties> {
    let interp = metrics::interpretability(rules);
    let (ruleoverlap, cover) = metrics::unambiguity(rules, ds)?;
    Ok(Penalties {
        numpreds: interp.numpreds as i64,
        featureoverlap: interp.featureoverlap as i64,
        ruleoverlap: ruleoverlap as i64,
        cover: cover as i64,
        disagreement: metrics::disagreement(rules, ds)? as i64,
    })
}

/// A candidate rule `(nd[q], dl[s], label)` of the ground set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Element {
    pub q: u32,
    pub s: u32,
    pub label: LabelId,
}

/// The ground set of candidate rules with everything the objective needs
/// precomputed per element.
#[derive(Debug, Clone)]
pub struct GroundSet {
    pub elements: Vec<Element>,
    cover: Vec<Bitset>,
    numpreds: Vec<i64>,
    disagree: Vec<i64>,
    width: Vec<usize>,
    q_feat: Vec<Bitset>,
    s_feat: Vec<Bitset>,
    n: usize,
}

impl GroundSet {
    /// Non-excluded `(q, s)` pairs whose conjunctions fit the width budget,
    /// each with its majority label, or with every label when `all_labels`.
    pub fn new(domain: &CandidateDomain, cfg: &ObjectiveConfig, n: usize) -> Self {
        let max_w = cfg.max_width();
        let mut elements = Vec::new();
        for (qi, q) in domain.nd.iter().enumerate() {
            if q.width() > max_w {
                continue;
            }
            for (si, s) in domain.dl.iter().enumerate() {
                let stats = domain.pair(qi, si);
                if stats.excluded || s.width() > max_w {
                    continue;
                }
                if cfg.all_labels {
                    for label in 0..domain.n_labels() as LabelId {
                        elements.push(Element { q: qi as u32, s: si as u32, label });
                    }
                } else {
                    elements.push(Element { q: qi as u32, s: si as u32, label: stats.majority });
                }
            }
        }
        let mut cover = Vec::with_capacity(elements.len());
        let mut numpreds = Vec::with_capacity(elements.len());
        let mut disagree = Vec::with_capacity(elements.len());
        let mut width = Vec::with_capacity(elements.len());
        for e in &elements {
            let (q, s) = (e.q as usize, e.s as usize);
            cover.push(domain.pair_coverage(q, s));
            numpreds.push((domain.nd[q].width() + domain.dl[s].width()) as i64);
            let count = domain.pair(q, s).count;
            disagree.push((count - domain.pair_label_count(q, s, e.label)) as i64);
            width.push(domain.nd[q].width().max(domain.dl[s].width()));
        }
        GroundSet {
            elements,
            cover,
            numpreds,
            disagree,
            width,
            q_feat: domain.nd.iter().map(|c| c.features.clone()).collect(),
            s_feat: domain.dl.iter().map(|c| c.features.clone()).collect(),
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn n_instances(&self) -> usize {
        self.n
    }

    pub fn coverage(&self, e: usize) -> &Bitset {
        &self.cover[e]
    }

    pub fn numpreds(&self, e: usize) -> i64 {
        self.numpreds[e]
    }

    pub fn disagreement(&self, e: usize) -> i64 {
        self.disagree[e]
    }

    pub fn width(&self, e: usize) -> usize {
        self.width[e]
    }

    /// Shared features between descriptor `q` and decision logic `s`.
    #[inline]
    pub fn fo(&self, q: u32, s: u32) -> i64 {
        self.q_feat[q as usize].intersection_count(&self.s_feat[s as usize]) as i64
    }

    pub fn rule(&self, e: usize, domain: &CandidateDomain, ds: &Dataset) -> Rule {
        let el = self.elements[e];
        Rule {
            q: domain.nd[el.q as usize].conj.clone(),
            s: domain.dl[el.s as usize].conj.clone(),
            c: ds.label_name(el.label).to_string(),
        }
    }

    pub fn rules(&self, ids: &[usize], domain: &CandidateDomain, ds: &Dataset) -> Vec<Rule> {
        ids.iter().map(|&e| self.rule(e, domain, ds)).collect()
    }

    /// Penalties of a set of element ids, from scratch.
    pub fn penalties(&self, ids: &[usize]) -> Penalties {
        let mut cnt = vec![0i64; self.n];
        let mut p = Penalties::default();
        for &e in ids {
            p.numpreds += self.numpreds[e];
            p.disagreement += self.disagree[e];
            for i in self.cover[e].iter() {
                cnt[i] += 1;
            }
        }
        p.ruleoverlap = cnt.iter().map(|&c| c * (c - 1).max(0)).sum();
        p.cover = cnt.iter().filter(|&&c| c > 0).count() as i64;
        let mut dsets: Vec<u32> = ids.iter().map(|&e| self.elements[e].q).collect();
        dsets.sort_unstable();
        dsets.dedup();
        p.featureoverlap = dsets
            .iter()
            .map(|&q| ids.iter().map(|&e| self.fo(q, self.elements[e].s)).sum::<i64>())
            .sum();
        p
    }

    pub fn num_dsets(&self, ids: &[usize]) -> usize {
        let mut d: Vec<u32> = ids.iter().map(|&e| self.elements[e].q).collect();
        d.sort_unstable();
        d.dedup();
        d.len()
    }

    pub fn is_feasible(&self, ids: &[usize], cfg: &ObjectiveConfig) -> bool {
        ids.len() <= cfg.max_size()
            && ids.iter().all(|&e| self.width[e] <= cfg.max_width())
            && self.num_dsets(ids) <= cfg.max_dsets()
    }
}

/// Incrementally maintained penalties of a current rule set.
#[derive(Debug, Clone)]
pub struct EvalState {
    members: Vec<usize>,
    cnt: Vec<u32>,
    covered: Bitset,
    dsets: BTreeMap<u32, u32>,
    pen: Penalties,
}

impl EvalState {
    pub fn empty(gs: &GroundSet) -> Self {
        EvalState {
            members: Vec::new(),
            cnt: vec![0; gs.n],
            covered: Bitset::new(gs.n),
            dsets: BTreeMap::new(),
            pen: Penalties::default(),
        }
    }

    pub fn from_ids(gs: &GroundSet, ids: &[usize]) -> Self {
        let mut st = Self::empty(gs);
        for &e in ids {
            st.add(gs, e);
        }
        st
    }

    /// Members in ascending id order.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn penalties(&self) -> &Penalties {
        &self.pen
    }

    pub fn covered(&self) -> &Bitset {
        &self.covered
    }

    pub fn num_dsets(&self) -> usize {
        self.dsets.len()
    }

    pub fn has_dset(&self, q: u32) -> bool {
        self.dsets.contains_key(&q)
    }

    pub fn dsets(&self) -> impl Iterator<Item = u32> + '_ {
        self.dsets.keys().copied()
    }

    pub fn contains(&self, e: usize) -> bool {
        self.members.binary_search(&e).is_ok()
    }

    pub fn add(&mut self, gs: &GroundSet, e: usize) {
        let pos = self
            .members
            .binary_search(&e)
            .expect_err("element already in the set");
        let el = gs.elements[e];
        let p = &mut self.pen;
        p.numpreds += gs.numpreds[e];
        p.disagreement += gs.disagree[e];
        let mut clash = 0i64;
        let mut fresh = 0i64;
        for i in gs.cover[e].iter() {
            clash += self.cnt[i] as i64;
            if self.cnt[i] == 0 {
                fresh += 1;
            }
            self.cnt[i] += 1;
        }
        p.ruleoverlap += 2 * clash;
        p.cover += fresh;
        self.covered.or_assign(&gs.cover[e]);

        let new_dset = !self.dsets.contains_key(&el.q);
        if new_dset {
            // new descriptor against every existing rule
            p.featureoverlap += self
                .members
                .iter()
                .map(|&m| gs.fo(el.q, gs.elements[m].s))
                .sum::<i64>();
        }
        *self.dsets.entry(el.q).or_insert(0) += 1;
        // every descriptor (including a new one) against the new rule
        p.featureoverlap += self.dsets.keys().map(|&q| gs.fo(q, el.s)).sum::<i64>();
        self.members.insert(pos, e);
    }

    pub fn remove(&mut self, gs: &GroundSet, e: usize) {
        let pos = self.members.binary_search(&e).expect("element not in the set");
        self.members.remove(pos);
        let el = gs.elements[e];
        let p = &mut self.pen;
        p.numpreds -= gs.numpreds[e];
        p.disagreement -= gs.disagree[e];
        let mut clash = 0i64;
        let mut lost = 0i64;
        for i in gs.cover[e].iter() {
            self.cnt[i] -= 1;
            clash += self.cnt[i] as i64;
            if self.cnt[i] == 0 {
                lost += 1;
                self.covered.remove(i);
            }
        }
        p.ruleoverlap -= 2 * clash;
        p.cover -= lost;

        p.featureoverlap -= self.dsets.keys().map(|&q| gs.fo(q, el.s)).sum::<i64>();
        let mult = self.dsets.get_mut(&el.q).expect("descriptor tracked");
        *mult -= 1;
        if *mult == 0 {
            self.dsets.remove(&el.q);
            p.featureoverlap -= self
                .members
                .iter()
                .map(|&m| gs.fo(el.q, gs.elements[m].s))
                .sum::<i64>();
        }
    }
}

/// `value(R') - value(R)` for `R' = (R ∖ remove) ∪ {add}`, via incremental updates.
pub fn delta_value(
    gs: &GroundSet,
    obj: &Objective,
    state: &EvalState,
    add: Option<usize>,
    remove: &[usize],
) -> f64 {
    let mut next = state.clone();
    for &e in remove {
        next.remove(gs, e);
    }
    if let Some(d) = add {
        next.add(gs, d);
    }
    obj.delta(state.penalties(), next.penalties())
}
