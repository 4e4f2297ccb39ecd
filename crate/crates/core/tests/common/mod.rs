//! Random instances and naive reference implementations shared by the
//! integration tests. Nothing here goes through bitsets or caches.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use twolevel::data::{BinConfig, Dataset, RawTable};
use twolevel::decision_set::Rule;
use twolevel::miner::{build_domain, CandidateDomain, MinerConfig};
use twolevel::objective::{BoundConstants, GroundSet, Objective, ObjectiveConfig};
use twolevel::predicate::{Condition, Conjunction, Predicate};

pub const LABEL: &str = "label";

/// A table with `cats` categorical columns (values a/b/c...), `nums` numeric
/// columns and a label column over `labels` classes.
pub fn random_table(rng: &mut impl Rng, n: usize, cats: usize, nums: usize, labels: usize) -> RawTable {
    let mut header: Vec<String> = (0..cats).map(|i| format!("c{i}")).collect();
    header.extend((0..nums).map(|i| format!("n{i}")));
    header.push(LABEL.to_string());
    let arity: Vec<usize> = (0..cats).map(|_| rng.random_range(2..=3)).collect();
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<String> = arity
                .iter()
                .map(|&a| ((b'a' + rng.random_range(0..a) as u8) as char).to_string())
                .collect();
            row.extend((0..nums).map(|_| rng.random_range(0..20).to_string()));
            row.push(format!("L{}", rng.random_range(0..labels)));
            row
        })
        .collect();
    RawTable { header, rows }
}

pub fn dataset(table: &RawTable) -> Dataset {
    Dataset::from_raw(table, LABEL, &BinConfig::default()).unwrap()
}

/// Truth of a predicate on a raw CSV cell.
pub fn naive_pred(p: &Predicate, cell: &str) -> bool {
    match &p.cond {
        Condition::Eq(v) => cell == v,
        Condition::Ge(t) => cell.parse::<f64>().unwrap() >= *t,
        Condition::Lt(t) => cell.parse::<f64>().unwrap() < *t,
    }
}

pub fn naive_conj(table: &RawTable, c: &Conjunction, row: usize) -> bool {
    c.predicates().iter().all(|p| {
        let col = table.header.iter().position(|h| *h == p.feature).unwrap();
        naive_pred(p, &table.rows[row][col])
    })
}

pub fn naive_rule(table: &RawTable, r: &Rule, row: usize) -> bool {
    naive_conj(table, &r.q, row) && naive_conj(table, &r.s, row)
}

fn label_of(table: &RawTable, row: usize) -> &str {
    table.rows[row].last().unwrap()
}

/// The eight measures by direct enumeration, in the order disagreement,
/// ruleoverlap, cover, size, maxwidth, numpreds, numdsets, featureoverlap.
pub fn naive_metrics(table: &RawTable, rules: &[Rule]) -> [u64; 8] {
    let n = table.rows.len();
    let mut disagreement = 0;
    for r in rules {
        for i in 0..n {
            if naive_rule(table, r, i) && label_of(table, i) != r.c {
                disagreement += 1;
            }
        }
    }
    let mut ruleoverlap = 0;
    for (a, ra) in rules.iter().enumerate() {
        for (b, rb) in rules.iter().enumerate() {
            if a != b {
                ruleoverlap += (0..n).filter(|&i| naive_rule(table, ra, i) && naive_rule(table, rb, i)).count() as u64;
            }
        }
    }
    let cover = (0..n).filter(|&i| rules.iter().any(|r| naive_rule(table, r, i))).count() as u64;
    let key = |c: &Conjunction| -> BTreeSet<String> {
        c.predicates().iter().map(|p| format!("{}|{}|{:?}", p.feature, p.op().symbol(), p.cond)).collect()
    };
    let feats = |c: &Conjunction| -> BTreeSet<String> { c.predicates().iter().map(|p| p.feature.clone()).collect() };
    let mut dset: BTreeMap<BTreeSet<String>, &Conjunction> = BTreeMap::new();
    for r in rules {
        dset.insert(key(&r.q), &r.q);
    }
    let mut featureoverlap = 0;
    for q in dset.values() {
        for r in rules {
            featureoverlap += feats(q).intersection(&feats(&r.s)).count() as u64;
        }
    }
    [
        disagreement,
        ruleoverlap,
        cover,
        rules.len() as u64,
        rules.iter().map(|r| r.q.width().max(r.s.width())).max().unwrap_or(0) as u64,
        rules.iter().map(|r| (r.q.width() + r.s.width()) as u64).sum(),
        dset.len() as u64,
        featureoverlap,
    ]
}

/// A random satisfiable conjunction over the dataset's predicates.
pub fn random_conj(rng: &mut impl Rng, ds: &Dataset, max_width: usize) -> Conjunction {
    loop {
        let w = rng.random_range(1..=max_width);
        let preds: Vec<Predicate> = ds.predicates().choose_multiple(rng, w).cloned().collect();
        if let Ok(c) = Conjunction::new(preds) {
            return c;
        }
    }
}

pub fn random_rules(rng: &mut impl Rng, ds: &Dataset, count: usize) -> Vec<Rule> {
    let mut out = Vec::new();
    while out.len() < count {
        let q = random_conj(rng, ds, 2);
        let s = random_conj(rng, ds, 2);
        let c = ds.label_names().choose(rng).unwrap().clone();
        if let Ok(r) = Rule::new(q, s, c) {
            out.push(r);
        }
    }
    out
}

/// Small random domain and its ground set under `cfg`.
pub struct SmallDomain {
    pub ds: Dataset,
    pub domain: CandidateDomain,
    pub gs: GroundSet,
    pub obj: Objective,
}

pub fn small_domain(rng: &mut impl Rng, cfg: ObjectiveConfig, nd_cap: usize, dl_cap: usize) -> Option<SmallDomain> {
    let n = rng.random_range(16..=48);
    let cats = rng.random_range(2..=4);
    let table = random_table(rng, n, cats, 0, 2);
    let ds = dataset(&table);
    let support = [0.1, 0.2, 0.3].choose(rng).copied().unwrap();
    let nd = MinerConfig { min_support: support, max_width: 2, max_candidates: nd_cap, user_features: None };
    let dl = MinerConfig { max_candidates: dl_cap, ..nd.clone() };
    let domain = build_domain(&ds, &nd, &dl).ok()?;
    let gs = GroundSet::new(&domain, &cfg, ds.n());
    let bounds = BoundConstants::for_domain(&domain, &ds).ok()?;
    Some(SmallDomain { obj: Objective::new(cfg, bounds), ds, domain, gs })
}

pub fn raw_config(eps: [usize; 3]) -> ObjectiveConfig {
    ObjectiveConfig { lambda: [1.0; 5], eps, normalize: false, ..ObjectiveConfig::default() }
}

/// A uniformly random subset of `0..n`, sorted.
pub fn random_subset(rng: &mut impl Rng, n: usize, p: f64) -> Vec<usize> {
    (0..n).filter(|_| rng.random_bool(p)).collect()
}

pub fn shuffled<T: Clone>(rng: &mut impl Rng, xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.shuffle(rng);
    v
}
