//! Apriori mining of frequent predicate conjunctions and the candidate
//! domain of (descriptor, decision-logic) pairs built from them.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bitset::Bitset;
use crate::data::{majority_of, Dataset, LabelId, PredId};
use crate::error::{Error, Result};
use crate::predicate::Conjunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinerConfig {
    /// Minimum fraction of instances a conjunction must cover.
    pub min_support: f64,
    pub max_width: usize,
    /// Cap on the number of conjunctions kept, by descending support.
    pub max_candidates: usize,
    /// Restrict mining to predicates over these features.
    pub user_features: Option<BTreeSet<String>>,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            min_support: 0.05,
            max_width: 3,
            max_candidates: 200,
            user_features: None,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return Err(Error::Config(format!(
                "min_support must be in (0, 1], got {}",
                self.min_support
            )));
        }
        if self.max_width == 0 {
            return Err(Error::Config("max_width must be >= 1".into()));
        }
        if self.max_candidates == 0 {
            return Err(Error::Config("max_candidates must be >= 1".into()));
        }
        if let Some(u) = &self.user_features {
            if u.is_empty() {
                return Err(Error::Config("user feature set is empty".into()));
            }
            for f in u {
                if ds.feature_index(f).is_none() {
                    return Err(Error::Config(format!("unknown feature '{f}'")));
                }
            }
        }
        Ok(())
    }

    /// Smallest instance count meeting `min_support`; never below one.
    pub fn min_count(&self, n: usize) -> u32 {
        let raw = (self.min_support * n as f64 - 1e-9).ceil();
        raw.max(1.0) as u32
    }
}

/// A mined conjunction with its coverage.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub conj: Conjunction,
    pub ids: Vec<PredId>,
    pub support: u32,
    pub coverage: Arc<Bitset>,
    /// Schema indices of the features mentioned.
    pub features: Bitset,
}

impl Candidate {
    pub fn width(&self) -> usize {
        self.ids.len()
    }

    fn from_ids(ds: &Dataset, ids: Vec<PredId>, coverage: Bitset) -> Self {
        let conj = Conjunction::new(ids.iter().map(|&id| ds.predicates()[id as usize].clone()))
            .expect("frequent itemsets are satisfiable");
        let features = Bitset::from_indices(
            ds.schema().len(),
            ids.iter().map(|&id| ds.predicate_feature(id)),
        );
        Candidate {
            conj,
            support: coverage.count() as u32,
            coverage: Arc::new(coverage),
            ids,
            features,
        }
    }
}

fn contradictory(ds: &Dataset, a: PredId, b: PredId) -> bool {
    ds.predicates()[a as usize].contradicts(&ds.predicates()[b as usize])
}

/// Every frequent, satisfiable conjunction up to `max_width`, before the
/// candidate cap is applied, in level-wise lexicographic order.
pub fn mine_all(ds: &Dataset, cfg: &MinerConfig) -> Result<Vec<Candidate>> {
    cfg.validate(ds)?;
    let min_count = cfg.min_count(ds.n()) as usize;
    let allowed: Vec<PredId> = (0..ds.predicates().len() as PredId)
        .filter(|&id| match &cfg.user_features {
            Some(u) => u.contains(&ds.predicates()[id as usize].feature),
            None => true,
        })
        .collect();

    let mut level: Vec<(Vec<PredId>, Bitset)> = allowed
        .iter()
        .filter(|&&id| ds.predicate_coverage(id).count() >= min_count)
        .map(|&id| (vec![id], ds.predicate_coverage(id).clone()))
        .collect();
    if level.is_empty() {
        return Err(Error::EmptyCandidates(format!(
            "no single predicate reaches support {} ({} of {} instances); lower min_support",
            cfg.min_support, min_count, ds.n()
        )));
    }

    let mut out: Vec<(Vec<PredId>, Bitset)> = Vec::new();
    for width in 1..=cfg.max_width {
        if level.is_empty() {
            break;
        }
        if width == cfg.max_width {
            out.append(&mut level);
            break;
        }
        let frequent: HashSet<&[PredId]> = level.iter().map(|(ids, _)| ids.as_slice()).collect();
        // itemsets sharing a (width-1)-prefix are contiguous in lexicographic order
        let mut next: Vec<(Vec<PredId>, Bitset)> = (0..level.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let (a, cov) = &level[i];
                let prefix = &a[..width - 1];
                let mut found = Vec::new();
                for (b, _) in level[i + 1..].iter() {
                    if &b[..width - 1] != prefix {
                        break;
                    }
                    let last = b[width - 1];
                    if a.iter().any(|&x| contradictory(ds, x, last)) {
                        continue;
                    }
                    let mut joined = a.clone();
                    joined.push(last);
                    let all_subsets_frequent = (0..joined.len()).all(|skip| {
                        let sub: Vec<PredId> = joined
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != skip)
                            .map(|(_, &x)| x)
                            .collect();
                        frequent.contains(sub.as_slice())
                    });
                    if !all_subsets_frequent {
                        continue;
                    }
                    let c = cov.and(ds.predicate_coverage(last));
                    if c.count() >= min_count {
                        found.push((joined, c));
                    }
                }
                found
            })
            .collect();
        next.sort_by(|a, b| a.0.cmp(&b.0));
        out.append(&mut level);
        level = next;
    }
    Ok(out
        .into_iter()
        .map(|(ids, cov)| Candidate::from_ids(ds, ids, cov))
        .collect())
}

/// Frequent conjunctions sorted by (support desc, width asc, lexicographic)
/// and truncated to `max_candidates`.
pub fn mine(ds: &Dataset, cfg: &MinerConfig) -> Result<Vec<Candidate>> {
    let mut all = mine_all(ds, cfg)?;
    all.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(a.width().cmp(&b.width()))
            .then_with(|| a.ids.cmp(&b.ids))
    });
    all.truncate(cfg.max_candidates);
    Ok(all)
}

/// Debug dump, one `{"predicates":[...],"support":n}` object per line.
pub fn dump_jsonl(cands: &[Candidate], mut w: impl Write) -> Result<()> {
    for c in cands {
        writeln!(w, "{}", json!({ "predicates": c.conj, "support": c.support }))?;
    }
    Ok(())
}

/// Statistics of one (descriptor, decision-logic) pair over the joint coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairStats {
    pub count: u32,
    pub majority: LabelId,
    /// Zero joint coverage; such pairs never enter the ground set.
    pub excluded: bool,
}

/// Candidate descriptors (`nd`), candidate decision logic (`dl`), and
/// per-pair statistics.
#[derive(Debug, Clone)]
pub struct CandidateDomain {
    pub nd: Vec<Candidate>,
    pub dl: Vec<Candidate>,
    pub w_max: usize,
    n_labels: usize,
    pairs: Vec<PairStats>,
    pair_label_counts: Vec<u32>,
}

impl CandidateDomain {
    pub fn from_candidates(ds: &Dataset, nd: Vec<Candidate>, dl: Vec<Candidate>) -> Result<Self> {
        if nd.is_empty() || dl.is_empty() {
            return Err(Error::EmptyCandidates("empty candidate list".into()));
        }
        let n_labels = ds.label_names().len();
        let global = ds.label_counts();
        let rows: Vec<(Vec<PairStats>, Vec<u32>)> = nd
            .par_iter()
            .map(|q| {
                let mut stats = Vec::with_capacity(dl.len());
                let mut counts = vec![0u32; dl.len() * n_labels];
                for (si, s) in dl.iter().enumerate() {
                    let joint = q.coverage.and(&s.coverage);
                    let slot = &mut counts[si * n_labels..(si + 1) * n_labels];
                    for i in joint.iter() {
                        slot[ds.label(i) as usize] += 1;
                    }
                    let count = joint.count() as u32;
                    stats.push(PairStats {
                        count,
                        majority: majority_of(slot, global),
                        excluded: count == 0,
                    });
                }
                (stats, counts)
            })
            .collect();
        let mut pairs = Vec::with_capacity(nd.len() * dl.len());
        let mut pair_label_counts = Vec::with_capacity(nd.len() * dl.len() * n_labels);
        for (s, c) in rows {
            pairs.extend(s);
            pair_label_counts.extend(c);
        }
        let w_max = nd.iter().chain(&dl).map(Candidate::width).max().unwrap_or(0);
        Ok(CandidateDomain {
            nd,
            dl,
            w_max,
            n_labels,
            pairs,
            pair_label_counts,
        })
    }

    pub fn pair(&self, q: usize, s: usize) -> PairStats {
        self.pairs[q * self.dl.len() + s]
    }

    /// Instances in the joint coverage of `(q, s)` carrying `label`.
    pub fn pair_label_count(&self, q: usize, s: usize, label: LabelId) -> u32 {
        self.pair_label_counts[(q * self.dl.len() + s) * self.n_labels + label as usize]
    }

    pub fn pair_coverage(&self, q: usize, s: usize) -> Bitset {
        self.nd[q].coverage.and(&self.dl[s].coverage)
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }
}

/// Mine descriptors and decision logic. Without a user feature set both
/// lists are the same mined list; with one, descriptors only use those
/// features while decision logic may use any feature.
pub fn build_domain(ds: &Dataset, nd_cfg: &MinerConfig, dl_cfg: &MinerConfig) -> Result<CandidateDomain> {
    let nd = mine(ds, nd_cfg)?;
    let dl = if nd_cfg.user_features.is_none() && nd_cfg == dl_cfg {
        nd.clone()
    } else {
        mine(ds, dl_cfg)?
    };
    CandidateDomain::from_candidates(ds, nd, dl)
}
