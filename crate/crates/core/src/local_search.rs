//! Approximate local search over the ground set, in `k + 1` rounds of
//! delete / exchange moves, and an exhaustive oracle for small instances.

use std::cmp::Ordering;
use std::io::Write;
use std::time::{Duration, Instant};

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::format::serialize_fixed6;
use crate::objective::{EvalState, GroundSet, Objective, Penalties};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchLimits {
    pub max_moves_per_round: usize,
    pub seed: u64,
    /// Recompute every scored move from scratch and compare.
    #[serde(skip)]
    pub verify: bool,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { max_moves_per_round: 500, seed: 0, verify: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Delete,
    Exchange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoveRecord {
    pub round: usize,
    pub op: MoveKind,
    pub add: Option<usize>,
    pub remove: Vec<usize>,
    #[serde(serialize_with = "serialize_fixed6")]
    pub delta: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Element ids of the best round's solution, ascending.
    pub best: Vec<usize>,
    pub best_value: f64,
    pub best_round: usize,
    pub round_values: Vec<f64>,
    pub round_solutions: Vec<Vec<usize>>,
    pub moves_per_round: Vec<usize>,
    pub moves: Vec<MoveRecord>,
    pub wall_time: Duration,
    pub empty_ground_set: bool,
}

impl SearchResult {
    pub fn iterations(&self) -> usize {
        self.moves_per_round.iter().sum()
    }

    pub fn write_move_log(&self, mut w: impl Write) -> Result<()> {
        for m in &self.moves {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Move {
    kind: MoveKind,
    add: Option<usize>,
    remove: Vec<usize>,
    delta: f64,
    after: Penalties,
}

impl Move {
    /// Larger delta first, then canonical (kind, add, remove) order.
    fn better_than(&self, other: &Move) -> bool {
        match self.delta.total_cmp(&other.delta) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => {
                (self.kind, self.add, &self.remove) < (other.kind, other.add, &other.remove)
            }
        }
    }
}

fn pick(a: Option<Move>, b: Option<Move>) -> Option<Move> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.better_than(&a) { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    }
}

/// `S ∖ E` for one removal set `E`.
struct Base {
    remove: Vec<usize>,
    keep: Vec<usize>,
    pen: Penalties,
    covered: Bitset,
    dsets: Vec<u32>,
}

fn removal_sets(members: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(m: &[usize], start: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..m.len() {
            cur.push(m[i]);
            rec(m, i + 1, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 0..=k.min(members.len()) {
        rec(members, 0, size, &mut Vec::new(), &mut out);
    }
    out
}

struct Scan<'a> {
    gs: &'a GroundSet,
    obj: &'a Objective,
    state: &'a EvalState,
}

impl Scan<'_> {
    fn bases(&self) -> Vec<Base> {
        let members = self.state.members();
        removal_sets(members, self.obj.cfg.k)
            .into_iter()
            .map(|remove| {
                let mut st = self.state.clone();
                for &e in &remove {
                    st.remove(self.gs, e);
                }
                Base {
                    keep: st.members().to_vec(),
                    pen: *st.penalties(),
                    covered: st.covered().clone(),
                    dsets: st.dsets().collect(),
                    remove,
                }
            })
            .collect()
    }

    fn best_move(&self, candidates: &[usize]) -> Option<Move> {
        let gs = self.gs;
        let cfg = &self.obj.cfg;
        let before = *self.state.penalties();
        let members = self.state.members();
        let bases = self.bases();

        let mut best = None;
        for b in bases.iter().filter(|b| b.remove.len() == 1) {
            best = pick(
                best,
                Some(Move {
                    kind: MoveKind::Delete,
                    add: None,
                    remove: b.remove.clone(),
                    delta: self.obj.delta(&before, &b.pen),
                    after: b.pen,
                }),
            );
        }

        let exchange = candidates
            .par_iter()
            .map(|&d| {
                let el = gs.elements[d];
                let cov = gs.coverage(d);
                let inter: Vec<i64> = members
                    .iter()
                    .map(|&m| cov.intersection_count(gs.coverage(m)) as i64)
                    .collect();
                let mut local: Option<Move> = None;
                for b in &bases {
                    if b.keep.len() + 1 > cfg.max_size() {
                        continue;
                    }
                    let has_q = b.dsets.binary_search(&el.q).is_ok();
                    if b.dsets.len() + usize::from(!has_q) > cfg.max_dsets() {
                        continue;
                    }
                    let mut p = b.pen;
                    p.numpreds += gs.numpreds(d);
                    p.disagreement += gs.disagreement(d);
                    p.cover += cov.difference_count(&b.covered) as i64;
                    let clash: i64 = members
                        .iter()
                        .zip(&inter)
                        .filter(|(m, _)| b.remove.binary_search(m).is_err())
                        .map(|(_, c)| *c)
                        .sum();
                    p.ruleoverlap += 2 * clash;
                    let mut fo: i64 = b.dsets.iter().map(|&q| gs.fo(q, el.s)).sum();
                    if !has_q {
                        fo += gs.fo(el.q, el.s);
                        fo += b.keep.iter().map(|&m| gs.fo(el.q, gs.elements[m].s)).sum::<i64>();
                    }
                    p.featureoverlap += fo;
                    let mv = Move {
                        kind: MoveKind::Exchange,
                        add: Some(d),
                        remove: b.remove.clone(),
                        delta: self.obj.delta(&before, &p),
                        after: p,
                    };
                    local = pick(local, Some(mv));
                }
                local
            })
            .reduce(|| None, pick);
        best = pick(best, exchange);

        if let Some(m) = &best {
            self.check(m);
        }
        best
    }

    fn check(&self, m: &Move) {
        let mut ids: Vec<usize> = self
            .state
            .members()
            .iter()
            .copied()
            .filter(|e| !m.remove.contains(e))
            .collect();
        ids.extend(m.add);
        ids.sort_unstable();
        debug_assert_eq!(self.gs.penalties(&ids), m.after, "incremental scoring drifted");
        debug_assert!(self.gs.is_feasible(&ids, &self.obj.cfg));
    }

    /// Every scored candidate against a from-scratch recomputation.
    fn verify_all(&self, candidates: &[usize]) {
        let before = *self.state.penalties();
        let members = self.state.members();
        for b in self.bases() {
            assert_eq!(self.gs.penalties(&b.keep), b.pen);
            for &d in candidates {
                let mut ids = b.keep.clone();
                ids.push(d);
                ids.sort_unstable();
                if !self.gs.is_feasible(&ids, &self.obj.cfg) {
                    continue;
                }
                let fresh = self.gs.penalties(&ids);
                let delta = crate::objective::delta_value(self.gs, self.obj, self.state, Some(d), &b.remove);
                assert_eq!(delta, self.obj.delta(&before, &fresh), "delta mismatch for +{d} -{:?} from {members:?}", b.remove);
            }
        }
    }
}

/// Runs the `k + 1` round local search and returns the best round.
pub fn optimize(gs: &GroundSet, obj: &Objective, limits: &SearchLimits) -> SearchResult {
    let start = Instant::now();
    let cfg = &obj.cfg;
    let rounds = cfg.k + 1;
    let empty_value = obj.value(&Penalties::default());
    let mut available: Vec<bool> = vec![true; gs.len()];
    let mut result = SearchResult {
        best: Vec::new(),
        best_value: empty_value,
        best_round: 1,
        round_values: Vec::with_capacity(rounds),
        round_solutions: Vec::with_capacity(rounds),
        moves_per_round: Vec::with_capacity(rounds),
        moves: Vec::new(),
        wall_time: Duration::ZERO,
        empty_ground_set: gs.is_empty(),
    };
    if gs.is_empty() {
        warn!("empty ground set; returning the empty rule set");
    }

    for round in 1..=rounds {
        let pool: Vec<usize> = (0..gs.len()).filter(|&e| available[e]).collect();
        let mut state = EvalState::empty(gs);
        let mut moves = 0;

        let singleton_ok = cfg.max_size() >= 1 && cfg.max_dsets() >= 1;
        let seed = if singleton_ok {
            pool.iter()
                .map(|&e| (e, obj.value(&gs.penalties(&[e]))))
                .fold(None, |acc: Option<(usize, f64)>, (e, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((e, v)),
                })
        } else {
            None
        };
        if let Some((e, _)) = seed {
            state.add(gs, e);
        }

        let n = pool.len().max(1) as f64;
        let rel = cfg.delta / n.powi(4);
        let strict_only = rel < f64::EPSILON;

        while moves < limits.max_moves_per_round {
            let candidates: Vec<usize> = pool.iter().copied().filter(|&e| !state.contains(e)).collect();
            let scan = Scan { gs, obj, state: &state };
            if limits.verify {
                scan.verify_all(&candidates);
            }
            let Some(best) = scan.best_move(&candidates) else { break };
            let f_old = obj.value(state.penalties());
            let qualifies = best.delta > 0.0 && (strict_only || best.delta >= f_old * rel);
            result.moves.push(MoveRecord {
                round,
                op: best.kind,
                add: best.add,
                remove: best.remove.clone(),
                delta: best.delta,
                accepted: qualifies,
            });
            if !qualifies {
                break;
            }
            for &e in &best.remove {
                state.remove(gs, e);
            }
            if let Some(d) = best.add {
                state.add(gs, d);
            }
            debug_assert!(gs.is_feasible(state.members(), cfg));
            moves += 1;
        }

        let value = obj.value(state.penalties());
        debug!("round {round}: {} rules, value {value}, {moves} moves", state.members().len());
        for &e in state.members() {
            available[e] = false;
        }
        if round == 1 || value > result.best_value {
            result.best_value = value;
            result.best = state.members().to_vec();
            result.best_round = round;
        }
        result.round_values.push(value);
        result.round_solutions.push(state.members().to_vec());
        result.moves_per_round.push(moves);
    }
    result.wall_time = start.elapsed();
    result
}

fn binomial_sum(n: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for j in 0..=k.min(n) {
        total = total.saturating_add(c);
        c = c.saturating_mul((n - j) as u128) / (j as u128 + 1);
    }
    total
}

pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Exhaustive argmax over feasible subsets; ties go to the lexicographically
/// smallest id list.
pub fn brute_force(gs: &GroundSet, obj: &Objective) -> Result<(Vec<usize>, f64)> {
    let estimate = binomial_sum(gs.len(), obj.cfg.max_size());
    if estimate > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchTooLarge(estimate));
    }
    struct Dfs<'a> {
        gs: &'a GroundSet,
        obj: &'a Objective,
        best: Vec<usize>,
        best_value: f64,
    }
    impl Dfs<'_> {
        fn visit(&mut self, state: &mut EvalState, start: usize) {
            let cfg = &self.obj.cfg;
            if state.members().len() >= cfg.max_size() {
                return;
            }
            for e in start..self.gs.len() {
                if self.gs.width(e) > cfg.max_width() {
                    continue;
                }
                state.add(self.gs, e);
                if state.num_dsets() <= cfg.max_dsets() {
                    let v = self.obj.value(state.penalties());
                    if v > self.best_value {
                        self.best_value = v;
                        self.best = state.members().to_vec();
                    }
                    self.visit(state, e + 1);
                }
                state.remove(self.gs, e);
            }
        }
    }
    let mut dfs = Dfs { gs, obj, best: Vec::new(), best_value: obj.value(&Penalties::default()) };
    let mut state = EvalState::empty(gs);
    dfs.visit(&mut state, 0);
    Ok((dfs.best, dfs.best_value))
}
