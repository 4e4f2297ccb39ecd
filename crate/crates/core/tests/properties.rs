mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twolevel::decision_set::{fit_default_and_ties, TwoLevelDecisionSet};
use twolevel::format::Fixed6;
use twolevel::local_search::{brute_force, optimize, SearchLimits};
use twolevel::metrics;
use twolevel::miner::{mine, MinerConfig};
use twolevel::objective::{delta_value, EvalState, ObjectiveConfig};
use twolevel::predicate::Conjunction;

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn domain(seed: u64, cfg: ObjectiveConfig) -> SmallDomain {
    let mut r = rng(seed);
    loop {
        if let Some(d) = small_domain(&mut r, cfg.clone(), 4, 5) {
            if !d.gs.is_empty() {
                return d;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjunction_ignores_predicate_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let table = random_table(&mut r, 20, 3, 1, 2);
        let ds = dataset(&table);
        let c = random_conj(&mut r, &ds, 3);
        let permuted = Conjunction::new(shuffled(&mut r, c.predicates())).unwrap();
        prop_assert_eq!(&permuted, &c);
        prop_assert_eq!(permuted.to_string(), c.to_string());
        prop_assert_eq!(ds.coverage(&permuted).unwrap(), ds.coverage(&c).unwrap());
    }

    #[test]
    fn prediction_ignores_rule_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let table = random_table(&mut r, 30, 3, 1, 3);
        let ds = dataset(&table);
        let count = r.random_range(1..=6);
        let rules = random_rules(&mut r, &ds, count);
        let a = fit_default_and_ties(rules.clone(), &ds).unwrap();
        let b = fit_default_and_ties(shuffled(&mut r, &rules), &ds).unwrap();
        prop_assert_eq!(a.default_label(), b.default_label());
        for i in 0..ds.n() {
            let (pa, pb) = (a.predict(&ds, i).unwrap(), b.predict(&ds, i).unwrap());
            prop_assert_eq!(&pa.label, &pb.label);
            prop_assert_eq!(pa.provenance.kind(), pb.provenance.kind());
            let chosen = |s: &TwoLevelDecisionSet, p: Option<usize>| p.map(|k| s.rules()[k].clone());
            prop_assert_eq!(chosen(&a, pa.provenance.rule()), chosen(&b, pb.provenance.rule()));
        }
    }

    #[test]
    fn metrics_are_consistent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let table = random_table(&mut r, 40, 3, 1, 2);
        let ds = dataset(&table);
        let count = r.random_range(0..=6);
        let rules = random_rules(&mut r, &ds, count);
        let set = fit_default_and_ties(rules.clone(), &ds).unwrap();
        let m = metrics::report(&set, &ds).unwrap();
        prop_assert!(m.cover <= ds.n() as u64);
        prop_assert!(m.numdsets <= m.size);
        prop_assert!(m.maxwidth * m.size >= m.numpreds / 2);
        prop_assert!((0.0..=1.0).contains(&m.agreement_rate));
        prop_assert!((0.0..=1.0).contains(&m.cover_fraction));
        let direct = (0..ds.n())
            .filter(|&i| set.predict(&ds, i).unwrap().label == ds.label_name(ds.label(i)))
            .count() as f64 / ds.n() as f64;
        prop_assert!((m.agreement_rate - direct).abs() < 1e-12);
    }

    #[test]
    fn incremental_state_matches_scratch(seed in any::<u64>(), ops in prop::collection::vec(any::<u16>(), 1..40)) {
        let d = domain(seed, raw_config([1000, 5, 1000]));
        let mut state = EvalState::empty(&d.gs);
        for op in ops {
            let e = op as usize % d.gs.len();
            if state.contains(e) {
                state.remove(&d.gs, e);
            } else {
                state.add(&d.gs, e);
            }
            let mut ids = state.members().to_vec();
            ids.sort_unstable();
            prop_assert_eq!(*state.penalties(), d.gs.penalties(&ids));
            prop_assert_eq!(state.num_dsets(), d.gs.num_dsets(&ids));
        }
    }

    #[test]
    fn delta_matches_recomputation(seed in any::<u64>(), normalize in any::<bool>()) {
        let cfg = ObjectiveConfig { normalize, ..ObjectiveConfig::default() };
        let d = domain(seed, cfg);
        let mut r = rng(seed ^ 0x5eed);
        let ids = random_subset(&mut r, d.gs.len(), 0.4);
        let state = EvalState::from_ids(&d.gs, &ids);
        let add = (0..d.gs.len()).find(|e| !ids.contains(e));
        let take = r.random_range(0..=ids.len().min(2));
        let remove: Vec<usize> = ids.iter().copied().take(take).collect();
        let mut next: Vec<usize> = ids.iter().copied().filter(|e| !remove.contains(e)).collect();
        next.extend(add);
        next.sort_unstable();
        let expected = d.obj.value(&d.gs.penalties(&next)) - d.obj.value(&d.gs.penalties(&ids));
        let got = delta_value(&d.gs, &d.obj, &state, add, &remove);
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{} vs {}", got, expected);
    }

    #[test]
    fn search_result_is_well_formed(seed in any::<u64>(), eps1 in 1usize..4, eps3 in 1usize..3) {
        let d = domain(seed, raw_config([eps1, 3, eps3]));
        let res = optimize(&d.gs, &d.obj, &SearchLimits::default());
        prop_assert_eq!(res.round_values.len(), d.obj.cfg.k + 1);
        let max = res.round_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(res.best_value, max);
        prop_assert!(d.gs.is_feasible(&res.best, &d.obj.cfg));
        for (i, a) in res.round_solutions.iter().enumerate() {
            prop_assert!(d.gs.is_feasible(a, &d.obj.cfg));
            prop_assert_eq!(d.obj.value(&d.gs.penalties(a)), res.round_values[i]);
            for b in &res.round_solutions[i + 1..] {
                prop_assert!(a.iter().all(|e| !b.contains(e)));
            }
        }
        if d.gs.len() <= 12 {
            let (_, best) = brute_force(&d.gs, &d.obj).unwrap();
            prop_assert!(best >= res.best_value);
        }
    }

    #[test]
    fn mined_candidates_respect_config(seed in any::<u64>(), support in 0.05f64..0.5, width in 1usize..4, restrict in any::<bool>()) {
        let mut r = rng(seed);
        let table = random_table(&mut r, 40, 3, 1, 2);
        let ds = dataset(&table);
        let user_features = restrict.then(|| ["c0".to_string(), "n0".to_string()].into_iter().collect());
        let cfg = MinerConfig { min_support: support, max_width: width, max_candidates: 50, user_features };
        let Ok(cands) = mine(&ds, &cfg) else { return Ok(()) };
        prop_assert!(cands.len() <= 50);
        for c in &cands {
            prop_assert!(c.width() >= 1 && c.width() <= width);
            prop_assert!(c.support as f64 >= support * ds.n() as f64 - 1e-9);
            prop_assert_eq!(c.support as usize, c.coverage.count());
            prop_assert_eq!(c.support as usize, (0..ds.n()).filter(|&i| naive_conj(&table, &c.conj, i)).count());
            if restrict {
                prop_assert!(c.conj.features().iter().all(|f| *f == "c0" || *f == "n0"));
            }
        }
        prop_assert!(cands.windows(2).all(|w| w[0].support >= w[1].support));
    }

    #[test]
    fn fixed6_has_six_decimals(x in -1e6f64..1e6) {
        let text = serde_json::to_string(&Fixed6(x)).unwrap();
        let (_, frac) = text.split_once('.').unwrap();
        prop_assert_eq!(frac.len(), 6);
        prop_assert!((text.parse::<f64>().unwrap() - x).abs() <= 5e-7 + 1e-12 * x.abs());
    }
}
