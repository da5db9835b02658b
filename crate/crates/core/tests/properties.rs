use proptest::prelude::*;
use tardos::codegen::{Code, CodeBook, CodeStream};
use tardos::dist::{in_window, BiasDistribution};
use tardos::model::{ProblemInstance, Variant};
use tardos::optimize::{allocate_eps, full_grid, Allocation};
use tardos::rng::{StreamRng, Tag};
use tardos::strategy::{Coalition, StrategyKind};
use tardos::trace::{position_score, run_dynamic, static_scores, TraceOptions};
use tardos::{harness, SchemeParameters};

fn kind() -> impl Strategy<Value = StrategyKind> {
    prop::sample::select(StrategyKind::ALL.to_vec())
}

fn base_params() -> SchemeParameters {
    let inst = ProblemInstance::new(64, 0.1, 0.1, 3, Variant::Dynamic).unwrap();
    let tc = tardos::optimize::optimize_constants(&inst).unwrap();
    tardos::model::derive_scheme_params(&inst, &tc).unwrap()
}

proptest! {
    #[test]
    fn cdf_inverts_sample(delta in 1e-6f64..0.45, u in 1e-9f64..1.0) {
        let d = BiasDistribution::new(delta).unwrap();
        let p = d.sample(u).unwrap();
        prop_assert!(d.contains(p));
        prop_assert!((d.cdf(p).unwrap() - u).abs() < 1e-12);
    }

    #[test]
    fn windows_nest(p in 0.0f64..=1.0, a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(!in_window(p, hi) || in_window(p, lo));
    }

    #[test]
    fn scores_are_standardized(p in 1e-9f64..1.0, y: bool) {
        let s1 = position_score(true, y, p).unwrap();
        let s0 = position_score(false, y, p).unwrap();
        prop_assert!((p * s1 + (1.0 - p) * s0).abs() < 1e-12);
        prop_assert!((p * s1 * s1 + (1.0 - p) * s0 * s0 - 1.0).abs() < 1e-12);
        prop_assert_eq!(s1 > 0.0, y);
    }

    #[test]
    fn forgery_respects_marking(kind in kind(), seed: u64, bits in prop::collection::vec(any::<bool>(), 1..12)) {
        let members: Vec<u64> = (0..bits.len() as u64).collect();
        let mut c = Coalition::new(members, kind, StreamRng::new(seed, Tag::Coalition, 0, 0));
        let y = c.forge(&bits).unwrap();
        if bits.iter().all(|&b| b == bits[0]) {
            prop_assert_eq!(y, bits[0]);
        }
    }

    #[test]
    fn disconnection_shrinks_the_active_set(kind in kind(), seed: u64, k in 2u64..10, drop in 0u64..10) {
        let mut c = Coalition::new((0..k).collect(), kind, StreamRng::new(seed, Tag::Coalition, 0, 0));
        let gone = drop % k;
        c.on_disconnect(gone).unwrap();
        prop_assert_eq!(c.active().len() as u64, k - 1);
        prop_assert!(!c.active().contains(&gone));
        if kind == StrategyKind::Scapegoat {
            prop_assert!(c.active().contains(&c.scapegoat().unwrap()));
        }
        prop_assert!(c.on_disconnect(k + 5).is_err());
    }

    #[test]
    fn codebook_bytes_round_trip(seed: u64, n in 1u64..20, ell in 1u64..70, delta in 0.0f64..0.3) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let book = CodeBook::generate(seed, n, ell, delta).unwrap();
        book.write(&path).unwrap();
        let back = CodeBook::read(&path).unwrap();
        for u in 0..n {
            prop_assert_eq!(back.row(u), book.row(u));
        }
        for i in 1..=ell {
            prop_assert_eq!(back.bias(i).to_bits(), book.bias(i).to_bits());
        }
    }

    #[test]
    fn dynamic_without_threshold_is_static(seed: u64, n in 2u64..30, ell in 1u64..400, kind in kind(), c in 1u64..4) {
        let mut p = base_params();
        p.ell = ell;
        p.z = f64::INFINITY;
        let c = c.min(n);
        let code = CodeStream::new(seed, n, p.delta).unwrap();
        let pirates: Vec<u64> = (0..c).collect();
        let coal = Coalition::new(pirates.clone(), kind, StreamRng::new(seed, Tag::Coalition, 0, 0));
        let opts = TraceOptions { record_positions: true, ..TraceOptions::default() }.all_innocents(n, &pirates);
        let t = run_dynamic(&p, &code, coal, &opts).unwrap();
        prop_assert!(t.events.is_empty());
        let users: Vec<u64> = t.final_scores.iter().map(|s| s.user).collect();
        let want = static_scores(&code.with_len(ell), &t.forged(), &users).unwrap();
        for (s, w) in t.final_scores.iter().zip(&want) {
            prop_assert_eq!(s.scores[0].to_bits(), w.to_bits());
        }
    }

    #[test]
    fn eps_allocation_stays_within_budget(eps in 1e-6f64..0.5, c_max in 2u64..200) {
        let v = allocate_eps(eps, &full_grid(c_max), &Allocation::Basel).unwrap();
        prop_assert!(v.iter().all(|&e| e > 0.0));
        prop_assert!(v.iter().sum::<f64>() <= eps);
    }

    #[test]
    fn sampled_users_are_distinct(seed: u64, n in 10u64..300, c in 1u64..8, m in 0u64..100) {
        let inst = ProblemInstance::new(n, 0.1, 0.1, 3, Variant::Dynamic).unwrap();
        let mut cfg = harness::ExperimentConfig::new(inst, StrategyKind::Majority, c, 1, seed);
        cfg.members = harness::MemberRule::Random;
        cfg.innocents = Some(m.min(n - c));
        let (pirates, innocents) = harness::draw_users(&cfg, 0);
        let mut all: Vec<u64> = pirates.iter().chain(&innocents).copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), pirates.len() + innocents.len());
        prop_assert!(all.iter().all(|&u| u < n));
    }
}
