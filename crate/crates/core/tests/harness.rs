use std::collections::HashSet;
use std::fs;

use statrs::distribution::{Binomial, DiscreteCDF};
use tardos::harness::{
    draw_users, export, read_report, run_trials, summarize, write_summary_csv, CodeMode, ExperimentConfig, GridKind,
    MemberRule, Provenance, TrajectoryConfig, UniversalConfig,
};
use tardos::model::{ProblemInstance, Variant};
use tardos::strategy::StrategyKind;
use tardos::trace::Termination;
use tardos::Error;

fn small(variant: Variant) -> ExperimentConfig {
    let inst = ProblemInstance::new(2_000, 1e-2, 1e-2, 4, variant).unwrap();
    let mut cfg = ExperimentConfig::new(inst, StrategyKind::Interleaving, 4, 6, 99);
    cfg.innocents = Some(100);
    cfg
}

#[test]
fn runs_are_deterministic() {
    let mut cfg = small(Variant::Dynamic);
    cfg.members = MemberRule::Random;
    let a = run_trials(&cfg).unwrap();
    let b = run_trials(&cfg).unwrap();
    assert_eq!(a.stats, b.stats);
    cfg.seed += 1;
    let c = run_trials(&cfg).unwrap();
    assert_ne!(a.stats.records, c.stats.records);
}

#[test]
fn drawn_users_are_disjoint_and_in_range() {
    let mut cfg = small(Variant::Dynamic);
    cfg.members = MemberRule::Random;
    cfg.innocents = Some(500);
    for t in 0..20 {
        let (pirates, innocents) = draw_users(&cfg, t);
        assert_eq!(pirates.len(), 4);
        assert_eq!(innocents.len(), 500);
        let set: HashSet<u64> = pirates.iter().chain(&innocents).copied().collect();
        assert_eq!(set.len(), 504);
        assert!(set.iter().all(|&u| u < 2_000));
    }
    cfg.innocents = Some(1_996);
    let (pirates, innocents) = draw_users(&cfg, 3);
    let mut all: Vec<u64> = pirates.into_iter().chain(innocents).collect();
    all.sort_unstable();
    assert_eq!(all, (0..2_000).collect::<Vec<_>>());
}

#[test]
fn every_variant_completes_small_instances() {
    for variant in [Variant::Static, Variant::Dynamic, Variant::WeaklyDynamicA, Variant::WeaklyDynamicB, Variant::Universal] {
        let mut cfg = small(variant);
        if variant.is_weakly_dynamic() {
            cfg.instance = cfg.instance.with_delay(3).unwrap();
        }
        if variant == Variant::Universal {
            cfg.universal = UniversalConfig {
                c_max: Some(8),
                grid: GridKind::Full,
                ..UniversalConfig::default()
            };
        }
        let e = run_trials(&cfg).unwrap();
        let s = &e.stats.summary;
        assert_eq!(s.trials, 6);
        assert_eq!(s.completeness_failures, 0, "{variant:?}");
        assert_eq!(s.soundness_failures, 0, "{variant:?}");
        if variant != Variant::Universal {
            assert!(s.median_catch.unwrap() <= s.ell_theoretical as f64, "{variant:?}");
        }
    }
}

#[test]
fn materialized_matches_streaming() {
    let mut cfg = small(Variant::WeaklyDynamicA);
    cfg.instance = cfg.instance.with_delay(2).unwrap();
    let a = run_trials(&cfg).unwrap();
    cfg.code = CodeMode::Materialized;
    let b = run_trials(&cfg).unwrap();
    assert_eq!(a.stats, b.stats);
}

#[test]
fn position_cap_censors_trials() {
    let mut cfg = small(Variant::Dynamic);
    cfg.max_positions = Some(50);
    let e = run_trials(&cfg).unwrap();
    assert!(e.stats.records.iter().all(|r| r.termination == Termination::PositionCap && r.positions == 50));
    assert_eq!(e.stats.summary.median_catch, None);
    assert_eq!(e.stats.summary.completeness_failures, 6);
}

#[test]
fn invalid_configs_list_every_problem() {
    let mut cfg = small(Variant::Dynamic);
    cfg.trials = 0;
    cfg.c = 0;
    match cfg.validate() {
        Err(Error::Config(v)) => assert_eq!(v.len(), 2, "{v:?}"),
        other => panic!("{other:?}"),
    }
    assert!(run_trials(&cfg).is_err());
}

#[test]
fn soundness_at_inflated_eps() {
    // Loose parameters make innocent crossings frequent enough to count.
    let inst = ProblemInstance::new(500, 0.5, 0.5, 2, Variant::Dynamic).unwrap();
    let mut cfg = ExperimentConfig::new(inst, StrategyKind::Majority, 2, 40, 5);
    cfg.innocents = Some(498);
    let e = run_trials(&cfg).unwrap();
    let scored: u64 = e.stats.records.iter().map(|r| r.innocents_scored).sum();
    let crossings: u64 = e.stats.records.iter().map(|r| r.innocent_crossings).sum();
    // Each innocent is accused with probability at most eps1 / n.
    let bound = Binomial::new(0.5 / 500.0, scored).unwrap();
    let q99 = (0..=scored).find(|&k| bound.cdf(k) >= 0.99).unwrap();
    assert!(crossings <= q99, "{crossings} crossings, 99% bound {q99}");
}

#[test]
fn median_scales_linearly_in_c() {
    let inst = ProblemInstance::new(1_000_000, 1e-3, 1e-3, 25, Variant::Dynamic).unwrap();
    let points: Vec<(f64, f64)> = [5u64, 10, 25]
        .iter()
        .map(|&c| {
            let mut cfg = ExperimentConfig::new(inst, StrategyKind::Interleaving, c, 5, 40 + c);
            cfg.innocents = Some(20);
            let e = run_trials(&cfg).unwrap();
            (c as f64, e.stats.summary.median_catch.unwrap())
        })
        .collect();
    let k = points.iter().map(|(c, m)| c * m).sum::<f64>() / points.iter().map(|(c, _)| c * c).sum::<f64>();
    for (c, m) in points {
        assert!((m - k * c).abs() <= 0.2 * k * c, "c = {c}: median {m} vs fit {}", k * c);
    }
}

#[test]
fn export_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Variant::Dynamic);
    cfg.keep_transcript = true;
    cfg.trajectory = TrajectoryConfig { every: 100, innocents: 3 };
    let e = run_trials(&cfg).unwrap();
    let written = export(&e, dir.path()).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["summary.csv", "summary.json", "trajectory.csv", "transcript.csv"]);

    let report = read_report(&dir.path().join("summary.json")).unwrap();
    assert_eq!(report.summary, e.stats.summary);
    assert_eq!(report.trials, e.stats.records);
    assert_eq!(report.provenance.config, cfg);

    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let prov = Provenance::from_csv_comments(&csv).unwrap();
    assert_eq!(prov.config, cfg);
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        body[0],
        "scheme,strategy,c,c0,n,eps1,eps2,ell_theoretical,median_catch,p95_catch,fp_rate,trials"
    );
    assert_eq!(body.len(), 2);

    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(Provenance::from_csv_comments(&traj).is_some());
    assert!(traj.lines().any(|l| l == "position,user,entry_c,score,event"));

    let tr = fs::read_to_string(dir.path().join("transcript.csv")).unwrap();
    let t = e.transcript.as_ref().unwrap();
    let rows = tr.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + t.records.len() + t.events.len());
}

#[test]
fn summary_csv_marks_censored_quantiles() {
    let mut cfg = small(Variant::Dynamic);
    cfg.max_positions = Some(10);
    let e = run_trials(&cfg).unwrap();
    let mut out = Vec::new();
    write_summary_csv(&mut out, None, std::slice::from_ref(&e.stats.summary)).unwrap();
    let text = String::from_utf8(out).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.contains(",inf,inf,"), "{row}");
}

#[test]
fn comparison_table() {
    assert!(summarize(&[], None).is_empty());
    let a = run_trials(&small(Variant::Static)).unwrap();
    let b = run_trials(&small(Variant::Dynamic)).unwrap();
    let rows = summarize(&[&a, &b], Some(&a.stats.summary));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].guilty_caught, "one");
    assert_eq!(rows[1].guilty_caught, "all");
    assert_eq!(rows[1].scores_per_user, 1);
    let ratio = rows[1].vs_baseline.unwrap();
    assert!((ratio - b.stats.summary.median_catch.unwrap() / a.stats.summary.ell_theoretical as f64).abs() < 1e-12);
}
