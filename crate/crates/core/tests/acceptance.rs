//! End-to-end acceptance checks. Each check prints one PASS/FAIL line with its
//! runtime; the test fails if any check fails or exceeds its time budget.
//!
//! The checks run sequentially inside a single test so that timings are not
//! distorted by other tests running in parallel.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adaptive_threshold::harness::{
    generate_synthetic, run_incremental, summarize, write_rows_csv, IdentityOrder,
    IncrementalConfig, SynthSpec, ThresholdKind,
};
use adaptive_threshold::optimizer::adapt_distributions;
use adaptive_threshold::{
    build_distributions, confusion_at, gaussian_pdf, intersect_gaussians, maybe_adapt, optimize_f1,
    roc_sweep, AdaptConfig, AdaptOutcome, EmbeddingSet, Gallery, GaussianEstimate, Provenance,
    SimilarityDistributions, SkipReason, ThresholdState, TprDenominator,
};

const BIN: &str = env!("CARGO_BIN_EXE_adathresh");

fn f1_at(dist: &SimilarityDistributions, lambda: f64, cfg: &AdaptConfig) -> f64 {
    confusion_at(dist, lambda)
        .unwrap()
        .metrics(cfg.epsilon, TprDenominator::Standard)
        .f1
}

fn random_samples(rng: &mut ChaCha8Rng, max_len: usize, mean: f64, spread: f64) -> Vec<f64> {
    let n = rng.random_range(2..=max_len);
    // Rounded to two decimals so that ties between values are common.
    (0..n)
        .map(|_| {
            let x: f64 = mean + spread * (rng.random::<f64>() - 0.5) * 2.0;
            (x.clamp(-1.0, 1.0) * 100.0).round() / 100.0
        })
        .collect()
}

fn random_dist(rng: &mut ChaCha8Rng, max_len: usize) -> SimilarityDistributions {
    let auto_mean = rng.random_range(0.2..0.9);
    let cross_mean = rng.random_range(-0.2..0.6);
    let spread = rng.random_range(0.05..0.6);
    SimilarityDistributions::new(
        random_samples(rng, max_len, auto_mean, spread),
        random_samples(rng, max_len, cross_mean, spread),
    )
}

fn criterion_1() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut roots_checked = 0;
    for _ in 0..1000 {
        let (m1, m2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if m1 == m2 {
            continue;
        }
        let g1 = GaussianEstimate::from_params(m1, rng.random_range(0.01..1.0), 100);
        let g2 = GaussianEstimate::from_params(m2, rng.random_range(0.01..1.0), 100);
        let res = intersect_gaussians(&g1, &g2).unwrap();
        let tol = 1e-9 * g1.peak().max(g2.peak());
        for &r in &res.roots {
            let gap = (gaussian_pdf(&g1, r) - gaussian_pdf(&g2, r)).abs();
            assert!(
                gap <= tol,
                "root {r} of {g1:?} / {g2:?}: density gap {gap:e} > {tol:e}"
            );
            roots_checked += 1;
        }

        let sigma = rng.random_range(0.01..1.0);
        let e1 = GaussianEstimate::from_params(m1, sigma, 100);
        let e2 = GaussianEstimate::from_params(m2, sigma, 100);
        let res = intersect_gaussians(&e1, &e2).unwrap();
        assert_eq!(res.roots.len(), 1);
        assert!((res.roots[0] - (m1 + m2) / 2.0).abs() <= 1e-12);
    }
    assert!(roots_checked > 1000);
}

fn criterion_2() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = AdaptConfig::default();
    for _ in 0..500 {
        let dist = random_dist(&mut rng, 300);
        let (lambda, f1) = optimize_f1(&dist, &cfg).unwrap();
        assert!((0.0..=1.0).contains(&lambda));
        // Every count pattern reachable in [0, 1] is reached at 0, at 1, or
        // exactly at a sample value inside [0, 1].
        let oracle = dist
            .all_samples()
            .filter(|v| (0.0..=1.0).contains(v))
            .chain([0.0, 1.0])
            .map(|l| f1_at(&dist, l, &cfg))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(f1_at(&dist, lambda, &cfg), oracle);
        assert_eq!(f1, oracle);
    }
}

fn criterion_3() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let dist = random_dist(&mut rng, 200);
        let mut prev: Option<(usize, usize)> = None;
        for i in 0..=100 {
            let lambda = -1.0 + 2.0 * i as f64 / 100.0;
            let c = confusion_at(&dist, lambda).unwrap();
            assert_eq!(c.tp + c.fn_, dist.auto_samples.len());
            assert_eq!(c.fp + c.tn, dist.cross_samples.len());
            if let Some((tp, fp)) = prev {
                assert!(c.tp <= tp && c.fp <= fp, "counts grew at lambda {lambda}");
            }
            prev = Some((c.tp, c.fp));
        }
    }
}

fn mann_whitney(dist: &SimilarityDistributions) -> f64 {
    let mut wins = 0.0;
    for &a in &dist.auto_samples {
        for &c in &dist.cross_samples {
            wins += if a > c {
                1.0
            } else if a == c {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (dist.auto_samples.len() * dist.cross_samples.len()) as f64
}

fn criterion_4() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let dist = random_dist(&mut rng, 200);
        let auc = roc_sweep(&dist, 1001, 1e-9).unwrap().auc;
        let oracle = mann_whitney(&dist);
        assert!(
            (auc - oracle).abs() <= 0.01,
            "auc {auc} vs Mann-Whitney {oracle}"
        );
    }
}

fn criterion_5() {
    let set = generate_synthetic(&SynthSpec {
        num_identities: 100,
        embeddings_per_identity: 5,
        dimension: 64,
        within_spread: 0.1,
        between_spread: 1.0,
        rng_seed: 42,
    })
    .unwrap();
    let run = run_incremental(&set, &IncrementalConfig::default()).unwrap();
    assert_eq!(run.rows.len(), 99 * 4);
    for step in run.rows.chunks(4) {
        let adaptive = &step[0];
        assert_eq!(adaptive.threshold_kind, ThresholdKind::Adaptive);
        for fixed in &step[1..] {
            assert!(
                adaptive.f1 >= fixed.f1,
                "step {}: adaptive f1 {} < {} f1 {}",
                adaptive.step,
                adaptive.f1,
                fixed.threshold_kind,
                fixed.f1
            );
        }
    }
    let report = summarize(&run.rows).unwrap();
    let improved = report
        .relative_accuracy_improvement
        .iter()
        .filter(|r| r.pct.is_some_and(|p| p > 0.0))
        .count();
    assert!(improved >= 2, "{:#?}", report.relative_accuracy_improvement);
}

fn criterion_6() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for g in 0..50 {
        let set = generate_synthetic(&SynthSpec {
            num_identities: rng.random_range(4..=15),
            embeddings_per_identity: rng.random_range(2..=5),
            dimension: rng.random_range(4..=32),
            within_spread: rng.random_range(0.05..0.6),
            between_spread: rng.random_range(0.3..1.5),
            rng_seed: g,
        })
        .unwrap();
        let dist = build_distributions(&Gallery::from_set(&set).unwrap()).unwrap();
        let cfg = AdaptConfig {
            tau: rng.random_range(0.5..=1.0),
            ..AdaptConfig::default()
        };
        // Start from nothing and from an arbitrary threshold already in force.
        let lambda0 = rng.random_range(0.0..1.0);
        let arbitrary = ThresholdState::fresh(
            lambda0,
            f1_at(&dist, lambda0, &cfg),
            Provenance::Optimized,
            0,
            cfg.tau,
        );
        for start in [None, Some(arbitrary)] {
            let mut state = start;
            let mut last = state.as_ref().map_or(f64::NEG_INFINITY, |s| s.f1_current);
            for _ in 0..5 {
                match adapt_distributions(&dist, state.as_ref(), &cfg) {
                    AdaptOutcome::Adapted(next) => {
                        assert!(
                            next.f1_current >= last,
                            "f1 fell from {last} to {}",
                            next.f1_current
                        );
                        assert_eq!(next.f1_current, f1_at(&dist, next.lambda_current, &cfg));
                        last = next.f1_current;
                        state = Some(next);
                    }
                    AdaptOutcome::Skipped { prior, .. } => assert_eq!(prior, state),
                    AdaptOutcome::NotTriggered(_) => unreachable!(),
                }
            }
        }
    }
}

fn criterion_7() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        num_identities: 30,
        embeddings_per_identity: 4,
        dimension: 32,
        within_spread: 0.15,
        between_spread: 1.0,
        rng_seed: 7,
    };
    let synth_path = dir.path().join("synth.csv");
    generate_synthetic(&spec)
        .unwrap()
        .save(&synth_path)
        .unwrap();
    let loaded = EmbeddingSet::load(&synth_path).unwrap();
    assert_eq!(loaded, generate_synthetic(&spec).unwrap());

    let config = IncrementalConfig {
        order: IdentityOrder::Shuffle { seed: 99 },
        ..IncrementalConfig::default()
    };
    let csv_of = |set: &EmbeddingSet| {
        let mut buf = Vec::new();
        write_rows_csv(&run_incremental(set, &config).unwrap().rows, &mut buf).unwrap();
        buf
    };
    let first = csv_of(&loaded);
    assert_eq!(first, csv_of(&EmbeddingSet::load(&synth_path).unwrap()));

    // Same through the command line, from generation onwards.
    let mut outputs = Vec::new();
    for run in 0..2 {
        let emb = dir.path().join(format!("cli{run}.csv"));
        let rows = dir.path().join(format!("rows{run}.csv"));
        let ok = |args: &[&str]| assert!(Command::new(BIN).args(args).status().unwrap().success());
        ok(&[
            "synth",
            "--identities",
            "30",
            "--per-identity",
            "4",
            "--dim",
            "32",
            "--within",
            "0.15",
            "--between",
            "1.0",
            "--seed",
            "7",
            "--out",
            emb.to_str().unwrap(),
        ]);
        ok(&[
            "simulate",
            "--embeddings",
            emb.to_str().unwrap(),
            "--order",
            "shuffle",
            "--seed",
            "99",
            "--out",
            rows.to_str().unwrap(),
        ]);
        outputs.push((std::fs::read(&emb).unwrap(), std::fs::read(&rows).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].0, std::fs::read(&synth_path).unwrap());
    assert_eq!(outputs[0].1, first);

    // A gallery that has seen registrations and removals.
    let mut gallery = Gallery::from_set(&loaded).unwrap();
    let extra = gallery.register("late", vec![0.25; 32]).unwrap();
    assert!(gallery.remove("id0003-001"));
    let json = dir.path().join("gallery.json");
    gallery.save(&json).unwrap();
    let back = Gallery::load(&json).unwrap();
    assert_eq!(back, gallery);
    assert_eq!(back.change_counter(), gallery.change_counter());
    assert!(back.contains(&extra) && !back.contains("id0003-001"));
    assert_eq!(back.to_set(), gallery.to_set());
}

fn criterion_8() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("singletons.csv");
    generate_synthetic(&SynthSpec {
        num_identities: 6,
        embeddings_per_identity: 1,
        dimension: 8,
        within_spread: 0.1,
        between_spread: 1.0,
        rng_seed: 8,
    })
    .unwrap()
    .save(&path)
    .unwrap();
    let out = Command::new(BIN)
        .args(["adapt", "--gallery", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped"));

    // Every identity holds two copies of one vector: all auto similarities are 1.
    let mut gallery = Gallery::new(3).unwrap();
    for (id, v) in [
        ("a", [1.0, 0.0, 0.0]),
        ("b", [0.0, 1.0, 0.0]),
        ("c", [0.6, 0.8, 0.0]),
    ] {
        gallery.register(id, v.to_vec()).unwrap();
        gallery.register(id, v.to_vec()).unwrap();
    }
    let prior = ThresholdState::fresh(0.4, 0.5, Provenance::Optimized, 0, 0.8);
    match maybe_adapt(&mut gallery, Some(prior.clone()), &AdaptConfig::default()) {
        AdaptOutcome::Skipped {
            prior: kept,
            reason,
        } => {
            assert_eq!(kept, Some(prior));
            assert!(matches!(reason, SkipReason::ZeroVariance(_)), "{reason:?}");
            assert!(!reason.to_string().is_empty());
        }
        other => panic!("expected a skip, got {other:?}"),
    }
}

#[test]
fn acceptance() {
    let checks: [(&str, u64, fn()); 8] = [
        ("1 gaussian intersection oracle", 1, criterion_1),
        ("2 optimizer equals exhaustive oracle", 10, criterion_2),
        ("3 confusion partition and monotonicity", 5, criterion_3),
        ("4 roc auc matches mann-whitney", 10, criterion_4),
        ("5 adaptive dominates fixed thresholds", 60, criterion_5),
        ("6 acceptance rule never worsens f1", 30, criterion_6),
        ("7 determinism and round-trips", 10, criterion_7),
        ("8 degenerate input handling", 1, criterion_8),
    ];
    let mut failures = Vec::new();
    for (name, limit, check) in checks {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let verdict = if result.is_ok() && in_time {
            "PASS"
        } else {
            "FAIL"
        };
        let note = match (&result, in_time) {
            (Err(_), _) => " (assertion failed)",
            (Ok(()), false) => " (over time limit)",
            _ => "",
        };
        println!(
            "{verdict} criterion {name}: {:.3}s of {limit}s{note}",
            elapsed.as_secs_f64()
        );
        if verdict == "FAIL" {
            failures.push(name);
        }
    }
    assert!(failures.is_empty(), "failed: {failures:?}");
}
