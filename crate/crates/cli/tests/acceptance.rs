//! Acceptance suite. Each test enforces one release criterion at its stated
//! tolerance and prints one PASS line; failures name the violated bound.
//!
//! Criteria:
//!  1. exact binomial upper bound vs. grid-scan oracle (and the x = 0
//!     closed form),
//!  2. Monte-Carlo verification of the calibration coverage guarantee,
//!  3. certified risk never increases on the scaling grid,
//!  4. Normal approximation of the risk decrease,
//!  5. first-order linearity of the risk decrease at fixed coverage,
//!  6. the online-learning effect on the scripted ten-family stream,
//!  7. token/call reductions of the strategy run vs. the baseline,
//!  8. retrieval equals the full-sort oracle,
//!  9. persistence round-trip bit-identity,
//! 10. metric formula fixtures,
//! 11. retrieval latency sanity (soft — warns, never fails),
//! 12. end-to-end CLI determinism.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use cascade_core::calibration::{
    alpha_decrease_approx, alpha_decrease_linear, alpha_of, alpha_of_continuous, binomial_cdf,
    calibrate_threshold, cp_upper_bound, CalibrationConfig, CalibrationError, CalibrationItem,
    TheoryParams,
};
use cascade_core::embedding::{cosine_similarity, EmbeddingVector};
use cascade_core::metrics::{compare_runs, compute_metrics, render_metric, StreamCounters, TierTally};
use cascade_core::pipeline::{Disposition, Mode};
use cascade_core::repo::StrategyRepo;
use cascade_core::types::{ConfidenceScore, Strategy};

/// Criterion 1 oracle: the largest grid point (step 1e-4) whose binomial
/// lower-tail probability still reaches delta. Scanned from the top of the
/// grid; the first hit is the supremum over the grid.
fn grid_scan_sup(n: u64, x: u64, delta: f64) -> f64 {
    const STEP: f64 = 1e-4;
    for i in (0..=10_000).rev() {
        let p = i as f64 * STEP;
        if binomial_cdf(n, p, x as i64) >= delta {
            return p;
        }
    }
    unreachable!("binomial_cdf(n, 0, x) = 1 >= delta");
}

#[test]
fn criterion_01_clopper_pearson_oracle_equivalence() {
    let start = Instant::now();
    let deltas = [0.05, 0.1, 0.2, 0.5];
    let mut worst: f64 = 0.0;
    for n in 1..=40u64 {
        for x in 0..=n {
            // One descending scan per (n, x), collecting the sup for every
            // delta as its threshold is crossed (the CDF grows as p falls).
            let mut pending: Vec<(usize, f64)> = deltas.iter().copied().enumerate().collect();
            pending.sort_by(|a, b| a.1.total_cmp(&b.1));
            let mut sups = [f64::NAN; 4];
            let mut next = 0usize;
            for i in (0..=10_000).rev() {
                let p = i as f64 * 1e-4;
                let cdf = binomial_cdf(n, p, x as i64);
                while next < pending.len() && cdf >= pending[next].1 {
                    sups[pending[next].0] = p;
                    next += 1;
                }
                if next == pending.len() {
                    break;
                }
            }
            for (d, &delta) in deltas.iter().enumerate() {
                let exact = cp_upper_bound(n, x, delta);
                let diff = (exact - sups[d]).abs();
                worst = worst.max(diff);
                assert!(
                    diff <= 1e-4,
                    "n={n} x={x} delta={delta}: exact {exact} vs grid sup {}",
                    sups[d]
                );
            }
        }
    }

    // Closed form at x = 0, n up to 10^4.
    let mut worst_closed: f64 = 0.0;
    for n in 1..=10_000u64 {
        for delta in deltas {
            let diff = (cp_upper_bound(n, 0, delta) - (1.0 - delta.powf(1.0 / n as f64))).abs();
            worst_closed = worst_closed.max(diff);
            assert!(diff <= 1e-9, "closed form disagrees at n={n} delta={delta}");
        }
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "criterion 1 exceeded its 30 s budget: {elapsed:?}"
    );
    println!(
        "PASS criterion 1: CP oracle equivalence (worst grid diff {worst:.2e}, worst closed-form diff {worst_closed:.2e}, {elapsed:?})"
    );
}

#[test]
fn criterion_02_coverage_guarantee_monte_carlo() {
    let start = Instant::now();
    const REPLICATIONS: u32 = 500;
    const CAL_SIZE: u32 = 2_000;
    const TEST_SIZE: u32 = 5_000;
    const ALPHA: f64 = 0.2;
    const DELTA: f64 = 0.1;

    let mut rng = ChaCha12Rng::seed_from_u64(0xCA5CADE);
    let config = CalibrationConfig::new(ALPHA, DELTA);
    let mut violations = 0u32;
    for _ in 0..REPLICATIONS {
        let items: Vec<CalibrationItem> = (0..CAL_SIZE)
            .map(|_| {
                let confidence: f64 = rng.gen();
                CalibrationItem {
                    confidence,
                    correct: rng.gen::<f64>() < confidence,
                }
            })
            .collect();
        let lambda = match calibrate_threshold(&items, &config) {
            Ok(outcome) => outcome.threshold,
            Err(CalibrationError::NoFeasibleThreshold { .. }) => continue,
            Err(e) => panic!("unexpected calibration failure: {e}"),
        };
        let mut passing = 0u32;
        let mut wrong = 0u32;
        for _ in 0..TEST_SIZE {
            let confidence: f64 = rng.gen();
            let correct = rng.gen::<f64>() < confidence;
            if confidence >= lambda {
                passing += 1;
                if !correct {
                    wrong += 1;
                }
            }
        }
        if passing > 0 && wrong as f64 / passing as f64 > ALPHA {
            violations += 1;
        }
    }

    let r = REPLICATIONS as f64;
    let bound = DELTA * r + 3.0 * (r * DELTA * (1.0 - DELTA)).sqrt();
    let elapsed = start.elapsed();
    assert!(
        (violations as f64) <= bound,
        "{violations} violations exceed the bound {bound:.2}"
    );
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "criterion 2 exceeded its 60 s budget: {elapsed:?}"
    );
    println!(
        "PASS criterion 2: coverage guarantee Monte Carlo ({violations} violations <= {bound:.2} over {REPLICATIONS} replications, {elapsed:?})"
    );
}

#[test]
fn criterion_03_risk_never_increases_on_grid() {
    let mut worst = f64::NEG_INFINITY;
    for &n in &[50u64, 200, 1000] {
        for &ratio in &[0.05, 0.1, 0.3] {
            let x = (ratio * n as f64).round() as u64;
            for &delta in &[0.1, 0.2] {
                let base = alpha_of(&TheoryParams::new(n, x, delta, 1.0, 1.0).unwrap());
                let base_cont =
                    alpha_of_continuous(&TheoryParams::new(n, x, delta, 1.0, 1.0).unwrap());
                for &epsilon in &[0.25, 0.5, 0.75, 1.0] {
                    for &b in &[1.0, 2.0, 4.0] {
                        let params = TheoryParams::new(n, x, delta, epsilon, b).unwrap();
                        let increase = alpha_of(&params) - base;
                        let increase_cont = alpha_of_continuous(&params) - base_cont;
                        worst = worst.max(increase).max(increase_cont);
                        assert!(
                            increase <= 1e-12 && increase_cont <= 1e-12,
                            "risk increased at n={n} x={x} delta={delta} eps={epsilon} b={b}"
                        );
                    }
                }
            }
        }
    }
    println!("PASS criterion 3: risk never increases on the grid (worst increase {worst:.2e})");
}

#[test]
fn criterion_04_risk_decrease_normal_approximation() {
    let baseline = TheoryParams::new(10_000, 1_000, 0.1, 1.0, 1.0).unwrap();
    let scaled = TheoryParams::new(10_000, 1_000, 0.1, 0.5, 2.0).unwrap();
    let exact = alpha_of(&baseline) - alpha_of(&scaled);
    let approx = alpha_decrease_approx(&scaled);
    let error = (approx - exact).abs();
    assert!(error <= 0.005, "approximation error {error} exceeds 0.005");
    println!(
        "PASS criterion 4: risk-decrease Normal approximation (|{approx:.6} - {exact:.6}| = {error:.2e} <= 5e-3)"
    );
}

#[test]
fn criterion_05_risk_decrease_linearity() {
    let baseline = TheoryParams::new(10_000, 500, 0.1, 1.0, 1.0).unwrap();
    let base_alpha = alpha_of(&baseline);
    let mut worst: f64 = 0.0;
    for &epsilon in &[0.90, 0.95, 0.99] {
        let scaled = TheoryParams::new(10_000, 500, 0.1, epsilon, 1.0).unwrap();
        let exact = base_alpha - alpha_of(&scaled);
        let linear = alpha_decrease_linear(10_000, 500, 0.1, epsilon);
        let rel = (linear - exact).abs() / exact.abs();
        worst = worst.max(rel);
        assert!(
            rel <= 0.10,
            "relative error {rel} exceeds 10% at epsilon={epsilon}"
        );
    }
    println!("PASS criterion 5: risk-decrease linearity (worst relative error {worst:.2e} <= 0.1)");
}

#[test]
fn criterion_06_online_learning_effect() {
    let cascade = common::scenario_cascade(Mode::InterCascade);
    let queries = common::scenario_queries(200);
    let output = cascade.run_stream(&queries).unwrap();

    assert_eq!(
        output.counters.strong_calls, 10,
        "expected exactly one strong call per family"
    );
    let strong_in_second_half = output.outcomes[100..]
        .iter()
        .filter(|o| o.answered_by == (Disposition::Answered { tier: 1 }))
        .count();
    assert_eq!(strong_in_second_half, 0, "strong calls in the second half");

    let metrics = compute_metrics(&output.counters);
    let accuracy = metrics.pipeline_accuracy.expect("covered queries exist");
    assert!(accuracy >= 0.95, "pipeline accuracy {accuracy} below 0.95");

    // Determinism across full reruns.
    let rerun = cascade.run_stream(&queries).unwrap();
    assert_eq!(
        serde_json::to_string(&output.outcomes).unwrap(),
        serde_json::to_string(&rerun.outcomes).unwrap()
    );
    assert_eq!(output.counters, rerun.counters);

    println!(
        "PASS criterion 6: online-learning effect (10 strong calls, none in the second half, accuracy {accuracy:.4}, deterministic rerun)"
    );
}

#[test]
fn criterion_07_baseline_comparison() {
    let queries = common::scenario_queries(200);
    let ours = common::scenario_cascade(Mode::InterCascade)
        .run_stream(&queries)
        .unwrap();
    let baseline = common::scenario_cascade(Mode::Baseline)
        .run_stream(&queries)
        .unwrap();
    let pricing = common::scenario_pricing();

    let comparison =
        compare_runs((&ours.counters, &pricing), (&baseline.counters, &pricing)).unwrap();
    let token_reduction = comparison.token_reduction.expect("baseline spent tokens");
    let strong_call_reduction = comparison
        .strong_call_reduction
        .expect("baseline called the strong tier");
    assert!(token_reduction > 0.0, "token reduction {token_reduction}");
    assert!(
        strong_call_reduction >= 0.90,
        "strong-call reduction {strong_call_reduction}"
    );

    // The reductions must match the hand-computed formulas exactly.
    let tok_ours = ours.counters.tokens_total() as f64;
    let tok_base = baseline.counters.tokens_total() as f64;
    assert_eq!(token_reduction, (tok_base - tok_ours) / tok_base);
    assert_eq!(
        strong_call_reduction,
        (baseline.counters.strong_calls as f64 - ours.counters.strong_calls as f64)
            / baseline.counters.strong_calls as f64
    );
    let cost = |counters: &StreamCounters| {
        cascade_core::metrics::compute_cost(counters, &pricing).unwrap()
    };
    assert_eq!(
        comparison.cost_reduction.unwrap(),
        (cost(&baseline.counters) - cost(&ours.counters)) / cost(&baseline.counters)
    );

    println!(
        "PASS criterion 7: baseline comparison (token reduction {token_reduction:.4} > 0, strong-call reduction {strong_call_reduction:.4} >= 0.90)"
    );
}

fn random_unit_vector(rng: &mut ChaCha12Rng, dim: usize) -> EmbeddingVector {
    EmbeddingVector::normalized((0..dim).map(|_| rng.gen::<f64>()).collect())
}

fn oracle_top_k(repo: &StrategyRepo, probe: &EmbeddingVector, k: usize) -> Vec<(u64, u64)> {
    let mut scored: Vec<(f64, u64)> = repo
        .records()
        .iter()
        .map(|r| (cosine_similarity(probe, &r.embedding).unwrap(), r.seq))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(k)
        .map(|(sim, seq)| (sim.to_bits(), seq))
        .collect()
}

fn dummy_strategy(i: usize) -> Strategy {
    Strategy {
        question_text: format!("q{i}"),
        strategy_text: format!("s{i}"),
        answer_text: format!("{i}"),
    }
}

#[test]
fn criterion_08_retrieval_matches_full_sort_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(88);
    let mut repo = StrategyRepo::new(384);
    // 1,000 records; every tenth record reuses one of ten shared vectors to
    // force exact similarity ties resolved by seq.
    let shared: Vec<EmbeddingVector> = (0..10).map(|_| random_unit_vector(&mut rng, 384)).collect();
    for i in 0..1_000 {
        let embedding = if i % 10 == 0 {
            shared[(i / 10) % 10].clone()
        } else {
            random_unit_vector(&mut rng, 384)
        };
        repo.insert(
            format!("q{i}"),
            dummy_strategy(i),
            ConfidenceScore::new(0.5),
            embedding,
        )
        .unwrap();
    }

    let mut probes: Vec<EmbeddingVector> =
        (0..50).map(|_| random_unit_vector(&mut rng, 384)).collect();
    // Probing with a duplicated stored vector guarantees tie groups rank
    // at the top.
    probes.extend(shared.iter().cloned());

    for k in [1usize, 2, 10] {
        for probe in &probes {
            let got: Vec<(u64, u64)> = repo
                .top_k(probe, k)
                .entries
                .iter()
                .map(|e| (e.similarity.to_bits(), e.record.seq))
                .collect();
            assert_eq!(got, oracle_top_k(&repo, probe, k), "k={k}");
        }
    }
    println!("PASS criterion 8: retrieval equals the full-sort oracle (1,000 records, k in {{1, 2, 10}}, tie probes included)");
}

#[test]
fn criterion_09_persistence_round_trip() {
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut repo = StrategyRepo::new(384);
    for i in 0..500 {
        repo.insert(
            format!("stored query {i}"),
            dummy_strategy(i),
            ConfidenceScore::new(rng.gen()),
            random_unit_vector(&mut rng, 384),
        )
        .unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("repo.jsonl");
    assert_eq!(repo.save(&path).unwrap(), 500);
    let loaded = StrategyRepo::load(&path).unwrap();

    for _ in 0..100 {
        let probe = random_unit_vector(&mut rng, 384);
        let a: Vec<(u64, u64)> = repo
            .top_k(&probe, 5)
            .entries
            .iter()
            .map(|e| (e.similarity.to_bits(), e.record.seq))
            .collect();
        let b: Vec<(u64, u64)> = loaded
            .top_k(&probe, 5)
            .entries
            .iter()
            .map(|e| (e.similarity.to_bits(), e.record.seq))
            .collect();
        assert_eq!(a, b, "round-trip changed a retrieval result");
    }
    println!("PASS criterion 9: persistence round-trip is bit-identical (500 records, 100 probes)");
}

#[test]
fn criterion_10_metric_fixtures() {
    let fixture = StreamCounters {
        total: 10,
        uncovered: 1,
        errored: 0,
        weak_calls: 10,
        strong_calls: 0,
        weak_correct_accepted: 3,
        strong_correct_accepted: 4,
        weak_correct_total: 3,
        tiers: vec![
            TierTally {
                backend: "weak".into(),
                engagements: 10,
                tokens_in: 0,
                tokens_out: 0,
            },
            TierTally {
                backend: "strong".into(),
                engagements: 0,
                tokens_in: 0,
                tokens_out: 0,
            },
        ],
    };
    let report = compute_metrics(&fixture);
    assert_eq!(report.pipeline_accuracy, Some(7.0 / 9.0));
    assert_eq!(report.coverage_rate, Some(0.9));
    assert_eq!(report.strong_call_rate, Some(0.0));
    assert_eq!(render_metric(report.pipeline_accuracy), "0.7778");
    assert_eq!(render_metric(report.coverage_rate), "0.9000");

    let all_uncovered = StreamCounters {
        uncovered: 10,
        ..fixture.clone()
    };
    assert_eq!(compute_metrics(&all_uncovered).pipeline_accuracy, None);

    // compare_runs against hand-computed values.
    let pricing = common::scenario_pricing();
    let mut ours = fixture.clone();
    ours.tiers[0].tokens_in = 70;
    ours.strong_calls = 1;
    let mut baseline = fixture.clone();
    baseline.tiers[0].tokens_in = 100;
    baseline.strong_calls = 4;
    let cmp = compare_runs((&ours, &pricing), (&baseline, &pricing)).unwrap();
    assert_eq!(cmp.token_reduction, Some(0.30));
    assert_eq!(cmp.strong_call_reduction, Some(0.75));
    let same = compare_runs((&ours, &pricing), (&ours, &pricing)).unwrap();
    assert_eq!(same.token_reduction, Some(0.0));
    assert_eq!(same.cost_reduction, Some(0.0));
    assert_eq!(same.strong_call_reduction, Some(0.0));
    baseline.strong_calls = 0;
    let no_calls = compare_runs((&ours, &pricing), (&baseline, &pricing)).unwrap();
    assert_eq!(no_calls.strong_call_reduction, None);

    println!("PASS criterion 10: metric fixtures reproduce the hand-evaluated values exactly");
}

#[test]
fn criterion_11_retrieval_latency_sanity() {
    let mut rng = ChaCha12Rng::seed_from_u64(1111);
    let mut repo = StrategyRepo::new(384);
    for i in 0..100_000 {
        repo.insert(
            format!("q{i}"),
            Strategy {
                question_text: String::new(),
                strategy_text: "s".into(),
                answer_text: "a".into(),
            },
            ConfidenceScore::new(0.5),
            random_unit_vector(&mut rng, 384),
        )
        .unwrap();
    }
    let mut times: Vec<f64> = (0..21)
        .map(|_| {
            let probe = random_unit_vector(&mut rng, 384);
            let start = Instant::now();
            let result = repo.top_k(&probe, 2);
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            assert_eq!(result.entries.len(), 2);
            elapsed
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    if median <= 50.0 {
        println!(
            "PASS criterion 11: exact top-2 over 100,000 stored embeddings, median {median:.1} ms <= 50 ms"
        );
    } else {
        // Soft criterion: a slow machine downgrades to a warning.
        eprintln!(
            "WARNING criterion 11: median retrieval {median:.1} ms exceeds the 50 ms target (soft criterion, not a failure)"
        );
        println!("PASS criterion 11: completed with a latency warning ({median:.1} ms median)");
    }
}

#[test]
fn criterion_12_end_to_end_cli_determinism() {
    let exe = env!("CARGO_BIN_EXE_cascade");
    let dir = tempfile::tempdir().unwrap();
    let config_path = common::write_scenario_fixture(dir.path());

    let run_all = || {
        let run = |args: &[&str]| {
            let output = std::process::Command::new(exe)
                .args(args)
                .current_dir(dir.path())
                .output()
                .expect("spawn cascade binary");
            assert!(
                output.status.success(),
                "cascade {:?} exited with {:?}\nstdout: {}\nstderr: {}",
                args,
                output.status.code(),
                String::from_utf8_lossy(&output.stdout),
                String::from_utf8_lossy(&output.stderr)
            );
        };
        let config = config_path.to_str().unwrap();
        run(&["calibrate", "--config", config]);
        run(&["run", "--config", config, "--mode", "inter_cascade"]);
        run(&["run", "--config", config, "--mode", "baseline"]);
        run(&["run", "--config", config, "--mode", "random_strategies"]);
        run(&[
            "report",
            "--ours",
            "out/run_inter_cascade.jsonl",
            "--baseline",
            "out/run_baseline.jsonl",
            "--output",
            "out/comparison.jsonl",
        ]);
        run(&["simulate", "--config", config]);

        let mut snapshot = std::collections::BTreeMap::new();
        for entry in std::fs::read_dir(dir.path().join("out")).unwrap() {
            let path = entry.unwrap().path();
            snapshot.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            );
        }
        snapshot
    };

    let first = run_all();
    assert!(first.contains_key("calibration.jsonl"));
    assert!(first.contains_key("run_inter_cascade.jsonl"));
    assert!(first.contains_key("run_baseline.jsonl"));
    assert!(first.contains_key("run_random_strategies.jsonl"));
    assert!(first.contains_key("comparison.jsonl"));
    assert!(first.contains_key("simulate.jsonl"));
    assert!(first.contains_key("repo.jsonl"));

    let second = run_all();
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &first {
        assert_eq!(
            bytes,
            second.get(name).unwrap(),
            "output file {name} differs between identical invocations"
        );
    }
    println!(
        "PASS criterion 12: end-to-end CLI (calibrate, three run modes, report, simulate) with byte-identical reruns across {} output files",
        first.len()
    );
}
