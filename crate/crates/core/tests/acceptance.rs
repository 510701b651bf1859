//! Acceptance criteria. Each test prints one `criterion N ... PASS|FAIL`
//! line (visible with `--nocapture`) and fails when its criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use cifkit_core::cox::{fit_cause_specific, CoxOptions, FitStatus};
use cifkit_core::pipeline::with_threads;
use cifkit_core::sim::{
    calibrate_sigmas, run_scenario, sample_dataset, CauseHazard, CompetingRisksLaw, ScenarioConfig, ShapeKind,
};
use cifkit_core::{
    run_analysis, write_csv, AnalysisRequest, BandSettings, CifModel, CoxFit, CsvOptions, Method, SurvivalDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn verdict(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration) {
    let mark = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {name}: {mark} ({detail}; {:.2}s)", elapsed.as_secs_f64());
    assert!(pass, "criterion {id} {name} failed: {detail}");
}

#[test]
fn criterion_01_end_of_study_total_is_one() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(10..=100);
        let d = rng.random_range(1..=3);
        let betas = random_betas(&mut rng, 2, d, 1.5);
        let data = random_dataset(&mut rng, n, &betas, 0.0);
        let fits = (1..=2)
            .map(|j| {
                let beta = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                CoxFit::fixed(j, beta)
            })
            .collect();
        let model = CifModel::new(&data, fits).unwrap();
        let last = *model.event_times().last().unwrap();
        for _ in 0..5 {
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let total: f64 = model
                .cif(Method::M3, &z)
                .unwrap()
                .iter()
                .map(|e| e.curve.eval(last))
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "Method 3 total CIF at last event",
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!("max |F(T_K) - 1| = {worst:.2e} over 500 profiles"),
        elapsed,
    );
}

#[test]
fn criterion_02_null_model_matches_aalen_johansen() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(5..=120);
        let j = rng.random_range(1..=3);
        let d = rng.random_range(1..=2);
        let betas = random_betas(&mut rng, j, d, 1.0);
        let censor = rng.random_range(0.0..1.0);
        let data = random_dataset(&mut rng, n, &betas, censor);
        if data.event_count(1) + data.event_count(2) + data.event_count(3) == 0 {
            continue;
        }
        let fits = (1..=j as u32).map(|c| CoxFit::fixed(c, vec![0.0; d])).collect();
        let model = CifModel::new(&data, fits).unwrap();
        let (times, aj) = aalen_johansen(&data);
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for method in [Method::M2, Method::M3] {
            for (c, est) in model.cif(method, &z).unwrap().iter().enumerate() {
                for (k, &t) in times.iter().enumerate() {
                    worst = worst.max((est.curve.eval(t) - aj[c][k]).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "Aalen-Johansen oracle at beta = 0",
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("max abs diff {worst:.2e}"),
        elapsed,
    );
}

#[test]
fn criterion_03_induction_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=50);
        let c: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..1.5)).collect();
        let mut prefix = 1.0;
        let mut sum = 0.0;
        for &ck in &c {
            sum += prefix * ck;
            prefix *= 1.0 - ck;
        }
        let product: f64 = c.iter().map(|ck| 1.0 - ck).product();
        worst = worst.max(((1.0 - sum) - product).abs());
    }
    // the same identity through the library: J = 1, Method 3 gives 1 − F = S
    let mut lib_worst: f64 = 0.0;
    for _ in 0..50 {
        let betas = random_betas(&mut rng, 1, 1, 1.0);
        let data = random_dataset(&mut rng, 40, &betas, 0.3);
        let model = CifModel::new(&data, vec![CoxFit::fixed(1, vec![0.7])]).unwrap();
        let f = &model.cif(Method::M3, &[0.2]).unwrap()[0].curve;
        let s = model.survival(Method::M3, &[0.2]).unwrap();
        for &t in model.event_times() {
            lib_worst = lib_worst.max((1.0 - f.eval(t) - s.eval(t)).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        3,
        "induction identity",
        worst <= 1e-12 && lib_worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("1000 vectors max err {worst:.2e}; Method 3 single-cause max err {lib_worst:.2e}"),
        elapsed,
    );
}

#[test]
fn criterion_04_newton_matches_grid_search() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let (mut accepted, mut no_mle) = (0, 0);
    while accepted < 50 {
        let n = rng.random_range(6..=15);
        let betas = random_betas(&mut rng, 2, 1, 1.0);
        let data = random_dataset(&mut rng, n, &betas, 0.3);
        if data.event_count(1) == 0 {
            continue;
        }
        let fit = fit_cause_specific(&data, 1, None, &CoxOptions::default()).unwrap();
        let grid = grid_argmax(|b| naive_partial_loglik(&data, 1, &[b]), -10.0, 10.0, 1e-3);
        // Monotone likelihood: the maximiser is at infinity and there is no
        // finite argmax to compare against. Such draws are replaced.
        if fit.status != FitStatus::Converged || grid.abs() >= 9.999 {
            no_mle += 1;
            assert!(fit.status != FitStatus::Converged || fit.beta[0].abs() > 9.0);
            continue;
        }
        worst = worst.max((fit.beta[0] - grid).abs());
        accepted += 1;
    }
    let elapsed = start.elapsed();
    verdict(
        4,
        "Newton-Raphson vs grid search",
        worst <= 1e-3 && elapsed < Duration::from_secs(30),
        format!("max |beta_NR - beta_grid| = {worst:.2e} on 50 datasets ({no_mle} without finite MLE replaced)"),
        elapsed,
    );
}

#[test]
fn criterion_05_scenario1_bias() {
    let start = Instant::now();
    let mut cfg = ScenarioConfig::new(1, ShapeKind::Increasing, 75, 3.0, -0.4, 0.0);
    cfg.replications = 1000;
    cfg.bootstrap_b = 0;
    let result = run_scenario(&cfg).unwrap();
    let m1 = result.metric(Method::M1, 1).unwrap().max_bias;
    let m3 = result.metric(Method::M3, 1).unwrap().max_bias;
    let pass = (m1 - 0.0129).abs() <= 0.006 && (m3 - 0.0029).abs() <= 0.004;
    verdict(
        5,
        "scenario 1 max bias, cause A",
        pass,
        format!(
            "Method 1 {m1:.4} (target 0.0129 +/- 0.006), Method 3 {m3:.4} (target 0.0029 +/- 0.004), R = {}",
            result.completed
        ),
        start.elapsed(),
    );
}

#[test]
fn criterion_06_scenario3_coverage() {
    let start = Instant::now();
    let mut cfg = ScenarioConfig::new(3, ShapeKind::Increasing, 75, 3.0, 0.0, 0.0);
    cfg.replications = 500;
    cfg.bootstrap_b = 500;
    let result = run_scenario(&cfg).unwrap();
    let cov = |m| result.metric(m, 1).unwrap().coverage.unwrap();
    let (c1, c2, c3) = (cov(Method::M1), cov(Method::M2), cov(Method::M3));
    let pass = c3 >= 0.95 && (0.90..=0.96).contains(&c1) && (0.90..=0.96).contains(&c2);
    verdict(
        6,
        "scenario 3 band coverage, cause A",
        pass,
        format!(
            "Method 1 {c1:.3}, Method 2 {c2:.3} (need [0.90, 0.96]); Method 3 {c3:.3} (need >= 0.95); \
             completed {} of 500, {} refits redrawn",
            result.completed, result.bootstrap_redraws
        ),
        start.elapsed(),
    );
}

#[test]
fn criterion_07_scenario5_total_cif_overshoot() {
    let start = Instant::now();
    let mut cfg = ScenarioConfig::new(5, ShapeKind::Increasing, 75, 3.0, 0.4, 0.0);
    cfg.replications = 1000;
    cfg.bootstrap_b = 0;
    let result = run_scenario(&cfg).unwrap();
    // index 2 of the probabilities is the median
    let m1 = result.quantiles(Method::M1).unwrap().values[2];
    let m2 = result.quantiles(Method::M2).unwrap().values[2];
    let pass = (1.02..=1.04).contains(&m1) && (0.999..=1.002).contains(&m2);
    verdict(
        7,
        "scenario 5 median total CIF at last event",
        pass,
        format!("Method 1 {m1:.4} (need [1.02, 1.04]), Method 2 {m2:.4} (need [0.999, 1.002])"),
        start.elapsed(),
    );
}

#[test]
fn criterion_08_true_cif_conservation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for kind in ShapeKind::ALL {
        let (sa, sb) = calibrate_sigmas(kind, (0.65, 0.35), 5.0, 0.99).unwrap();
        for rr in [3.0f64, 6.0] {
            let law = CompetingRisksLaw::new(vec![
                CauseHazard {
                    shape: kind.shape(sa),
                    beta: vec![rr.ln()],
                },
                CauseHazard {
                    shape: kind.shape(sb),
                    beta: vec![rr.ln()],
                },
            ])
            .unwrap();
            for _ in 0..40 {
                let t = rng.random_range(0.0..10.0);
                let z = [rng.random_range(-2.0..2.0)];
                let f = law.cif(t, &z);
                worst = worst.max((f[0] + f[1] + law.survival(t, &z) - 1.0).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        8,
        "true CIF conservation",
        worst <= 1e-8 && elapsed < Duration::from_secs(5),
        format!("max |sum F + S - 1| = {worst:.2e} over 240 (t, z) points"),
        elapsed,
    );
}

#[test]
fn criterion_09_methods_agree_at_scale() {
    let start = Instant::now();
    let cfg = ScenarioConfig::new(1, ShapeKind::Increasing, 2000, 3.0, -0.4, 0.0);
    let data = sample_dataset(&cfg, 9).unwrap();
    let model = CifModel::fit(&data, &CoxOptions::default()).unwrap();
    let times = model.event_times();
    let median = times[(times.len() - 1) / 2];
    let curves: Vec<_> = Method::ALL.iter().map(|&m| model.cif(m, &[0.0]).unwrap()).collect();
    let mut worst: f64 = 0.0;
    for a in 0..3 {
        for b in a + 1..3 {
            for c in 0..2 {
                for &t in times.iter().filter(|&&t| t <= median) {
                    worst = worst.max((curves[a][c].curve.eval(t) - curves[b][c].curve.eval(t)).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        9,
        "method agreement, n = 2000",
        worst <= 0.01 && elapsed < Duration::from_secs(30),
        format!("max pairwise difference up to the median event time {worst:.4}"),
        elapsed,
    );
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();

    let mut tiny = ScenarioConfig::new(3, ShapeKind::Decreasing, 75, 6.0, 0.0, 0.5);
    tiny.replications = 1;
    tiny.bootstrap_b = 1;
    let tiny_same = run_scenario(&tiny).unwrap() == run_scenario(&tiny).unwrap();

    let mut cell = ScenarioConfig::new(1, ShapeKind::UpAndDown, 60, 3.0, 0.4, 0.5);
    cell.replications = 12;
    cell.bootstrap_b = 40;
    let serial = with_threads(Some(1), || run_scenario(&cell).unwrap()).unwrap();
    let parallel = with_threads(Some(4), || run_scenario(&cell).unwrap()).unwrap();
    let sim_same = serial == parallel;

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    let data: SurvivalDataset = sample_dataset(&cell, 10).unwrap();
    write_csv(&data, &["x".to_string()], fs::File::create(&input).unwrap()).unwrap();
    let request = |out: &str| AnalysisRequest {
        input: input.clone(),
        csv: CsvOptions::default(),
        cause_labels: vec![],
        profiles: vec!["x=0.25".into(), "x=-0.25".into()],
        methods: Method::ALL.to_vec(),
        band: Some(BandSettings {
            replications: 200,
            level: 0.95,
        }),
        seed: 10,
        output_dir: dir.path().join(out),
        svg: true,
    };
    with_threads(Some(1), || run_analysis(&request("a")).unwrap()).unwrap();
    with_threads(Some(3), || run_analysis(&request("b")).unwrap()).unwrap();
    with_threads(Some(3), || run_analysis(&request("c")).unwrap()).unwrap();
    let a = read_tree(&dir.path().join("a"));
    let fit_same = a == read_tree(&dir.path().join("b")) && a == read_tree(&dir.path().join("c"));

    verdict(
        10,
        "determinism across runs and thread counts",
        tiny_same && sim_same && fit_same,
        format!(
            "R=1,B=1 repeat identical: {tiny_same}; simulation 1 vs 4 threads identical: {sim_same}; \
             fit outputs byte-identical over {} files: {fit_same}",
            a.len()
        ),
        start.elapsed(),
    );
}
