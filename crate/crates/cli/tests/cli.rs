use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cifkit_core::sim::{sample_dataset, ScenarioConfig, ShapeKind};
use cifkit_core::write_csv;

fn cifkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cifkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Simulated two-cause data with covariate column `x`.
fn simulated_csv(dir: &Path, censor_rate: f64, n: usize) -> PathBuf {
    let config = ScenarioConfig::new(0, ShapeKind::Increasing, n, 3.0, 0.0, censor_rate);
    let data = sample_dataset(&config, 42).unwrap();
    let path = dir.join(format!("data_{n}_{censor_rate}.csv"));
    write_csv(&data, &["x".to_string()], fs::File::create(&path).unwrap()).unwrap();
    path
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn assert_same_tree(a: &Path, b: &Path) {
    let names = sorted_files(a);
    assert_eq!(names, sorted_files(b));
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn fit_writes_curves_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 0.0, 60);
    let out = dir.path().join("out");
    let o = cifkit(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--z",
        "x=0.2",
        "--z",
        "x=-0.3",
        "--band-B",
        "50",
        "--seed",
        "7",
        "--svg",
        "--cause-labels",
        "relapse,death",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names = sorted_files(&out);
    // 3 methods x 2 profiles x (2 causes + total) curves, 6 plots, summary, manifest
    assert_eq!(names.len(), 18 + 6 + 2, "{names:?}");
    let curve = fs::read_to_string(out.join("cif_m3_cause1_z2.csv")).unwrap();
    for key in ["# tool=cifkit", "# method=3", "# cause=1", "# cause_label=relapse", "# z=x=-0.3", "# seed=7"] {
        assert!(curve.contains(key), "missing {key}");
    }
    assert!(curve.contains("time,cif,lower,upper"));
    let total = fs::read_to_string(out.join("cif_m3_total_z1.csv")).unwrap();
    assert!(total.contains("time,cif\n"));

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let m3_totals: Vec<&str> = summary
        .lines()
        .filter(|l| l.starts_with("total_cif_at_last_event,,3,"))
        .collect();
    assert_eq!(m3_totals.len(), 2);
    assert!(m3_totals.iter().all(|l| l.contains(",1.000000,")), "{m3_totals:?}");
    assert!(summary.contains("coefficient,1,,,x,"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("band.replications = 50"));
    assert!(manifest.contains("cause.2.label = death"));
    assert!(stdout(&o).contains("total CIF at last event"));
}

#[test]
fn method_subset_without_bands() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 0.5, 80);
    let out = dir.path().join("out");
    let o = cifkit(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--methods",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curves: Vec<String> = sorted_files(&out).into_iter().filter(|n| n.starts_with("cif_")).collect();
    assert_eq!(curves.len(), 3);
    assert!(curves.iter().all(|n| n.starts_with("cif_m1_")));
    let text = fs::read_to_string(out.join("cif_m1_cause1_z1.csv")).unwrap();
    assert!(!text.contains("lower"));
    assert!(fs::read_to_string(out.join("manifest.txt")).unwrap().contains("band = off"));
}

#[test]
fn fit_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 0.0, 40);
    let cfg = dir.path().join("fit.toml");
    fs::write(
        &cfg,
        format!(
            "input = {:?}\nout = \"from_config\"\nmethods = [2, 3]\nz = [\"x=0.1\"]\n",
            input.file_name().unwrap().to_str().unwrap()
        ),
    )
    .unwrap();
    let o = cifkit(&["fit", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("from_config");
    assert!(out.join("cif_m2_cause2_z1.csv").exists());
    assert!(!out.join("cif_m1_cause1_z1.csv").exists());
}

#[test]
fn fit_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 0.5, 70);
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let o = cifkit(&[
            "fit",
            "--input",
            input.to_str().unwrap(),
            "--band-B",
            "100",
            "--seed",
            "11",
            "--threads",
            threads,
            "--svg",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("1", "t1");
    let b = run("4", "t4");
    let c = run("4", "t4_again");
    assert_same_tree(&a, &b);
    assert_same_tree(&b, &c);
}

#[test]
fn simulate_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(
        &cfg,
        "seed = 5\nreplications = 6\nbootstrap_b = 10\ngrid = \"paper-grid\"\nonly = [1, 2]\n\n\
         [[scenario]]\nid = 90\nshape = \"decreasing\"\nn = 40\nrelative_risk = 6\nz = 0.0\n\
         covariate_law = \"normal\"\n",
    )
    .unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let o = cifkit(&["simulate", "--config", cfg.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("1", "s1");
    let b = run("3", "s3");
    assert_same_tree(&a, &b);
    let results = fs::read_to_string(a.join("results.csv")).unwrap();
    let rows: Vec<&str> = results.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3 * 3 * 2);
    assert!(results.contains("# seed=5"));
    let quantiles = fs::read_to_string(a.join("quantiles.csv")).unwrap();
    // scenario 2 is censored and has no quantile rows
    assert_eq!(quantiles.lines().filter(|l| l.starts_with("1,") || l.starts_with("90,")).count(), 4);
    assert!(!quantiles.lines().any(|l| l.starts_with("2,")));
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("scenario.2.censor_bound = "));
    assert!(manifest.contains("scenario.1.sigma_a = "));
}

#[test]
fn simulate_reports_config_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nreplications = 2\n\n[[scenario]]\nid = 1\nshape = \"wavy\"\nn = 10\nrelative_risk = 3\nz = 0\n").unwrap();
    let o = cifkit(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("line 4") || err.contains("line 5"), "{err}");
    assert!(err.contains("wavy"), "{err}");
}

#[test]
fn input_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "time,event,x\n1,1,0\n0,2,1\n").unwrap();
    let o = cifkit(&["fit", "--input", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));

    let tied = dir.path().join("tied.csv");
    fs::write(&tied, "time,event,x\n1,1,0\n1,2,1\n2,1,0.5\n3,2,0.2\n").unwrap();
    let o = cifkit(&[
        "fit",
        "--input",
        tied.to_str().unwrap(),
        "--tie-policy",
        "reject",
        "--out",
        dir.path().join("o2").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("tied event times"), "{}", stderr(&o));
}

#[test]
fn validate_passes_on_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 0.0, 100);
    let o = cifkit(&["validate", "--input", input.to_str().unwrap(), "--z", "x=0.3"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("PASS z1 method 3 total reaches 1"));
    assert!(text.contains("0 failed"));
}
