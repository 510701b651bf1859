//! End-to-end analysis and simulation runs that write their results to a
//! directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::bootstrap::{bootstrap_bands, BandConfig, BandSet};
use crate::cox::{CoxOptions, FitStatus};
use crate::data::{EventIndex, SurvivalDataset};
use crate::error::{Error, Result};
use crate::estimate::{total_cif, CauseSel, CifModel, Method};
use crate::io::report::{self, CurveMeta, PlotSeries};
use crate::io::{parse_csv, CsvOptions, SimulationConfig};
use crate::sim::{run_scenario, ScenarioResult, PILOT_DRAWS};

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSettings {
    pub replications: usize,
    pub level: f64,
}

#[derive(Debug, Clone)]
pub struct AnalysisRequest {
    pub input: PathBuf,
    pub csv: CsvOptions,
    /// Display names for causes 1, 2, ...
    pub cause_labels: Vec<String>,
    /// `name=value,...` specs; empty means the all-zero profile.
    pub profiles: Vec<String>,
    pub methods: Vec<Method>,
    pub band: Option<BandSettings>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub label: String,
    pub values: Vec<f64>,
}

/// Parses `name=value,...`; every covariate must be given exactly once.
pub fn parse_profile(spec: &str, names: &[String]) -> Result<Profile> {
    let mut values = vec![None; names.len()];
    for part in spec.split([',', ';']).map(str::trim).filter(|p| !p.is_empty()) {
        let (name, raw) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("profile entry `{part}` is not name=value")))?;
        let (name, raw) = (name.trim(), raw.trim());
        let slot = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("profile names unknown covariate `{name}`")))?;
        let v: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::InvalidInput(format!("profile value `{raw}` for `{name}` is not a number")))?;
        if values[slot].replace(v).is_some() {
            return Err(Error::InvalidInput(format!("covariate `{name}` given twice in profile")));
        }
    }
    let missing: Vec<&str> = names
        .iter()
        .zip(&values)
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| n.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "profile `{spec}` lacks covariate(s) {}",
            missing.join(", ")
        )));
    }
    let values: Vec<f64> = values.into_iter().map(Option::unwrap).collect();
    Ok(Profile {
        label: profile_label(names, &values),
        values,
    })
}

fn profile_label(names: &[String], values: &[f64]) -> String {
    names
        .iter()
        .zip(values)
        .map(|(n, v)| format!("{n}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn resolve_profiles(specs: &[String], names: &[String]) -> Result<Vec<Profile>> {
    if specs.is_empty() {
        let values = vec![0.0; names.len()];
        return Ok(vec![Profile {
            label: profile_label(names, &values),
            values,
        }]);
    }
    specs.iter().map(|s| parse_profile(s, names)).collect()
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub model: CifModel,
    pub profiles: Vec<Profile>,
    /// F̂•(T₍ₖ₎ | z) by (method, profile index).
    pub totals_at_last_event: Vec<(Method, usize, f64)>,
    pub bands: Option<BandSet>,
    pub files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn cause_label(labels: &[String], cause: u32) -> String {
    labels
        .get(cause as usize - 1)
        .cloned()
        .unwrap_or_else(|| format!("cause {cause}"))
}

pub fn run_analysis(request: &AnalysisRequest) -> Result<AnalysisOutput> {
    if request.methods.is_empty() {
        return Err(Error::InvalidInput("no methods selected".into()));
    }
    let parsed = parse_csv(&request.input, &request.csv)?;
    let data = &parsed.data;
    let profiles = resolve_profiles(&request.profiles, &parsed.covariate_names)?;
    let cox = CoxOptions::default();
    let model = CifModel::fit(data, &cox)?;
    let last = EventIndex::build(data)?
        .last_time()
        .ok_or_else(|| Error::InvalidInput("dataset has no events".into()))?;

    let bands = match request.band {
        Some(b) => {
            let config = BandConfig {
                replications: b.replications,
                level: b.level,
                seed: request.seed,
                methods: request.methods.clone(),
                cox,
            };
            let zs: Vec<Vec<f64>> = profiles.iter().map(|p| p.values.clone()).collect();
            Some(bootstrap_bands(data, &model, &zs, &config)?)
        }
        None => None,
    };

    let out = &request.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Vec::new();
    let mut totals = Vec::new();
    for (k, profile) in profiles.iter().enumerate() {
        for &method in &request.methods {
            let estimates = model.cif(method, &profile.values)?;
            let total = total_cif(&estimates)?;
            totals.push((method, k, total.curve.eval(last)));
            let mut series = Vec::new();
            for est in estimates.iter().chain(std::iter::once(&total)) {
                let (cause, label, half_width) = match est.cause {
                    CauseSel::Cause(j) => {
                        let hw = bands
                            .as_ref()
                            .and_then(|b| b.get(&profile.values, method, j))
                            .map(|b| b.half_width);
                        (j.to_string(), cause_label(&request.cause_labels, j), hw)
                    }
                    CauseSel::Total => ("total".to_string(), "all causes".to_string(), None),
                };
                let stem = match est.cause {
                    CauseSel::Cause(j) => format!("cause{j}"),
                    CauseSel::Total => "total".to_string(),
                };
                let path = out.join(format!("cif_m{}_{}_z{}.csv", method, stem, k + 1));
                let meta = CurveMeta {
                    method,
                    cause,
                    cause_label: label.clone(),
                    profile: profile.label.clone(),
                    seed: request.seed,
                };
                report::write_curve_csv(create(&path)?, &meta, &est.curve, half_width)?;
                files.push(path);
                series.push(PlotSeries {
                    label,
                    curve: est.curve.clone(),
                    half_width,
                });
            }
            if request.svg {
                let path = out.join(format!("plot_m{}_z{}.svg", method, k + 1));
                let title = format!("Method {method}, {}", profile.label);
                fs::write(&path, report::render_svg(&title, &series)).map_err(|e| Error::io(&path, e))?;
                files.push(path);
            }
        }
    }

    let summary = out.join("summary.csv");
    write_summary(&summary, request, &parsed.covariate_names, &model, &profiles, &totals)?;
    files.push(summary);

    let manifest = out.join("manifest.txt");
    let mut entries = vec![
        ("input".to_string(), request.input.display().to_string()),
        ("subjects".into(), data.len().to_string()),
        ("causes".into(), data.num_causes().to_string()),
        ("censored".into(), data.censored_count().to_string()),
        ("covariates".into(), parsed.covariate_names.join(",")),
        ("tie_policy".into(), request.csv.tie_policy.to_string()),
        ("tie_groups_resolved".into(), parsed.ties.tied_groups.to_string()),
        (
            "methods".into(),
            request.methods.iter().map(Method::to_string).collect::<Vec<_>>().join(","),
        ),
        ("seed".into(), request.seed.to_string()),
        ("last_event_time".into(), last.to_string()),
    ];
    for j in 1..=data.num_causes() {
        entries.push((format!("cause.{j}.label"), cause_label(&request.cause_labels, j)));
        entries.push((format!("cause.{j}.events"), data.event_count(j).to_string()));
    }
    for (k, p) in profiles.iter().enumerate() {
        entries.push((format!("profile.{}", k + 1), p.label.clone()));
    }
    match (&request.band, &bands) {
        (Some(b), Some(set)) => {
            entries.push(("band.replications".into(), b.replications.to_string()));
            entries.push(("band.level".into(), b.level.to_string()));
            entries.push(("band.redrawn_refits".into(), set.failed_refits.to_string()));
        }
        _ => entries.push(("band".into(), "off".into())),
    }
    report::write_manifest(create(&manifest)?, &entries)?;
    files.push(manifest);

    Ok(AnalysisOutput {
        model,
        profiles,
        totals_at_last_event: totals,
        bands,
        files,
    })
}

fn write_summary(
    path: &Path,
    request: &AnalysisRequest,
    names: &[String],
    model: &CifModel,
    profiles: &[Profile],
    totals: &[(Method, usize, f64)],
) -> Result<()> {
    let mut out = create(path)?;
    report::write_header(
        &mut out,
        &[
            ("table", "summary".into()),
            (
                "methods",
                request.methods.iter().map(Method::to_string).collect::<Vec<_>>().join(","),
            ),
            ("seed", request.seed.to_string()),
        ],
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "cause", "method", "z", "term", "value", "status", "iterations"])?;
    for fit in model.fits() {
        for (name, beta) in names.iter().zip(&fit.beta) {
            w.write_record([
                "coefficient".to_string(),
                fit.cause.to_string(),
                String::new(),
                String::new(),
                name.clone(),
                format!("{beta:.8}"),
                fit.status.to_string(),
                fit.iterations.to_string(),
            ])?;
        }
    }
    for &(method, k, value) in totals {
        w.write_record([
            "total_cif_at_last_event".to_string(),
            String::new(),
            method.to_string(),
            profiles[k].label.clone(),
            String::new(),
            format!("{value:.6}"),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub results: Vec<ScenarioResult>,
    pub files: Vec<PathBuf>,
}

/// Runs every scenario in order and writes `results.csv`, `quantiles.csv`
/// and `manifest.txt` to `output_dir`.
pub fn run_simulation(config: &SimulationConfig, output_dir: &Path) -> Result<SimulationOutput> {
    let mut results = Vec::with_capacity(config.scenarios.len());
    for scenario in &config.scenarios {
        log::info!(
            "scenario {}: {} n={} RR={} z={} censoring={} R={} B={}",
            scenario.id,
            scenario.shape,
            scenario.n,
            scenario.relative_risk,
            scenario.z_eval,
            scenario.censor_rate,
            scenario.replications,
            scenario.bootstrap_b
        );
        results.push(run_scenario(scenario)?);
    }
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let results_path = output_dir.join("results.csv");
    report::write_results_csv(create(&results_path)?, &results, config.seed)?;
    let quantiles_path = output_dir.join("quantiles.csv");
    report::write_quantiles_csv(create(&quantiles_path)?, &results, config.seed)?;

    let mut entries = vec![
        ("seed".to_string(), config.seed.to_string()),
        ("scenarios".into(), results.len().to_string()),
        ("censoring_law".into(), "uniform(0, c*)".into()),
        ("censoring_pilot_draws".into(), PILOT_DRAWS.to_string()),
        ("bias_grid".into(), "200 points on [0, q90]".into()),
    ];
    for r in &results {
        let c = &r.config;
        let key = |k: &str| format!("scenario.{}.{k}", c.id);
        entries.push((key("seed"), c.seed.to_string()));
        entries.push((key("sigma_a"), format!("{:.12e}", r.sigmas.0)));
        entries.push((key("sigma_b"), format!("{:.12e}", r.sigmas.1)));
        entries.push((key("calibration"), format!("F({}|0)={}", c.horizon, c.horizon_total)));
        entries.push((key("truncation"), c.truncation.to_string()));
        if let Some(b) = r.censor_bound {
            entries.push((key("censor_bound"), format!("{b:.10}")));
        }
        entries.push((key("q90"), format!("{:.10}", r.q90)));
        entries.push((key("replications"), c.replications.to_string()));
        entries.push((key("bootstrap_b"), c.bootstrap_b.to_string()));
        entries.push((key("completed"), r.completed.to_string()));
        entries.push((key("fit_failures"), r.fit_failures.to_string()));
        entries.push((key("bootstrap_failures"), r.bootstrap_failures.to_string()));
        entries.push((key("bootstrap_redraws"), r.bootstrap_redraws.to_string()));
    }
    let manifest_path = output_dir.join("manifest.txt");
    report::write_manifest(create(&manifest_path)?, &entries)?;

    Ok(SimulationOutput {
        results,
        files: vec![results_path, quantiles_path, manifest_path],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Structural checks of the fitted estimators on `data`.
pub fn validate_dataset(data: &SurvivalDataset, profiles: &[Vec<f64>]) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut push = |name: String, passed: bool, detail: String| checks.push(Check { name, passed, detail });
    let fits = crate::cox::fit_all_causes(data, &CoxOptions::default())?;
    for fit in &fits {
        push(
            format!("cox fit cause {}", fit.cause),
            fit.converged,
            format!("{} after {} iteration(s), beta {:?}", fit.status, fit.iterations, fit.beta),
        );
        if fit.status == FitStatus::Degenerate {
            log::warn!("cause {}: degenerate design, beta fixed at 0", fit.cause);
        }
    }
    if fits.iter().any(|f| !f.converged) {
        return Ok(checks);
    }
    let model = CifModel::new(data, fits)?;
    let last = model.event_times().last().copied().unwrap_or(0.0);
    for (k, z) in profiles.iter().enumerate() {
        let tag = format!("z{}", k + 1);
        for method in Method::ALL {
            let estimates = model.cif(method, z)?;
            let monotone = estimates.iter().all(|e| e.curve.is_nondecreasing());
            push(format!("{tag} method {method} monotone"), monotone, String::new());
            let total = total_cif(&estimates)?;
            let top = total.curve.final_value();
            if method != Method::M1 {
                let lo = estimates
                    .iter()
                    .flat_map(|e| e.curve.values().iter().copied())
                    .fold(0.0, f64::min);
                push(format!("{tag} method {method} nonnegative"), lo >= 0.0, String::new());
            }
            if method == Method::M3 {
                push(
                    format!("{tag} method 3 total at most 1"),
                    top <= 1.0 + 1e-12,
                    format!("{top:.12}"),
                );
            }
            if method == Method::M3 && data.last_followup_is_event() {
                let at_last = total.curve.eval(last);
                push(
                    format!("{tag} method 3 total reaches 1"),
                    (at_last - 1.0).abs() <= 1e-10,
                    format!("{at_last:.15}"),
                );
            }
        }
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["age".into(), "sex".into()]
    }

    #[test]
    fn profiles() {
        let p = parse_profile("sex=1, age=52.5", &names()).unwrap();
        assert_eq!(p.values, vec![52.5, 1.0]);
        assert_eq!(p.label, "age=52.5;sex=1");
        assert!(parse_profile("age=1", &names()).is_err());
        assert!(parse_profile("age=1,sex=0,age=2", &names()).is_err());
        assert!(parse_profile("age=x,sex=0", &names()).is_err());
        assert!(parse_profile("height=1,age=1,sex=0", &names()).is_err());
        let d = resolve_profiles(&[], &names()).unwrap();
        assert_eq!(d[0].values, vec![0.0, 0.0]);
    }

    #[test]
    fn thread_pool_runs_closure() {
        assert_eq!(with_threads(Some(2), rayon::current_num_threads).unwrap(), 2);
        assert_eq!(with_threads(None, || 5).unwrap(), 5);
    }
}
