use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use cifkit_core::io::{load_simulation_config, parse_csv, parse_simulation_config};
use cifkit_core::pipeline::{parse_profile, validate_dataset, with_threads};
use cifkit_core::{run_analysis, run_simulation, AnalysisRequest, BandSettings, CsvOptions, Method, TiePolicy};

#[derive(Parser)]
#[command(name = "cifkit", version, about = "Cumulative incidence under the cause-specific Cox model")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate CIF curves, optionally with bootstrap bands.
    Fit(FitArgs),
    /// Run Monte Carlo scenarios from a config file or a built-in grid.
    Simulate(SimulateArgs),
    /// Fit a dataset and check the estimator invariants on it.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Survival CSV with `time`, `event` and covariate columns.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Covariate columns in model order (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,

    /// Column holding subject weights.
    #[arg(long)]
    weight_column: Option<String>,

    /// Covariate profile `name=value,...`; repeat for several.
    #[arg(long = "z")]
    z: Vec<String>,

    /// How identical event times are handled.
    #[arg(long)]
    tie_policy: Option<TiePolicy>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,

    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Estimators to run, e.g. `1,3`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,

    /// Bootstrap replications for confidence bands; 0 or absent disables bands.
    #[arg(long = "band-B")]
    band_b: Option<usize>,

    /// Band confidence level.
    #[arg(long)]
    level: Option<f64>,

    /// Bootstrap RNG seed (default 1).
    #[arg(long)]
    seed: Option<u64>,

    /// Display names for causes 1, 2, ...
    #[arg(long, value_delimiter = ',')]
    cause_labels: Option<Vec<String>>,

    /// Also render SVG plots.
    #[arg(long)]
    svg: bool,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config (TOML).
    #[arg(long, conflicts_with = "grid")]
    config: Option<PathBuf>,

    /// Built-in grid: `paper-grid` or `normal-grid`.
    #[arg(long)]
    grid: Option<String>,

    /// Override the number of Monte Carlo replications.
    #[arg(long)]
    replications: Option<usize>,

    /// Override bootstrap draws per replication (0 disables bands).
    #[arg(long = "band-B")]
    band_b: Option<usize>,

    /// Base seed for every scenario, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitFile {
    input: Option<PathBuf>,
    covariates: Option<Vec<String>>,
    weight_column: Option<String>,
    #[serde(default)]
    z: Vec<String>,
    methods: Option<Vec<u8>>,
    band_b: Option<usize>,
    level: Option<f64>,
    seed: Option<u64>,
    tie_policy: Option<String>,
    cause_labels: Option<Vec<String>>,
    svg: Option<bool>,
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let threads = cli.threads;
    let outcome = with_threads(threads, move || match cli.command {
        Command::Fit(args) => fit(args),
        Command::Simulate(args) => simulate(args),
        Command::Validate(args) => validate(args),
    });
    match outcome.map_err(anyhow::Error::from).and_then(|r| r) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn fit(args: FitArgs) -> Result<ExitCode> {
    let file: FitFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => FitFile::default(),
    };
    let base = args.config.as_deref().and_then(Path::parent).unwrap_or(Path::new(""));
    let input = match (args.data.input, file.input) {
        (Some(p), _) => p,
        (None, Some(p)) => base.join(p),
        (None, None) => bail!("--input is required"),
    };
    let out = match (args.out, file.out) {
        (Some(p), _) => p,
        (None, Some(p)) => base.join(p),
        (None, None) => bail!("--out is required"),
    };
    let methods = match (args.methods, file.methods) {
        (Some(m), _) => m,
        (None, Some(nums)) => nums
            .iter()
            .map(|n| n.to_string().parse::<Method>())
            .collect::<Result<_, _>>()?,
        (None, None) => Method::ALL.to_vec(),
    };
    let tie_policy = match (args.data.tie_policy, file.tie_policy) {
        (Some(p), _) => p,
        (None, Some(s)) => s.parse()?,
        (None, None) => TiePolicy::default(),
    };
    let band_b = args.band_b.or(file.band_b).unwrap_or(0);
    let level = args.level.or(file.level).unwrap_or(0.95);
    let profiles = if args.data.z.is_empty() { file.z } else { args.data.z };

    let request = AnalysisRequest {
        input,
        csv: CsvOptions {
            covariates: args.data.covariates.or(file.covariates),
            weight_column: args.data.weight_column.or(file.weight_column),
            tie_policy,
        },
        cause_labels: args.cause_labels.or(file.cause_labels).unwrap_or_default(),
        profiles,
        methods,
        band: (band_b > 0).then_some(BandSettings {
            replications: band_b,
            level,
        }),
        seed: args.seed.or(file.seed).unwrap_or(1),
        output_dir: out,
        svg: args.svg || file.svg.unwrap_or(false),
    };
    let output = run_analysis(&request)?;
    for fit in output.model.fits() {
        println!(
            "cause {}: beta = {:?} ({}, {} iterations)",
            fit.cause, fit.beta, fit.status, fit.iterations
        );
    }
    for &(method, k, total) in &output.totals_at_last_event {
        println!(
            "method {method}, {}: total CIF at last event = {total:.6}",
            output.profiles[k].label
        );
    }
    println!("wrote {} file(s) to {}", output.files.len(), request.output_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut config = match (&args.config, &args.grid) {
        (Some(path), _) => load_simulation_config(path)?,
        (None, Some(grid)) => parse_simulation_config(&format!("grid = {grid:?}\n"))?,
        (None, None) => bail!("give --config FILE or --grid paper-grid|normal-grid"),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    for s in &mut config.scenarios {
        if let Some(seed) = args.seed {
            s.seed = seed;
        }
        if let Some(r) = args.replications {
            s.replications = r;
        }
        if let Some(b) = args.band_b {
            s.bootstrap_b = b;
        }
        s.validate()?;
    }
    let output = run_simulation(&config, &args.out)?;
    for r in &output.results {
        println!(
            "scenario {}: {} of {} replications completed",
            r.config.id, r.completed, r.config.replications
        );
    }
    println!("wrote {} file(s) to {}", output.files.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn validate(args: ValidateArgs) -> Result<ExitCode> {
    let Some(input) = args.data.input else {
        bail!("--input is required");
    };
    let parsed = parse_csv(
        &input,
        &CsvOptions {
            covariates: args.data.covariates,
            weight_column: args.data.weight_column,
            tie_policy: args.data.tie_policy.unwrap_or_default(),
        },
    )?;
    let mut profiles: Vec<Vec<f64>> = args
        .data
        .z
        .iter()
        .map(|s| parse_profile(s, &parsed.covariate_names).map(|p| p.values))
        .collect::<Result<_, _>>()?;
    if profiles.is_empty() {
        profiles.push(vec![0.0; parsed.covariate_names.len()]);
    }
    let checks = validate_dataset(&parsed.data, &profiles)?;
    let mut failed = 0;
    for c in &checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{mark} {}", c.name);
        } else {
            println!("{mark} {}: {}", c.name, c.detail);
        }
        failed += usize::from(!c.passed);
    }
    println!("{} check(s), {failed} failed", checks.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
