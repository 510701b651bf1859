use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use crate::bootstrap::{bootstrap_bands, BandConfig};
use crate::cox::CoxOptions;
use crate::data::{EventIndex, SubjectRecord, SurvivalDataset};
use crate::error::{Error, Result};
use crate::estimate::{CauseSel, CifModel, Method};
use crate::sim::hazard::ShapeKind;
use crate::sim::truth::{CauseHazard, CompetingRisksLaw};
use crate::step::StepFunction;

pub const PILOT_DRAWS: usize = 200_000;
pub const TOTAL_CIF_PROBS: [f64; 5] = [0.01, 0.1, 0.5, 0.9, 0.99];
const GRID_POINTS: usize = 200;
const PILOT_STREAM: u64 = u64::MAX;
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateLaw {
    /// Uniform on (−0.5, 0.5).
    Uniform,
    /// Normal with mean 0 and variance 4.
    Normal,
}

impl CovariateLaw {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            CovariateLaw::Uniform => Uniform::new(-0.5, 0.5).expect("valid bounds").sample(rng),
            CovariateLaw::Normal => Normal::new(0.0, 2.0).expect("valid sd").sample(rng),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CovariateLaw::Uniform => "uniform",
            CovariateLaw::Normal => "normal",
        }
    }
}

impl fmt::Display for CovariateLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CovariateLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(CovariateLaw::Uniform),
            "normal" => Ok(CovariateLaw::Normal),
            other => Err(Error::InvalidInput(format!("unknown covariate law `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub id: u32,
    pub shape: ShapeKind,
    pub n: usize,
    pub relative_risk: f64,
    pub z_eval: f64,
    pub censor_rate: f64,
    pub covariate_law: CovariateLaw,
    pub final_cifs: (f64, f64),
    pub horizon: f64,
    /// F•(horizon | z = 0) targeted by the σ calibration.
    pub horizon_total: f64,
    pub truncation: f64,
    pub replications: usize,
    /// Bootstrap draws per replicate; 0 disables bands.
    pub bootstrap_b: usize,
    pub level: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(id: u32, shape: ShapeKind, n: usize, relative_risk: f64, z_eval: f64, censor_rate: f64) -> Self {
        Self {
            id,
            shape,
            n,
            relative_risk,
            z_eval,
            censor_rate,
            covariate_law: CovariateLaw::Uniform,
            final_cifs: (0.65, 0.35),
            horizon: 5.0,
            horizon_total: 0.99,
            truncation: 10.0,
            replications: 1000,
            bootstrap_b: 1000,
            level: 0.95,
            seed: DEFAULT_SEED,
        }
    }

    pub fn beta(&self) -> f64 {
        self.relative_risk.ln()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("scenario {}: {msg}", self.id)));
        if self.n < 2 {
            return bad(format!("n = {} is too small", self.n));
        }
        if !(self.relative_risk > 0.0 && self.relative_risk.is_finite()) {
            return bad(format!("relative risk {} must be positive", self.relative_risk));
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return bad(format!("censoring rate {} not in [0, 1)", self.censor_rate));
        }
        let (a, b) = self.final_cifs;
        if !(a > 0.0 && b > 0.0 && (a + b - 1.0).abs() < 1e-9) {
            return bad(format!("final CIFs ({a}, {b}) must be positive and sum to 1"));
        }
        if !(self.horizon > 0.0 && self.truncation >= self.horizon) {
            return bad("need 0 < horizon <= truncation".into());
        }
        if !(self.horizon_total > 0.0 && self.horizon_total < 1.0) {
            return bad(format!("horizon total {} not in (0, 1)", self.horizon_total));
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level {} not in (0, 1)", self.level));
        }
        if !self.z_eval.is_finite() {
            return bad("z must be finite".into());
        }
        Ok(())
    }

    pub fn is_uncensored(&self) -> bool {
        self.censor_rate == 0.0
    }
}

/// The 36 uniform-covariate cells: shape × relative risk × z × (n, censoring).
pub fn paper_grid() -> Vec<ScenarioConfig> {
    let mut out = Vec::with_capacity(36);
    let mut id = 1;
    for shape in ShapeKind::ALL {
        for rr in [3.0, 6.0] {
            for z in [-0.4, 0.0, 0.4] {
                for (n, cens) in [(75, 0.0), (150, 0.5)] {
                    out.push(ScenarioConfig::new(id, shape, n, rr, z, cens));
                    id += 1;
                }
            }
        }
    }
    out
}

/// The six normal-covariate cells (increasing shape, n = 75, uncensored).
pub fn normal_grid() -> Vec<ScenarioConfig> {
    let mut out = Vec::with_capacity(6);
    let mut id = 1;
    for rr in [3.0, 6.0] {
        for z in [-1.68, 0.0, 1.68] {
            let mut cfg = ScenarioConfig::new(id, ShapeKind::Increasing, 75, rr, z, 0.0);
            cfg.covariate_law = CovariateLaw::Normal;
            out.push(cfg);
            id += 1;
        }
    }
    out
}

/// (σ_A, σ_B) with σ_A/σ_B matching the final CIF split and F•(horizon | 0)
/// equal to `horizon_total`.
pub fn calibrate_sigmas(
    kind: ShapeKind,
    final_cifs: (f64, f64),
    horizon: f64,
    horizon_total: f64,
) -> Result<(f64, f64)> {
    let (fa, fb) = final_cifs;
    if !(fa > 0.0 && fb > 0.0 && (fa + fb - 1.0).abs() < 1e-9) {
        return Err(Error::CalibrationFailure(format!(
            "final CIFs ({fa}, {fb}) must be positive and sum to 1"
        )));
    }
    let total_at = |log_sigma: f64| {
        let s = log_sigma.exp();
        let law = law_for(kind, (fa * s, fb * s), 0.0);
        1.0 - law.survival(horizon, &[0.0])
    };
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e6f64.ln());
    let (flo, fhi) = (total_at(lo) - horizon_total, total_at(hi) - horizon_total);
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(Error::CalibrationFailure(format!(
            "no σ in [1e-6, 1e6] brackets F•({horizon}|0) = {horizon_total} for the {kind} shape"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if total_at(mid) < horizon_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = (0.5 * (lo + hi)).exp();
    Ok((fa * s, fb * s))
}

fn law_for(kind: ShapeKind, sigmas: (f64, f64), beta: f64) -> CompetingRisksLaw {
    CompetingRisksLaw::new(vec![
        CauseHazard {
            shape: kind.shape(sigmas.0),
            beta: vec![beta],
        },
        CauseHazard {
            shape: kind.shape(sigmas.1),
            beta: vec![beta],
        },
    ])
    .expect("two causes with one covariate")
}

/// A calibrated scenario: the population law plus the censoring bound.
#[derive(Debug, Clone)]
pub struct Generator {
    pub config: ScenarioConfig,
    pub law: CompetingRisksLaw,
    pub sigmas: (f64, f64),
    /// Upper limit c* of the Uniform(0, c*) censoring law.
    pub censor_bound: Option<f64>,
}

impl Generator {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let sigmas = calibrate_sigmas(config.shape, config.final_cifs, config.horizon, config.horizon_total)?;
        let law = law_for(config.shape, sigmas, config.beta());
        let mut gen = Self {
            config: config.clone(),
            law,
            sigmas,
            censor_bound: None,
        };
        if config.censor_rate > 0.0 {
            gen.censor_bound = Some(gen.calibrate_censoring()?);
        }
        Ok(gen)
    }

    /// Event time and cause for one subject with covariate `z`, conditioned
    /// on T ≤ truncation.
    pub fn draw_event<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> Result<(f64, u32)> {
        let zs = [z];
        let trunc = self.config.truncation;
        let mass = self.law.total_cumhaz(trunc, &zs);
        let u: f64 = rng.random();
        // E ~ Exp(1) conditioned on E ≤ Λ•(truncation | z).
        let e = -(u * (-mass).exp_m1()).ln_1p();
        let t = self.invert_cumhaz(e.min(mass), &zs)?;
        let share = self.law.hazard(0, t, &zs) / self.law.total_hazard(t, &zs);
        let cause = if rng.random::<f64>() < share { 1 } else { 2 };
        Ok((t, cause))
    }

    /// Solves Λ•(t | z) = target on [0, truncation] by safeguarded Newton.
    fn invert_cumhaz(&self, target: f64, z: &[f64]) -> Result<f64> {
        if target <= 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0, self.config.truncation);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.law.total_cumhaz(t, z) - target;
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let slope = self.law.total_hazard(t, z);
            let newton = t - g / slope;
            let next = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - t).abs() <= 1e-10 * t.max(1.0) || hi - lo <= 1e-12 {
                return Ok(next);
            }
            t = next;
        }
        Err(Error::RootFindFailure(format!(
            "Λ•(t) = {target} did not converge on [0, {}]",
            self.config.truncation
        )))
    }

    fn calibrate_censoring(&self) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(PILOT_STREAM);
        let mut times = Vec::with_capacity(PILOT_DRAWS);
        for _ in 0..PILOT_DRAWS {
            let z = self.config.covariate_law.sample(&mut rng);
            times.push(self.draw_event(z, &mut rng)?.0);
        }
        uniform_censoring_bound(&mut times, self.config.censor_rate)
    }

    /// One simulated dataset, covariates drawn from the configured law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SurvivalDataset> {
        let mut subjects = Vec::with_capacity(self.config.n);
        for _ in 0..self.config.n {
            let z = self.config.covariate_law.sample(rng);
            let (t, cause) = self.draw_event(z, rng)?;
            let record = match self.censor_bound {
                Some(bound) => {
                    let c = rng.random::<f64>() * bound;
                    if c < t {
                        SubjectRecord::new(c, 0, vec![z])
                    } else {
                        SubjectRecord::new(t, cause, vec![z])
                    }
                }
                None => SubjectRecord::new(t, cause, vec![z]),
            };
            subjects.push(record);
        }
        SurvivalDataset::new(subjects, 2, 1)
    }
}

/// c* such that P(C < T) = rate for C ~ Uniform(0, c*), over the empirical
/// law of `times`. P(C < T) = E[min(T, c)] / c, evaluated with prefix sums.
pub fn uniform_censoring_bound(times: &mut [f64], rate: f64) -> Result<f64> {
    if times.is_empty() || !(rate > 0.0 && rate < 1.0) {
        return Err(Error::CalibrationFailure(format!("cannot calibrate censoring rate {rate}")));
    }
    times.sort_by(f64::total_cmp);
    let n = times.len() as f64;
    let mut prefix = Vec::with_capacity(times.len() + 1);
    prefix.push(0.0);
    for &t in times.iter() {
        prefix.push(prefix.last().unwrap() + t);
    }
    let censored = |c: f64| {
        let below = times.partition_point(|&t| t < c);
        (prefix[below] + c * (times.len() - below) as f64) / (n * c)
    };
    let (mut lo, mut hi) = (times[0].max(1e-12) * 1e-3, times[times.len() - 1] * 1e6);
    if !(censored(lo) > rate && censored(hi) < rate) {
        return Err(Error::CalibrationFailure(format!("censoring rate {rate} not bracketed")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored(mid) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Dataset for `config` drawn from ChaCha stream 0 of `seed`.
pub fn sample_dataset(config: &ScenarioConfig, seed: u64) -> Result<SurvivalDataset> {
    let gen = Generator::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen.sample(&mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodCauseMetrics {
    pub method: Method,
    pub cause: u32,
    pub max_bias: f64,
    pub end_sd: f64,
    pub coverage: Option<f64>,
    pub half_width_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalCifQuantiles {
    pub method: Method,
    /// At [`TOTAL_CIF_PROBS`].
    pub values: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub sigmas: (f64, f64),
    pub censor_bound: Option<f64>,
    pub q90: f64,
    pub completed: usize,
    pub fit_failures: usize,
    pub bootstrap_failures: usize,
    pub bootstrap_redraws: usize,
    /// Ordered by method, then cause.
    pub metrics: Vec<MethodCauseMetrics>,
    /// Methods 1 and 2, uncensored cells only.
    pub total_cif_quantiles: Vec<TotalCifQuantiles>,
}

impl ScenarioResult {
    pub fn metric(&self, method: Method, cause: u32) -> Option<&MethodCauseMetrics> {
        self.metrics.iter().find(|m| m.method == method && m.cause == cause)
    }

    pub fn quantiles(&self, method: Method) -> Option<&TotalCifQuantiles> {
        self.total_cif_quantiles.iter().find(|q| q.method == method)
    }
}

struct RepRecord {
    /// Ordered by method, then cause.
    curves: Vec<StepFunction>,
    last_event: f64,
    covered: Vec<bool>,
    half_widths: Vec<f64>,
    total_at_last: Vec<f64>,
    redraws: usize,
}

enum RepOutcome {
    Done(RepRecord),
    FitFailed,
    BootstrapFailed,
}

/// Runs all replications of one cell and reduces them to summary metrics.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    let gen = Generator::new(config)?;
    let z = [config.z_eval];
    let outcomes: Vec<Result<RepOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replicate(&gen, rep as u64, &z))
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let (mut fit_failures, mut bootstrap_failures, mut redraws) = (0, 0, 0);
    for outcome in outcomes {
        match outcome? {
            RepOutcome::Done(r) => {
                redraws += r.redraws;
                records.push(r);
            }
            RepOutcome::FitFailed => fit_failures += 1,
            RepOutcome::BootstrapFailed => bootstrap_failures += 1,
        }
    }
    if fit_failures + bootstrap_failures > 0 {
        log::warn!(
            "scenario {}: {fit_failures} fit failure(s), {bootstrap_failures} bootstrap failure(s) excluded",
            config.id
        );
    }
    if records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "scenario {}: every replication failed",
            config.id
        )));
    }

    let mut lasts: Vec<f64> = records.iter().map(|r| r.last_event).collect();
    let q90 = quantile_type7(&mut lasts, 0.9);
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| q90 * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let truth = gen.law.truncated_cif_on_grid(&grid, &z, config.truncation);

    let reps = records.len() as f64;
    let mut metrics = Vec::new();
    for (slot, (method, cause)) in slots().enumerate() {
        let c = (cause - 1) as usize;
        let mut max_bias: f64 = 0.0;
        for (g, &t) in grid.iter().enumerate() {
            let mean = records.iter().map(|r| r.curves[slot].eval(t)).sum::<f64>() / reps;
            max_bias = max_bias.max((mean - truth[g][c]).abs());
        }
        let ends: Vec<f64> = records.iter().map(|r| r.curves[slot].eval(q90)).collect();
        let (coverage, half_width_mean) = if config.bootstrap_b > 0 {
            (
                Some(records.iter().filter(|r| r.covered[slot]).count() as f64 / reps),
                Some(records.iter().map(|r| r.half_widths[slot]).sum::<f64>() / reps),
            )
        } else {
            (None, None)
        };
        metrics.push(MethodCauseMetrics {
            method,
            cause,
            max_bias,
            end_sd: sample_sd(&ends),
            coverage,
            half_width_mean,
        });
    }

    let total_cif_quantiles = if config.is_uncensored() {
        [Method::M1, Method::M2]
            .iter()
            .enumerate()
            .map(|(k, &method)| {
                let mut totals: Vec<f64> = records.iter().map(|r| r.total_at_last[k]).collect();
                let mut values = [0.0; 5];
                for (v, &p) in values.iter_mut().zip(&TOTAL_CIF_PROBS) {
                    *v = quantile_type7(&mut totals, p);
                }
                TotalCifQuantiles { method, values }
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(ScenarioResult {
        config: config.clone(),
        sigmas: gen.sigmas,
        censor_bound: gen.censor_bound,
        q90,
        completed: records.len(),
        fit_failures,
        bootstrap_failures,
        bootstrap_redraws: redraws,
        metrics,
        total_cif_quantiles,
    })
}

fn slots() -> impl Iterator<Item = (Method, u32)> {
    Method::ALL.into_iter().flat_map(|m| [(m, 1), (m, 2)])
}

fn run_replicate(gen: &Generator, rep: u64, z: &[f64]) -> Result<RepOutcome> {
    let config = &gen.config;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(rep);
    let data = gen.sample(&mut rng)?;
    let band_seed = rng.next_u64();

    let cox = CoxOptions::default();
    let model = match CifModel::fit(&data, &cox) {
        Ok(m) => m,
        Err(Error::Nonconvergence { .. } | Error::TiedEventTimes { .. }) => return Ok(RepOutcome::FitFailed),
        Err(e) => return Err(e),
    };
    let index = EventIndex::build(&data)?;
    let last_event = match index.last_time() {
        Some(t) => t,
        None => return Ok(RepOutcome::FitFailed),
    };

    let mut curves = Vec::with_capacity(6);
    let mut total_at_last = Vec::with_capacity(2);
    for method in Method::ALL {
        let est = model.cif(method, z)?;
        if matches!(method, Method::M1 | Method::M2) {
            total_at_last.push(est.iter().map(|e| e.curve.eval(last_event)).sum());
        }
        for e in est {
            debug_assert!(matches!(e.cause, CauseSel::Cause(_)));
            curves.push(e.curve);
        }
    }

    let (mut covered, mut half_widths, mut redraws) = (Vec::new(), Vec::new(), 0);
    if config.bootstrap_b > 0 {
        let band_config = BandConfig {
            replications: config.bootstrap_b,
            level: config.level,
            seed: band_seed,
            methods: Method::ALL.to_vec(),
            cox,
        };
        let set = match bootstrap_bands(&data, &model, &[z.to_vec()], &band_config) {
            Ok(s) => s,
            Err(Error::BootstrapFitFailure { .. }) => return Ok(RepOutcome::BootstrapFailed),
            Err(e) => return Err(e),
        };
        redraws = set.failed_refits;
        let truth = gen.law.truncated_cif_on_grid(index.times(), z, config.truncation);
        for (method, cause) in slots() {
            let band = set.get(z, method, cause).expect("band for every slot");
            let c = (cause - 1) as usize;
            let inside = index.times().iter().zip(&truth).all(|(&t, f)| {
                let center = band.center.eval(t);
                (f[c] - center).abs() <= band.half_width
            });
            covered.push(inside);
            half_widths.push(band.half_width);
        }
    }

    Ok(RepOutcome::Done(RepRecord {
        curves,
        last_event,
        covered,
        half_widths,
        total_at_last,
        redraws,
    }))
}

/// Linear-interpolation quantile (sorts `values` in place).
pub fn quantile_type7(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
