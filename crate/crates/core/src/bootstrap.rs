//! Weighted-bootstrap fixed-width simultaneous confidence bands.
//!
//! Each replicate draws Exp(1) subject weights normalised to mean 1, refits
//! every cause-specific Cox model under those weights and recomputes the CIF
//! curves. The half-width for a (method, cause, profile) is the ⌈level·B⌉-th
//! order statistic of sup_t |F̂*(t) − F̂(t)| over the original event times.
//!
//! Replicate `r` draws from ChaCha stream `r` of the master seed, so results
//! do not depend on how rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::cox::{self, CoxOptions};
use crate::data::{RiskSetLayout, SurvivalDataset};
use crate::error::{Error, Result};
use crate::estimate::{CifEstimate, CifModel, Method};
use crate::step::StepFunction;

/// Exp(1) draws divided by their mean.
pub fn draw_weights(n: usize, seed: u64) -> Vec<f64> {
    draw_weights_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn draw_weights_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    raw.into_iter().map(|w| w / mean).collect()
}

/// Index (0-based) of the ⌈level·B⌉-th order statistic.
pub fn ceiling_rank(level: f64, count: usize) -> usize {
    let rank = (level * count as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, count.max(1)) - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandResult {
    pub method: Method,
    pub cause: u32,
    pub z: Vec<f64>,
    pub half_width: f64,
    pub center: StepFunction,
    pub level: f64,
    pub replications: usize,
    /// Per-replicate sup deviations, in replicate order.
    pub sups: Vec<f64>,
}

impl BandResult {
    pub fn lower(&self, t: f64) -> f64 {
        self.center.eval(t) - self.half_width
    }

    pub fn upper(&self, t: f64) -> f64 {
        self.center.eval(t) + self.half_width
    }

    /// Band clipped to [0, 1]; only for presentation.
    pub fn display_bounds(&self, t: f64) -> (f64, f64) {
        (self.lower(t).max(0.0), self.upper(t).min(1.0))
    }

    /// Half-width recomputed at another level from the stored sups.
    pub fn half_width_at(&self, level: f64) -> f64 {
        let mut sorted = self.sups.clone();
        sorted.sort_by(f64::total_cmp);
        sorted[ceiling_rank(level, sorted.len())]
    }
}

#[derive(Debug, Clone)]
pub struct BandConfig {
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub cox: CoxOptions,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            replications: 1000,
            level: 0.95,
            seed: 0,
            methods: Method::ALL.to_vec(),
            cox: CoxOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BandSet {
    /// Ordered by profile, then method, then cause.
    pub bands: Vec<BandResult>,
    /// Replicates redrawn because a refit did not converge.
    pub failed_refits: usize,
}

impl BandSet {
    pub fn get(&self, z: &[f64], method: Method, cause: u32) -> Option<&BandResult> {
        self.bands
            .iter()
            .find(|b| b.method == method && b.cause == cause && b.z == z)
    }
}

/// Bands for every (profile, method, cause) from a single set of replicates.
pub fn bootstrap_bands(
    data: &SurvivalDataset,
    original: &CifModel,
    profiles: &[Vec<f64>],
    config: &BandConfig,
) -> Result<BandSet> {
    bootstrap_bands_with(data, original, profiles, config, |n, rng| draw_weights_with(n, rng))
}

/// As [`bootstrap_bands`] with a caller-supplied weight generator.
pub fn bootstrap_bands_with<F>(
    data: &SurvivalDataset,
    original: &CifModel,
    profiles: &[Vec<f64>],
    config: &BandConfig,
    draw: F,
) -> Result<BandSet>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    if config.replications == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one replication".into()));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::InvalidInput(format!("band level {} not in (0, 1)", config.level)));
    }
    let layout = RiskSetLayout::new(data)?;
    let centers: Vec<CifEstimate> = profiles
        .iter()
        .flat_map(|z| config.methods.iter().map(move |&m| (z, m)))
        .map(|(z, m)| original.cif(m, z))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let cap = (0.05 * config.replications as f64).ceil() as usize;
    let n = data.len();
    let outcomes: Vec<Result<(Vec<f64>, usize)>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(rep as u64);
            let mut failures = 0;
            loop {
                let weights = draw(n, &mut rng);
                let fits =
                    cox::fit_all_with_layout(data, &layout, &weights, Some(original.fits()), &config.cox)?;
                if fits.iter().all(|f| f.converged) {
                    let model = CifModel::with_layout(data, &layout, &weights, fits)?;
                    let mut sups = Vec::with_capacity(centers.len());
                    for z in profiles {
                        for &m in &config.methods {
                            for est in model.cif(m, z)? {
                                sups.push(est.curve);
                            }
                        }
                    }
                    let sups = sups
                        .iter()
                        .zip(&centers)
                        .map(|(boot, center)| boot.sup_abs_diff(&center.curve))
                        .collect();
                    return Ok((sups, failures));
                }
                failures += 1;
                if failures > cap {
                    return Err(Error::BootstrapFitFailure { failures, cap });
                }
            }
        })
        .collect();

    let mut per_rep = Vec::with_capacity(config.replications);
    let mut failed_refits = 0;
    for outcome in outcomes {
        let (sups, failures) = outcome?;
        failed_refits += failures;
        per_rep.push(sups);
    }
    if failed_refits > cap {
        return Err(Error::BootstrapFitFailure {
            failures: failed_refits,
            cap,
        });
    }
    if failed_refits > 0 {
        log::warn!("bootstrap: redrew {failed_refits} replicate(s) after non-converged refits");
    }

    let rank = ceiling_rank(config.level, config.replications);
    let bands = centers
        .into_iter()
        .enumerate()
        .map(|(slot, center)| {
            let sups: Vec<f64> = per_rep.iter().map(|s| s[slot]).collect();
            let mut sorted = sups.clone();
            sorted.sort_by(f64::total_cmp);
            let cause = match center.cause {
                crate::estimate::CauseSel::Cause(j) => j,
                crate::estimate::CauseSel::Total => unreachable!("bands are per cause"),
            };
            BandResult {
                method: center.method,
                cause,
                z: center.z,
                half_width: sorted[rank],
                center: center.curve,
                level: config.level,
                replications: config.replications,
                sups,
            }
        })
        .collect();
    Ok(BandSet {
        bands,
        failed_refits,
    })
}

/// Fits the original data and returns the band for one (method, cause, z).
pub fn band_critical_value(
    data: &SurvivalDataset,
    method: Method,
    cause: u32,
    z: &[f64],
    replications: usize,
    level: f64,
    seed: u64,
) -> Result<BandResult> {
    if cause == 0 || cause > data.num_causes() {
        return Err(Error::InvalidCause {
            cause,
            num_causes: data.num_causes(),
        });
    }
    let config = BandConfig {
        replications,
        level,
        seed,
        methods: vec![method],
        cox: CoxOptions::default(),
    };
    let original = CifModel::fit(data, &config.cox)?;
    let set = bootstrap_bands(data, &original, &[z.to_vec()], &config)?;
    Ok(set
        .bands
        .into_iter()
        .find(|b| b.cause == cause)
        .expect("one band per cause"))
}
