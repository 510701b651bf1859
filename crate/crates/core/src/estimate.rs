//! Survival and cumulative incidence estimators built on cause-specific Cox
//! fits.
//!
//! With Λ̂ⱼ(t|z) = θ̂ⱼ(z) Λ̂₀ⱼ(t) and no tied event times, at most one cause
//! jumps at each event time T₍ₖ₎. Writing `hₖ(z)` for that jump, the three
//! CIF estimators differ only in the weight placed in front of it:
//!
//! * Method 1: `exp{−Σₘ Λ̂ₘ(T₍ₖ₎−|z)} · hₖ(z)`
//! * Method 2: `P̂(T₍ₖ₎−|z) · hₖ(z)` with `P̂ = ∏ {1 − hₖ(z)}₊`
//! * Method 3: `∏_{r<k} {1 − γ̂ᵣ(z)} · γ̂ₖ(z)` where
//!   `γ̂ₖ(z) = 1 − {1 − wθ̂ⱼ(Z_I(k)) / Aⱼ(T₍ₖ₎)}^{θ̂ⱼ(z)/θ̂ⱼ(Z_I(k))}`.
//!
//! Method 3 telescopes: `1 − F̂•(T₍ₖ₎) = ∏ₖ {1 − γ̂ₖ}`, and when the last
//! follow-up is an event its risk set holds only the failing subject, so the
//! last factor is 0 and the total CIF ends at exactly 1.

use std::fmt;
use std::str::FromStr;

use crate::cox::{self, CoxFit, CoxOptions};
use crate::data::{RiskSetLayout, SurvivalDataset};
use crate::error::{Error, Result};
use crate::step::StepFunction;

/// Tolerance below zero tolerated (and clamped) for the Method 3 prefix product.
const PREFIX_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Exponential of the summed Breslow hazards.
    M1,
    /// Product integral with positive-part clamp.
    M2,
    /// Per-event γ̂ factors; total CIF reaches 1 at the last event.
    M3,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::M1, Method::M2, Method::M3];

    pub fn number(self) -> u8 {
        match self {
            Method::M1 => 1,
            Method::M2 => 2,
            Method::M3 => 3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches(['m', 'M']) {
            "1" => Ok(Method::M1),
            "2" => Ok(Method::M2),
            "3" => Ok(Method::M3),
            _ => Err(Error::InvalidInput(format!("unknown method `{s}` (expected 1, 2 or 3)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CauseSel {
    Cause(u32),
    Total,
}

impl fmt::Display for CauseSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CauseSel::Cause(j) => write!(f, "{j}"),
            CauseSel::Total => f.write_str("total"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CifEstimate {
    pub method: Method,
    pub cause: CauseSel,
    pub z: Vec<f64>,
    pub curve: StepFunction,
}

/// Per-event quantities shared by all estimators for a fixed set of fits.
#[derive(Debug, Clone)]
pub struct CifModel {
    num_causes: u32,
    dim: usize,
    fits: Vec<CoxFit>,
    times: Vec<f64>,
    causes: Vec<u32>,
    /// A_{D(k)}(T₍ₖ₎).
    risk: Vec<f64>,
    /// θ̂_{D(k)}(Z_{I(k)}).
    theta_fail: Vec<f64>,
    /// w_{I(k)}.
    weight_fail: Vec<f64>,
}

impl CifModel {
    /// `fits[j - 1]` must hold the fit for cause j.
    pub fn new(data: &SurvivalDataset, fits: Vec<CoxFit>) -> Result<Self> {
        let layout = RiskSetLayout::new(data)?;
        let weights = data.weights();
        Self::with_layout(data, &layout, &weights, fits)
    }

    /// Fits every cause and requires convergence.
    pub fn fit(data: &SurvivalDataset, opts: &CoxOptions) -> Result<Self> {
        let layout = RiskSetLayout::new(data)?;
        let weights = data.weights();
        let fits = cox::fit_all_with_layout(data, &layout, &weights, None, opts)?
            .into_iter()
            .map(CoxFit::ensure_converged)
            .collect::<Result<Vec<_>>>()?;
        Self::with_layout(data, &layout, &weights, fits)
    }

    pub(crate) fn with_layout(
        data: &SurvivalDataset,
        layout: &RiskSetLayout,
        weights: &[f64],
        fits: Vec<CoxFit>,
    ) -> Result<Self> {
        let num_causes = data.num_causes();
        if fits.len() != num_causes as usize {
            return Err(Error::InvalidInput(format!(
                "expected {num_causes} fits, got {}",
                fits.len()
            )));
        }
        for (j, fit) in fits.iter().enumerate() {
            if fit.cause != j as u32 + 1 || fit.beta.len() != data.covariate_dim() {
                return Err(Error::InvalidInput(format!(
                    "fit in slot {} is for cause {} with {} coefficients",
                    j + 1,
                    fit.cause,
                    fit.beta.len()
                )));
            }
        }
        let index = layout.index();
        let subjects = data.subjects();
        let k = index.len();
        let mut risk = vec![0.0; k];
        let mut theta_fail = vec![0.0; k];
        let mut weight_fail = vec![0.0; k];
        for fit in &fits {
            let theta: Vec<f64> = subjects.iter().map(|s| fit.linear_predictor(&s.covariates)).collect();
            let weighted: Vec<f64> = theta.iter().zip(weights).map(|(t, w)| t * w).collect();
            let sums = layout.risk_sums_at_events(&weighted);
            for e in 0..k {
                if index.causes()[e] == fit.cause {
                    let i = index.failers()[e];
                    risk[e] = sums[e];
                    theta_fail[e] = theta[i];
                    weight_fail[e] = weights[i];
                }
            }
        }
        Ok(Self {
            num_causes,
            dim: data.covariate_dim(),
            fits,
            times: index.times().to_vec(),
            causes: index.causes().to_vec(),
            risk,
            theta_fail,
            weight_fail,
        })
    }

    pub fn fits(&self) -> &[CoxFit] {
        &self.fits
    }

    pub fn num_causes(&self) -> u32 {
        self.num_causes
    }

    pub fn event_times(&self) -> &[f64] {
        &self.times
    }

    pub fn event_causes(&self) -> &[u32] {
        &self.causes
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "covariate profile has length {}, expected {}",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn thetas_at(&self, z: &[f64]) -> Vec<f64> {
        self.fits.iter().map(|f| f.linear_predictor(z)).collect()
    }

    /// Breslow estimator Λ̂₀ⱼ, jumping only at cause-j event times.
    pub fn baseline_cumhaz(&self, cause: u32) -> StepFunction {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut acc = 0.0;
        for k in 0..self.times.len() {
            if self.causes[k] == cause {
                acc += self.weight_fail[k] / self.risk[k];
                times.push(self.times[k]);
                values.push(acc);
            }
        }
        StepFunction::from_sorted(0.0, times, values)
    }

    /// ΔΛ̂_{D(k)}(T₍ₖ₎|z) for every event k.
    pub fn hazard_jumps(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_z(z)?;
        let thetas = self.thetas_at(z);
        Ok((0..self.times.len())
            .map(|k| thetas[self.causes[k] as usize - 1] * self.weight_fail[k] / self.risk[k])
            .collect())
    }

    /// γ̂_{k,D(k)}(z) for every event k (γ̂ₖⱼ = 0 for j ≠ D(k)).
    pub fn gammas(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_z(z)?;
        let thetas = self.thetas_at(z);
        Ok((0..self.times.len())
            .map(|k| {
                let base_dev = self.weight_fail[k] * self.theta_fail[k] / self.risk[k];
                let exponent = thetas[self.causes[k] as usize - 1] / self.theta_fail[k];
                gamma(base_dev, exponent)
            })
            .collect())
    }

    /// Per-event increments of the CIF (assigned to cause D(k)).
    fn increments(&self, method: Method, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.times.len());
        match method {
            Method::M1 => {
                let mut cum = 0.0_f64;
                for h in self.hazard_jumps(z)? {
                    out.push((-cum).exp() * h);
                    cum += h;
                }
            }
            Method::M2 => {
                let mut surv = 1.0;
                for h in self.hazard_jumps(z)? {
                    out.push(surv * h);
                    surv *= (1.0 - h).max(0.0);
                }
            }
            Method::M3 => {
                let mut prefix = 1.0;
                for (k, g) in self.gammas(z)?.into_iter().enumerate() {
                    out.push(prefix * g);
                    prefix *= 1.0 - g;
                    if prefix < 0.0 {
                        if prefix < -PREFIX_SLACK {
                            return Err(Error::NegativePrefix { event: k, value: prefix });
                        }
                        prefix = 0.0;
                    }
                }
            }
        }
        Ok(out)
    }

    /// One estimate per cause 1..=J, each stored on the full event-time grid.
    pub fn cif(&self, method: Method, z: &[f64]) -> Result<Vec<CifEstimate>> {
        let inc = self.increments(method, z)?;
        let j = self.num_causes as usize;
        let k = self.times.len();
        let mut values = vec![Vec::with_capacity(k); j];
        let mut acc = vec![0.0; j];
        for e in 0..k {
            acc[self.causes[e] as usize - 1] += inc[e];
            for (c, v) in values.iter_mut().enumerate() {
                v.push(acc[c]);
            }
        }
        Ok(values
            .into_iter()
            .enumerate()
            .map(|(c, v)| CifEstimate {
                method,
                cause: CauseSel::Cause(c as u32 + 1),
                z: z.to_vec(),
                curve: StepFunction::from_sorted(0.0, self.times.clone(), v),
            })
            .collect())
    }

    /// Single-event survival estimate Ŝ⁽ᵐ⁾(·|z); requires J = 1.
    pub fn survival(&self, method: Method, z: &[f64]) -> Result<StepFunction> {
        if self.num_causes != 1 {
            return Err(Error::InvalidInput(format!(
                "single-event survival needs J = 1, data has J = {}",
                self.num_causes
            )));
        }
        let mut values = Vec::with_capacity(self.times.len());
        match method {
            Method::M1 => {
                let mut cum = 0.0_f64;
                for h in self.hazard_jumps(z)? {
                    cum += h;
                    values.push((-cum).exp());
                }
            }
            Method::M2 => {
                let mut surv = 1.0;
                for h in self.hazard_jumps(z)? {
                    surv *= (1.0 - h).max(0.0);
                    values.push(surv);
                }
            }
            Method::M3 => {
                let mut surv = 1.0;
                for g in self.gammas(z)? {
                    surv *= 1.0 - g;
                    values.push(surv.max(0.0));
                }
            }
        }
        Ok(StepFunction::from_sorted(1.0, self.times.clone(), values))
    }
}

/// `1 − (1 − x)^y` for x ∈ [0, 1], y > 0, with 0^y = 0.
fn gamma(base_dev: f64, exponent: f64) -> f64 {
    if base_dev >= 1.0 {
        1.0
    } else if base_dev <= 0.0 {
        0.0
    } else if exponent == 1.0 {
        base_dev
    } else {
        -(exponent * (-base_dev).ln_1p()).exp_m1()
    }
}

/// Breslow estimator of the cause-`fit.cause` cumulative baseline hazard.
pub fn breslow_cumhaz(data: &SurvivalDataset, fit: &CoxFit) -> Result<StepFunction> {
    let layout = RiskSetLayout::new(data)?;
    let weights = data.weights();
    let subjects = data.subjects();
    let weighted: Vec<f64> = subjects
        .iter()
        .zip(&weights)
        .map(|(s, w)| w * fit.linear_predictor(&s.covariates))
        .collect();
    let sums = layout.risk_sums_at_events(&weighted);
    let index = layout.index();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut acc = 0.0;
    for k in 0..index.len() {
        if index.causes()[k] == fit.cause {
            acc += weights[index.failers()[k]] / sums[k];
            times.push(index.times()[k]);
            values.push(acc);
        }
    }
    Ok(StepFunction::from_sorted(0.0, times, values))
}

fn single_model(data: &SurvivalDataset, fit: &CoxFit) -> Result<CifModel> {
    CifModel::new(data, vec![fit.clone()])
}

/// Ŝ⁽¹⁾(t|z) = exp{−θ̂(z) Λ̂₀(t)}.
pub fn survival_m1(data: &SurvivalDataset, fit: &CoxFit, z: &[f64]) -> Result<StepFunction> {
    single_model(data, fit)?.survival(Method::M1, z)
}

/// Product-integral estimator, clamped at 0 once a factor goes non-positive.
pub fn survival_m2(data: &SurvivalDataset, fit: &CoxFit, z: &[f64]) -> Result<StepFunction> {
    single_model(data, fit)?.survival(Method::M2, z)
}

/// Kalbfleisch–Prentice-type estimator ∏ α̂ₖ^{θ̂(z)}.
pub fn survival_m3(data: &SurvivalDataset, fit: &CoxFit, z: &[f64]) -> Result<StepFunction> {
    single_model(data, fit)?.survival(Method::M3, z)
}

pub fn cif_m1(data: &SurvivalDataset, fits: &[CoxFit], z: &[f64]) -> Result<Vec<CifEstimate>> {
    CifModel::new(data, fits.to_vec())?.cif(Method::M1, z)
}

pub fn cif_m2(data: &SurvivalDataset, fits: &[CoxFit], z: &[f64]) -> Result<Vec<CifEstimate>> {
    CifModel::new(data, fits.to_vec())?.cif(Method::M2, z)
}

pub fn cif_m3(data: &SurvivalDataset, fits: &[CoxFit], z: &[f64]) -> Result<Vec<CifEstimate>> {
    CifModel::new(data, fits.to_vec())?.cif(Method::M3, z)
}

/// Pointwise sum of per-cause estimates sharing method, profile and grid.
pub fn total_cif(estimates: &[CifEstimate]) -> Result<CifEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidInput("no estimates to sum".into()))?;
    if estimates.iter().any(|e| e.method != first.method || e.z != first.z) {
        return Err(Error::MixedMethods);
    }
    if estimates.iter().any(|e| e.curve.jump_times() != first.curve.jump_times()) {
        return Err(Error::InvalidInput("estimates are on different time grids".into()));
    }
    let mut values = first.curve.values().to_vec();
    let mut initial = first.curve.initial_value();
    for e in &estimates[1..] {
        initial += e.curve.initial_value();
        for (v, x) in values.iter_mut().zip(e.curve.values()) {
            *v += x;
        }
    }
    Ok(CifEstimate {
        method: first.method,
        cause: CauseSel::Total,
        z: first.z.clone(),
        curve: StepFunction::from_sorted(initial, first.curve.jump_times().to_vec(), values),
    })
}
