//! Cause-specific Cox regression.
//!
//! Events of other causes are treated as censored. The weighted log partial
//! likelihood
//!
//! ```text
//! ℓ(β) = Σ_{k: D(k)=j} w_I(k) [ βᵀZ_I(k) − log Σ_r w_r Y_r(T(k)) exp(βᵀZ_r) ]
//! ```
//!
//! is maximised by Newton–Raphson with step-halving. No tie correction is
//! applied; tied event times must be resolved before fitting.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::{RiskSetLayout, SurvivalDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Max-norm of the score at which the fit counts as converged.
    pub score_tol: f64,
    /// Relative log-likelihood change at which the fit counts as converged.
    pub rel_loglik_tol: f64,
    /// Both stopping rules also require the Newton step to be this small, so a
    /// flat monotone likelihood is not mistaken for an optimum.
    pub step_tol: f64,
    pub max_halvings: u32,
    /// ‖β‖∞ beyond this is reported as divergence (monotone likelihood).
    pub divergence_bound: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            score_tol: 1e-9,
            rel_loglik_tol: 1e-12,
            step_tol: 1e-6,
            max_halvings: 20,
            divergence_bound: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    /// β̂ = 0 returned because the likelihood is flat (no events of the cause
    /// or no covariate varies).
    Degenerate,
    IterationLimit,
    /// ‖β‖∞ exceeded the divergence bound.
    Diverged,
    /// Information matrix not positive definite.
    Singular,
}

impl fmt::Display for FitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitStatus::Converged => "converged",
            FitStatus::Degenerate => "degenerate",
            FitStatus::IterationLimit => "iteration-limit",
            FitStatus::Diverged => "diverged",
            FitStatus::Singular => "singular",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub cause: u32,
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub score_norm: f64,
    /// Hessian of ℓ at `beta` (negative observed information).
    pub hessian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub status: FitStatus,
    pub diagnostic: Option<String>,
}

impl CoxFit {
    /// A fit with coefficients supplied directly (e.g. β forced to 0).
    pub fn fixed(cause: u32, beta: Vec<f64>) -> Self {
        let d = beta.len();
        Self {
            cause,
            beta,
            loglik: f64::NAN,
            score_norm: f64::NAN,
            hessian: DMatrix::zeros(d, d),
            iterations: 0,
            converged: true,
            status: FitStatus::Converged,
            diagnostic: Some("coefficients supplied, not estimated".into()),
        }
    }

    /// θ̂(z) = exp(β̂ᵀz).
    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        linear_predictor(&self.beta, z)
    }

    pub fn is_degenerate(&self) -> bool {
        self.status == FitStatus::Degenerate
    }

    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Nonconvergence {
                cause: self.cause,
                diagnostic: self
                    .diagnostic
                    .clone()
                    .unwrap_or_else(|| self.status.to_string()),
            })
        }
    }
}

pub fn linear_predictor(beta: &[f64], z: &[f64]) -> f64 {
    beta.iter().zip(z).map(|(b, x)| b * x).sum::<f64>().exp()
}

struct Evaluation {
    loglik: f64,
    score: Vec<f64>,
    /// Row-major d × d.
    hessian: Vec<f64>,
}

/// Everything about one cause's partial likelihood that does not depend on β.
pub(crate) struct CoxProblem<'a> {
    layout: &'a RiskSetLayout,
    weights: &'a [f64],
    cause: u32,
    dim: usize,
    /// Centred covariates, row-major n × d; constant columns are exactly 0.
    centered: Vec<f64>,
    active: Vec<usize>,
    n_events: usize,
}

impl<'a> CoxProblem<'a> {
    pub(crate) fn new(
        data: &SurvivalDataset,
        layout: &'a RiskSetLayout,
        weights: &'a [f64],
        cause: u32,
    ) -> Result<Self> {
        if cause == 0 || cause > data.num_causes() {
            return Err(Error::InvalidCause {
                cause,
                num_causes: data.num_causes(),
            });
        }
        let n = data.len();
        let dim = data.covariate_dim();
        let subjects = data.subjects();
        let mut centered = vec![0.0; n * dim];
        let mut active = Vec::new();
        for c in 0..dim {
            let col = subjects.iter().map(|s| s.covariates[c]);
            let (lo, hi) = col.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
            if n == 0 || lo == hi {
                continue;
            }
            active.push(c);
            let mean = col.sum::<f64>() / n as f64;
            for (i, s) in subjects.iter().enumerate() {
                centered[i * dim + c] = s.covariates[c] - mean;
            }
        }
        let n_events = layout.index().causes().iter().filter(|&&c| c == cause).count();
        Ok(Self {
            layout,
            weights,
            cause,
            dim,
            centered,
            active,
            n_events,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.centered[i * self.dim..(i + 1) * self.dim]
    }

    fn evaluate(&self, beta: &[f64]) -> Evaluation {
        let d = self.dim;
        let n = self.weights.len();
        let eta: Vec<f64> = (0..n)
            .map(|i| self.row(i).iter().zip(beta).map(|(z, b)| z * b).sum())
            .collect();
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; d];
        let mut s2 = vec![0.0; d * d];
        let mut loglik = 0.0;
        let mut score = vec![0.0; d];
        let mut hessian = vec![0.0; d * d];

        let order = self.layout.order();
        let starts = self.layout.risk_start();
        let index = self.layout.index();
        let mut pos = n;
        for k in (0..index.len()).rev() {
            while pos > starts[k] {
                pos -= 1;
                let i = order[pos];
                let r = self.weights[i] * eta[i].exp();
                let z = self.row(i);
                s0 += r;
                for a in 0..d {
                    s1[a] += r * z[a];
                    for b in 0..=a {
                        s2[a * d + b] += r * z[a] * z[b];
                    }
                }
            }
            if index.causes()[k] != self.cause {
                continue;
            }
            let i = index.failers()[k];
            let w = self.weights[i];
            let z = self.row(i);
            loglik += w * (eta[i] - s0.ln());
            for a in 0..d {
                let mean_a = s1[a] / s0;
                score[a] += w * (z[a] - mean_a);
                for b in 0..=a {
                    hessian[a * d + b] -= w * (s2[a * d + b] / s0 - mean_a * s1[b] / s0);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                hessian[b * d + a] = hessian[a * d + b];
            }
        }
        Evaluation {
            loglik,
            score,
            hessian,
        }
    }

    fn score_norm(&self, ev: &Evaluation) -> f64 {
        self.active.iter().map(|&a| ev.score[a].abs()).fold(0.0, f64::max)
    }

    /// Newton direction on the active block, `None` if −H is not positive definite.
    fn newton_step(&self, ev: &Evaluation) -> Option<Vec<f64>> {
        let m = self.active.len();
        let d = self.dim;
        let info = DMatrix::from_fn(m, m, |r, c| -ev.hessian[self.active[r] * d + self.active[c]]);
        let rhs = DVector::from_fn(m, |r, _| ev.score[self.active[r]]);
        let chol = info.cholesky()?;
        let sol = chol.solve(&rhs);
        if sol.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let mut step = vec![0.0; d];
        for (r, &a) in self.active.iter().enumerate() {
            step[a] = sol[r];
        }
        Some(step)
    }

    pub(crate) fn fit(&self, init: Option<&[f64]>, opts: &CoxOptions) -> CoxFit {
        let d = self.dim;
        let mut beta = vec![0.0; d];
        if let Some(init) = init {
            for &a in &self.active {
                beta[a] = init[a];
            }
        }

        if self.n_events == 0 || self.active.is_empty() {
            let beta = vec![0.0; d];
            let ev = self.evaluate(&beta);
            let reason = if self.n_events == 0 {
                format!("no events of cause {}", self.cause)
            } else {
                "no covariate varies across subjects".to_string()
            };
            return self.finish(beta, ev, 0, FitStatus::Degenerate, Some(reason));
        }

        let mut ev = self.evaluate(&beta);
        let mut iterations = 0;
        loop {
            let Some(step) = self.newton_step(&ev) else {
                return self.finish(
                    beta,
                    ev,
                    iterations,
                    FitStatus::Singular,
                    Some("information matrix is not positive definite".into()),
                );
            };
            let step_norm = step.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
            if self.score_norm(&ev) <= opts.score_tol && step_norm <= opts.step_tol {
                return self.finish(beta, ev, iterations, FitStatus::Converged, None);
            }
            if iterations >= opts.max_iter {
                let msg = format!("no convergence after {iterations} iterations");
                return self.finish(beta, ev, iterations, FitStatus::IterationLimit, Some(msg));
            }
            iterations += 1;

            let mut scale = 1.0;
            let mut halvings = 0;
            let (candidate, cand_ev) = loop {
                let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                let cev = self.evaluate(&cand);
                if cev.loglik >= ev.loglik || halvings >= opts.max_halvings {
                    break (cand, cev);
                }
                scale *= 0.5;
                halvings += 1;
            };
            let rel_change = (cand_ev.loglik - ev.loglik).abs() / ev.loglik.abs().max(f64::MIN_POSITIVE);
            beta = candidate;
            ev = cand_ev;

            let beta_norm = beta.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
            if !beta_norm.is_finite() || beta_norm > opts.divergence_bound {
                let msg = format!(
                    "|beta| reached {beta_norm:.3} > {} (monotone likelihood)",
                    opts.divergence_bound
                );
                return self.finish(beta, ev, iterations, FitStatus::Diverged, Some(msg));
            }
            if rel_change <= opts.rel_loglik_tol && scale * step_norm <= opts.step_tol {
                return self.finish(beta, ev, iterations, FitStatus::Converged, None);
            }
        }
    }

    fn finish(
        &self,
        beta: Vec<f64>,
        ev: Evaluation,
        iterations: usize,
        status: FitStatus,
        diagnostic: Option<String>,
    ) -> CoxFit {
        let d = self.dim;
        CoxFit {
            cause: self.cause,
            loglik: ev.loglik,
            score_norm: self.score_norm(&ev),
            hessian: DMatrix::from_row_slice(d, d, &ev.hessian),
            beta,
            iterations,
            converged: matches!(status, FitStatus::Converged | FitStatus::Degenerate),
            status,
            diagnostic,
        }
    }
}

/// Fits the Cox model for `cause`, other causes counting as censoring.
///
/// Non-convergence is reported through [`CoxFit::status`]; use
/// [`CoxFit::ensure_converged`] to turn it into an error.
pub fn fit_cause_specific(
    data: &SurvivalDataset,
    cause: u32,
    init: Option<&[f64]>,
    opts: &CoxOptions,
) -> Result<CoxFit> {
    let layout = RiskSetLayout::new(data)?;
    let weights = data.weights();
    fit_with_layout(data, &layout, &weights, cause, init, opts)
}

pub(crate) fn fit_with_layout(
    data: &SurvivalDataset,
    layout: &RiskSetLayout,
    weights: &[f64],
    cause: u32,
    init: Option<&[f64]>,
    opts: &CoxOptions,
) -> Result<CoxFit> {
    if let Some(init) = init {
        if init.len() != data.covariate_dim() {
            return Err(Error::InvalidInput(format!(
                "initial beta has length {}, expected {}",
                init.len(),
                data.covariate_dim()
            )));
        }
    }
    Ok(CoxProblem::new(data, layout, weights, cause)?.fit(init, opts))
}

/// One fit per cause 1..=J, in cause order.
pub fn fit_all_causes(data: &SurvivalDataset, opts: &CoxOptions) -> Result<Vec<CoxFit>> {
    let layout = RiskSetLayout::new(data)?;
    let weights = data.weights();
    fit_all_with_layout(data, &layout, &weights, None, opts)
}

pub(crate) fn fit_all_with_layout(
    data: &SurvivalDataset,
    layout: &RiskSetLayout,
    weights: &[f64],
    init: Option<&[CoxFit]>,
    opts: &CoxOptions,
) -> Result<Vec<CoxFit>> {
    (1..=data.num_causes())
        .map(|cause| {
            let start = init.and_then(|fits| fits.get(cause as usize - 1)).map(|f| f.beta.as_slice());
            fit_with_layout(data, layout, weights, cause, start, opts)
        })
        .collect()
}

/// ℓ(β) for one cause at arbitrary β.
pub fn partial_loglik(data: &SurvivalDataset, cause: u32, beta: &[f64]) -> Result<f64> {
    Ok(score_and_hessian(data, cause, beta)?.0)
}

/// (ℓ(β), ∇ℓ(β), ∇²ℓ(β)) with the Hessian row-major.
pub fn score_and_hessian(
    data: &SurvivalDataset,
    cause: u32,
    beta: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if beta.len() != data.covariate_dim() {
        return Err(Error::InvalidInput("beta length does not match covariate dimension".into()));
    }
    let layout = RiskSetLayout::new(data)?;
    let weights = data.weights();
    let problem = CoxProblem::new(data, &layout, &weights, cause)?;
    let ev = problem.evaluate(beta);
    Ok((ev.loglik, ev.score, ev.hessian))
}
