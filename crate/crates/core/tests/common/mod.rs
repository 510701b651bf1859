//! Independent reference implementations used as test oracles. Nothing here
//! calls into the estimators under test.

#![allow(dead_code)]

use cifkit_core::{SubjectRecord, SurvivalDataset};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Uniform};

/// Exponential cause-specific hazards λⱼ(t|z) = exp(βⱼᵀz); optional
/// independent exponential censoring with rate `censor_rate`.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, betas: &[Vec<f64>], censor_rate: f64) -> SurvivalDataset {
    let d = betas[0].len();
    let unit = Uniform::new(-1.0, 1.0).unwrap();
    let subjects = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| unit.sample(rng)).collect();
            let rates: Vec<f64> = betas
                .iter()
                .map(|b| b.iter().zip(&z).map(|(b, x)| b * x).sum::<f64>().exp())
                .collect();
            let total: f64 = rates.iter().sum();
            let t = rng.sample::<f64, _>(Exp1) / total;
            let mut u = rng.random::<f64>() * total;
            let mut cause = rates.len();
            for (j, r) in rates.iter().enumerate() {
                if u < *r {
                    cause = j + 1;
                    break;
                }
                u -= r;
            }
            if censor_rate > 0.0 {
                let c = rng.sample::<f64, _>(Exp1) / censor_rate;
                if c < t {
                    return SubjectRecord::new(c, 0, z);
                }
            }
            SubjectRecord::new(t, cause as u32, z)
        })
        .collect();
    SurvivalDataset::new(subjects, betas.len() as u32, d).unwrap()
}

pub fn random_betas<R: Rng>(rng: &mut R, causes: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    let u = Uniform::new(-scale, scale).unwrap();
    (0..causes).map(|_| (0..d).map(|_| u.sample(rng)).collect()).collect()
}

/// Cause-specific partial log-likelihood written directly from its
/// definition: Σ over cause-j failures of wᵢ[βᵀZᵢ − log Σ_{l: Tₗ ≥ Tᵢ} wₗ exp(βᵀZₗ)].
pub fn naive_partial_loglik(data: &SurvivalDataset, cause: u32, beta: &[f64]) -> f64 {
    let s = data.subjects();
    let eta = |z: &[f64]| beta.iter().zip(z).map(|(b, x)| b * x).sum::<f64>();
    s.iter()
        .filter(|i| i.event == cause)
        .map(|i| {
            let denom: f64 = s
                .iter()
                .filter(|l| l.time >= i.time)
                .map(|l| l.weight * eta(&l.covariates).exp())
                .sum();
            i.weight * (eta(&i.covariates) - denom.ln())
        })
        .sum()
}

/// Covariate-free Aalen–Johansen CIFs evaluated at each distinct event
/// time, with subject weights. Returns (times, per-cause values).
pub fn aalen_johansen(data: &SurvivalDataset) -> (Vec<f64>, Vec<Vec<f64>>) {
    let s = data.subjects();
    let j = data.num_causes() as usize;
    let mut times: Vec<f64> = s.iter().filter(|x| x.event > 0).map(|x| x.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut surv = 1.0;
    let mut acc = vec![0.0; j];
    let mut out = vec![Vec::new(); j];
    for &t in &times {
        let at_risk: f64 = s.iter().filter(|x| x.time >= t).map(|x| x.weight).sum();
        let mut d_total = 0.0;
        for (c, a) in acc.iter_mut().enumerate() {
            let d: f64 = s
                .iter()
                .filter(|x| x.time == t && x.event as usize == c + 1)
                .map(|x| x.weight)
                .sum();
            *a += surv * d / at_risk;
            d_total += d;
        }
        surv *= 1.0 - d_total / at_risk;
        for (c, o) in out.iter_mut().enumerate() {
            o.push(acc[c]);
        }
    }
    (times, out)
}

/// Maximises `f` over a regular grid on [lo, hi] with spacing `step`.
pub fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|i| lo + i as f64 * step)
        .map(|b| (b, f(b)))
        .fold((lo, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}

/// Kolmogorov–Smirnov statistic of `sample` against the continuous CDF `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
