//! Population quantities of a cause-specific proportional-hazards law:
//! λⱼ(t|z) = λ₀ⱼ(t) exp(βⱼᵀz), S(t|z) = exp{−Σⱼ Λⱼ(t|z)},
//! Fⱼ(t|z) = ∫₀ᵗ S(u|z) λⱼ(u|z) du.

use crate::error::{Error, Result};
use crate::sim::hazard::HazardShape;

#[derive(Debug, Clone, PartialEq)]
pub struct CauseHazard {
    pub shape: HazardShape,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompetingRisksLaw {
    causes: Vec<CauseHazard>,
}

const QUAD_TOL: f64 = 1e-12;

impl CompetingRisksLaw {
    pub fn new(causes: Vec<CauseHazard>) -> Result<Self> {
        if causes.is_empty() {
            return Err(Error::InvalidInput("law needs at least one cause".into()));
        }
        let d = causes[0].beta.len();
        if causes.iter().any(|c| c.beta.len() != d) {
            return Err(Error::InvalidInput("causes disagree on covariate dimension".into()));
        }
        Ok(Self { causes })
    }

    pub fn causes(&self) -> &[CauseHazard] {
        &self.causes
    }

    pub fn num_causes(&self) -> usize {
        self.causes.len()
    }

    fn risk(&self, j: usize, z: &[f64]) -> f64 {
        self.causes[j].beta.iter().zip(z).map(|(b, x)| b * x).sum::<f64>().exp()
    }

    /// λⱼ(t|z), `j` 0-based.
    pub fn hazard(&self, j: usize, t: f64, z: &[f64]) -> f64 {
        self.causes[j].shape.hazard(t) * self.risk(j, z)
    }

    pub fn cumhaz(&self, j: usize, t: f64, z: &[f64]) -> f64 {
        self.causes[j].shape.cumhaz(t) * self.risk(j, z)
    }

    pub fn total_hazard(&self, t: f64, z: &[f64]) -> f64 {
        (0..self.causes.len()).map(|j| self.hazard(j, t, z)).sum()
    }

    pub fn total_cumhaz(&self, t: f64, z: &[f64]) -> f64 {
        (0..self.causes.len()).map(|j| self.cumhaz(j, t, z)).sum()
    }

    pub fn survival(&self, t: f64, z: &[f64]) -> f64 {
        (-self.total_cumhaz(t, z)).exp()
    }

    /// Fⱼ(t|z) for every cause by adaptive Gauss–Kronrod quadrature.
    pub fn cif(&self, t: f64, z: &[f64]) -> Vec<f64> {
        self.cif_on_grid(&[t], z).pop().expect("one grid point")
    }

    /// Fⱼ at each point of an increasing grid, integrating piece by piece.
    pub fn cif_on_grid(&self, grid: &[f64], z: &[f64]) -> Vec<Vec<f64>> {
        let j = self.causes.len();
        let mut acc = vec![0.0; j];
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(grid.len());
        for &t in grid {
            let t = t.max(0.0);
            if t > prev {
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += integrate(
                        &|u| self.survival(u, z) * self.hazard(c, u, z),
                        prev,
                        t,
                        QUAD_TOL,
                    );
                }
                prev = t;
            }
            out.push(acc.clone());
        }
        out
    }

    /// CIFs of the law conditioned on T ≤ `truncation`.
    pub fn truncated_cif_on_grid(&self, grid: &[f64], z: &[f64], truncation: f64) -> Vec<Vec<f64>> {
        let mass = 1.0 - self.survival(truncation, z);
        let clipped: Vec<f64> = grid.iter().map(|&t| t.min(truncation)).collect();
        self.cif_on_grid(&clipped, z)
            .into_iter()
            .map(|row| row.into_iter().map(|f| f / mass).collect())
            .collect()
    }
}

/// Fⱼ(t|z) for each cause given per-cause shapes and coefficients.
pub fn true_cif(shapes: &[HazardShape], betas: &[Vec<f64>], z: &[f64], t: f64) -> Result<Vec<f64>> {
    if shapes.len() != betas.len() {
        return Err(Error::InvalidInput("one beta vector per cause required".into()));
    }
    let law = CompetingRisksLaw::new(
        shapes
            .iter()
            .zip(betas)
            .map(|(&shape, beta)| CauseHazard {
                shape,
                beta: beta.clone(),
            })
            .collect(),
    )?;
    Ok(law.cif(t, z))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth == 0 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth - 1) + recurse(f, mid, b, 0.5 * tol, depth - 1)
    }
    recurse(f, a, b, tol, 40)
}
