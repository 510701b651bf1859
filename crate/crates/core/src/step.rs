//! Right-continuous piecewise-constant functions on [0, ∞).

use crate::error::{Error, Result};

/// `f(t) = initial` for `t < jump_times[0]`, and `values[k]` on
/// `[jump_times[k], jump_times[k + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    initial: f64,
    jump_times: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(initial: f64, jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "step function has {} jump times but {} values",
                jump_times.len(),
                values.len()
            )));
        }
        if jump_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("jump times must be strictly increasing".into()));
        }
        Ok(Self {
            initial,
            jump_times,
            values,
        })
    }

    /// Skips the ordering check; callers build from an [`crate::EventIndex`].
    pub(crate) fn from_sorted(initial: f64, jump_times: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(jump_times.len(), values.len());
        debug_assert!(jump_times.windows(2).all(|w| w[0] < w[1]));
        Self {
            initial,
            jump_times,
            values,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::from_sorted(value, Vec::new(), Vec::new())
    }

    pub fn initial_value(&self) -> f64 {
        self.initial
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&s| s <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// f(t−).
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&s| s < t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Δf(t) = f(t) − f(t−).
    pub fn jump_at(&self, t: f64) -> f64 {
        self.eval(t) - self.left_limit(t)
    }

    /// Pointwise sum on the union of both jump grids.
    pub fn add(&self, other: &StepFunction) -> StepFunction {
        let grid = merge_grids(&self.jump_times, &other.jump_times);
        let values = grid.iter().map(|&t| self.eval(t) + other.eval(t)).collect();
        Self::from_sorted(self.initial + other.initial, grid, values)
    }

    /// sup over t ≥ 0 of |f(t) − g(t)|, attained on the merged jump grid.
    pub fn sup_abs_diff(&self, other: &StepFunction) -> f64 {
        let grid = merge_grids(&self.jump_times, &other.jump_times);
        grid.iter()
            .map(|&t| (self.eval(t) - other.eval(t)).abs())
            .fold((self.initial - other.initial).abs(), f64::max)
    }

    pub fn is_nondecreasing(&self) -> bool {
        let mut prev = self.initial;
        self.values.iter().all(|&v| {
            let ok = v >= prev;
            prev = v;
            ok
        })
    }

    pub fn is_nonincreasing(&self) -> bool {
        let mut prev = self.initial;
        self.values.iter().all(|&v| {
            let ok = v <= prev;
            prev = v;
            ok
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StepFunction {
        Self::from_sorted(
            f(self.initial),
            self.jump_times.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

fn merge_grids(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(&x), Some(&y)) if y < x => {
                j += 1;
                y
            }
            (Some(&x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}
