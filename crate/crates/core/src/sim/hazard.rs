use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// λ₀(t) = σp(t+a)^{p−1} / (1 + b(t+a)^p), shifted so that Λ₀(0) = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardShape {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub sigma: f64,
}

impl HazardShape {
    pub fn new(a: f64, b: f64, p: f64, sigma: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && p > 0.0 && sigma > 0.0) || ![a, b, p, sigma].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "invalid hazard shape a={a}, b={b}, p={p}, sigma={sigma}"
            )));
        }
        Ok(Self { a, b, p, sigma })
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn hazard(&self, t: f64) -> f64 {
        let u = t + self.a;
        self.sigma * self.p * u.powf(self.p - 1.0) / (1.0 + self.b * u.powf(self.p))
    }

    pub fn cumhaz(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let up = (t + self.a).powf(self.p);
        let ap = self.a.powf(self.p);
        if self.b > 0.0 {
            self.sigma / self.b * ((self.b * up).ln_1p() - (self.b * ap).ln_1p())
        } else {
            self.sigma * (up - ap)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Increasing,
    Decreasing,
    UpAndDown,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Increasing, ShapeKind::Decreasing, ShapeKind::UpAndDown];

    /// (a, b, p).
    pub fn params(self) -> (f64, f64, f64) {
        match self {
            ShapeKind::Increasing => (0.0, 0.0, 3.0),
            ShapeKind::Decreasing => (0.4, 0.0, 0.5),
            ShapeKind::UpAndDown => (0.0, 0.75, 3.0),
        }
    }

    pub fn shape(self, sigma: f64) -> HazardShape {
        let (a, b, p) = self.params();
        HazardShape { a, b, p, sigma }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Increasing => "increasing",
            ShapeKind::Decreasing => "decreasing",
            ShapeKind::UpAndDown => "up-and-down",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "increasing" => Ok(ShapeKind::Increasing),
            "decreasing" => Ok(ShapeKind::Decreasing),
            "up-and-down" | "up-down" | "up-&-down" => Ok(ShapeKind::UpAndDown),
            other => Err(Error::InvalidInput(format!("unknown hazard shape `{other}`"))),
        }
    }
}
