//! Problem parameters shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported ambient dimension. Hot loops use stack buffers of this size.
pub const MAX_DIM: usize = 8;

/// Dimension `n`, fractional order `s`, weight exponent `r` and norm exponents `p`, `q`.
///
/// `p` and `q` may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub n: usize,
    pub s: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default = "one")]
    pub q: f64,
}

fn one() -> f64 {
    1.0
}

impl ProblemParams {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        let params = Self { n, s, r: 0.0, p: 1.0, q: 1.0 };
        params.validate()?;
        Ok(params)
    }

    pub fn with_weight(mut self, r: f64) -> Result<Self> {
        self.r = r;
        self.validate()?;
        Ok(self)
    }

    pub fn with_exponents(mut self, p: f64, q: f64) -> Result<Self> {
        self.p = p;
        self.q = q;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n > MAX_DIM {
            return Err(Error::InvalidParams(format!(
                "dimension n = {} must lie in 2..={MAX_DIM}",
                self.n
            )));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParams(format!("s = {} must lie in (0, 1)", self.s)));
        }
        if !(self.r > -1.0 && self.r < 1.0) {
            return Err(Error::InvalidParams(format!("r = {} must lie in (-1, 1)", self.r)));
        }
        for (name, e) in [("p", self.p), ("q", self.q)] {
            if !(e >= 1.0) {
                return Err(Error::InvalidParams(format!("{name} = {e} must lie in [1, inf]")));
            }
        }
        Ok(())
    }

    /// The stricter window needed when first-order terms are present: `1/2 < s < 1`, `1-s <= r <= s`.
    pub fn validate_for_drift(&self) -> Result<()> {
        self.validate()?;
        if self.s <= 0.5 {
            return Err(Error::InvalidParams(format!(
                "a drift term requires s > 1/2, got s = {}",
                self.s
            )));
        }
        if self.r < 1.0 - self.s - 1e-12 || self.r > self.s + 1e-12 {
            return Err(Error::InvalidParams(format!(
                "weight exponent r = {} must satisfy 1 - s <= r <= s",
                self.r
            )));
        }
        Ok(())
    }

    /// Order of the operator, `alpha = 2s`.
    pub fn alpha(&self) -> f64 {
        2.0 * self.s
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        Ok(())
    }
}

/// Surface measure of the unit sphere in `R^n`, `2 pi^{n/2} / Gamma(n/2)`.
pub fn sphere_area(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half)
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

pub(crate) fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_params() {
        assert!(ProblemParams::new(1, 0.5).is_err());
        assert!(ProblemParams::new(2, 1.0).is_err());
        assert!(ProblemParams::new(2, 0.0).is_err());
        assert!(ProblemParams::new(2, 0.5).unwrap().with_weight(1.0).is_err());
        assert!(ProblemParams::new(2, 0.5).unwrap().with_exponents(0.5, 1.0).is_err());
        assert!(ProblemParams::new(2, 0.5).unwrap().with_exponents(f64::INFINITY, 2.0).is_ok());
    }

    #[test]
    fn drift_window() {
        let p = ProblemParams::new(2, 0.75).unwrap().with_weight(0.5).unwrap();
        assert!(p.validate_for_drift().is_ok());
        let p = ProblemParams::new(2, 0.75).unwrap().with_weight(0.1).unwrap();
        assert!(p.validate_for_drift().is_err());
        let p = ProblemParams::new(2, 0.4).unwrap().with_weight(0.5).unwrap();
        assert!(p.validate_for_drift().is_err());
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }
}
