use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::norm_sq;

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Where a field may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    Global,
    /// Identically zero outside the open unit ball.
    BallOnly,
}

/// Declared interior regularity. Ordered from roughest to smoothest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Smoothness {
    C0,
    C1,
    C1_1,
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    None,
    /// Depends on `|x|` only.
    Radial,
}

/// A deterministic real function on `R^n` with support, smoothness and symmetry metadata.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    eval: Evaluator,
    support: Support,
    smoothness: Smoothness,
    symmetry: Symmetry,
    label: Option<String>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("support", &self.support)
            .field("smoothness", &self.smoothness)
            .field("symmetry", &self.symmetry)
            .field("label", &self.label)
            .finish()
    }
}

impl ScalarField {
    /// A globally supported field, assumed smooth until told otherwise.
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Arc::new(f),
            support: Support::Global,
            smoothness: Smoothness::Smooth,
            symmetry: Symmetry::None,
            label: None,
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, move |_| c).with_symmetry(Symmetry::Radial).with_label(format!("{c}"))
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    /// Restrict to the open unit ball: the result is exactly zero for `|x| >= 1`.
    pub fn ball_only(mut self) -> Self {
        if self.support == Support::BallOnly {
            return self;
        }
        let inner = self.eval.clone();
        self.eval = Arc::new(move |x: &[f64]| if norm_sq(x) < 1.0 { inner(x) } else { 0.0 });
        self.support = Support::BallOnly;
        self
    }

    /// Mark a field as already vanishing outside the ball without wrapping its evaluator.
    pub(crate) fn assume_ball_only(mut self) -> Self {
        self.support = Support::BallOnly;
        self
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn with_symmetry(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = symmetry;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Evaluate after checking the point dimension.
    pub fn at(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok(self.eval(x))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn is_radial(&self) -> bool {
        self.symmetry == Symmetry::Radial
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Pointwise transform keeping support when `g(0) = 0`.
    pub fn map(&self, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let inner = self.eval.clone();
        let keeps_zero = g(0.0) == 0.0;
        let mut out = Self::new(self.dim, move |x| g(inner(x)))
            .with_symmetry(self.symmetry)
            .with_smoothness(Smoothness::C0);
        if keeps_zero && self.support == Support::BallOnly {
            out = out.assume_ball_only();
        }
        out
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        let mut out = Self::new(self.dim, move |x| c * inner(x))
            .with_symmetry(self.symmetry)
            .with_smoothness(self.smoothness);
        if self.support == Support::BallOnly {
            out = out.assume_ball_only();
        }
        out
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let f = self.eval.clone();
        let g = other.eval.clone();
        let mut out = Self::new(self.dim, move |x| a * f(x) + b * g(x))
            .with_smoothness(self.smoothness.min(other.smoothness));
        if self.symmetry == Symmetry::Radial && other.symmetry == Symmetry::Radial {
            out = out.with_symmetry(Symmetry::Radial);
        }
        if self.support == Support::BallOnly && other.support == Support::BallOnly {
            out = out.assume_ball_only();
        }
        Ok(out)
    }
}

/// `n` scalar components.
#[derive(Debug, Clone)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let n = components.len();
        if let Some(bad) = components.iter().find(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.dim() });
        }
        Ok(Self { components })
    }

    pub fn zero(n: usize) -> Self {
        Self { components: (0..n).map(|_| ScalarField::zero(n)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_only_is_zero_outside() {
        let f = ScalarField::constant(2, 3.0).ball_only();
        assert_eq!(f.eval(&[0.5, 0.5]), 3.0);
        assert_eq!(f.eval(&[1.0, 0.0]), 0.0);
        assert_eq!(f.eval(&[2.0, 0.1]), 0.0);
        assert_eq!(f.support(), Support::BallOnly);
    }

    #[test]
    fn vector_dimension_checked() {
        assert!(VectorField::new(vec![ScalarField::zero(2)]).is_err());
        assert!(VectorField::new(vec![ScalarField::zero(2), ScalarField::zero(2)]).is_ok());
        assert!(ScalarField::zero(2).at(&[0.0]).is_err());
    }
}
