//! Cubature over the unit ball, its complement and boundary shells, and the principal-value
//! fractional Laplacian.
//!
//! Everything is done in polar coordinates: around the origin for ball and shell integrals,
//! around the evaluation point for the complement and the PV operator. Radial lines use
//! composite Gauss–Legendre on panels graded geometrically (ratio 1/2) toward the unit sphere,
//! where integrands such as `(1-|x|)^{s-1}` blow up.

mod field;
pub mod line;
mod rules;

use std::cell::Cell;

use serde::{Deserialize, Serialize};

pub use field::{ScalarField, Smoothness, Support, Symmetry, VectorField};
pub use line::{Diverges, LineRule, MultiLine};
pub use rules::{GaussLegendre, SphereRule};

use crate::error::{Error, Result};
use crate::params::{dot, norm_sq, sphere_area, ProblemParams, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    TensorGrid,
    MonteCarlo,
}

/// Resolution and geometry knobs shared by all integrators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    /// Gauss–Legendre order on every radial panel.
    pub radial_points: usize,
    /// Directions per great circle (tensor scheme).
    pub angular_points: usize,
    /// Directions for the Monte Carlo sphere rule.
    pub mc_samples: usize,
    /// Number of geometrically graded panels toward a singular endpoint.
    pub grading_levels: usize,
    /// Radius inside which the PV integral uses the symmetric second difference.
    pub pv_inner_radius: f64,
    /// Radius of the polar disc around the evaluation point in Green potentials.
    pub split_radius: f64,
    /// Complement integrals use dyadic shells out to this radius, then a fitted power-law tail.
    pub tail_radius: f64,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::TensorGrid,
            radial_points: 12,
            angular_points: 64,
            mc_samples: 4096,
            grading_levels: 14,
            pv_inner_radius: 0.05,
            split_radius: 0.25,
            tail_radius: 64.0,
            seed: 0x5eed,
        }
    }
}

impl QuadratureSpec {
    /// Tensor grids for `n = 2, 3`, Monte Carlo directions beyond.
    pub fn default_for(n: usize) -> Self {
        let scheme = if n <= 3 { Scheme::TensorGrid } else { Scheme::MonteCarlo };
        let angular_points = if n == 3 { 32 } else { 64 };
        Self { scheme, angular_points, ..Self::default() }
    }

    /// Multiply radial and angular resolution by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        Self {
            radial_points: self.radial_points * factor,
            angular_points: self.angular_points * factor,
            mc_samples: self.mc_samples * factor * factor,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.radial_points == 0 || self.angular_points == 0 || self.mc_samples == 0 {
            return bad("quadrature point counts must be >= 1".into());
        }
        if self.grading_levels < 2 {
            return bad("grading_levels must be >= 2".into());
        }
        if !(self.pv_inner_radius > 0.0 && self.pv_inner_radius < self.split_radius && self.split_radius < 1.0) {
            return bad(format!(
                "need 0 < pv_inner_radius ({}) < split_radius ({}) < 1",
                self.pv_inner_radius, self.split_radius
            ));
        }
        if !(self.tail_radius >= 2.0) {
            return bad(format!("tail_radius = {} must be >= 2", self.tail_radius));
        }
        Ok(())
    }
}

/// Records the first point where an integrand is not finite.
#[derive(Default)]
pub(crate) struct FiniteGuard {
    bad: Cell<Option<[f64; MAX_DIM]>>,
    dim: Cell<usize>,
}

impl FiniteGuard {
    #[inline]
    pub(crate) fn check(&self, v: f64, x: &[f64]) -> f64 {
        if v.is_finite() {
            v
        } else {
            if self.bad.get().is_none() {
                let mut p = [0.0; MAX_DIM];
                p[..x.len()].copy_from_slice(x);
                self.bad.set(Some(p));
                self.dim.set(x.len());
            }
            0.0
        }
    }

    pub(crate) fn finish(&self) -> Result<()> {
        match self.bad.get() {
            Some(p) => Err(Error::NonFinite { at: p[..self.dim.get()].to_vec() }),
            None => Ok(()),
        }
    }
}

/// Distance from `c` (inside the unit ball) along the unit direction `dir` to the unit sphere.
#[inline]
pub(crate) fn exit_distance(c: &[f64], dir: &[f64]) -> f64 {
    let b = dot(c, dir);
    let disc = b * b + (1.0 - norm_sq(c));
    -b + disc.max(0.0).sqrt()
}

#[inline]
pub(crate) fn along(c: &[f64], dir: &[f64], r: f64, out: &mut [f64; MAX_DIM]) {
    for k in 0..c.len() {
        out[k] = c[k] + r * dir[k];
    }
}

/// Quadrature rules built once from a [`QuadratureSpec`] for a fixed dimension.
#[derive(Debug, Clone)]
pub struct Cubature {
    n: usize,
    spec: QuadratureSpec,
    line: LineRule,
    sphere: SphereRule,
}

impl Cubature {
    pub fn new(n: usize, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let sphere = match spec.scheme {
            Scheme::TensorGrid if n <= 3 => SphereRule::tensor(n, spec.angular_points),
            _ => SphereRule::monte_carlo(n, spec.mc_samples, spec.seed),
        };
        Ok(Self {
            n,
            spec: spec.clone(),
            line: LineRule::new(spec.radial_points, spec.grading_levels),
            sphere,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    pub fn line(&self) -> &LineRule {
        &self.line
    }

    pub fn sphere(&self) -> &SphereRule {
        &self.sphere
    }

    fn check_dim(&self, f: &ScalarField) -> Result<()> {
        if f.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: f.dim() });
        }
        Ok(())
    }

    /// `int_{a <= |x| < 1} f dx` with panels graded toward the unit sphere.
    fn annulus_to_boundary(&self, f: &ScalarField, a: f64) -> Result<f64> {
        self.check_dim(f)?;
        let n = self.n;
        let guard = FiniteGuard::default();
        let mut buf = [0.0; MAX_DIM];
        let radial_dirs: Vec<(&[f64], f64)> = if f.is_radial() {
            vec![(&UNIT_AXIS[..n], sphere_area(n))]
        } else {
            self.sphere.iter().collect()
        };
        let origin = [0.0; MAX_DIM];
        let mut radial = |r: f64| -> f64 {
            let jac = r.powi(n as i32 - 1);
            let mut acc = 0.0;
            for &(dir, w) in &radial_dirs {
                along(&origin[..n], dir, r, &mut buf);
                acc += w * guard.check(f.eval(&buf[..n]), &buf[..n]);
            }
            acc * jac
        };
        let gl = self.line.gl();
        let panels = line::panels_toward_end(a, 1.0, self.line.levels());
        let mut sums = Vec::with_capacity(panels.len());
        let mut mass = Vec::with_capacity(panels.len());
        for &(lo, hi) in &panels {
            let mut s = 0.0;
            let mut m = 0.0;
            for (t, w) in gl.mapped(lo, hi) {
                let v = w * radial(t);
                s += v;
                m += v.abs();
            }
            sums.push(s);
            mass.push(m);
        }
        let start = panels.last().map_or(a, |p| p.1);
        let rem = line::end_remainder(&sums, &mass, || gl.integrate(start, 1.0, &mut radial));
        guard.finish()?;
        let rem = rem.map_err(|Diverges(q)| Error::Divergent { ratio: q })?;
        Ok(sums.iter().sum::<f64>() + rem)
    }

    /// `int_{B_1} f dx`.
    pub fn ball(&self, f: &ScalarField) -> Result<f64> {
        self.annulus_to_boundary(f, 0.0)
    }

    /// `int_{1-eps <= |x| < 1} f dx`.
    pub fn shell(&self, f: &ScalarField, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Precondition(format!("shell thickness eps = {eps} must lie in (0, 1)")));
        }
        self.annulus_to_boundary(f, 1.0 - eps)
    }

    /// `int_{R^n \ B_1} f dy`.
    pub fn complement(&self, f: &ScalarField) -> Result<f64> {
        self.complement_from(&[0.0; MAX_DIM][..self.n], f)
    }

    /// `int_{R^n \ B_1} f dy` in polar coordinates centred at `center` (`|center| < 1`).
    ///
    /// Each ray is graded toward its exit point from the ball and continued with dyadic shells
    /// to `tail_radius`, beyond which the power law fitted on the last two shells is summed.
    pub fn complement_from(&self, center: &[f64], f: &ScalarField) -> Result<f64> {
        self.check_dim(f)?;
        let n = self.n;
        if center.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: center.len() });
        }
        if !(norm_sq(center) < 1.0) {
            return Err(Error::OutOfDomain("complement integrals need an interior centre".into()));
        }
        if f.support() == Support::BallOnly {
            return Ok(0.0);
        }
        let guard = FiniteGuard::default();
        let centred_radial = f.is_radial() && norm_sq(center) == 0.0;
        let dirs: Vec<(&[f64], f64)> = if centred_radial {
            vec![(&UNIT_AXIS[..n], sphere_area(n))]
        } else {
            self.sphere.iter().collect()
        };
        let mut total = 0.0;
        let mut buf = [0.0; MAX_DIM];
        for (dir, w) in dirs {
            let exit = exit_distance(center, dir);
            let mut h = |r: f64| {
                along(center, dir, r, &mut buf);
                guard.check(f.eval(&buf[..n]), &buf[..n]) * r.powi(n as i32 - 1)
            };
            let near_len = exit.max(0.5);
            let near = self
                .line
                .toward_start(exit, exit + near_len, &mut h)
                .map_err(|Diverges(q)| Error::Divergent { ratio: q })?;
            let far = self
                .line
                .to_infinity(exit + near_len, self.spec.tail_radius, &mut h)
                .map_err(|Diverges(q)| Error::SlowDecay { exponent: n as f64 - q.log2(), required: n as f64 })?;
            total += w * (near + far);
        }
        guard.finish()?;
        Ok(total)
    }

    /// `(-Delta)^s u(x)` by the principal-value integral with normalization `c_pv`.
    ///
    /// Inside `|z| < pv_inner_radius` the symmetric second difference
    /// `u(x) - (u(x+z) + u(x-z))/2` is integrated; outside, the one-sided difference is split as
    /// `u(x) |S^{n-1}| rho_0^{-2s}/(2s) - int u(x+z) |z|^{-n-2s} dz`.
    pub fn frac_laplacian(&self, u: &ScalarField, x: &[f64], s: f64, c_pv: f64) -> Result<f64> {
        self.check_dim(u)?;
        let n = self.n;
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x.len() });
        }
        if u.smoothness() < Smoothness::C1_1 {
            return Err(Error::InsufficientSmoothness {
                found: format!("{:?}", u.smoothness()),
                required: "C1_1".into(),
            });
        }
        let rho0 = self.spec.pv_inner_radius;
        let dist = 1.0 - norm_sq(x).sqrt();
        if dist < 2.0 * rho0 {
            return Err(Error::TooCloseToBoundary { distance: dist, required: 2.0 * rho0 });
        }
        let guard = FiniteGuard::default();
        let ux = guard.check(u.eval(x), x);
        let mut plus = [0.0; MAX_DIM];
        let mut minus = [0.0; MAX_DIM];

        // Near field, all directions share the radial panels.
        let gl = self.line.gl();
        let mut near_radial = |r: f64| -> f64 {
            let mut acc = 0.0;
            for (dir, w) in self.sphere.iter() {
                along(x, dir, r, &mut plus);
                along(x, dir, -r, &mut minus);
                let a = guard.check(u.eval(&plus[..n]), &plus[..n]);
                let b = guard.check(u.eval(&minus[..n]), &minus[..n]);
                acc += w * (ux - 0.5 * (a + b));
            }
            acc * r.powf(-1.0 - 2.0 * s)
        };
        let panels = line::panels_toward_start(0.0, rho0, self.line.levels());
        let mut sums = Vec::with_capacity(panels.len());
        let mut mass = Vec::with_capacity(panels.len());
        for &(lo, hi) in &panels {
            let mut acc = 0.0;
            let mut m = 0.0;
            for (t, w) in gl.mapped(lo, hi) {
                let v = w * near_radial(t);
                acc += v;
                m += v.abs();
            }
            sums.push(acc);
            mass.push(m);
        }
        let stop = panels.last().map_or(rho0, |p| p.0);
        let near_rem = line::end_remainder(&sums, &mass, || gl.integrate(0.0, stop, &mut near_radial))
            .map_err(|Diverges(q)| Error::NonIntegrable { ratio: q })?;
        let near = sums.iter().sum::<f64>() + near_rem;

        // Far field.
        let kernel_mass = sphere_area(n) * rho0.powf(-2.0 * s) / (2.0 * s);
        let mut far = 0.0;
        for (dir, w) in self.sphere.iter() {
            let exit = exit_distance(x, dir);
            let mut h = |r: f64| {
                along(x, dir, r, &mut plus);
                guard.check(u.eval(&plus[..n]), &plus[..n]) * r.powf(-1.0 - 2.0 * s)
            };
            let mut ray = self
                .line
                .dyadic_then_end(rho0, exit, &mut h)
                .map_err(|Diverges(q)| Error::Divergent { ratio: q })?;
            if u.support() == Support::Global {
                let near_len = exit.max(0.5);
                ray += self
                    .line
                    .toward_start(exit, exit + near_len, &mut h)
                    .map_err(|Diverges(q)| Error::Divergent { ratio: q })?;
                ray += self
                    .line
                    .to_infinity(exit + near_len, self.spec.tail_radius, &mut h)
                    .map_err(|Diverges(q)| Error::SlowDecay {
                        exponent: n as f64 - q.log2(),
                        required: n as f64,
                    })?;
            }
            far += w * ray;
        }
        guard.finish()?;
        Ok(c_pv * (near + ux * kernel_mass - far))
    }
}

const UNIT_AXIS: [f64; MAX_DIM] = {
    let mut a = [0.0; MAX_DIM];
    a[0] = 1.0;
    a
};

/// `int_{B_1} f dx`.
pub fn integrate_ball(f: &ScalarField, spec: &QuadratureSpec) -> Result<f64> {
    Cubature::new(f.dim(), spec)?.ball(f)
}

/// `int_{R^n \ B_1} f dy`.
pub fn integrate_complement(f: &ScalarField, spec: &QuadratureSpec) -> Result<f64> {
    Cubature::new(f.dim(), spec)?.complement(f)
}

/// `int_{1-eps <= |x| < 1} f dx`.
pub fn integrate_shell(f: &ScalarField, eps: f64, spec: &QuadratureSpec) -> Result<f64> {
    Cubature::new(f.dim(), spec)?.shell(f, eps)
}

/// `(-Delta)^s u(x) = C_{n,s} PV int (u(x) - u(y)) |x-y|^{-n-2s} dy` at an interior point.
pub fn frac_laplacian_pv(u: &ScalarField, x: &[f64], params: &ProblemParams, spec: &QuadratureSpec) -> Result<f64> {
    params.validate()?;
    params.check_point(x)?;
    let c_pv = crate::kernels::constants(params).c_pv;
    Cubature::new(params.n, spec)?.frac_laplacian(u, x, params.s, c_pv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn ball_integrals() {
        let one = ScalarField::new(2, |_| 1.0);
        assert!((integrate_ball(&one, &spec()).unwrap() - PI).abs() < 1e-8);
        let odd = ScalarField::new(2, |x| x[0]);
        assert!(integrate_ball(&odd, &spec()).unwrap().abs() < 1e-10);
        let r2 = ScalarField::new(2, |x| x[0] * x[0] + x[1] * x[1]);
        assert!((integrate_ball(&r2, &spec()).unwrap() - PI / 2.0).abs() < 1e-10);
        let radial = ScalarField::new(3, |x| norm_sq(x)).with_symmetry(Symmetry::Radial);
        assert!((integrate_ball(&radial, &spec()).unwrap() - 4.0 * PI / 5.0).abs() < 1e-10);
    }

    #[test]
    fn shells() {
        let one = ScalarField::new(2, |_| 1.0);
        let v = integrate_shell(&one, 0.1, &spec()).unwrap();
        assert!((v - PI * (1.0 - 0.81)).abs() < 1e-10);
        assert!(integrate_shell(&one, 1.5, &spec()).is_err());
        let blowup = ScalarField::new(2, |x| 1.0 / (1.0 - norm_sq(x).sqrt()));
        assert!(matches!(integrate_ball(&blowup, &spec()), Err(Error::Divergent { .. })));
    }

    #[test]
    fn complements() {
        let s = 0.5;
        let f = ScalarField::new(2, move |y| norm_sq(y).sqrt().powf(-(2.0 + 2.0 * s)));
        let v = integrate_complement(&f, &spec()).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-9, "{v}");
        let slow = ScalarField::new(2, |y| 1.0 / norm_sq(y));
        assert!(matches!(integrate_complement(&slow, &spec()), Err(Error::SlowDecay { .. })));
        let annulus = ScalarField::new(2, |y| if norm_sq(y) < 4.0 { 3.0 } else { 0.0 });
        let v = integrate_complement(&annulus, &spec()).unwrap();
        assert!((v - 3.0 * 3.0 * PI).abs() < 1e-6, "{v}");
    }

    #[test]
    fn pv_of_constant_vanishes() {
        let params = ProblemParams::new(2, 0.75).unwrap();
        let one = ScalarField::constant(2, 1.0);
        for x in [[0.0, 0.0], [0.3, -0.5]] {
            let v = frac_laplacian_pv(&one, &x, &params, &spec()).unwrap();
            assert!(v.abs() < 1e-10, "{v}");
        }
        assert!(matches!(
            frac_laplacian_pv(&one, &[0.95, 0.0], &params, &spec()),
            Err(Error::TooCloseToBoundary { .. })
        ));
    }

    #[test]
    fn nonfinite_detected() {
        let f = ScalarField::new(2, |x| if x[0] > 0.5 { f64::NAN } else { 1.0 });
        assert!(matches!(integrate_ball(&f, &spec()), Err(Error::NonFinite { .. })));
    }
}
