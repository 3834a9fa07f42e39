//! Green potentials `G*f`, Poisson extensions `P*g` and the explicit singular solution
//! `C(n,s) (1-|x|^2)_+^{s-1}` of the homogeneous problem.
//!
//! Green potentials are integrated in polar coordinates centred at the evaluation point: a disc
//! of radius `min(split_radius, dist(x, boundary)/2)` whose panels are graded toward the kernel
//! singularity, and rays from its edge to the unit sphere graded toward the exit point.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{constants, BallKernels, KernelConstants};
use crate::params::{norm_sq, sphere_area, ProblemParams, MAX_DIM};
use crate::quadrature::{
    along, exit_distance, Cubature, Diverges, FiniteGuard, MultiLine, QuadratureSpec, ScalarField, Smoothness,
    SphereRule, Support, Symmetry,
};

const AXIS: [f64; MAX_DIM] = {
    let mut a = [0.0; MAX_DIM];
    a[0] = 1.0;
    a
};

fn non_integrable(Diverges(q): Diverges) -> Error {
    Error::NonIntegrable { ratio: q }
}

/// Potential operators for fixed parameters and quadrature.
#[derive(Debug, Clone)]
pub struct Potentials {
    kernels: BallKernels,
    cub: Cubature,
}

impl Potentials {
    pub fn new(params: &ProblemParams, spec: &QuadratureSpec) -> Result<Self> {
        Ok(Self { kernels: BallKernels::new(params)?, cub: Cubature::new(params.n, spec)? })
    }

    /// Same operators with explicitly supplied normalization constants.
    pub fn with_constants(params: &ProblemParams, consts: KernelConstants, spec: &QuadratureSpec) -> Result<Self> {
        params.validate()?;
        Ok(Self { kernels: BallKernels::with_constants(params, consts), cub: Cubature::new(params.n, spec)? })
    }

    pub fn params(&self) -> &ProblemParams {
        self.kernels.params()
    }

    pub fn kernels(&self) -> &BallKernels {
        &self.kernels
    }

    pub fn cubature(&self) -> &Cubature {
        &self.cub
    }

    fn check(&self, f: &ScalarField, x: &[f64]) -> Result<()> {
        let n = self.params().n;
        if f.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: f.dim() });
        }
        self.params().check_point(x)
    }

    /// `(G*f)(x) = int_{B_1} G(x,y) f(y) dy`, exactly `0` for `|x| >= 1`.
    pub fn green(&self, f: &ScalarField, x: &[f64]) -> Result<f64> {
        self.check(f, x)?;
        if norm_sq(x) >= 1.0 {
            return Ok(0.0);
        }
        let mut out = [0.0];
        self.green_impl(f, x, false, &mut out)?;
        Ok(out[0])
    }

    /// `grad (G*f)(x)`; needs `s > 1/2` so that `|grad_x G| ~ |x-y|^{2s-n-1}` is integrable.
    pub fn green_gradient(&self, f: &ScalarField, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.green_with_gradient(f, x)?.1)
    }

    /// Value and gradient of `G*f` at an interior point from one pass over the nodes.
    pub fn green_with_gradient(&self, f: &ScalarField, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(f, x)?;
        let s = self.params().s;
        if s <= 0.5 {
            return Err(Error::InvalidParams(format!("the gradient of G*f needs s > 1/2, got s = {s}")));
        }
        if norm_sq(x) >= 1.0 {
            return Err(Error::OutOfDomain("the gradient of G*f is evaluated at interior points".into()));
        }
        let n = self.params().n;
        let mut out = vec![0.0; n + 1];
        self.green_impl(f, x, true, &mut out)?;
        let value = out[0];
        out.remove(0);
        Ok((value, out))
    }

    fn green_impl(&self, f: &ScalarField, x: &[f64], with_grad: bool, out: &mut [f64]) -> Result<()> {
        let n = self.params().n;
        let width = out.len();
        let kern = &self.kernels;
        let spec = self.cub.spec();
        let dist = 1.0 - norm_sq(x).sqrt();
        let inner_radius = spec.split_radius.min(0.5 * dist);
        let centred_radial = !with_grad && f.is_radial() && norm_sq(x) == 0.0;
        let dirs: Vec<(&[f64], f64)> = if centred_radial {
            vec![(&AXIS[..n], sphere_area(n))]
        } else {
            self.cub.sphere().iter().collect()
        };
        let multi = MultiLine::new(self.cub.line(), width);
        let guard = FiniteGuard::default();
        let mut y = [0.0; MAX_DIM];
        let mut grad = [0.0; MAX_DIM];

        let mut accumulate = |dir: &[f64], w: f64, r: f64, o: &mut [f64], y: &mut [f64; MAX_DIM]| {
            along(x, dir, r, y);
            let yv = &y[..n];
            if norm_sq(yv) >= 1.0 {
                return;
            }
            let fy = guard.check(f.eval(yv), yv);
            if fy == 0.0 {
                return;
            }
            if with_grad {
                let g = kern.green_and_gradient_unchecked(x, yv, &mut grad[..n]);
                o[0] += w * fy * g;
                for k in 0..n {
                    o[1 + k] += w * fy * grad[k];
                }
            } else {
                o[0] += w * fy * kern.green_unchecked(x, yv);
            }
        };

        multi
            .toward_start(
                0.0,
                inner_radius,
                |r, o| {
                    o.iter_mut().for_each(|v| *v = 0.0);
                    for &(dir, w) in &dirs {
                        accumulate(dir, w, r, o, &mut y);
                    }
                    let jac = r.powi(n as i32 - 1);
                    o.iter_mut().for_each(|v| *v *= jac);
                },
                out,
            )
            .map_err(non_integrable)?;

        let mut ray = vec![0.0; width];
        for &(dir, w) in &dirs {
            let exit = exit_distance(x, dir);
            ray.iter_mut().for_each(|v| *v = 0.0);
            multi
                .dyadic_then_end(
                    inner_radius,
                    exit,
                    |r, o| {
                        o.iter_mut().for_each(|v| *v = 0.0);
                        accumulate(dir, 1.0, r, o, &mut y);
                        let jac = r.powi(n as i32 - 1);
                        o.iter_mut().for_each(|v| *v *= jac);
                    },
                    &mut ray,
                )
                .map_err(non_integrable)?;
            for (o, v) in out.iter_mut().zip(&ray) {
                *o += w * v;
            }
        }
        guard.finish()
    }

    /// Linear quadrature for `G*h` and `grad G*h` at an interior point `x`.
    ///
    /// Calls `visit(y, w, gw)` for every node `y` in the ball, so that `(G*h)(x) ~ sum w h(y)` and
    /// `grad (G*h)(x) ~ sum gw h(y)`. Same panels as [`Potentials::green_with_gradient`] but the
    /// graded end pieces are integrated directly instead of extrapolated.
    pub fn green_nodes(&self, x: &[f64], mut visit: impl FnMut(&[f64], f64, &[f64])) -> Result<()> {
        let n = self.params().n;
        self.params().check_point(x)?;
        if self.params().s <= 0.5 {
            return Err(Error::InvalidParams(format!(
                "the gradient of G*f needs s > 1/2, got s = {}",
                self.params().s
            )));
        }
        if norm_sq(x) >= 1.0 {
            return Err(Error::OutOfDomain("Green nodes are built at interior points".into()));
        }
        let kern = &self.kernels;
        let spec = self.cub.spec();
        let dist = 1.0 - norm_sq(x).sqrt();
        let inner_radius = spec.split_radius.min(0.5 * dist);
        let line = self.cub.line();
        let mut y = [0.0; MAX_DIM];
        let mut grad = [0.0; MAX_DIM];
        let mut emit = |dir: &[f64], w: f64, r: f64, y: &mut [f64; MAX_DIM]| {
            along(x, dir, r, y);
            let yv = &y[..n];
            if norm_sq(yv) >= 1.0 {
                return;
            }
            let g = kern.green_and_gradient_unchecked(x, yv, &mut grad[..n]);
            let w = w * r.powi(n as i32 - 1);
            for v in grad[..n].iter_mut() {
                *v *= w;
            }
            visit(yv, w * g, &grad[..n]);
        };
        let inner = line.linear_toward_start(0.0, inner_radius);
        for (dir, wd) in self.cub.sphere().iter() {
            for &(r, wr) in &inner {
                emit(dir, wd * wr, r, &mut y);
            }
            for (r, wr) in line.linear_dyadic_then_end(inner_radius, exit_distance(x, dir)) {
                emit(dir, wd * wr, r, &mut y);
            }
        }
        Ok(())
    }

    /// `(P*g)(x) = int_{|y|>1} P(x,y) g(y) dy` inside the ball, `g(x)` outside.
    pub fn poisson(&self, g: &ScalarField, x: &[f64]) -> Result<f64> {
        self.check(g, x)?;
        if norm_sq(x) >= 1.0 {
            return Ok(g.eval(x));
        }
        let n = self.params().n;
        let kern = self.kernels;
        let datum = g.clone();
        let mut centre = [0.0; MAX_DIM];
        centre[..n].copy_from_slice(x);
        let mut integrand = ScalarField::new(n, move |y| {
            let y2 = norm_sq(y);
            if y2 <= 1.0 {
                return 0.0;
            }
            kern.poisson_unchecked(&centre[..n], y) * datum.eval(y)
        });
        if g.is_radial() && norm_sq(x) == 0.0 {
            integrand = integrand.with_symmetry(Symmetry::Radial);
        }
        self.cub.complement_from(x, &integrand).map_err(|e| match e {
            Error::Divergent { ratio } => Error::NonIntegrable { ratio },
            other => other,
        })
    }
}

/// `(G*f)(x)`.
pub fn green_potential(f: &ScalarField, x: &[f64], params: &ProblemParams, spec: &QuadratureSpec) -> Result<f64> {
    Potentials::new(params, spec)?.green(f, x)
}

/// `grad (G*f)(x)` at an interior point.
pub fn green_potential_gradient(
    f: &ScalarField,
    x: &[f64],
    params: &ProblemParams,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    Potentials::new(params, spec)?.green_gradient(f, x)
}

/// `(P*g)(x)`.
pub fn poisson_extension(g: &ScalarField, x: &[f64], params: &ProblemParams, spec: &QuadratureSpec) -> Result<f64> {
    Potentials::new(params, spec)?.poisson(g, x)
}

/// `c(n,s) int_{S^{n-1}} (1-|x|^2)^s |x-y|^{-n} dH_y` evaluated with the given sphere rule.
pub fn surface_poisson_integral(x: &[f64], params: &ProblemParams, rule: &SphereRule) -> Result<f64> {
    params.validate()?;
    params.check_point(x)?;
    if rule.dim() != params.n {
        return Err(Error::DimensionMismatch { expected: params.n, found: rule.dim() });
    }
    let x2 = norm_sq(x);
    if x2 >= 1.0 {
        return Err(Error::OutOfDomain("the surface integral is taken at interior points".into()));
    }
    let n = params.n as i32;
    let sum: f64 = rule
        .iter()
        .map(|(dir, w)| {
            let d2: f64 = x.iter().zip(dir).map(|(a, b)| (a - b) * (a - b)).sum();
            w / d2.sqrt().powi(n)
        })
        .sum();
    Ok(constants(params).c_poisson * (1.0 - x2).powf(params.s) * sum)
}

/// `C(n,s)`, the surface integral at the origin.
pub fn nontrivial_constant(params: &ProblemParams) -> f64 {
    constants(params).c_boundary
}

/// `C(n,s) (1-|x|^2)^{s-1}` for `|x| < 1` and `0` otherwise.
pub fn nontrivial_solution(x: &[f64], params: &ProblemParams) -> f64 {
    singular_profile(nontrivial_constant(params), params.s, norm_sq(x))
}

#[inline]
fn singular_profile(c: f64, s: f64, x2: f64) -> f64 {
    if x2 < 1.0 {
        c * (1.0 - x2).powf(s - 1.0)
    } else {
        0.0
    }
}

/// The explicit singular solution as a field.
pub fn nontrivial_solution_field(params: &ProblemParams) -> ScalarField {
    let c = nontrivial_constant(params);
    let s = params.s;
    ScalarField::new(params.n, move |x| singular_profile(c, s, norm_sq(x)))
        .with_symmetry(Symmetry::Radial)
        .with_label(format!("{c}*inside((1 - |x|^2)^({s} - 1))"))
        .assume_ball_only()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Green,
    Poisson,
}

/// A potential viewed as a field: `G*f` (zero outside the ball) or `P*g` (equal to `g` outside).
///
/// Quadrature failures at a point show up as NaN, which the integrators report as `NonFinite`.
#[derive(Debug, Clone)]
pub struct PotentialField {
    kind: PotentialKind,
    source: ScalarField,
    constants: KernelConstants,
    field: ScalarField,
}

impl PotentialField {
    pub fn green(f: &ScalarField, params: &ProblemParams, spec: &QuadratureSpec) -> Result<Self> {
        let ops = Arc::new(Potentials::new(params, spec)?);
        let density = f.clone();
        let o = ops.clone();
        let mut field = ScalarField::new(params.n, move |x| o.green(&density, x).unwrap_or(f64::NAN))
            .with_smoothness(if f.smoothness() == Smoothness::Smooth { Smoothness::Smooth } else { Smoothness::C0 })
            .assume_ball_only();
        if f.is_radial() {
            field = field.with_symmetry(Symmetry::Radial);
        }
        if let Some(l) = f.label() {
            field = field.with_label(format!("G*({l})"));
        }
        Ok(Self { kind: PotentialKind::Green, source: f.clone(), constants: *ops.kernels.constants(), field })
    }

    pub fn poisson(g: &ScalarField, params: &ProblemParams, spec: &QuadratureSpec) -> Result<Self> {
        let ops = Arc::new(Potentials::new(params, spec)?);
        let datum = g.clone();
        let o = ops.clone();
        let mut field = ScalarField::new(params.n, move |x| o.poisson(&datum, x).unwrap_or(f64::NAN))
            .with_smoothness(Smoothness::C0);
        if g.is_radial() {
            field = field.with_symmetry(Symmetry::Radial);
        }
        if let Some(l) = g.label() {
            field = field.with_label(format!("P*({l})"));
        }
        Ok(Self { kind: PotentialKind::Poisson, source: g.clone(), constants: *ops.kernels.constants(), field })
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn source(&self) -> &ScalarField {
        &self.source
    }

    pub fn constants(&self) -> &KernelConstants {
        &self.constants
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }
}

/// Smooth interpolant of `G*f` for a radial density `f`.
///
/// Writes `G*f = (1-|x|^2)_+^s w(|x|^2)` and interpolates `w` at `nodes` Chebyshev points of
/// `[0, 1]`. The result is cheap to evaluate, so principal-value integrals of it are affordable.
pub fn radial_green_interpolant(ops: &Potentials, f: &ScalarField, nodes: usize) -> Result<ScalarField> {
    if !f.is_radial() {
        return Err(Error::Precondition("radial interpolation needs a radial density".into()));
    }
    let n = ops.params().n;
    let s = ops.params().s;
    let m = nodes.max(2);
    let mut t = Vec::with_capacity(m);
    let mut w = Vec::with_capacity(m);
    let mut bary = Vec::with_capacity(m);
    let mut x = vec![0.0; n];
    for j in 0..m {
        let angle = PI * (j as f64 + 0.5) / m as f64;
        let tj = 0.5 * (1.0 - angle.cos());
        x[0] = tj.sqrt();
        let u = ops.green(f, &x)?;
        t.push(tj);
        w.push(u / (1.0 - tj).powf(s));
        bary.push(if j % 2 == 0 { angle.sin() } else { -angle.sin() });
    }
    let profile = move |tx: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..t.len() {
            let d = tx - t[j];
            if d == 0.0 {
                return w[j];
            }
            let c = bary[j] / d;
            num += c * w[j];
            den += c;
        }
        num / den
    };
    let label = f.label().map(|l| format!("G*({l})"));
    let mut field = ScalarField::new(n, move |x| {
        let x2 = norm_sq(x);
        if x2 < 1.0 {
            (1.0 - x2).powf(s) * profile(x2)
        } else {
            0.0
        }
    })
    .with_symmetry(Symmetry::Radial)
    .assume_ball_only();
    if let Some(l) = label {
        field = field.with_label(l);
    }
    debug_assert_eq!(field.support(), Support::BallOnly);
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::getoor_constant;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn zero_density_and_outside() {
        let params = ProblemParams::new(2, 0.75).unwrap();
        let ops = Potentials::new(&params, &spec()).unwrap();
        let zero = ScalarField::zero(2);
        assert_eq!(ops.green(&zero, &[0.3, 0.2]).unwrap(), 0.0);
        let one = ScalarField::constant(2, 1.0);
        assert_eq!(ops.green(&one, &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(ops.green(&one, &[1.5, 0.3]).unwrap(), 0.0);
        let g = ScalarField::new(2, |y| y[0]);
        assert_eq!(ops.poisson(&g, &[1.5, 0.3]).unwrap(), 1.5);
    }

    #[test]
    fn getoor_profile() {
        let params = ProblemParams::new(2, 0.75).unwrap();
        let ops = Potentials::new(&params, &spec()).unwrap();
        let one = ScalarField::constant(2, 1.0);
        let lambda = getoor_constant(&params);
        for x in [[0.0, 0.0], [0.3, 0.1], [0.0, -0.6], [0.5, 0.55]] {
            let exact = (1.0 - norm_sq(&x)).powf(0.75) / lambda;
            let v = ops.green(&one, &x).unwrap();
            assert!((v - exact).abs() < 1e-4 * exact, "{x:?}: {v} vs {exact}");
        }
    }

    #[test]
    fn gradient_of_getoor_profile() {
        let params = ProblemParams::new(2, 0.75).unwrap();
        let ops = Potentials::new(&params, &spec()).unwrap();
        let one = ScalarField::new(2, |_| 1.0);
        let lambda = getoor_constant(&params);
        let x = [0.4, -0.3];
        let g = ops.green_gradient(&one, &x).unwrap();
        let factor = -2.0 * 0.75 / lambda * (1.0 - norm_sq(&x)).powf(-0.25);
        for k in 0..2 {
            let exact = factor * x[k];
            assert!((g[k] - exact).abs() < 1e-3 * exact.abs(), "{k}: {} vs {exact}", g[k]);
        }
        let g0 = ops.green_gradient(&ScalarField::constant(2, 1.0), &[0.0, 0.0]).unwrap();
        assert!(g0.iter().all(|v| v.abs() < 1e-10), "{g0:?}");
        let low = ProblemParams::new(2, 0.4).unwrap();
        assert!(green_potential_gradient(&one, &x, &low, &spec()).is_err());
    }

    #[test]
    fn linear_nodes_reproduce_getoor() {
        let params = ProblemParams::new(2, 0.75).unwrap();
        let coarse = QuadratureSpec { radial_points: 8, angular_points: 32, grading_levels: 10, ..spec() };
        let ops = Potentials::new(&params, &coarse).unwrap();
        let lambda = getoor_constant(&params);
        for x in [[0.0, 0.0], [0.3, 0.1], [0.0, -0.9], [0.97, 0.0]] {
            let mut v = 0.0;
            let mut g = [0.0; 2];
            ops.green_nodes(&x, |_, w, gw| {
                v += w;
                g[0] += gw[0];
                g[1] += gw[1];
            })
            .unwrap();
            let d = 1.0 - norm_sq(&x);
            let exact = d.powf(0.75) / lambda;
            assert!((v - exact).abs() < 1e-3 * exact, "{x:?}: {v} vs {exact}");
            let factor = -1.5 / lambda * d.powf(-0.25);
            for k in 0..2 {
                assert!((g[k] - factor * x[k]).abs() < 2e-3 * factor.abs(), "{x:?} {k}: {} vs {}", g[k], factor * x[k]);
            }
        }
    }

    #[test]
    fn poisson_reproduces_constants() {
        for (n, s) in [(2, 0.4), (3, 0.6)] {
            let params = ProblemParams::new(n, s).unwrap();
            let ops = Potentials::new(&params, &QuadratureSpec::default_for(n)).unwrap();
            let one = ScalarField::constant(n, 1.0);
            let mut x = vec![0.0; n];
            x[0] = 0.5;
            let v = ops.poisson(&one, &x).unwrap();
            assert!((v - 1.0).abs() < 1e-3, "n={n} s={s}: {v}");
        }
    }

    #[test]
    fn surface_integral_matches_closed_form() {
        let params = ProblemParams::new(2, 0.75).unwrap();
        let rule = SphereRule::tensor(2, 256);
        let c = nontrivial_constant(&params);
        assert!((surface_poisson_integral(&[0.0, 0.0], &params, &rule).unwrap() - c).abs() < 1e-12);
        let x = [0.3, -0.2];
        let expected = c * (1.0 - norm_sq(&x)).powf(-0.25);
        let v = surface_poisson_integral(&x, &params, &rule).unwrap();
        assert!((v - expected).abs() < 1e-10 * expected);
        assert_eq!(nontrivial_solution(&[1.0, 0.0], &params), 0.0);
        assert_eq!(nontrivial_solution(&[0.0, 0.0], &params), c);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]

        #[test]
        fn green_potential_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            cx in -0.6f64..0.6,
            x1 in -0.7f64..0.7,
            x2 in -0.7f64..0.7,
        ) {
            let params = ProblemParams::new(2, 0.6).unwrap();
            let ops = Potentials::new(&params, &spec()).unwrap();
            let f = ScalarField::new(2, move |y| (-4.0 * ((y[0] - cx).powi(2) + y[1] * y[1])).exp());
            let g = ScalarField::new(2, |y| 1.0 + y[0] - 0.5 * y[1]);
            let (f2, g2) = (f.clone(), g.clone());
            let combo = ScalarField::new(2, move |y| a * f2.eval(y) + b * g2.eval(y));
            let x = [x1, x2];
            let lhs = ops.green(&combo, &x).unwrap();
            let rhs = a * ops.green(&f, &x).unwrap() + b * ops.green(&g, &x).unwrap();
            let scale = (a.abs() + b.abs()) * ops.green(&ScalarField::constant(2, 2.0), &x).unwrap();
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(1e-300), "{} vs {}", lhs, rhs);
        }
    }
}
