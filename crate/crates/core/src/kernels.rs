//! Closed-form kernels of the fractional Laplacian on the unit ball.
//!
//! Poisson kernel, Green's function, its gradient in the first argument, the
//! auxiliary ratio `rho` and the incomplete integral
//! `int_0^rho t^{s-1} (1+t)^{-n/2} dt` that sits inside the Green's function.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::params::{dist_sq, norm_sq, sphere_area, ProblemParams};

/// Points closer than this (relative to the ball diameter 2) are treated as coincident.
pub const COINCIDENT_TOL: f64 = 1e-12 * 2.0;

/// Normalization constants for the PV Laplacian, the Poisson kernel and the Green's function,
/// plus the constant of the explicit singular s-harmonic function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `C_{n,s} = 4^s Gamma(n/2+s) / (pi^{n/2} |Gamma(-s)|)`.
    pub c_pv: f64,
    /// `c(n,s) = Gamma(n/2) sin(pi s) / pi^{n/2+1}`.
    pub c_poisson: f64,
    /// `kappa(n,s) = Gamma(n/2) / (pi^{n/2} 4^s Gamma(s)^2)`.
    pub kappa: f64,
    /// `C(n,s)` such that `c(n,s) int_{S^{n-1}} (1-|x|^2)^s |x-y|^{-n} dH_y = C(n,s) (1-|x|^2)^{s-1}`.
    pub c_boundary: f64,
}

/// Standard closed forms for the normalization constants.
///
/// `c_boundary` is the surface integral at the origin, where the integrand is identically one,
/// evaluated with the tensor sphere rule.
pub fn constants(params: &ProblemParams) -> KernelConstants {
    let n = params.n as f64;
    let s = params.s;
    let half = n / 2.0;
    let abs_gamma_neg_s = gamma(1.0 - s) / s;
    let c_pv = 4f64.powf(s) * gamma(half + s) / (PI.powf(half) * abs_gamma_neg_s);
    let c_poisson = gamma(half) * (PI * s).sin() / PI.powf(half + 1.0);
    let kappa = gamma(half) / (PI.powf(half) * 4f64.powf(s) * gamma(s).powi(2));
    let surface: f64 = crate::quadrature::SphereRule::tensor(params.n, 32)
        .weights()
        .iter()
        .sum();
    KernelConstants { c_pv, c_poisson, kappa, c_boundary: c_poisson * surface }
}

/// Complete Beta function `B(a, b)`.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// `rho(x, y) = (1-|x|^2)(1-|y|^2) / |x-y|^2` for two points of the open unit ball.
pub fn rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inside(x)?;
    check_inside(y)?;
    let d2 = dist_sq(x, y);
    if d2.sqrt() < COINCIDENT_TOL {
        return Err(Error::CoincidentPoints { distance: d2.sqrt() });
    }
    Ok(rho_unchecked(x, y, d2))
}

#[inline]
fn rho_unchecked(x: &[f64], y: &[f64], d2: f64) -> f64 {
    (1.0 - norm_sq(x)) * (1.0 - norm_sq(y)) / d2
}

fn check_inside(x: &[f64]) -> Result<()> {
    let r2 = norm_sq(x);
    if !(r2 < 1.0) {
        return Err(Error::OutOfDomain(format!("|x| = {} is not < 1", r2.sqrt())));
    }
    Ok(())
}

/// Evaluator for `int_0^rho t^{s-1} (1+t)^{-n/2} dt`.
///
/// With `u = t/(1+t)` the integral becomes the incomplete Beta integral
/// `int_0^{rho/(1+rho)} u^{s-1} (1-u)^{n/2-s-1} du`, summed by its hypergeometric series
/// around `u = 0` when `u <= 1/2` and around `u = 1` (as the complement of `B(s, n/2-s)`) otherwise.
/// Both series converge at least like `2^{-k}`.
#[derive(Debug, Clone, Copy)]
pub struct RhoIntegral {
    s: f64,
    b: f64,
    complete: f64,
}

impl RhoIntegral {
    pub fn new(params: &ProblemParams) -> Self {
        let s = params.s;
        let b = params.n as f64 / 2.0 - s;
        Self { s, b, complete: beta(s, b) }
    }

    /// `B(s, n/2 - s)`, the value at `rho = +inf`.
    pub fn complete(&self) -> f64 {
        self.complete
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.eval_with_density(rho).0
    }

    /// Returns the integral together with `rho^s (1+rho)^{-n/2}`, which the gradient needs.
    pub fn eval_with_density(&self, rho: f64) -> (f64, f64) {
        if rho <= 0.0 {
            return (0.0, 0.0);
        }
        if rho.is_infinite() {
            return (self.complete, 0.0);
        }
        let x = rho / (1.0 + rho);
        let y = 1.0 / (1.0 + rho);
        let xs = x.powf(self.s);
        let yb = y.powf(self.b);
        let density = xs * yb;
        let integral = if x <= 0.5 {
            xs * series(x, self.s, self.b)
        } else {
            self.complete - yb * series(y, self.b, self.s)
        };
        (integral.max(0.0), density)
    }
}

/// `sum_k (1-b)_k / k! * z^k / (a + k)`.
#[inline]
fn series(z: f64, a: f64, b: f64) -> f64 {
    let mut coeff = 1.0;
    let mut zk = 1.0;
    let mut sum = 1.0 / a;
    for k in 1..400 {
        let kf = k as f64;
        coeff *= (kf - b) / kf;
        zk *= z;
        let term = coeff * zk / (a + kf);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `int_0^rho t^{s-1} (1+t)^{-n/2} dt`; `rho = +inf` gives `B(s, n/2-s)`.
pub fn incomplete_kernel_integral(rho_val: f64, params: &ProblemParams) -> Result<f64> {
    if !(rho_val >= 0.0) {
        return Err(Error::Precondition(format!("rho = {rho_val} must be nonnegative")));
    }
    Ok(RhoIntegral::new(params).eval(rho_val))
}

/// Kernel evaluator with cached constants.
#[derive(Debug, Clone, Copy)]
pub struct BallKernels {
    params: ProblemParams,
    consts: KernelConstants,
    rho_integral: RhoIntegral,
}

impl BallKernels {
    pub fn new(params: &ProblemParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::with_constants(params, constants(params)))
    }

    /// Use explicit constants, e.g. to check that the normalization tests catch a wrong one.
    pub fn with_constants(params: &ProblemParams, consts: KernelConstants) -> Self {
        Self { params: *params, consts, rho_integral: RhoIntegral::new(params) }
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn constants(&self) -> &KernelConstants {
        &self.consts
    }

    pub fn rho_integral(&self) -> &RhoIntegral {
        &self.rho_integral
    }

    /// `P(x, y) = c(n,s) ((1-|x|^2)/(|y|^2-1))^s |x-y|^{-n}` for `|x| < 1 < |y|`.
    pub fn poisson(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.params.check_point(x)?;
        self.params.check_point(y)?;
        let x2 = norm_sq(x);
        let y2 = norm_sq(y);
        if !(x2 < 1.0) {
            return Err(Error::OutOfDomain(format!("|x| = {} is not < 1", x2.sqrt())));
        }
        if !(y2 > 1.0) {
            return Err(Error::OutOfDomain(format!("|y| = {} is not > 1", y2.sqrt())));
        }
        Ok(self.poisson_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn poisson_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.params.n as i32;
        let ratio = (1.0 - norm_sq(x)) / (norm_sq(y) - 1.0);
        self.consts.c_poisson * ratio.powf(self.params.s) / dist_sq(x, y).sqrt().powi(n)
    }

    /// `G(x, y) = kappa |x-y|^{2s-n} int_0^{rho(x,y)} t^{s-1}(1+t)^{-n/2} dt`.
    pub fn green(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.params.check_point(x)?;
        self.params.check_point(y)?;
        let r = rho(x, y)?;
        let d2 = dist_sq(x, y);
        Ok(self.green_from(d2, r))
    }

    #[inline]
    fn green_from(&self, d2: f64, rho: f64) -> f64 {
        let n = self.params.n as f64;
        self.consts.kappa * d2.powf(self.params.s - n / 2.0) * self.rho_integral.eval(rho)
    }

    /// Gradient of `G` in its first argument.
    pub fn green_gradient(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.params.check_point(x)?;
        self.params.check_point(y)?;
        rho(x, y)?;
        let mut grad = vec![0.0; x.len()];
        self.green_and_gradient_unchecked(x, y, &mut grad);
        Ok(grad)
    }

    /// Green's function and its `x`-gradient with no domain checks. Writes the gradient into
    /// `grad` and returns the value.
    #[inline]
    pub(crate) fn green_and_gradient_unchecked(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.params.n as f64;
        let s = self.params.s;
        let d2 = dist_sq(x, y);
        let one_minus_x2 = 1.0 - norm_sq(x);
        let rho = one_minus_x2 * (1.0 - norm_sq(y)) / d2;
        let (integral, density) = self.rho_integral.eval_with_density(rho);
        let pow_base = d2.powf(s - n / 2.0); // |x-y|^{2s-n}
        let i1 = (n - 2.0 * s) * integral + 2.0 * density;
        let i2 = density;
        let a = self.consts.kappa * pow_base * i1 / d2;
        let b = self.consts.kappa * 2.0 * pow_base * i2 / one_minus_x2;
        for k in 0..grad.len() {
            grad[k] = a * (y[k] - x[k]) - b * x[k];
        }
        self.consts.kappa * pow_base * integral
    }

    #[inline]
    pub(crate) fn green_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2 = dist_sq(x, y);
        self.green_from(d2, rho_unchecked(x, y, d2))
    }

    /// The constant `kappa * max(4^s/s, B(s, n/2-s))` in the two-sided Green bound
    /// `G(x,y) <= C |x-y|^{2s-n} min{[(1-|x|)(1-|y|)/|x-y|^2]^s, 1}`.
    pub fn green_bound_constant(&self) -> f64 {
        let s = self.params.s;
        self.consts.kappa * (4f64.powf(s) / s).max(self.rho_integral.complete)
    }

    /// Right-hand side of the Green bound at `(x, y)`.
    pub fn green_bound(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.params.n as f64;
        let s = self.params.s;
        let d = dist_sq(x, y).sqrt();
        let a = boundary_ratio(x, y);
        self.green_bound_constant() * d.powf(2.0 * s - n) * a.powf(s).min(1.0)
    }

    /// Constant `C_3` of the weighted gradient bound
    /// `|grad_x G(x,y)| (1-|x|)^r <= C_3 (1-|y|)^r |x-y|^{-(n-2s+1)}`, valid for `1-s <= r <= s`.
    ///
    /// Assembled as `kappa (4 C_1 + 16 C_2)` with `C_1/4 = (n-2s) max(1/s, B(s,n/2-s)) + 2`
    /// bounding `I_1 <= (C_1/4) min(rho^s, 1)` and `C_2/4 = 1` bounding `I_2`.
    pub fn gradient_bound_constant(&self) -> f64 {
        let n = self.params.n as f64;
        let s = self.params.s;
        let c1 = 4.0 * ((n - 2.0 * s) * (1.0 / s).max(self.rho_integral.complete) + 2.0);
        let c2 = 4.0;
        self.consts.kappa * (4.0 * c1 + 16.0 * c2)
    }

    /// Right-hand side of the weighted gradient bound, `C_3 (1-|y|)^r |x-y|^{-(n-2s+1)}`.
    pub fn gradient_bound(&self, y: &[f64], distance: f64) -> f64 {
        let n = self.params.n as f64;
        let s = self.params.s;
        let dy = 1.0 - norm_sq(y).sqrt();
        self.gradient_bound_constant() * dy.powf(self.params.r) * distance.powf(-(n - 2.0 * s + 1.0))
    }
}

/// `(1-|x|)(1-|y|)/|x-y|^2`.
pub fn boundary_ratio(x: &[f64], y: &[f64]) -> f64 {
    let dx = 1.0 - norm_sq(x).sqrt();
    let dy = 1.0 - norm_sq(y).sqrt();
    dx * dy / dist_sq(x, y)
}

/// Both sides of `min{[(1-|x|)(1-|y|)/|x-y|^2]^beta, 1} <= 4 ((1-|y|)/(1-|x|))^alpha`
/// for `0 < beta < 1`, `-beta <= alpha <= beta`.
pub fn boundary_ratio_inequality(x: &[f64], y: &[f64], beta: f64, alpha: f64) -> (f64, f64) {
    let dx = 1.0 - norm_sq(x).sqrt();
    let dy = 1.0 - norm_sq(y).sqrt();
    let lhs = boundary_ratio(x, y).powf(beta).min(1.0);
    let rhs = 4.0 * (dy / dx).powf(alpha);
    (lhs, rhs)
}

/// Free-function form of [`BallKernels::poisson`].
pub fn poisson_kernel(x: &[f64], y: &[f64], params: &ProblemParams) -> Result<f64> {
    BallKernels::new(params)?.poisson(x, y)
}

/// Free-function form of [`BallKernels::green`].
pub fn green_function(x: &[f64], y: &[f64], params: &ProblemParams) -> Result<f64> {
    BallKernels::new(params)?.green(x, y)
}

/// Free-function form of [`BallKernels::green_gradient`].
pub fn green_gradient(x: &[f64], y: &[f64], params: &ProblemParams) -> Result<Vec<f64>> {
    BallKernels::new(params)?.green_gradient(x, y)
}

/// Getoor's constant: `(-Delta)^s (1-|x|^2)_+^s = 2^{2s} Gamma(n/2+s) Gamma(1+s) / Gamma(n/2)` in the ball.
pub fn getoor_constant(params: &ProblemParams) -> f64 {
    let half = params.n as f64 / 2.0;
    let s = params.s;
    4f64.powf(s) * gamma(half + s) * gamma(1.0 + s) / gamma(half)
}

/// `|S^{n-1}| * 2^{s-1} / s * C(n,s)`: the limit of the boundary trace functional of the
/// explicit singular solution.
pub fn singular_trace_limit(params: &ProblemParams) -> f64 {
    let s = params.s;
    constants(params).c_boundary * sphere_area(params.n) * 2f64.powf(s - 1.0) / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(n: usize, s: f64) -> ProblemParams {
        ProblemParams::new(n, s).unwrap()
    }

    #[test]
    fn rho_examples() {
        assert!((rho(&[0.0, 0.0], &[0.5, 0.0]).unwrap() - 3.0).abs() < 1e-15);
        let a = [0.1, -0.4];
        let b = [0.6, 0.2];
        assert_eq!(rho(&a, &b).unwrap(), rho(&b, &a).unwrap());
        assert!(matches!(
            rho(&[0.3, 0.0], &[0.3, 0.0]),
            Err(Error::CoincidentPoints { .. })
        ));
        assert!(matches!(rho(&[1.0, 0.0], &[0.3, 0.0]), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn incomplete_integral_closed_forms() {
        let params = p(2, 0.5);
        assert_eq!(incomplete_kernel_integral(0.0, &params).unwrap(), 0.0);
        let half = incomplete_kernel_integral(1.0, &params).unwrap();
        assert!((half - PI / 2.0).abs() < 1e-13, "{half}");
        let full = incomplete_kernel_integral(f64::INFINITY, &params).unwrap();
        assert!((full - PI).abs() < 1e-12);
        // arctan form: int_0^rho t^{-1/2}/(1+t) dt = 2 atan(sqrt(rho))
        for rho in [1e-8, 0.3, 0.99, 1.01, 7.0, 1e6, 1e14] {
            let v = incomplete_kernel_integral(rho, &params).unwrap();
            let exact = 2.0 * rho.sqrt().atan();
            assert!(((v - exact) / exact).abs() < 1e-12, "rho={rho}: {v} vs {exact}");
        }
        assert!(incomplete_kernel_integral(-1.0, &params).is_err());
    }

    #[test]
    fn incomplete_integral_n3_closed_form() {
        // n = 3, s = 1/2: int_0^rho t^{-1/2}(1+t)^{-3/2} dt = 2 sqrt(rho/(1+rho))
        let params = p(3, 0.5);
        for rho in [1e-6, 0.2, 1.0, 3.0, 1e8] {
            let v = incomplete_kernel_integral(rho, &params).unwrap();
            let exact = 2.0 * (rho / (1.0 + rho)).sqrt();
            assert!(((v - exact) / exact).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_positive_and_dimension_dependent() {
        let a = constants(&p(2, 0.6));
        let b = constants(&p(3, 0.6));
        for c in [a, b] {
            assert!(c.c_pv > 0.0 && c.c_poisson > 0.0 && c.kappa > 0.0 && c.c_boundary > 0.0);
        }
        assert_ne!(a.c_pv, b.c_pv);
        assert_ne!(a.kappa, b.kappa);
        assert_ne!(a.c_poisson, b.c_poisson);
    }

    #[test]
    fn known_constant_values() {
        // n = 2, s = 1/2: c(2, 1/2) = 1/pi^2, kappa = 1/(2 pi^2) , C_{2,1/2} = 1/(2 pi)
        let c = constants(&p(2, 0.5));
        assert!((c.c_poisson - 1.0 / (PI * PI)).abs() < 1e-14);
        assert!((c.kappa - 1.0 / (2.0 * PI * PI)).abs() < 1e-14);
        assert!((c.c_pv - 1.0 / (2.0 * PI)).abs() < 1e-14);
        assert!((c.c_boundary - 2.0 / PI).abs() < 1e-13);
    }

    #[test]
    fn kernel_domains() {
        let k = BallKernels::new(&p(2, 0.5)).unwrap();
        let v = k.poisson(&[0.0, 0.0], &[2.0, 0.0]).unwrap();
        let expect = k.constants().c_poisson * (1.0f64 / 3.0).sqrt() / 4.0;
        assert!((v - expect).abs() < 1e-15);
        assert!(k.poisson(&[0.0, 0.0], &[0.9, 0.0]).is_err());
        assert!(k.green(&[0.2, 0.0], &[0.2, 0.0]).is_err());
        assert!(k.green(&[0.2, 0.0, 0.1], &[0.2, 0.0]).is_err());
    }

    #[test]
    fn gradient_at_origin_parallel_to_y() {
        let k = BallKernels::new(&p(2, 0.75)).unwrap();
        let y = [0.3, -0.4];
        let g = k.green_gradient(&[0.0, 0.0], &y).unwrap();
        let cross = g[0] * y[1] - g[1] * y[0];
        assert!(cross.abs() < 1e-14 * (g[0].abs() + g[1].abs()));
        assert!(g[0] * y[0] + g[1] * y[1] > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let k = BallKernels::new(&p(3, 0.6)).unwrap();
        let x = [0.2, -0.3, 0.1];
        let y = [-0.4, 0.25, 0.5];
        let g = k.green_gradient(&x, &y).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (k.green(&xp, &y).unwrap() - k.green(&xm, &y).unwrap()) / (2.0 * h);
            assert!(((fd - g[i]) / g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn getoor_value() {
        // n = 2, s = 1/2: 2 * Gamma(3/2) * Gamma(3/2) / Gamma(1) = pi/2
        assert!((getoor_constant(&p(2, 0.5)) - PI / 2.0).abs() < 1e-14);
    }

    fn inner_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-0.99f64..0.99, n).prop_filter("inside", |x| norm_sq(x) < 0.98)
    }

    fn inner_pair() -> impl Strategy<Value = (usize, f64, Vec<f64>, Vec<f64>)> {
        (2usize..=3, 0.05f64..0.95)
            .prop_flat_map(|(n, s)| (Just(n), Just(s), inner_point(n), inner_point(n)))
            .prop_filter("distinct", |(_, _, x, y)| dist_sq(x, y) > 1e-8)
    }

    proptest! {
        #[test]
        fn green_is_symmetric_and_positive((n, s, x, y) in inner_pair()) {
            let k = BallKernels::new(&p(n, s)).unwrap();
            let a = k.green(&x, &y).unwrap();
            let b = k.green(&y, &x).unwrap();
            prop_assert!(a > 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * a, "{} vs {}", a, b);
            prop_assert!(a <= k.green_bound(&x, &y) * (1.0 + 1e-12));
        }

        #[test]
        fn poisson_is_positive_outside((n, s, x, y) in inner_pair(), stretch in 1.001f64..4.0) {
            let k = BallKernels::new(&p(n, s)).unwrap();
            let r = norm_sq(&y).sqrt().max(1e-3);
            let outside: Vec<f64> = y.iter().map(|c| c / r * stretch).collect();
            prop_assert!(k.poisson(&x, &outside).unwrap() > 0.0);
        }

        #[test]
        fn boundary_ratio_bound_holds((_n, _s, x, y) in inner_pair(), beta in 1e-6f64..1.0, t in -1.0f64..=1.0) {
            let (lhs, rhs) = boundary_ratio_inequality(&x, &y, beta, t * beta);
            prop_assert!(lhs <= rhs, "{} > {}", lhs, rhs);
        }

        #[test]
        fn incomplete_integral_increases(s in 0.05f64..0.95, a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let r = RhoIntegral::new(&p(2, s));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(r.eval(lo) <= r.eval(hi));
            prop_assert!(r.eval(hi) <= r.complete());
        }
    }
}
