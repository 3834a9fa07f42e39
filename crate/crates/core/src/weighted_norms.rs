//! Weighted norms on the ball, the tail norm of `L_{2s}`, the boundary trace functional
//! `eps^{-s} int_{1-eps <= |x| < 1} |u|` with a classifier for its limit, the mollifier `J_eps`
//! and a sampled Hölder quotient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{norm_sq, ProblemParams, MAX_DIM};
use crate::quadrature::{line, Cubature, GaussLegendre, QuadratureSpec, ScalarField, Smoothness, SphereRule, Support, Symmetry};

fn boundary_distance(x: &[f64]) -> f64 {
    (1.0 - norm_sq(x).sqrt()).max(0.0)
}

/// `( int_{B_1} (delta^r |u|)^p dx )^{1/p}` with `delta = 1 - |x|`.
///
/// `p = inf` gives the maximum over the quadrature nodes, which is a lower bound for the
/// essential supremum.
pub fn weighted_lp_norm(u: &ScalarField, p: f64, r: f64, params: &ProblemParams, spec: &QuadratureSpec) -> Result<f64> {
    params.validate()?;
    if !(p >= 1.0) {
        return Err(Error::InvalidParams(format!("norm exponent p = {p} must be >= 1")));
    }
    let cub = Cubature::new(params.n, spec)?;
    let inner = u.clone();
    let weighted = move |x: &[f64]| {
        let v = inner.eval(x).abs();
        if v == 0.0 {
            0.0
        } else {
            boundary_distance(x).powf(r) * v
        }
    };
    let mut field = if p.is_infinite() {
        ScalarField::new(params.n, weighted)
    } else {
        ScalarField::new(params.n, move |x| weighted(x).powf(p))
    };
    if u.is_radial() {
        field = field.with_symmetry(Symmetry::Radial);
    }
    if p.is_infinite() {
        return node_max(&cub, &field);
    }
    Ok(cub.ball(&field)?.powf(1.0 / p))
}

/// Maximum of `f` over the nodes of the ball rule.
fn node_max(cub: &Cubature, f: &ScalarField) -> Result<f64> {
    let n = cub.dim();
    let mut best: f64 = 0.0;
    let mut x = [0.0; MAX_DIM];
    let panels = line::panels_toward_end(0.0, 1.0, cub.line().levels());
    let axis: Vec<f64> = (0..n).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect();
    let dirs: Vec<&[f64]> = if f.is_radial() { vec![&axis[..]] } else { cub.sphere().iter().map(|(d, _)| d).collect() };
    for &(lo, hi) in &panels {
        for (t, _) in cub.line().gl().mapped(lo, hi) {
            for dir in &dirs {
                for k in 0..n {
                    x[k] = t * dir[k];
                }
                let v = f.eval(&x[..n]);
                if !v.is_finite() {
                    return Err(Error::NonFinite { at: x[..n].to_vec() });
                }
                best = best.max(v);
            }
        }
    }
    Ok(best)
}

/// `int_{R^n} |u(y)| / (1 + |y|^{n+2s}) dy`.
pub fn l2s_norm(u: &ScalarField, params: &ProblemParams, spec: &QuadratureSpec) -> Result<f64> {
    params.validate()?;
    let cub = Cubature::new(params.n, spec)?;
    let exponent = params.n as f64 + 2.0 * params.s;
    let inner = u.clone();
    let mut field = ScalarField::new(params.n, move |y| {
        let v = inner.eval(y).abs();
        if v == 0.0 {
            0.0
        } else {
            v / (1.0 + norm_sq(y).powf(0.5 * exponent))
        }
    });
    if u.is_radial() {
        field = field.with_symmetry(Symmetry::Radial);
    }
    let mut total = cub.ball(&field)?;
    if u.support() == Support::Global {
        total += cub.complement(&field)?;
    }
    Ok(total)
}

/// `eps^{-s} int_{1-eps <= |x| < 1} |u(x)| dx` for `0 < eps <= 1/8`.
pub fn trace_functional(u: &ScalarField, eps: f64, params: &ProblemParams, spec: &QuadratureSpec) -> Result<f64> {
    params.validate()?;
    if !(eps > 0.0 && eps <= 0.125) {
        return Err(Error::Precondition(format!("trace shell thickness eps = {eps} must lie in (0, 1/8]")));
    }
    let cub = Cubature::new(params.n, spec)?;
    Ok(eps.powf(-params.s) * cub.shell(&u.abs(), eps)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceClass {
    Zero,
    Positive,
    Divergent,
    Inconclusive,
}

/// Thresholds of the trace-limit classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceThresholds {
    /// Minimum fitted slope of `log T` against `log eps` for a vanishing limit.
    pub zero_slope: f64,
    /// The last value must be at most this fraction of the first for a vanishing limit.
    pub zero_drop: f64,
    /// Maximum absolute slope for a positive finite limit.
    pub positive_slope: f64,
    /// Maximum relative spread of the last three values for a positive finite limit.
    pub positive_spread: f64,
    /// Slopes at or below this mean the functional blows up.
    pub divergent_slope: f64,
}

impl Default for TraceThresholds {
    fn default() -> Self {
        Self { zero_slope: 0.2, zero_drop: 0.05, positive_slope: 0.1, positive_spread: 0.1, divergent_slope: -0.2 }
    }
}

/// Trace functional along a schedule of shell thicknesses and the classified limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub eps_schedule: Vec<f64>,
    /// `T_eps`; infinite where the shell integral diverges (serialized as `null`).
    pub values: Vec<f64>,
    pub extrapolated_limit: f64,
    pub classification: TraceClass,
    /// Least-squares slope of `log T_eps` against `log eps`; `None` when undefined.
    pub fit_exponent: Option<f64>,
}

/// `eps = 2^{-k}` for `k` in `first..=last`.
pub fn dyadic_schedule(first: u32, last: u32) -> Vec<f64> {
    (first..=last).map(|k| 0.5f64.powi(k as i32)).collect()
}

/// Evaluate the trace functional on `schedule` and classify its limit as `eps -> 0`.
pub fn trace_limit_estimate(
    u: &ScalarField,
    schedule: &[f64],
    params: &ProblemParams,
    spec: &QuadratureSpec,
    thresholds: &TraceThresholds,
) -> Result<TraceReport> {
    if schedule.len() < 3 {
        return Err(Error::Precondition("the trace schedule needs at least three thicknesses".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|&e| !(e > 0.0 && e <= 0.125)) {
        return Err(Error::Precondition("the trace schedule must decrease strictly inside (0, 1/8]".into()));
    }
    let mut values = Vec::with_capacity(schedule.len());
    let mut diverged = false;
    for &eps in schedule {
        match trace_functional(u, eps, params, spec) {
            Ok(v) => values.push(v),
            Err(Error::Divergent { .. }) => {
                diverged = true;
                values.push(f64::INFINITY);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(classify_trace(schedule, values, diverged, thresholds))
}

/// The classification rule applied to precomputed values.
pub fn classify_trace(schedule: &[f64], values: Vec<f64>, diverged: bool, th: &TraceThresholds) -> TraceReport {
    let k = values.len();
    let points: Vec<(f64, f64)> = schedule
        .iter()
        .zip(&values)
        .filter(|(_, v)| v.is_finite() && **v > 0.0)
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    let slope = if points.len() >= 2 {
        let m = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
        let my = points.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let all_zero = values.iter().all(|&v| v == 0.0);
    let first = values[0];
    let last = values[k - 1];
    let tail = &values[k.saturating_sub(3)..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let spread = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
    let classification = if diverged || slope.is_some_and(|b| b <= th.divergent_slope) {
        TraceClass::Divergent
    } else if all_zero || slope.is_some_and(|b| b >= th.zero_slope && last <= th.zero_drop * first) {
        TraceClass::Zero
    } else if slope.is_some_and(|b| b.abs() <= th.positive_slope) && mean > 0.0 && spread <= th.positive_spread * mean {
        TraceClass::Positive
    } else {
        TraceClass::Inconclusive
    };
    let extrapolated_limit = match classification {
        TraceClass::Zero => 0.0,
        TraceClass::Divergent => f64::INFINITY,
        TraceClass::Positive => {
            // T = L + a eps along the last two thicknesses.
            let (e0, e1) = (schedule[k - 2], schedule[k - 1]);
            last + (last - values[k - 2]) * e1 / (e0 - e1)
        }
        TraceClass::Inconclusive => last,
    };
    TraceReport { eps_schedule: schedule.to_vec(), values, extrapolated_limit, classification, fit_exponent: slope }
}

/// Discrete mollifier: nodes `z_k` in the unit ball with weights `j(z_k) dz` normalized to sum one.
#[derive(Debug, Clone)]
pub struct Mollifier {
    n: usize,
    nodes: Vec<[f64; MAX_DIM]>,
    weights: Vec<f64>,
}

impl Mollifier {
    /// Bump `exp(-1/(1-|z|^2))` on a Gauss–Legendre radial rule times a sphere rule.
    pub fn new(n: usize) -> Self {
        let gl = GaussLegendre::new(16);
        let sphere = if n <= 3 { SphereRule::tensor(n, 24) } else { SphereRule::monte_carlo(n, 1024, 0x6d6f) };
        let mut nodes = Vec::with_capacity(gl.order() * sphere.len());
        let mut weights = Vec::with_capacity(gl.order() * sphere.len());
        for (r, wr) in gl.mapped(0.0, 1.0) {
            let bump = (-1.0 / (1.0 - r * r)).exp() * r.powi(n as i32 - 1) * wr;
            for (dir, wd) in sphere.iter() {
                let mut z = [0.0; MAX_DIM];
                for k in 0..n {
                    z[k] = r * dir[k];
                }
                nodes.push(z);
                weights.push(bump * wd);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { n, nodes, weights }
    }

    /// `(j_eps * u)(x)`.
    pub fn apply(&self, u: &ScalarField, eps: f64, x: &[f64]) -> f64 {
        if u.support() == Support::BallOnly && norm_sq(x).sqrt() >= 1.0 + eps {
            return 0.0;
        }
        let n = self.n;
        let mut y = [0.0; MAX_DIM];
        let mut acc = 0.0;
        for (z, &w) in self.nodes.iter().zip(&self.weights) {
            for k in 0..n {
                y[k] = x[k] + eps * z[k];
            }
            acc += w * u.eval(&y[..n]);
        }
        acc
    }
}

/// `J_eps u = j_eps * u` as a field; supported in `B_{1+eps}` when `u` is supported in the ball.
pub fn mollify(u: &ScalarField, eps: f64, params: &ProblemParams) -> Result<ScalarField> {
    params.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Precondition(format!("mollification radius eps = {eps} must be positive")));
    }
    if u.dim() != params.n {
        return Err(Error::DimensionMismatch { expected: params.n, found: u.dim() });
    }
    let moll = Mollifier::new(params.n);
    let inner = u.clone();
    let mut field = ScalarField::new(params.n, move |x| moll.apply(&inner, eps, x)).with_smoothness(Smoothness::Smooth);
    if u.is_radial() {
        field = field.with_symmetry(Symmetry::Radial);
    }
    if let Some(l) = u.label() {
        field = field.with_label(format!("J_{eps}({l})"));
    }
    Ok(field)
}

/// Closest approach of probe points to the sphere; below this `1 - |x|` is dominated by rounding.
const MIN_PROBE_DISTANCE: f64 = 1e-12;

/// Largest sampled `|u(x) - u(y)| / |x-y|^{1-r}` over pairs in the ball.
///
/// Points are drawn with boundary distance `max(U^3, 1e-12)` so that they crowd the sphere; each is paired
/// with a neighbour at distance proportional to its own boundary distance and with a uniform
/// random partner.
pub fn holder_quotient_probe(u: &ScalarField, r: f64, params: &ProblemParams, sample_count: usize) -> Result<f64> {
    holder_quotient_probe_seeded(u, r, params, sample_count, 0x486f_6c64)
}

pub fn holder_quotient_probe_seeded(
    u: &ScalarField,
    r: f64,
    params: &ProblemParams,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    params.validate()?;
    if !(r > -1.0 && r < 1.0) {
        return Err(Error::InvalidParams(format!("weight exponent r = {r} must lie in (-1, 1)")));
    }
    let n = params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = |rng: &mut ChaCha8Rng| -> [f64; MAX_DIM] {
        let mut d = [0.0; MAX_DIM];
        loop {
            for v in d[..n].iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let l2 = norm_sq(&d[..n]);
            if l2 > 1e-6 && l2 <= 1.0 {
                let l = l2.sqrt();
                d[..n].iter_mut().for_each(|v| *v /= l);
                return d;
            }
        }
    };
    let mut best: f64 = 0.0;
    let mut quotient = |x: &[f64], y: &[f64]| {
        if norm_sq(y) >= 1.0 {
            return;
        }
        let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d <= 0.0 {
            return;
        }
        let q = (u.eval(x) - u.eval(y)).abs() / d.powf(1.0 - r);
        if q.is_finite() {
            best = best.max(q);
        }
    };
    for _ in 0..sample_count {
        let delta = rng.gen::<f64>().powi(3).max(MIN_PROBE_DISTANCE);
        let dir = direction(&mut rng);
        let mut x = [0.0; MAX_DIM];
        for k in 0..n {
            x[k] = (1.0 - delta) * dir[k];
        }
        let h = delta * rng.gen_range(0.05..1.0);
        let step = direction(&mut rng);
        let mut y = [0.0; MAX_DIM];
        for k in 0..n {
            y[k] = x[k] + h * step[k];
        }
        quotient(&x[..n], &y[..n]);
        let far = direction(&mut rng);
        let radius = rng.gen::<f64>().powf(1.0 / n as f64);
        for k in 0..n {
            y[k] = radius * far[k];
        }
        quotient(&x[..n], &y[..n]);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldspec::parse_field;
    use std::f64::consts::PI;

    fn p(n: usize, s: f64) -> ProblemParams {
        ProblemParams::new(n, s).unwrap()
    }

    #[test]
    fn lp_norm_examples() {
        let params = p(2, 0.5);
        let spec = QuadratureSpec::default();
        let one = ScalarField::constant(2, 1.0);
        assert!((weighted_lp_norm(&one, 1.0, 0.0, &params, &spec).unwrap() - PI).abs() < 1e-9);
        let u = parse_field("delta^(-s)", &params).unwrap();
        assert!((weighted_lp_norm(&u, 1.0, 0.5, &params, &spec).unwrap() - PI).abs() < 1e-9);
        let v = parse_field("delta^(-1)", &params).unwrap();
        assert!(matches!(weighted_lp_norm(&v, 1.0, 0.0, &params, &spec), Err(Error::Divergent { .. })));
        let sup = weighted_lp_norm(&parse_field("1 - |x|^2", &params).unwrap(), f64::INFINITY, 0.0, &params, &spec).unwrap();
        assert!(sup <= 1.0 && sup > 0.99);
    }

    #[test]
    fn l2s_examples() {
        let params = p(2, 0.5);
        let spec = QuadratureSpec::default();
        assert_eq!(l2s_norm(&ScalarField::zero(2), &params, &spec).unwrap(), 0.0);
        let slow = parse_field("|x|^(2*s)", &params).unwrap();
        assert!(matches!(l2s_norm(&slow, &params, &spec), Err(Error::SlowDecay { .. })));
    }

    #[test]
    fn trace_of_constant() {
        let params = p(2, 0.5);
        let v = trace_functional(&ScalarField::constant(2, 1.0), 0.01, &params, &QuadratureSpec::default()).unwrap();
        let exact = 0.01f64.powf(-0.5) * PI * (1.0 - 0.99f64 * 0.99);
        assert!((v - exact).abs() < 1e-10);
        assert!(trace_functional(&ScalarField::constant(2, 1.0), 0.2, &params, &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn classifier_rules() {
        let sched = dyadic_schedule(3, 9);
        let th = TraceThresholds::default();
        let flat: Vec<f64> = sched.iter().map(|e| 2.0 + e).collect();
        let rep = classify_trace(&sched, flat, false, &th);
        assert_eq!(rep.classification, TraceClass::Positive);
        assert!((rep.extrapolated_limit - 2.0).abs() < 1e-12);
        let decaying: Vec<f64> = sched.iter().map(|e| e.powf(0.8)).collect();
        assert_eq!(classify_trace(&sched, decaying, false, &th).classification, TraceClass::Zero);
        let growing: Vec<f64> = sched.iter().map(|e| e.powf(-0.5)).collect();
        assert_eq!(classify_trace(&sched, growing, false, &th).classification, TraceClass::Divergent);
        let slow: Vec<f64> = sched.iter().map(|e| e.powf(0.15)).collect();
        assert_eq!(classify_trace(&sched, slow, false, &th).classification, TraceClass::Inconclusive);
    }

    #[test]
    fn mollifier_identities() {
        let params = p(2, 0.5);
        let c = mollify(&ScalarField::constant(2, 3.5), 0.1, &params).unwrap();
        assert!((c.eval(&[0.3, -0.2]) - 3.5).abs() < 1e-12);
        let affine = ScalarField::new(2, |x| 1.0 + 2.0 * x[0] - 0.5 * x[1]);
        let m = mollify(&affine, 0.2, &params).unwrap();
        for x in [[0.1, 0.2], [-0.7, 0.4], [1.5, 2.0]] {
            assert!((m.eval(&x) - affine.eval(&x)).abs() < 1e-12);
        }
        let bump = parse_field("inside(1)", &params).unwrap();
        let mb = mollify(&bump, 0.25, &params).unwrap();
        assert_eq!(mb.eval(&[1.25, 0.0]), 0.0);
        assert_eq!(mb.eval(&[0.0, -1.3]), 0.0);
        assert!(mb.eval(&[1.1, 0.0]) > 0.0);
    }

    #[test]
    fn holder_probe() {
        let params = p(2, 0.75);
        assert_eq!(holder_quotient_probe(&ScalarField::constant(2, 1.0), 0.5, &params, 500).unwrap(), 0.0);
        let good = parse_field("delta^(1 - 0.5)", &params).unwrap();
        let a = holder_quotient_probe(&good, 0.5, &params, 100).unwrap();
        let b = holder_quotient_probe(&good, 0.5, &params, 100000).unwrap();
        assert!(b < 1.5 * a.max(1.0), "{a} {b}");
        let bad = parse_field("delta^(1 - 0.5 - 0.2)", &params).unwrap();
        let a = holder_quotient_probe(&bad, 0.5, &params, 100).unwrap();
        let b = holder_quotient_probe(&bad, 0.5, &params, 100000).unwrap();
        assert!(b > 4.0 * a, "{a} {b}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn lp_norm_is_absolutely_homogeneous(c in -5.0f64..5.0, p_exp in 1.0f64..4.0, r in 0.0f64..1.0) {
            let params = p(2, 0.5);
            let spec = QuadratureSpec::default();
            let u = parse_field("exp(-|x|^2) + x1", &params).unwrap();
            let base = weighted_lp_norm(&u, p_exp, r, &params, &spec).unwrap();
            let scaled = weighted_lp_norm(&u.scale(c), p_exp, r, &params, &spec).unwrap();
            proptest::prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * base, "{} vs {}", scaled, c.abs() * base);
        }
    }
}
