//! Randomized inequality suites, kernel normalizations and mollifier identities.

use fracball::fieldspec::parse_field;
use fracball::kernels::{boundary_ratio_inequality, constants, getoor_constant, BallKernels, KernelConstants};
use fracball::potentials::Potentials;
use fracball::quadrature::{Cubature, QuadratureSpec, ScalarField};
use fracball::weighted_norms::mollify;
use fracball::ProblemParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::probe_points;
use crate::config::{ConstantName, ExperimentConfig, FaultConfig};
use crate::error::CliError;
use crate::report::{num, opt, Csv, Outcome};

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub violations: usize,
    /// Largest observed error, or largest `lhs / rhs` for inequalities.
    pub worst: f64,
    pub tolerance: Option<f64>,
    /// The worst sample, logged whenever the property fails.
    pub counterexample: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub fault: Option<FaultConfig>,
    pub properties: Vec<PropertyResult>,
}

/// Tracks the worst sample of a suite.
struct Tally {
    name: String,
    samples: usize,
    violations: usize,
    worst: f64,
    tolerance: Option<f64>,
    worst_case: Option<Value>,
}

impl Tally {
    fn new(name: impl Into<String>, tolerance: Option<f64>) -> Self {
        Self { name: name.into(), samples: 0, violations: 0, worst: f64::NEG_INFINITY, tolerance, worst_case: None }
    }

    fn record(&mut self, score: f64, violated: bool, case: impl FnOnce() -> Value) {
        self.samples += 1;
        if violated {
            self.violations += 1;
        }
        if score > self.worst || score.is_nan() {
            self.worst = score;
            self.worst_case = Some(case());
        }
    }

    fn finish(self) -> PropertyResult {
        let passed = self.violations == 0 && self.samples > 0;
        PropertyResult {
            name: self.name,
            passed,
            samples: self.samples,
            violations: self.violations,
            worst: self.worst,
            tolerance: self.tolerance,
            counterexample: if passed { None } else { self.worst_case },
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|c| c / len).collect();
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn at_radius(dir: &[f64], r: f64) -> Vec<f64> {
    dir.iter().map(|c| c * r).collect()
}

/// A point of the open ball: uniform, crowded toward the sphere, or near the origin.
fn ball_point(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dir = direction(n, rng);
    let u: f64 = rng.gen();
    let r = match rng.gen_range(0..3) {
        0 => u.powf(1.0 / n as f64),
        1 => 1.0 - (u * u * u).max(1e-9),
        _ => u * 0.2,
    };
    at_radius(&dir, r.min(1.0 - 1e-9))
}

/// A pair of distinct ball points, sometimes very close to each other.
fn ball_pair(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let x = ball_point(n, rng);
    if rng.gen_bool(0.3) {
        let dir = direction(n, rng);
        let h = 10f64.powf(-6.0 * rng.gen::<f64>());
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
        if norm(&y) < 1.0 - 1e-9 && h > 1e-9 {
            return (x, y);
        }
    }
    loop {
        let y = ball_point(n, rng);
        if norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>()) > 1e-9 {
            return (x, y);
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn params(n: usize, s: f64) -> Result<ProblemParams, CliError> {
    let p = ProblemParams::new(n, s)?;
    Ok(p)
}

fn faulty_constants(p: &ProblemParams, fault: Option<&FaultConfig>) -> KernelConstants {
    let mut c = constants(p);
    if let Some(f) = fault {
        match f.constant {
            ConstantName::Pv => c.c_pv *= f.scale,
            ConstantName::Poisson => c.c_poisson *= f.scale,
            ConstantName::Green => c.kappa *= f.scale,
        }
    }
    c
}

/// `min{a^beta, 1} <= 4 ((1-|y|)/(1-|x|))^alpha` for `0 < beta < 1`, `|alpha| <= beta`.
pub fn boundary_ratio_suite(samples: usize, seed: u64) -> PropertyResult {
    let mut rng = rng_for(seed, 1);
    let mut t = Tally::new("boundary-ratio-inequality", None);
    for _ in 0..samples {
        let n = rng.gen_range(2..=4);
        let (x, y) = ball_pair(n, &mut rng);
        let beta = rng.gen_range(1e-6..1.0);
        let alpha = rng.gen_range(-beta..=beta);
        let (lhs, rhs) = boundary_ratio_inequality(&x, &y, beta, alpha);
        t.record(lhs / rhs, !(lhs <= rhs), || json!({ "x": x, "y": y, "beta": beta, "alpha": alpha, "lhs": lhs, "rhs": rhs }));
    }
    t.finish()
}

/// `G(x,y) <= C |x-y|^{2s-n} min{a^s, 1}` with the derived constant.
pub fn green_bound_suite(n: usize, s: f64, samples: usize, seed: u64) -> Result<PropertyResult, CliError> {
    let p = params(n, s)?;
    let k = BallKernels::new(&p)?;
    let mut rng = rng_for(seed, 2 + 16 * n as u64 + (s * 1e6) as u64);
    let mut t = Tally::new(format!("green-bound n={n} s={s}"), None);
    for _ in 0..samples {
        let (x, y) = ball_pair(n, &mut rng);
        let g = k.green(&x, &y)?;
        let bound = k.green_bound(&x, &y);
        // Relative slack for rounding in the two evaluations.
        t.record(g / bound, !(g <= bound * (1.0 + 1e-12)), || json!({ "x": x, "y": y, "green": g, "bound": bound }));
    }
    Ok(t.finish())
}

/// Analytic gradient against central differences at well-separated interior pairs.
pub fn gradient_fd_suite(pairs: usize, seed: u64) -> Result<PropertyResult, CliError> {
    let tol = 1e-4;
    let mut t = Tally::new("green-gradient-finite-differences", Some(tol));
    let mut rng = rng_for(seed, 3);
    for i in 0..pairs {
        let (n, s) = [(2, 0.75), (3, 0.6), (2, 0.3)][i % 3];
        let k = BallKernels::new(&params(n, s)?)?;
        let (x, y) = loop {
            let dir = direction(n, &mut rng);
            let x = at_radius(&dir, rng.gen_range(0.0..0.9));
            let dir = direction(n, &mut rng);
            let y = at_radius(&dir, rng.gen_range(0.0..0.9));
            let d = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
            if d > 0.1 {
                break (x, y);
            }
        };
        let g = k.green_gradient(&x, &y)?;
        let h = 1e-6;
        let mut fd = vec![0.0; n];
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            fd[j] = (k.green(&xp, &y)? - k.green(&xm, &y)?) / (2.0 * h);
        }
        let err = norm(&fd.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(&g);
        t.record(err, !(err <= tol), || json!({ "n": n, "s": s, "x": x, "y": y, "gradient": g, "finite_difference": fd }));
    }
    Ok(t.finish())
}

/// `|grad_x G(x,y)| (1-|x|)^r <= C_3 (1-|y|)^r |x-y|^{-(n-2s+1)}` for `r` spread over `[1-s, s]`.
pub fn gradient_bound_suite(n: usize, s: f64, samples: usize, seed: u64) -> Result<PropertyResult, CliError> {
    let mut t = Tally::new(format!("gradient-bound n={n} s={s}"), None);
    let mut rng = rng_for(seed, 4 + 16 * n as u64 + (s * 1e6) as u64);
    let kernels = (0..5)
        .map(|i| {
            let r = (1.0 - s) + (2.0 * s - 1.0) * i as f64 / 4.0;
            Ok((r, BallKernels::new(&params(n, s)?.with_weight(r)?)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for _ in 0..samples {
        let (r, k) = &kernels[rng.gen_range(0..kernels.len())];
        let r = *r;
        let (x, y) = ball_pair(n, &mut rng);
        let g = norm(&k.green_gradient(&x, &y)?);
        let lhs = g * (1.0 - norm(&x)).powf(r);
        let d = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        let rhs = k.gradient_bound(&y, d);
        t.record(lhs / rhs, !(lhs <= rhs * (1.0 + 1e-12)), || json!({ "x": x, "y": y, "r": r, "lhs": lhs, "rhs": rhs }));
    }
    Ok(t.finish())
}

/// `P*1 = 1` in the ball at probe points `|x| <= 0.8`.
pub fn poisson_normalization(
    n: usize,
    s: f64,
    probes: usize,
    spec: &QuadratureSpec,
    fault: Option<&FaultConfig>,
) -> Result<PropertyResult, CliError> {
    let tol = 5e-3;
    let p = params(n, s)?;
    let ops = Potentials::with_constants(&p, faulty_constants(&p, fault), spec)?;
    let one = ScalarField::constant(n, 1.0);
    let mut t = Tally::new(format!("poisson-normalization n={n} s={s}"), Some(tol));
    for x in probe_points(n, probes, 0.8) {
        let v = ops.poisson(&one, &x)?;
        let err = (v - 1.0).abs();
        t.record(err, !(err <= tol), || json!({ "x": x, "poisson_of_one": v }));
    }
    Ok(t.finish())
}

/// `G*1 = lambda^{-1} (1-|x|^2)^s` and `(-Delta)^s (1-|x|^2)_+^s = lambda` at a few points.
pub fn getoor_normalization(n: usize, s: f64, spec: &QuadratureSpec, fault: Option<&FaultConfig>) -> Result<Vec<PropertyResult>, CliError> {
    let tol = 1e-2;
    let p = params(n, s)?;
    let consts = faulty_constants(&p, fault);
    let lambda = getoor_constant(&p);
    let ops = Potentials::with_constants(&p, consts, spec)?;
    let one = ScalarField::constant(n, 1.0);
    let profile = parse_field("inside((1 - |x|^2)^s)", &p).map_err(CliError::from_field)?;
    let cub = Cubature::new(n, spec)?;
    let mut green = Tally::new(format!("green-normalization n={n} s={s}"), Some(tol));
    let mut pv = Tally::new(format!("pv-normalization n={n} s={s}"), Some(tol));
    for x in probe_points(n, 4, 0.6) {
        let exact = (1.0 - x.iter().map(|c| c * c).sum::<f64>()).powf(s) / lambda;
        let v = ops.green(&one, &x)?;
        let err = (v - exact).abs() / exact;
        green.record(err, !(err <= tol), || json!({ "x": x, "green_potential_of_one": v, "expected": exact }));
        let l = cub.frac_laplacian(&profile, &x, s, consts.c_pv)?;
        let err = (l - lambda).abs() / lambda;
        pv.record(err, !(err <= tol), || json!({ "x": x, "frac_laplacian": l, "expected": lambda }));
    }
    Ok(vec![green.finish(), pv.finish()])
}

/// Mollification reproduces constants and affine functions and keeps ball-supported fields in `B_{1+eps}`.
pub fn mollifier_suites(seed: u64) -> Result<Vec<PropertyResult>, CliError> {
    let mut rng = rng_for(seed, 5);
    let mut constant = Tally::new("mollifier-constants", Some(1e-10));
    let mut affine = Tally::new("mollifier-affine", Some(1e-8));
    let mut support = Tally::new("mollifier-support", Some(0.0));
    for n in 2..=3 {
        let p = params(n, 0.5)?;
        let c = 3.7;
        let lin = parse_field("0.25 - 1.5*x1 + 2*x2", &p).map_err(CliError::from_field)?;
        let ball = parse_field("inside(1 + x1^2)", &p).map_err(CliError::from_field)?;
        for &eps in &[0.05, 0.2, 0.5] {
            let jc = mollify(&ScalarField::constant(n, c), eps, &p)?;
            let jl = mollify(&lin, eps, &p)?;
            let jb = mollify(&ball, eps, &p)?;
            for _ in 0..20 {
                let dir = direction(n, &mut rng);
                let x = at_radius(&dir, rng.gen_range(0.0..2.0));
                let err = (jc.eval(&x) - c).abs();
                constant.record(err, !(err <= 1e-10), || json!({ "n": n, "eps": eps, "x": x, "error": err }));
                let err = (jl.eval(&x) - lin.eval(&x)).abs();
                affine.record(err, !(err <= 1e-8), || json!({ "n": n, "eps": eps, "x": x, "error": err }));
                let outside = at_radius(&dir, 1.0 + eps + rng.gen_range(1e-9..0.5));
                let v = jb.eval(&outside);
                support.record(v.abs(), v != 0.0, || json!({ "n": n, "eps": eps, "x": outside, "value": v }));
            }
        }
    }
    Ok(vec![constant.finish(), affine.finish(), support.finish()])
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let pc = &cfg.properties;
    let spec = cfg.quadrature()?;
    if pc.pairs.is_empty() {
        return Err(CliError::Config("properties.pairs must list at least one (n, s) pair".into()));
    }
    for &(n, s) in &pc.pairs {
        params(n, s)?;
    }
    if let Some(f) = &pc.fault {
        if !(f.scale.is_finite() && f.scale > 0.0) {
            return Err(CliError::Config("properties.fault.scale must be a positive number".into()));
        }
    }
    let fault = pc.fault.as_ref();
    let seed = pc.seed;

    let mut results = vec![boundary_ratio_suite(pc.ratio_samples, seed)];
    for &(n, s) in &pc.pairs {
        results.push(green_bound_suite(n, s, pc.bound_samples, seed)?);
    }
    results.push(gradient_fd_suite(pc.gradient_pairs, seed)?);
    for &(n, s) in pc.pairs.iter().filter(|(_, s)| *s > 0.5) {
        results.push(gradient_bound_suite(n, s, pc.gradient_bound_samples, seed)?);
    }
    for &(n, s) in &pc.pairs {
        results.push(poisson_normalization(n, s, pc.normalization_probes, &spec, fault)?);
    }
    let (n0, s0) = pc.pairs[0];
    let getoor_pair = pc.pairs.iter().copied().find(|&(n, _)| n == 2).unwrap_or((n0, s0));
    results.extend(getoor_normalization(getoor_pair.0, getoor_pair.1, &spec, fault)?);
    results.extend(mollifier_suites(seed)?);

    let passed = results.iter().all(|r| r.passed);
    let mut csv = Csv::new(&["property", "passed", "samples", "violations", "worst", "tolerance"]);
    for r in &results {
        csv.row([r.name.clone(), r.passed.to_string(), r.samples.to_string(), r.violations.to_string(), num(r.worst), opt(r.tolerance)]);
    }
    let report = PropertyReport { seed, fault: pc.fault, properties: results };
    Outcome::new("properties", passed, &report, csv.finish())
}
