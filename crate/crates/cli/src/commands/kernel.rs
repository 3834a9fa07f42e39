use fracball::kernels::{self, getoor_constant, singular_trace_limit, BallKernels, KernelConstants};
use fracball::potentials::Potentials;
use fracball::ProblemParams;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::report::{num, opt, Csv, Outcome};

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub params: ProblemParams,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub constants: KernelConstants,
    pub getoor_constant: f64,
    pub singular_trace_limit: f64,
    pub green_bound_constant: f64,
    pub gradient_bound_constant: Option<f64>,
    pub rho: Option<f64>,
    pub incomplete_integral: Option<f64>,
    pub green: Option<f64>,
    pub green_gradient: Option<Vec<f64>>,
    pub green_bound: Option<f64>,
    /// `P(x, y)` when `y` lies outside the closed ball.
    pub poisson: Option<f64>,
    /// `P*g(x)` when `fields.g` is given.
    pub poisson_extension: Option<f64>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let n = params.n;
    let x = if cfg.kernel.x.is_empty() { axis_point(n, 0.3) } else { cfg.kernel.x.clone() };
    let y = if cfg.kernel.y.is_empty() { axis_point(n, -0.4) } else { cfg.kernel.y.clone() };
    for (name, p) in [("x", &x), ("y", &y)] {
        if p.len() != n {
            return Err(CliError::Config(format!("kernel.{name} has {} coordinates, expected {n}", p.len())));
        }
    }
    let g = cfg.fields.g.as_deref().map(|t| cfg.scalar(Some(t), "", &params)).transpose()?;
    let quad = cfg.quadrature()?;

    let k = BallKernels::new(&params)?;
    let norm = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let interior = norm(&x) < 1.0 && norm(&y) < 1.0;
    let (rho, incomplete, green, grad, bound) = if interior {
        let rho = kernels::rho(&x, &y)?;
        (
            Some(rho),
            Some(kernels::incomplete_kernel_integral(rho, &params)?),
            Some(k.green(&x, &y)?),
            Some(k.green_gradient(&x, &y)?),
            Some(k.green_bound(&x, &y)),
        )
    } else {
        (None, None, None, None, None)
    };
    let poisson = if norm(&x) < 1.0 && norm(&y) > 1.0 { Some(k.poisson(&x, &y)?) } else { None };
    let poisson_extension = match &g {
        Some(g) => Some(Potentials::new(&params, &quad)?.poisson(g, &x)?),
        None => None,
    };
    let report = KernelReport {
        params,
        constants: *k.constants(),
        getoor_constant: getoor_constant(&params),
        singular_trace_limit: singular_trace_limit(&params),
        green_bound_constant: k.green_bound_constant(),
        gradient_bound_constant: (params.s > 0.5).then(|| k.gradient_bound_constant()),
        rho,
        incomplete_integral: incomplete,
        green,
        green_gradient: grad,
        green_bound: bound,
        poisson,
        poisson_extension,
        x,
        y,
    };
    let mut csv = Csv::new(&["quantity", "value"]);
    let rows: [(&str, Option<f64>); 12] = [
        ("c_pv", Some(report.constants.c_pv)),
        ("c_poisson", Some(report.constants.c_poisson)),
        ("kappa", Some(report.constants.kappa)),
        ("c_boundary", Some(report.constants.c_boundary)),
        ("getoor_constant", Some(report.getoor_constant)),
        ("singular_trace_limit", Some(report.singular_trace_limit)),
        ("green_bound_constant", Some(report.green_bound_constant)),
        ("gradient_bound_constant", report.gradient_bound_constant),
        ("rho", report.rho),
        ("green", report.green),
        ("poisson", report.poisson),
        ("poisson_extension", report.poisson_extension),
    ];
    for (name, v) in rows {
        csv.row([name.to_string(), opt(v)]);
    }
    if let Some(g) = &report.green_gradient {
        for (i, v) in g.iter().enumerate() {
            csv.row([format!("green_gradient_{}", i + 1), num(*v)]);
        }
    }
    Outcome::new("kernel-eval", true, &report, csv.finish())
}

fn axis_point(n: usize, t: f64) -> Vec<f64> {
    (0..n).map(|k| if k == 0 { t } else { 0.0 }).collect()
}
