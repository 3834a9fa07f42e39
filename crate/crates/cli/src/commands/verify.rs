use fracball::kernels::{constants, singular_trace_limit};
use fracball::quadrature::frac_laplacian_pv;
use fracball::weighted_norms::{dyadic_schedule, trace_limit_estimate, TraceClass, TraceReport};
use fracball::ProblemParams;
use serde::Serialize;

use super::{probe_points, subject_field};
use crate::config::{ExperimentConfig, Subject};
use crate::error::CliError;
use crate::report::{num, Csv, Outcome};

#[derive(Debug, Clone, Serialize)]
pub struct PvProbe {
    pub x: Vec<f64>,
    pub value: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonuniquenessReport {
    pub params: ProblemParams,
    pub subject: Subject,
    /// `C(n,s)` of the boundary identity of the singular solution.
    pub boundary_constant: f64,
    pub pv_tolerance: f64,
    pub probes: Vec<PvProbe>,
    pub max_abs_pv: f64,
    pub pv_ok: bool,
    pub trace: TraceReport,
    /// `C(n,s) |S^{n-1}| 2^{s-1} / s`.
    pub expected_limit: f64,
    pub limit_relative_error: f64,
    pub classification_ok: bool,
    pub limit_ok: bool,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let quad = cfg.quadrature()?;
    let vc = &cfg.verify;
    if !(vc.probe_radius >= 0.0 && vc.probe_radius < 1.0) || vc.probes == 0 {
        return Err(CliError::Config("verify needs probes >= 1 and 0 <= probe_radius < 1".into()));
    }
    if vc.first > vc.last || vc.first < 3 {
        return Err(CliError::Config("verify trace schedule must satisfy 3 <= first <= last".into()));
    }
    let u = subject_field(vc.subject, cfg, &params, &quad, vc.radial_nodes)?;
    let c_boundary = constants(&params).c_boundary;
    let bound = vc.pv_tolerance * c_boundary;

    let mut probes = Vec::with_capacity(vc.probes);
    for x in probe_points(params.n, vc.probes, vc.probe_radius) {
        let value = frac_laplacian_pv(&u, &x, &params, &quad)?;
        probes.push(PvProbe { ok: value.abs() <= bound, x, value });
    }
    let max_abs_pv = probes.iter().fold(0.0f64, |m, p| m.max(p.value.abs()));
    let pv_ok = probes.iter().all(|p| p.ok);

    let trace = trace_limit_estimate(&u, &dyadic_schedule(vc.first, vc.last), &params, &quad, &vc.thresholds)?;
    let expected_limit = singular_trace_limit(&params);
    let limit_relative_error = (trace.extrapolated_limit - expected_limit).abs() / expected_limit;
    let classification_ok = trace.classification == TraceClass::Positive;
    let limit_ok = limit_relative_error <= vc.limit_tolerance;
    let passed = pv_ok && classification_ok && limit_ok;

    let mut csv = Csv::new(&["kind", "position", "value"]);
    for p in &probes {
        let pos: Vec<String> = p.x.iter().map(|v| format!("{v:.6}")).collect();
        csv.row(["pv".to_string(), pos.join(" "), num(p.value)]);
    }
    for (e, v) in trace.eps_schedule.iter().zip(&trace.values) {
        csv.row(["trace".to_string(), num(*e), num(*v)]);
    }
    csv.row(["limit".to_string(), String::new(), num(trace.extrapolated_limit)]);
    csv.row(["expected_limit".to_string(), String::new(), num(expected_limit)]);

    let report = NonuniquenessReport {
        params,
        subject: vc.subject,
        boundary_constant: c_boundary,
        pv_tolerance: vc.pv_tolerance,
        probes,
        max_abs_pv,
        pv_ok,
        trace,
        expected_limit,
        limit_relative_error,
        classification_ok,
        limit_ok,
    };
    Outcome::new("verify-nonuniqueness", passed, &report, csv.finish())
}
