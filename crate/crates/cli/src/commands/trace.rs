use fracball::weighted_norms::{dyadic_schedule, trace_limit_estimate, TraceClass, TraceReport};
use fracball::ProblemParams;
use serde::Serialize;

use super::subject_field;
use crate::config::{ExperimentConfig, Subject};
use crate::error::CliError;
use crate::report::{num, Csv, Outcome};

#[derive(Debug, Clone, Serialize)]
pub struct TraceCommandReport {
    pub params: ProblemParams,
    pub subject: Subject,
    pub label: Option<String>,
    pub expected: Option<TraceClass>,
    /// Successive ratios `T_{eps_{k+1}} / T_{eps_k}`.
    pub ratios: Vec<f64>,
    pub monotone_decreasing: bool,
    pub trace: TraceReport,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let quad = cfg.quadrature()?;
    let tc = &cfg.trace;
    if tc.first > tc.last || tc.first < 3 {
        return Err(CliError::Config(format!(
            "trace schedule 2^-{}..2^-{} must satisfy 3 <= first <= last",
            tc.first, tc.last
        )));
    }
    let u = subject_field(tc.subject, cfg, &params, &quad, tc.radial_nodes)?;
    let schedule = dyadic_schedule(tc.first, tc.last);
    let trace = trace_limit_estimate(&u, &schedule, &params, &quad, &tc.thresholds)?;
    let ratios: Vec<f64> = trace.values.windows(2).map(|w| w[1] / w[0]).collect();
    let monotone_decreasing = trace.values.windows(2).all(|w| w[1] < w[0]);
    let passed = tc.expect.map_or(true, |c| c == trace.classification);

    let mut csv = Csv::new(&["eps", "value"]);
    for (e, v) in trace.eps_schedule.iter().zip(&trace.values) {
        csv.row([num(*e), num(*v)]);
    }
    let report = TraceCommandReport {
        params,
        subject: tc.subject,
        label: u.label().map(str::to_string),
        expected: tc.expect,
        ratios,
        monotone_decreasing,
        trace,
    };
    Outcome::new("trace", passed, &report, csv.finish())
}
