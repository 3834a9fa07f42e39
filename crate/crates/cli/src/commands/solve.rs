use fracball::solver::{apriori_ratio, node_norm, CoefficientBundle, DiscreteSolution, ResidualReport, Solver};
use fracball::ProblemParams;
use serde::Serialize;

use super::embedding::{target_exponent, Case, ExponentPair};
use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;
use crate::report::{num, opt, Csv, Outcome};

/// One case of the gradient estimate `|| |grad u| ||_{L^q_r} <= C ||f||_{L^p_r}` on the nodes.
#[derive(Debug, Clone, Serialize)]
pub struct GradientNormRow {
    pub exponents: ExponentPair,
    pub f_norm: f64,
    pub gradient_norm: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub params: ProblemParams,
    pub nodes: usize,
    pub converged: bool,
    pub iterations_used: usize,
    pub iterations_per_step: Vec<usize>,
    pub tau_path: Vec<f64>,
    pub final_increment: Option<f64>,
    pub coefficient_bound: Option<f64>,
    pub min_value: f64,
    pub residual: Option<ResidualReport>,
    pub residual_tolerance: f64,
    pub residual_ok: bool,
    pub apriori_ratio: f64,
    pub gradient_norms: Vec<GradientNormRow>,
    pub solution_file: String,
    pub solver_spec_sha256: String,
}

/// The three gradient cases at representative exponents; the middle case uses `params.p` when it
/// lies in that range.
pub fn gradient_table(sol: &DiscreteSolution, forcing: &[f64]) -> Vec<GradientNormRow> {
    let params = &sol.params;
    let (n, s, r) = (params.n, params.s, params.r);
    let order = 2.0 * s - 1.0;
    let critical = n as f64 / order;
    let endpoint_bound = n as f64 / (n as f64 - order);
    let middle = if params.p > 1.0 && params.p < critical { params.p } else { 0.5 * (1.0 + critical) };
    let choices = [(1.0, 0.5 * (1.0 + endpoint_bound)), (middle, 1.0), (2.0 * critical, 1.0)];
    let grad_mag: Vec<f64> = sol.gradients.iter().map(|g| g.iter().map(|c| c * c).sum::<f64>().sqrt()).collect();
    choices
        .iter()
        .filter_map(|&(p, q)| target_exponent(n, order, p, q).ok())
        .map(|exponents| {
            let f_norm = node_norm(&sol.nodes, &sol.weights, forcing, exponents.p.0, r);
            let gradient_norm = node_norm(&sol.nodes, &sol.weights, &grad_mag, exponents.q.0, r);
            let ratio = (f_norm > 0.0).then(|| gradient_norm / f_norm);
            GradientNormRow { exponents, f_norm, gradient_norm, ratio }
        })
        .collect()
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let spec = cfg.solver()?;
    let f = cfg.scalar(cfg.fields.f.as_deref(), "1", &params)?;
    let b = cfg.drift(&params)?;
    let c = cfg.scalar(cfg.fields.c.as_deref(), "0", &params)?;
    let coeffs = CoefficientBundle::new(b, c)?;
    let format = cfg.output.format.unwrap_or_default();

    let solver = Solver::new(&coeffs, &params, &spec)?;
    let sol = solver.solve(&f)?;
    let forcing: Vec<f64> = sol.nodes.iter().map(|x| f.eval(x)).collect();
    let apriori = apriori_ratio(&sol, &f, &params, &spec)?;
    let gradient_norms = gradient_table(&sol, &forcing);

    let diag = sol.diagnostics.clone();
    let residual = diag.as_ref().and_then(|d| d.residual.clone());
    let tol = cfg.solve.residual_tolerance;
    let residual_ok = residual.as_ref().is_some_and(|r| r.norm <= tol * r.forcing_norm || r.norm <= 1e-12);

    let solution_file = match format {
        Format::Json => "solution.json",
        Format::Csv => "solution.csv",
    };
    let solution_text = match format {
        Format::Json => sol.to_json()?,
        Format::Csv => sol.to_csv(),
    };

    let mut csv = Csv::new(&["p", "q", "case", "f_norm", "gradient_norm", "ratio"]);
    for row in &gradient_norms {
        csv.row([
            row.exponents.p.to_string(),
            row.exponents.q.to_string(),
            case_name(row.exponents.case).to_string(),
            num(row.f_norm),
            num(row.gradient_norm),
            opt(row.ratio),
        ]);
    }
    let report = SolveReport {
        params,
        nodes: sol.len(),
        converged: sol.converged,
        iterations_used: sol.iterations_used,
        iterations_per_step: sol.iterations_per_step.clone(),
        tau_path: sol.tau_path.clone(),
        final_increment: diag.as_ref().map(|d| d.final_increment),
        coefficient_bound: diag.as_ref().map(|d| d.lambda),
        min_value: sol.min_value(),
        residual,
        residual_tolerance: tol,
        residual_ok,
        apriori_ratio: apriori,
        gradient_norms,
        solution_file: solution_file.to_string(),
        solver_spec_sha256: sol.provenance.solver_spec_sha256.clone(),
    };
    Ok(Outcome::new("solve", residual_ok && sol.converged, &report, csv.finish())?.with_artifact(solution_file, solution_text))
}

fn case_name(case: Case) -> &'static str {
    match case {
        Case::EndpointOne => "endpoint-one",
        Case::Subcritical => "subcritical",
        Case::Supercritical => "supercritical",
    }
}
