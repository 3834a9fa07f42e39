//! Weighted embedding ratios of Green potentials.
//!
//! For `f in L^p_r` the potential `G*f` lies in `L^q_r` with
//!
//! * `p = 1`: any `1 <= q < n/(n-2s)`,
//! * `1 < p < n/(2s)`: `q = np/(n-2sp)`,
//! * `p > n/(2s)`: `q = inf`,
//!
//! for `-s <= r <= s`, and when `1/2 < s < 1`, `1-s <= r <= s` its gradient lies in `L^q_r` with
//! `2s - 1` in place of `2s` throughout. The critical exponents themselves are excluded.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use fracball::fieldspec::parse_field;
use fracball::potentials::Potentials;
use fracball::quadrature::{QuadratureSpec, ScalarField, Symmetry};
use fracball::weighted_norms::weighted_lp_norm;
use fracball::{Error, ProblemParams};
use serde::Serialize;

use crate::config::{ExperimentConfig, Exponent};
use crate::error::CliError;
use crate::report::{num, opt, Csv, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    /// `p = 1` with a free target exponent below the critical one.
    EndpointOne,
    /// `1 < p` below the critical exponent: the Sobolev exponent.
    Subcritical,
    /// `p` above the critical exponent: bounded.
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentPair {
    pub p: Exponent,
    pub q: Exponent,
    pub case: Case,
    /// The exclusive bound on `q` for `p = 1`, or the critical `p` otherwise.
    pub critical: f64,
}

/// Target exponent for an operator of order `order` (`2s` for values, `2s-1` for gradients).
pub fn target_exponent(n: usize, order: f64, p: f64, q_requested: f64) -> Result<ExponentPair, String> {
    let nf = n as f64;
    if !(p >= 1.0) {
        return Err(format!("p = {p} must be >= 1"));
    }
    if p == 1.0 {
        let bound = nf / (nf - order);
        if !(q_requested >= 1.0 && q_requested < bound) {
            return Err(format!("for p = 1 the target exponent must satisfy 1 <= q < {bound}, got q = {q_requested}"));
        }
        return Ok(ExponentPair { p: Exponent(1.0), q: Exponent(q_requested), case: Case::EndpointOne, critical: bound });
    }
    let critical = nf / order;
    if p.is_infinite() || p > critical {
        return Ok(ExponentPair { p: Exponent(p), q: Exponent::INF, case: Case::Supercritical, critical });
    }
    if p < critical {
        let q = nf * p / (nf - order * p);
        return Ok(ExponentPair { p: Exponent(p), q: Exponent(q), case: Case::Subcritical, critical });
    }
    Err(format!("p = {p} equals the critical exponent n/{order}, which is excluded"))
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingRow {
    pub t: f64,
    pub density: String,
    /// Whether `f_t` lies in `L^p_r`; rows outside are listed but not evaluated.
    pub in_space: bool,
    pub f_norm: Option<f64>,
    pub value_ratio: Option<f64>,
    pub gradient_ratio: Option<f64>,
    pub refined_value_ratio: Option<f64>,
    pub refined_gradient_ratio: Option<f64>,
    pub value_change: Option<f64>,
    pub gradient_change: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    pub params: ProblemParams,
    pub value_exponents: ExponentPair,
    /// Absent when the gradient hypotheses do not hold.
    pub gradient_exponents: Option<ExponentPair>,
    pub notes: Vec<String>,
    pub refine: usize,
    pub stability: f64,
    pub rows: Vec<EmbeddingRow>,
    pub max_value_ratio: f64,
    pub max_gradient_ratio: Option<f64>,
    /// Largest relative change of any ratio under refinement.
    pub max_change: f64,
}

struct Ratios {
    f_norm: f64,
    value: f64,
    gradient: Option<f64>,
}

/// Value and gradient magnitude of `G*f` from one quadrature pass per point, shared by the two
/// norm evaluations that visit the same nodes.
#[derive(Clone)]
struct PotentialCache {
    ops: Arc<Potentials>,
    density: ScalarField,
    with_gradient: bool,
    memo: Arc<Mutex<HashMap<Vec<u64>, (f64, f64)>>>,
}

impl PotentialCache {
    fn get(&self, x: &[f64]) -> (f64, f64) {
        let key: Vec<u64> = x.iter().map(|c| c.to_bits()).collect();
        if let Some(&v) = self.memo.lock().expect("cache lock").get(&key) {
            return v;
        }
        let v = if x.iter().map(|c| c * c).sum::<f64>() >= 1.0 {
            (0.0, 0.0)
        } else if self.with_gradient {
            match self.ops.green_with_gradient(&self.density, x) {
                Ok((u, g)) => (u, g.iter().map(|c| c * c).sum::<f64>().sqrt()),
                Err(_) => (f64::NAN, f64::NAN),
            }
        } else {
            (self.ops.green(&self.density, x).unwrap_or(f64::NAN), 0.0)
        };
        self.memo.lock().expect("cache lock").insert(key, v);
        v
    }

    fn field(&self, pick: fn((f64, f64)) -> f64) -> ScalarField {
        let cache = self.clone();
        let mut field = ScalarField::new(self.ops.params().n, move |x| pick(cache.get(x))).ball_only();
        if self.density.is_radial() {
            field = field.with_symmetry(Symmetry::Radial);
        }
        field
    }
}

fn ratios(
    f: &ScalarField,
    params: &ProblemParams,
    spec: &QuadratureSpec,
    value: &ExponentPair,
    gradient: Option<&ExponentPair>,
) -> Result<Ratios, Error> {
    let r = params.r;
    let f_norm = weighted_lp_norm(f, value.p.0, r, params, spec)?;
    if !(f_norm > 0.0 && f_norm.is_finite()) {
        return Err(Error::DivisionByZero(format!("||f||_(L^p_r) = {f_norm}")));
    }
    let cache = PotentialCache {
        ops: Arc::new(Potentials::new(params, spec)?),
        density: f.clone(),
        with_gradient: gradient.is_some(),
        memo: Arc::new(Mutex::new(HashMap::new())),
    };
    let value_norm = weighted_lp_norm(&cache.field(|v| v.0), value.q.0, r, params, spec)?;
    let gradient = match gradient {
        Some(g) => Some(weighted_lp_norm(&cache.field(|v| v.1), g.q.0, r, params, spec)? / f_norm),
        None => None,
    };
    Ok(Ratios { f_norm, value: value_norm / f_norm, gradient })
}

fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let spec = cfg.quadrature()?;
    let ec = &cfg.embedding;
    let (n, s, r, p) = (params.n, params.s, params.r, params.p);
    if ec.t_values.is_empty() || ec.t_values.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(CliError::Config("embedding.t_values must be a nonempty list of positive numbers".into()));
    }
    if ec.refine < 2 {
        return Err(CliError::Config("embedding.refine must be at least 2".into()));
    }
    if !(ec.stability > 0.0) {
        return Err(CliError::Config("embedding.stability must be positive".into()));
    }
    if r < -s || r > s {
        return Err(CliError::Config(format!("the value embedding needs -s <= r <= s, got r = {r}, s = {s}")));
    }
    let value = target_exponent(n, 2.0 * s, p, params.q).map_err(CliError::Config)?;
    let mut notes = Vec::new();
    let gradient_hypotheses = if s <= 0.5 {
        Err(format!("the gradient embedding needs s > 1/2, got s = {s}"))
    } else if r < 1.0 - s || r > s {
        Err(format!("the gradient embedding needs 1-s <= r <= s, got r = {r}"))
    } else {
        target_exponent(n, 2.0 * s - 1.0, p, params.q)
    };
    let gradient = match (ec.gradient, gradient_hypotheses) {
        (Some(false), _) => None,
        (_, Ok(g)) => Some(g),
        (Some(true), Err(e)) => return Err(CliError::Config(e)),
        (None, Err(e)) => {
            notes.push(format!("gradient column omitted: {e}"));
            None
        }
    };
    let refined = spec.refined(ec.refine);

    let mut rows = Vec::with_capacity(ec.t_values.len());
    for &t in &ec.t_values {
        let exponent = t - s;
        let density = format!("inside(delta^({exponent}))");
        let f = parse_field(&density, &params).map_err(CliError::from_field)?;
        // delta^(a) with weight delta^r is in L^p iff (a + r) p > -1.
        let in_space = if p.is_infinite() { exponent + r >= 0.0 } else { (exponent + r) * p > -1.0 };
        if !in_space {
            notes.push(format!("t = {t}: f_t is not in L^{p}_{r}; row skipped"));
            rows.push(EmbeddingRow {
                t,
                density,
                in_space,
                f_norm: None,
                value_ratio: None,
                gradient_ratio: None,
                refined_value_ratio: None,
                refined_gradient_ratio: None,
                value_change: None,
                gradient_change: None,
            });
            continue;
        }
        let base = ratios(&f, &params, &spec, &value, gradient.as_ref())?;
        let fine = ratios(&f, &params, &refined, &value, gradient.as_ref())?;
        let gradient_change = match (base.gradient, fine.gradient) {
            (Some(a), Some(b)) => Some(relative_change(a, b)),
            _ => None,
        };
        rows.push(EmbeddingRow {
            t,
            density,
            in_space,
            f_norm: Some(base.f_norm),
            value_ratio: Some(base.value),
            gradient_ratio: base.gradient,
            refined_value_ratio: Some(fine.value),
            refined_gradient_ratio: fine.gradient,
            value_change: Some(relative_change(base.value, fine.value)),
            gradient_change,
        });
    }

    let evaluated: Vec<&EmbeddingRow> = rows.iter().filter(|r| r.in_space).collect();
    let max_of = |vals: Vec<f64>| vals.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let max_value_ratio = max_of(evaluated.iter().filter_map(|r| r.value_ratio).collect());
    let max_gradient_ratio = gradient.map(|_| max_of(evaluated.iter().filter_map(|r| r.gradient_ratio).collect()));
    let max_change = max_of(
        evaluated.iter().flat_map(|r| [r.value_change, r.gradient_change]).flatten().collect(),
    );
    let finite = max_value_ratio.is_finite() && max_gradient_ratio.map_or(true, f64::is_finite);
    let passed = !evaluated.is_empty() && finite && max_change <= ec.stability;

    let mut csv = Csv::new(&[
        "t",
        "in_space",
        "f_norm",
        "value_ratio",
        "refined_value_ratio",
        "gradient_ratio",
        "refined_gradient_ratio",
    ]);
    for row in &rows {
        csv.row([
            num(row.t),
            row.in_space.to_string(),
            opt(row.f_norm),
            opt(row.value_ratio),
            opt(row.refined_value_ratio),
            opt(row.gradient_ratio),
            opt(row.refined_gradient_ratio),
        ]);
    }
    let report = EmbeddingReport {
        params,
        value_exponents: value,
        gradient_exponents: gradient,
        notes,
        refine: ec.refine,
        stability: ec.stability,
        rows,
        max_value_ratio,
        max_gradient_ratio,
        max_change,
    };
    Outcome::new("embedding-table", passed, &report, csv.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_split() {
        // n = 2, s = 3/4: values critical at 4/3, gradients at 4.
        let v = target_exponent(2, 1.5, 1.0, 1.2).unwrap();
        assert_eq!((v.case, v.q), (Case::EndpointOne, Exponent(1.2)));
        assert!((v.critical - 4.0).abs() < 1e-12);
        assert!(target_exponent(2, 1.5, 1.0, 4.0).is_err());
        assert!(target_exponent(2, 1.5, 1.0, 0.5).is_err());

        let v = target_exponent(2, 1.5, 1.2, 1.0).unwrap();
        assert_eq!(v.case, Case::Subcritical);
        assert!((v.q.0 - 2.4 / (2.0 - 1.8)).abs() < 1e-12);
        assert_eq!(target_exponent(2, 1.5, 2.0, 1.0).unwrap().q, Exponent::INF);
        assert!(target_exponent(2, 1.5, 4.0 / 3.0, 1.0).is_err());

        let g = target_exponent(2, 0.5, 2.0, 1.0).unwrap();
        assert_eq!(g.case, Case::Subcritical);
        assert!((g.q.0 - 4.0).abs() < 1e-12);
        // n = 2, s = 0.8, p = 6 > n/(2s-1) = 10/3.
        let g = target_exponent(2, 0.6, 6.0, 1.0).unwrap();
        assert_eq!((g.case, g.q), (Case::Supercritical, Exponent::INF));
        assert_eq!(target_exponent(2, 1.5, f64::INFINITY, 1.0).unwrap().case, Case::Supercritical);
    }
}
