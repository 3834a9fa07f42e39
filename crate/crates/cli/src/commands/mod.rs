pub mod embedding;
pub mod kernel;
pub mod properties;
pub mod solve;
pub mod trace;
pub mod verify;

use fracball::potentials::{nontrivial_solution_field, radial_green_interpolant, PotentialField, Potentials};
use fracball::quadrature::{QuadratureSpec, ScalarField};
use fracball::ProblemParams;

use crate::config::{ExperimentConfig, Subject};
use crate::error::CliError;

/// Deterministic points of the ball with norms spread evenly over `[0, radius]`.
pub fn probe_points(n: usize, count: usize, radius: f64) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let r = if count > 1 { radius * k as f64 / (count - 1) as f64 } else { 0.0 };
            let mut dir: Vec<f64> = (0..n).map(|j| (golden * (k + 1) as f64 * (j + 1) as f64).cos()).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len < 1e-8 {
                dir = (0..n).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect();
            } else {
                dir.iter_mut().for_each(|v| *v /= len);
            }
            dir.into_iter().map(|v| v * r).collect()
        })
        .collect()
}

/// The field named by `subject`. Radial Green potentials are replaced by their smooth radial
/// interpolant when `radial_nodes > 0`.
pub fn subject_field(
    subject: Subject,
    cfg: &ExperimentConfig,
    params: &ProblemParams,
    spec: &QuadratureSpec,
    radial_nodes: usize,
) -> Result<ScalarField, CliError> {
    Ok(match subject {
        Subject::Nontrivial => nontrivial_solution_field(params),
        Subject::Field => cfg.require_scalar("u", cfg.fields.u.as_deref(), params)?,
        Subject::GreenPotential => {
            let f = cfg.require_scalar("f", cfg.fields.f.as_deref(), params)?;
            if f.is_radial() && radial_nodes > 0 {
                radial_green_interpolant(&Potentials::new(params, spec)?, &f, radial_nodes)?
            } else {
                PotentialField::green(&f, params, spec)?.into_field()
            }
        }
        Subject::PoissonExtension => {
            let g = cfg.require_scalar("g", cfg.fields.g.as_deref(), params)?;
            PotentialField::poisson(&g, params, spec)?.into_field()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probes_fill_the_radius() {
        let pts = probe_points(3, 10, 0.7);
        assert_eq!(pts.len(), 10);
        let norms: Vec<f64> = pts.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        assert_eq!(norms[0], 0.0);
        assert!((norms[9] - 0.7).abs() < 1e-12);
        assert!(norms.windows(2).all(|w| w[1] > w[0]));
    }
}
