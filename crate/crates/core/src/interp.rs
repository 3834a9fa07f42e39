//! Polyharmonic cubic radial-basis interpolation with a linear polynomial tail.
//!
//! The interpolant of data `d_j` at nodes `x_j` is
//! `sum_j a_j |x - x_j|^3 + c_0 + c . x` with `sum_j a_j = 0` and `sum_j a_j x_j = 0`.
//! It reproduces affine functions exactly and is `C^2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::MAX_DIM;

#[derive(Debug, Clone)]
pub struct RbfBasis {
    n: usize,
    nodes: Vec<[f64; MAX_DIM]>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl RbfBasis {
    pub fn new(n: usize, nodes: &[Vec<f64>]) -> Result<Self> {
        if nodes.len() < n + 1 {
            return Err(Error::Precondition(format!("need at least {} interpolation nodes", n + 1)));
        }
        let pts: Vec<[f64; MAX_DIM]> = nodes
            .iter()
            .map(|p| {
                let mut a = [0.0; MAX_DIM];
                a[..n].copy_from_slice(&p[..n]);
                a
            })
            .collect();
        let m = pts.len();
        let size = m + n + 1;
        let mut a = DMatrix::<f64>::zeros(size, size);
        for i in 0..m {
            for j in 0..i {
                let v = dist(&pts[i][..n], &pts[j][..n]).powi(3);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            a[(i, m)] = 1.0;
            a[(m, i)] = 1.0;
            for k in 0..n {
                a[(i, m + 1 + k)] = pts[i][k];
                a[(m + 1 + k, i)] = pts[i][k];
            }
        }
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularSystem);
        }
        Ok(Self { n, nodes: pts, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Length of the coefficient vector: one per node plus the affine part.
    pub fn width(&self) -> usize {
        self.nodes.len() + self.n + 1
    }

    /// Coefficients reproducing `data` at the nodes.
    pub fn coefficients(&self, data: &[f64]) -> Result<Vec<f64>> {
        let m = self.nodes.len();
        if data.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: data.len() });
        }
        let mut rhs = DVector::<f64>::zeros(self.width());
        rhs.rows_mut(0, m).copy_from_slice(data);
        let sol = self.lu.solve(&rhs).ok_or(Error::SingularSystem)?;
        Ok(sol.as_slice().to_vec())
    }

    /// The map from data at the nodes to coefficients: a `width x len` matrix.
    pub fn data_to_coefficients(&self) -> Result<DMatrix<f64>> {
        let m = self.nodes.len();
        let mut rhs = DMatrix::<f64>::zeros(self.width(), m);
        for j in 0..m {
            rhs[(j, j)] = 1.0;
        }
        self.lu.solve(&rhs).ok_or(Error::SingularSystem)
    }

    /// Basis functions at `y`, in coefficient order.
    pub fn basis_into(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        let m = self.nodes.len();
        for (o, p) in out[..m].iter_mut().zip(&self.nodes) {
            *o = dist(y, &p[..n]).powi(3);
        }
        out[m] = 1.0;
        out[m + 1..m + 1 + n].copy_from_slice(&y[..n]);
    }

    pub fn eval(&self, coeffs: &[f64], y: &[f64]) -> f64 {
        let n = self.n;
        let m = self.nodes.len();
        let mut acc = coeffs[m];
        for k in 0..n {
            acc += coeffs[m + 1 + k] * y[k];
        }
        for (a, p) in coeffs[..m].iter().zip(&self.nodes) {
            acc += a * dist(y, &p[..n]).powi(3);
        }
        acc
    }

    /// Value and gradient.
    pub fn eval_with_gradient(&self, coeffs: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n;
        let m = self.nodes.len();
        let mut acc = coeffs[m];
        for k in 0..n {
            acc += coeffs[m + 1 + k] * y[k];
            grad[k] = coeffs[m + 1 + k];
        }
        for (a, p) in coeffs[..m].iter().zip(&self.nodes) {
            let d = dist(y, &p[..n]);
            acc += a * d * d * d;
            let f = 3.0 * a * d;
            for k in 0..n {
                grad[k] += f * (y[k] - p[k]);
            }
        }
        acc
    }
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for i in 0..9 {
            for j in 0..9 {
                let (x, y) = (-0.8 + 0.2 * i as f64, -0.8 + 0.2 * j as f64);
                if x * x + y * y < 0.9 {
                    pts.push(vec![x, y]);
                }
            }
        }
        pts
    }

    #[test]
    fn reproduces_affine_and_data() {
        let pts = grid();
        let basis = RbfBasis::new(2, &pts).unwrap();
        let affine: Vec<f64> = pts.iter().map(|p| 0.5 - p[0] + 2.0 * p[1]).collect();
        let c = basis.coefficients(&affine).unwrap();
        let mut g = [0.0; 2];
        let v = basis.eval_with_gradient(&c, &[0.13, -0.31], &mut g);
        assert!((v - (0.5 - 0.13 - 0.62)).abs() < 1e-10);
        assert!((g[0] + 1.0).abs() < 1e-9 && (g[1] - 2.0).abs() < 1e-9);

        let data: Vec<f64> = pts.iter().map(|p| (p[0] * 3.0).sin() * p[1]).collect();
        let c = basis.coefficients(&data).unwrap();
        for (p, d) in pts.iter().zip(&data) {
            assert!((basis.eval(&c, p) - d).abs() < 1e-10);
        }
        let map = basis.data_to_coefficients().unwrap();
        let c2 = &map * nalgebra::DVector::from_column_slice(&data);
        for (a, b) in c.iter().zip(c2.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let mut phi = vec![0.0; basis.width()];
        basis.basis_into(&[0.2, 0.1], &mut phi);
        let via_basis: f64 = phi.iter().zip(&c).map(|(a, b)| a * b).sum();
        assert!((via_basis - basis.eval(&c, &[0.2, 0.1])).abs() < 1e-12);
    }

    #[test]
    fn smooth_function_converges() {
        let pts = grid();
        let basis = RbfBasis::new(2, &pts).unwrap();
        let data: Vec<f64> = pts.iter().map(|p| (-(p[0] * p[0] + p[1] * p[1])).exp()).collect();
        let c = basis.coefficients(&data).unwrap();
        let v = basis.eval(&c, &[0.1, 0.1]);
        assert!((v - (-0.02f64).exp()).abs() < 1e-3);
    }
}
