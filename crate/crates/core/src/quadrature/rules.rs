//! Gauss–Legendre and sphere rules.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::{sphere_area, MAX_DIM};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let m = order;
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..(m + 1) / 2 {
            // Tricomi initial guess, then Newton on P_m.
            let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(m, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(m, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[m - 1 - i] = z;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    /// `int_a^b h`.
    pub fn integrate(&self, a: f64, b: f64, mut h: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(t, w)| w * h(t)).sum()
    }
}

fn legendre(m: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { 1.0 } else { p1 };
    let d = m as f64 * (z * p - p0) / (z * z - 1.0);
    (p, d)
}

/// Directions on `S^{n-1}` with weights summing to `|S^{n-1}|`.
///
/// Every rule built here is antipodally symmetric, so odd integrands vanish to roundoff.
#[derive(Debug, Clone)]
pub struct SphereRule {
    n: usize,
    dirs: Vec<[f64; MAX_DIM]>,
    weights: Vec<f64>,
}

impl SphereRule {
    /// Tensor rule: equal angles for `n = 2`, Gauss–Legendre in `cos(phi)` times equal azimuths
    /// for `n = 3`. Higher dimensions fall back to [`SphereRule::monte_carlo`] with a fixed seed.
    pub fn tensor(n: usize, angular_points: usize) -> Self {
        let m = angular_points.max(2);
        match n {
            2 => {
                let m = m + m % 2;
                let w = 2.0 * PI / m as f64;
                let dirs = (0..m)
                    .map(|k| {
                        let th = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                        let mut d = [0.0; MAX_DIM];
                        d[0] = th.cos();
                        d[1] = th.sin();
                        d
                    })
                    .collect();
                Self { n, dirs, weights: vec![w; m] }
            }
            3 => {
                let azimuths = m + m % 2;
                let polar = GaussLegendre::new((m / 2).max(2));
                let mut dirs = Vec::with_capacity(azimuths * polar.order());
                let mut weights = Vec::with_capacity(azimuths * polar.order());
                for (&z, &wz) in polar.nodes().iter().zip(polar.weights()) {
                    let rho = (1.0 - z * z).sqrt();
                    for k in 0..azimuths {
                        let ph = 2.0 * PI * (k as f64 + 0.5) / azimuths as f64;
                        let mut d = [0.0; MAX_DIM];
                        d[0] = rho * ph.cos();
                        d[1] = rho * ph.sin();
                        d[2] = z;
                        dirs.push(d);
                        weights.push(wz * 2.0 * PI / azimuths as f64);
                    }
                }
                Self { n, dirs, weights }
            }
            _ => Self::monte_carlo(n, m * m, 0x5eed),
        }
    }

    /// Uniform random directions in antipodal pairs, equal weights.
    pub fn monte_carlo(n: usize, samples: usize, seed: u64) -> Self {
        let pairs = (samples / 2).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dirs = Vec::with_capacity(2 * pairs);
        for _ in 0..pairs {
            let mut d = [0.0; MAX_DIM];
            loop {
                // Box-Muller normals
                for k in 0..n {
                    let u1: f64 = rng.gen::<f64>().max(1e-300);
                    let u2: f64 = rng.gen();
                    d[k] = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
                }
                let norm = d[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    d[..n].iter_mut().for_each(|v| *v /= norm);
                    break;
                }
            }
            let mut e = [0.0; MAX_DIM];
            for k in 0..n {
                e[k] = -d[k];
            }
            dirs.push(d);
            dirs.push(e);
        }
        let w = sphere_area(n) / dirs.len() as f64;
        let len = dirs.len();
        Self { n, dirs, weights: vec![w; len] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn direction(&self, k: usize) -> &[f64] {
        &self.dirs[k][..self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.dirs.iter().zip(&self.weights).map(move |(d, &w)| (&d[..self.n], w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exactness() {
        for order in [1, 2, 5, 12, 24] {
            let gl = GaussLegendre::new(order);
            let sum: f64 = gl.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-14);
            for deg in 0..(2 * order) {
                let v = gl.integrate(0.0, 1.0, |t| t.powi(deg as i32));
                assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "order {order} deg {deg}");
            }
        }
    }

    #[test]
    fn sphere_rules_integrate_low_moments() {
        for (n, rule) in [
            (2, SphereRule::tensor(2, 16)),
            (3, SphereRule::tensor(3, 16)),
            (4, SphereRule::monte_carlo(4, 2000, 3)),
        ] {
            let area: f64 = rule.weights().iter().sum();
            assert!((area - sphere_area(n)).abs() < 1e-12);
            let first: f64 = rule.iter().map(|(d, w)| w * d[0]).sum();
            assert!(first.abs() < 1e-13);
        }
        // second moment: int x_1^2 = |S| / n
        let rule = SphereRule::tensor(3, 16);
        let m2: f64 = rule.iter().map(|(d, w)| w * d[0] * d[0]).sum();
        assert!((m2 - 4.0 * PI / 3.0).abs() < 1e-12);
    }
}
