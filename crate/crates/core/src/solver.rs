//! Fixed-point solver for `(-Delta)^s u + b . grad u + c u = f` in the unit ball with `u = 0`
//! outside.
//!
//! The unknowns are the values and gradients of `u` at collocation nodes. Off-node values come
//! from weighted cubic interpolants, `u ~ (1-|x|^2)^s w` and `grad u ~ (1-|x|^2)^{s-1} g`, with
//! `w` and `g` interpolating the rescaled node data. One Picard step maps the node data to the
//! values and gradient of `G*(f - tau (b . grad u + c u))` at the nodes. The step is affine, so
//! the Green quadrature is assembled once into a matrix `K` and the iteration reads
//! `v <- F - tau K v`, with `tau` walked from `0` to `1`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interp::RbfBasis;
use crate::kernels;
use crate::params::{norm_sq, sphere_area, ProblemParams, MAX_DIM};
use crate::potentials::Potentials;
use crate::quadrature::{Cubature, FiniteGuard, QuadratureSpec, ScalarField, Smoothness, SphereRule, VectorField};

/// Off-node reconstruction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// `|x - x_j|^3` plus an affine polynomial, applied to boundary-rescaled data.
    PolyharmonicCubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    /// Number of collocation radii `sin((j + 1/2) pi / (2 rings))`, clustered toward the sphere.
    pub rings: usize,
    /// Nodes on a ring of radius one (n = 2); ring sizes scale like `(ring_points r)^{n-1}`.
    pub ring_points: usize,
    pub max_picard_iters: usize,
    /// Absolute tolerance on the Picard increment in the discrete `L^p_r` node norm.
    pub tol: f64,
    pub tau_steps: usize,
    pub interpolation: Interpolation,
    /// Quadrature for the Green potentials inside each Picard step.
    pub quadrature: QuadratureSpec,
    /// Quadrature for the principal-value residual oracle.
    pub residual_quadrature: QuadratureSpec,
    /// Residual probes keep at least this distance from the sphere.
    pub residual_collar: f64,
    pub probe_rings: usize,
    pub probe_ring_points: usize,
    pub seed: u64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self::default_for(2)
    }
}

impl SolverSpec {
    pub fn default_for(n: usize) -> Self {
        let base = QuadratureSpec::default_for(n);
        let quadrature = QuadratureSpec {
            radial_points: 8,
            angular_points: if n == 2 { 32 } else { 12 },
            mc_samples: 256,
            grading_levels: 10,
            ..base.clone()
        };
        Self {
            rings: if n == 2 { 12 } else { 6 },
            ring_points: if n == 2 { 24 } else { 12 },
            max_picard_iters: 30,
            tol: 1e-10,
            tau_steps: 4,
            interpolation: Interpolation::PolyharmonicCubic,
            quadrature,
            residual_quadrature: base,
            residual_collar: 0.1,
            probe_rings: 6,
            probe_ring_points: 16,
            seed: 0x5eed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.rings == 0 || self.ring_points == 0 || self.probe_rings == 0 || self.probe_ring_points == 0 {
            return bad("node and probe counts must be >= 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        if self.tau_steps == 0 || self.max_picard_iters == 0 {
            return bad("tau_steps and max_picard_iters must be >= 1");
        }
        if !(self.residual_collar > 0.0 && self.residual_collar < 1.0) {
            return bad("residual_collar must lie in (0, 1)");
        }
        self.quadrature.validate()?;
        self.residual_quadrature.validate()
    }

    fn hash(&self) -> String {
        sha256_hex(&serde_json::to_string(self).unwrap_or_default())
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Points on concentric spheres with their cubature weights.
fn polar_points(
    n: usize,
    radii: &[(f64, f64)],
    per_ring: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let area = sphere_area(n);
    let mut pts = Vec::new();
    let mut weights = Vec::new();
    for (j, &(r, wr)) in radii.iter().enumerate() {
        let target = (per_ring as f64 * r).powi(n as i32 - 1) / (2.0 * PI).powi(n as i32 - 2);
        let count = (target.round() as usize).max(1);
        let dirs: Vec<Vec<f64>> = match n {
            2 => {
                let shift = if j % 2 == 1 { 0.5 } else { 0.0 };
                (0..count)
                    .map(|k| {
                        let th = 2.0 * PI * (k as f64 + shift) / count as f64;
                        vec![th.cos(), th.sin()]
                    })
                    .collect()
            }
            3 => {
                let golden = PI * (3.0 - 5f64.sqrt());
                (0..count)
                    .map(|k| {
                        let z = 1.0 - (2 * k + 1) as f64 / count as f64;
                        let rho = (1.0 - z * z).sqrt();
                        let ph = golden * k as f64 + j as f64;
                        vec![rho * ph.cos(), rho * ph.sin(), z]
                    })
                    .collect()
            }
            _ => {
                let rule = SphereRule::monte_carlo(n, count.max(2), seed.wrapping_add(j as u64));
                (0..rule.len()).map(|k| rule.direction(k).to_vec()).collect()
            }
        };
        let w = wr * r.powi(n as i32 - 1) * area / dirs.len() as f64;
        for d in dirs {
            pts.push(d.iter().map(|v| v * r).collect());
            weights.push(w);
        }
    }
    (pts, weights)
}

/// Collocation nodes and their `L^p` cubature weights.
pub fn collocation_nodes(n: usize, spec: &SolverSpec) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = spec.rings;
    let h = PI / (2.0 * m as f64);
    let radii: Vec<(f64, f64)> = (0..m)
        .map(|j| {
            let t = (j as f64 + 0.5) * h;
            (t.sin(), h * t.cos())
        })
        .collect();
    polar_points(n, &radii, spec.ring_points, spec.seed)
}

/// Residual probes in `|x| <= 1 - residual_collar`.
pub fn probe_points(n: usize, spec: &SolverSpec) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = spec.probe_rings;
    let outer = 1.0 - spec.residual_collar;
    let h = outer / k as f64;
    let radii: Vec<(f64, f64)> = (0..k).map(|j| ((j as f64 + 0.5) * h, h)).collect();
    polar_points(n, &radii, spec.probe_ring_points, spec.seed ^ 0x9e37)
}

/// `(sum w (delta^r |v|)^p)^{1/p}` with `delta = 1 - |x|`; the weighted maximum for `p = inf`.
pub fn node_norm(points: &[Vec<f64>], weights: &[f64], values: &[f64], p: f64, r: f64) -> f64 {
    let weighted = points.iter().zip(values).map(|(x, v)| (1.0 - norm_sq(x).sqrt()).max(0.0).powf(r) * v.abs());
    if p.is_infinite() {
        return weighted.fold(0.0, f64::max);
    }
    weighted.zip(weights).map(|(v, w)| w * v.powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Drift `b` and zero-order coefficient `c`.
#[derive(Debug, Clone)]
pub struct CoefficientBundle {
    pub b: VectorField,
    pub c: ScalarField,
}

/// What [`CoefficientBundle::check`] learned at the nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    /// `max |b| + max |c|` over the nodes.
    pub lambda: f64,
    pub has_drift: bool,
    pub has_potential: bool,
}

impl CoefficientBundle {
    pub fn new(b: VectorField, c: ScalarField) -> Result<Self> {
        if b.dim() != c.dim() {
            return Err(Error::DimensionMismatch { expected: c.dim(), found: b.dim() });
        }
        Ok(Self { b, c })
    }

    pub fn zero(n: usize) -> Self {
        Self { b: VectorField::zero(n), c: ScalarField::zero(n) }
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    /// Checks `c >= 0` and finiteness at the nodes, and `s > 1/2` when the drift is nonzero.
    pub fn check(&self, params: &ProblemParams, nodes: &[Vec<f64>]) -> Result<CoefficientSummary> {
        if self.dim() != params.n {
            return Err(Error::DimensionMismatch { expected: params.n, found: self.dim() });
        }
        let n = params.n;
        let mut bmax: f64 = 0.0;
        let mut cmax: f64 = 0.0;
        let mut bv = vec![0.0; n];
        for x in nodes {
            let c = self.c.eval(x);
            if !c.is_finite() {
                return Err(Error::NonFinite { at: x.clone() });
            }
            if c < 0.0 {
                return Err(Error::Precondition(format!("c = {c} < 0 at {x:?}; the zero-order coefficient must be nonnegative")));
            }
            self.b.eval_into(x, &mut bv);
            if bv.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { at: x.clone() });
            }
            bmax = bmax.max(bv.iter().map(|v| v * v).sum::<f64>().sqrt());
            cmax = cmax.max(c);
        }
        let has_drift = bmax > 0.0;
        if has_drift && params.s <= 0.5 {
            return Err(Error::InvalidParams(format!("a nonzero drift needs s > 1/2, got s = {}", params.s)));
        }
        Ok(CoefficientSummary { lambda: bmax + cmax, has_drift, has_potential: cmax > 0.0 })
    }

    fn labels(&self) -> (Vec<String>, String) {
        let label = |f: &ScalarField| f.label().unwrap_or("<closure>").to_string();
        (self.b.components().iter().map(label).collect(), label(&self.c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub f: String,
    pub b: Vec<String>,
    pub c: String,
    pub interpolation: Interpolation,
    pub solver_spec_sha256: String,
    pub quadrature_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub lambda: f64,
    pub final_increment: f64,
    pub residual: Option<ResidualReport>,
}

/// Residual of the equation at interior probes, in the weighted `L^p_r` probe norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub norm: f64,
    /// Same norm of `f` alone over the probes actually used.
    pub forcing_norm: f64,
    pub max_abs: f64,
    pub probes_used: usize,
    pub probes_skipped: usize,
}

/// Node values and gradients of an approximate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSolution {
    pub params: ProblemParams,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub provenance: Provenance,
    pub converged: bool,
    pub iterations_used: usize,
    pub iterations_per_step: Vec<usize>,
    pub tau_path: Vec<f64>,
    pub diagnostics: Option<Diagnostics>,
}

impl DiscreteSolution {
    fn blank(params: &ProblemParams, spec: &SolverSpec, f_label: &str, coeffs: &CoefficientBundle) -> Self {
        let (nodes, weights) = collocation_nodes(params.n, spec);
        let m = nodes.len();
        let (b, c) = coeffs.labels();
        Self {
            params: *params,
            values: vec![0.0; m],
            gradients: vec![vec![0.0; params.n]; m],
            nodes,
            weights,
            provenance: Provenance {
                f: f_label.to_string(),
                b,
                c,
                interpolation: spec.interpolation,
                solver_spec_sha256: spec.hash(),
                quadrature_sha256: sha256_hex(&serde_json::to_string(&spec.quadrature).unwrap_or_default()),
            },
            converged: false,
            iterations_used: 0,
            iterations_per_step: Vec::new(),
            tau_path: Vec::new(),
            diagnostics: None,
        }
    }

    /// The zero function on the collocation nodes.
    pub fn zero(params: &ProblemParams, spec: &SolverSpec) -> Self {
        let mut sol = Self::blank(params, spec, "0", &CoefficientBundle::zero(params.n));
        sol.converged = true;
        sol
    }

    /// Samples a given function and its gradient at the collocation nodes.
    pub fn sample(u: &ScalarField, grad: &VectorField, params: &ProblemParams, spec: &SolverSpec) -> Result<Self> {
        if u.dim() != params.n || grad.dim() != params.n {
            return Err(Error::DimensionMismatch { expected: params.n, found: u.dim() });
        }
        let mut sol = Self::blank(params, spec, u.label().unwrap_or("<sampled>"), &CoefficientBundle::zero(params.n));
        for (i, x) in sol.nodes.iter().enumerate() {
            sol.values[i] = u.eval(x);
            grad.eval_into(x, &mut sol.gradients[i]);
        }
        sol.check_finite()?;
        sol.converged = true;
        Ok(sol)
    }

    fn check_finite(&self) -> Result<()> {
        for (i, x) in self.nodes.iter().enumerate() {
            if !self.values[i].is_finite() || self.gradients[i].iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { at: x.clone() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn unpack(&mut self, v: &[f64]) {
        let m = self.len();
        let n = self.params.n;
        for i in 0..m {
            self.values[i] = v[i];
            for k in 0..n {
                self.gradients[i][k] = v[(k + 1) * m + i];
            }
        }
    }

    /// Weighted cubic reconstruction of the node data.
    pub fn interpolant(&self) -> Result<Interpolant> {
        Interpolant::new(self)
    }

    /// `L^p_r` node norms of `u` and `|grad u|`.
    pub fn node_norms(&self) -> (f64, f64) {
        let (p, r) = (self.params.p, self.params.r);
        let mags: Vec<f64> = self.gradients.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        (node_norm(&self.nodes, &self.weights, &self.values, p, r), node_norm(&self.nodes, &self.weights, &mags, p, r))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Precondition(format!("serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Precondition(format!("invalid solution file: {e}")))
    }

    /// Node table with header `x1..xn,weight,u,du1..dun`.
    pub fn to_csv(&self) -> String {
        let n = self.params.n;
        let mut out = String::new();
        let coords: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        let grads: Vec<String> = (1..=n).map(|k| format!("du{k}")).collect();
        let _ = writeln!(out, "{},weight,u,{}", coords.join(","), grads.join(","));
        for i in 0..self.len() {
            let row: Vec<String> = self.nodes[i]
                .iter()
                .chain(std::iter::once(&self.weights[i]))
                .chain(std::iter::once(&self.values[i]))
                .chain(self.gradients[i].iter())
                .map(|v| format!("{v:.17e}"))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Precondition(format!("cannot write {}: {e}", path.display())))
    }
}

/// Evaluable reconstruction of a [`DiscreteSolution`].
#[derive(Debug, Clone)]
pub struct Interpolant {
    n: usize,
    s: f64,
    basis: RbfBasis,
    value_coeffs: Vec<f64>,
    gradient_coeffs: Vec<Vec<f64>>,
}

impl Interpolant {
    fn new(sol: &DiscreteSolution) -> Result<Self> {
        let n = sol.params.n;
        let s = sol.params.s;
        let basis = RbfBasis::new(n, &sol.nodes)?;
        let d: Vec<f64> = sol.nodes.iter().map(|x| 1.0 - norm_sq(x)).collect();
        let w: Vec<f64> = sol.values.iter().zip(&d).map(|(u, d)| u / d.powf(s)).collect();
        let value_coeffs = basis.coefficients(&w)?;
        let gradient_coeffs = (0..n)
            .map(|k| {
                let g: Vec<f64> = sol.gradients.iter().zip(&d).map(|(g, d)| g[k] * d.powf(1.0 - s)).collect();
                basis.coefficients(&g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, s, basis, value_coeffs, gradient_coeffs })
    }

    /// `u(y)`, zero outside the open ball.
    pub fn value(&self, y: &[f64]) -> f64 {
        let d = 1.0 - norm_sq(y);
        if d <= 0.0 {
            return 0.0;
        }
        d.powf(self.s) * self.basis.eval(&self.value_coeffs, y)
    }

    /// Exact gradient of [`Interpolant::value`].
    pub fn value_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n;
        let d = 1.0 - norm_sq(y);
        if d <= 0.0 {
            grad[..n].iter_mut().for_each(|g| *g = 0.0);
            return 0.0;
        }
        let w = self.basis.eval_with_gradient(&self.value_coeffs, y, grad);
        let ds = d.powf(self.s);
        let outer = -2.0 * self.s * d.powf(self.s - 1.0) * w;
        for k in 0..n {
            grad[k] = ds * grad[k] + outer * y[k];
        }
        ds * w
    }

    /// Reconstruction of the stored gradient data, `(1-|y|^2)^{s-1} g(y)`.
    pub fn stored_gradient(&self, y: &[f64], grad: &mut [f64]) {
        let d = 1.0 - norm_sq(y);
        if d <= 0.0 {
            grad[..self.n].iter_mut().for_each(|g| *g = 0.0);
            return;
        }
        let scale = d.powf(self.s - 1.0);
        for (k, c) in self.gradient_coeffs.iter().enumerate() {
            grad[k] = scale * self.basis.eval(c, y);
        }
    }

    /// The reconstruction as a field vanishing outside the ball.
    pub fn field(&self) -> ScalarField {
        let me = self.clone();
        ScalarField::new(self.n, move |y| me.value(y)).ball_only().with_smoothness(Smoothness::Smooth)
    }
}

/// Coefficient-dependent part of the Picard map, assembled once.
#[derive(Debug, Clone)]
pub struct Solver {
    params: ProblemParams,
    spec: SolverSpec,
    coeffs: CoefficientBundle,
    summary: CoefficientSummary,
    potentials: Potentials,
    template: DiscreteSolution,
    /// `T v = F - tau K v` on packed node vectors.
    k: DMatrix<f64>,
}

impl Solver {
    pub fn new(coeffs: &CoefficientBundle, params: &ProblemParams, spec: &SolverSpec) -> Result<Self> {
        params.validate_for_drift()?;
        spec.validate()?;
        let potentials = Potentials::new(params, &spec.quadrature)?;
        let template = DiscreteSolution::blank(params, spec, "", coeffs);
        let summary = coeffs.check(params, &template.nodes)?;
        let mut solver = Self {
            params: *params,
            spec: spec.clone(),
            coeffs: coeffs.clone(),
            summary,
            potentials,
            template,
            k: DMatrix::zeros(0, 0),
        };
        solver.k = solver.assemble()?;
        Ok(solver)
    }

    pub fn summary(&self) -> CoefficientSummary {
        self.summary
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.template.nodes
    }

    fn assemble(&self) -> Result<DMatrix<f64>> {
        let n = self.params.n;
        let s = self.params.s;
        let m = self.template.len();
        let dof = m * (n + 1);
        if !self.summary.has_drift && !self.summary.has_potential {
            return Ok(DMatrix::zeros(dof, dof));
        }
        let basis = RbfBasis::new(n, &self.template.nodes)?;
        let width = basis.width();
        let blocks: Vec<usize> = std::iter::once(0)
            .filter(|_| self.summary.has_potential)
            .chain((1..=n).filter(|_| self.summary.has_drift))
            .collect();
        let coeffs = &self.coeffs;
        // rows[i] holds, for output o and active block b, the vector sum_q W_o(y_q) s_b(y_q) phi(y_q)
        let rows: Vec<Result<Vec<f64>>> = self
            .template
            .nodes
            .par_iter()
            .map(|x| {
                let mut z = vec![0.0; (n + 1) * blocks.len() * width];
                let mut phi = vec![0.0; width];
                let mut bv = [0.0; MAX_DIM];
                let mut scal = vec![0.0; blocks.len()];
                let guard = FiniteGuard::default();
                self.potentials.green_nodes(x, |y, w, gw| {
                    let d = 1.0 - norm_sq(y);
                    let ds = d.powf(s);
                    coeffs.b.eval_into(y, &mut bv[..n]);
                    let c = coeffs.c.eval(y);
                    for (slot, &b) in scal.iter_mut().zip(&blocks) {
                        *slot = if b == 0 { guard.check(c, y) * ds } else { guard.check(bv[b - 1], y) * ds / d };
                    }
                    if scal.iter().all(|v| *v == 0.0) {
                        return;
                    }
                    basis.basis_into(y, &mut phi);
                    for o in 0..=n {
                        let wo = if o == 0 { w } else { gw[o - 1] };
                        for (bi, sv) in scal.iter().enumerate() {
                            let a = wo * sv;
                            if a == 0.0 {
                                continue;
                            }
                            let dst = &mut z[(o * blocks.len() + bi) * width..(o * blocks.len() + bi + 1) * width];
                            for (t, p) in dst.iter_mut().zip(&phi) {
                                *t += a * p;
                            }
                        }
                    }
                })?;
                guard.finish()?;
                Ok(z)
            })
            .collect();
        let data_map = basis.data_to_coefficients()?;
        let dist: Vec<f64> = self.template.nodes.iter().map(|x| 1.0 - norm_sq(x)).collect();
        let mut k = DMatrix::<f64>::zeros(dof, dof);
        let mut zb = DMatrix::<f64>::zeros(dof, width);
        for (bi, &b) in blocks.iter().enumerate() {
            for (i, row) in rows.iter().enumerate() {
                let row = row.as_ref().map_err(|e| e.clone())?;
                for o in 0..=n {
                    let src = &row[(o * blocks.len() + bi) * width..(o * blocks.len() + bi + 1) * width];
                    for (c, v) in src.iter().enumerate() {
                        zb[(o * m + i, c)] = *v;
                    }
                }
            }
            let mut block = &zb * &data_map;
            let exponent = if b == 0 { -s } else { 1.0 - s };
            for j in 0..m {
                let scale = dist[j].powf(exponent);
                block.column_mut(j).iter_mut().for_each(|v| *v *= scale);
            }
            k.view_mut((0, b * m), (dof, m)).copy_from(&block);
        }
        Ok(k)
    }

    /// Packed `[G*f, d_1 G*f, ..., d_n G*f]` at the nodes.
    pub fn forcing(&self, f: &ScalarField) -> Result<Vec<f64>> {
        let n = self.params.n;
        if f.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: f.dim() });
        }
        let m = self.template.len();
        let cols: Vec<Result<Vec<f64>>> = self
            .template
            .nodes
            .par_iter()
            .map(|x| {
                let mut acc = vec![0.0; n + 1];
                let guard = FiniteGuard::default();
                self.potentials.green_nodes(x, |y, w, gw| {
                    let fy = guard.check(f.eval(y), y);
                    if fy == 0.0 {
                        return;
                    }
                    acc[0] += w * fy;
                    for k in 0..n {
                        acc[k + 1] += gw[k] * fy;
                    }
                })?;
                guard.finish()?;
                Ok(acc)
            })
            .collect();
        let mut out = vec![0.0; m * (n + 1)];
        for (i, c) in cols.into_iter().enumerate() {
            let c = c?;
            for o in 0..=n {
                out[o * m + i] = c[o];
            }
        }
        Ok(out)
    }

    /// `F - tau K v`.
    pub fn apply(&self, forcing: &[f64], tau: f64, v: &[f64]) -> Vec<f64> {
        let kv = &self.k * DVector::from_column_slice(v);
        forcing.iter().zip(kv.iter()).map(|(f, k)| f - tau * k).collect()
    }

    fn increment_norm(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.params.n;
        let m = self.template.len();
        let du: Vec<f64> = (0..m).map(|i| a[i] - b[i]).collect();
        let dg: Vec<f64> = (0..m)
            .map(|i| (1..=n).map(|k| (a[k * m + i] - b[k * m + i]).powi(2)).sum::<f64>().sqrt())
            .collect();
        let (nodes, w) = (&self.template.nodes, &self.template.weights);
        let (p, r) = (self.params.p, self.params.r);
        node_norm(nodes, w, &du, p, r) + node_norm(nodes, w, &dg, p, r)
    }

    /// `||T v1 - T v2|| / ||v1 - v2||` in the increment norm.
    pub fn contraction_ratio(&self, tau: f64, v1: &[f64], v2: &[f64]) -> f64 {
        let zero = vec![0.0; v1.len()];
        let t1 = self.apply(&zero, tau, v1);
        let t2 = self.apply(&zero, tau, v2);
        self.increment_norm(&t1, &t2) / self.increment_norm(v1, v2)
    }

    /// Packed node vectors have this length.
    pub fn dof(&self) -> usize {
        self.template.len() * (self.params.n + 1)
    }

    /// Continuation in `tau` with Picard iteration at each step, then the residual oracle.
    pub fn solve(&self, f: &ScalarField) -> Result<DiscreteSolution> {
        let mut sol = self.iterate(&self.forcing(f)?)?;
        sol.provenance.f = f.label().unwrap_or("<closure>").to_string();
        let residual = residual_report(&sol, f, &self.coeffs, &self.params, &self.spec)?;
        if let Some(d) = sol.diagnostics.as_mut() {
            d.residual = Some(residual);
        }
        Ok(sol)
    }

    /// Continuation and Picard iteration for a precomputed forcing vector.
    pub fn iterate(&self, forcing: &[f64]) -> Result<DiscreteSolution> {
        if forcing.len() != self.dof() {
            return Err(Error::DimensionMismatch { expected: self.dof(), found: forcing.len() });
        }
        let mut sol = self.template.clone();
        let mut v = vec![0.0; self.dof()];
        let mut last_inc = 0.0;
        for step in 1..=self.spec.tau_steps {
            let tau = step as f64 / self.spec.tau_steps as f64;
            let mut prev = f64::INFINITY;
            let mut stalls = 0;
            let mut iters = 0;
            loop {
                if iters == self.spec.max_picard_iters {
                    return Err(Error::MaxItersExceeded { iterations: iters, tau });
                }
                let next = self.apply(forcing, tau, &v);
                iters += 1;
                if let Some(i) = next.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite { at: sol.nodes[i % sol.len()].clone() });
                }
                let inc = self.increment_norm(&next, &v);
                v = next;
                last_inc = inc;
                if inc <= self.spec.tol {
                    break;
                }
                if inc >= prev {
                    stalls += 1;
                    if stalls >= 5 {
                        return Err(Error::NonContractive {
                            tau,
                            ratio: inc / prev,
                            suggested_tau_steps: 2 * self.spec.tau_steps,
                        });
                    }
                } else {
                    stalls = 0;
                }
                prev = inc;
            }
            sol.iterations_used += iters;
            sol.iterations_per_step.push(iters);
            sol.tau_path.push(tau);
        }
        sol.unpack(&v);
        sol.check_finite()?;
        sol.converged = true;
        sol.diagnostics = Some(Diagnostics { lambda: self.summary.lambda, final_increment: last_inc, residual: None });
        Ok(sol)
    }
}

/// Solves `(-Delta)^s u + b . grad u + c u = f`, `u = 0` outside the ball.
pub fn solve(f: &ScalarField, coeffs: &CoefficientBundle, params: &ProblemParams, spec: &SolverSpec) -> Result<DiscreteSolution> {
    Solver::new(coeffs, params, spec)?.solve(f)
}

/// Node values and gradient of `G*(f - tau (b . grad u + c u))` for the interpolated current iterate.
pub fn picard_step(
    current: &DiscreteSolution,
    f: &ScalarField,
    coeffs: &CoefficientBundle,
    tau: f64,
    params: &ProblemParams,
    spec: &SolverSpec,
) -> Result<DiscreteSolution> {
    params.validate()?;
    spec.validate()?;
    if current.params.n != params.n || f.dim() != params.n {
        return Err(Error::DimensionMismatch { expected: params.n, found: f.dim() });
    }
    let summary = coeffs.check(params, &current.nodes)?;
    let n = params.n;
    let interp = current.interpolant()?;
    let potentials = Potentials::new(params, &spec.quadrature)?;
    let results: Vec<Result<Vec<f64>>> = current
        .nodes
        .par_iter()
        .map(|x| {
            let mut acc = vec![0.0; n + 1];
            let mut bv = [0.0; MAX_DIM];
            let mut gu = [0.0; MAX_DIM];
            let guard = FiniteGuard::default();
            potentials.green_nodes(x, |y, w, gw| {
                let mut rhs = f.eval(y);
                if tau != 0.0 && (summary.has_drift || summary.has_potential) {
                    let mut lower = 0.0;
                    if summary.has_potential {
                        lower += coeffs.c.eval(y) * interp.value(y);
                    }
                    if summary.has_drift {
                        coeffs.b.eval_into(y, &mut bv[..n]);
                        interp.stored_gradient(y, &mut gu[..n]);
                        lower += (0..n).map(|k| bv[k] * gu[k]).sum::<f64>();
                    }
                    rhs -= tau * lower;
                }
                let rhs = guard.check(rhs, y);
                acc[0] += w * rhs;
                for k in 0..n {
                    acc[k + 1] += gw[k] * rhs;
                }
            })?;
            guard.finish()?;
            Ok(acc)
        })
        .collect();
    let mut next = current.clone();
    next.diagnostics = None;
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        next.values[i] = r[0];
        next.gradients[i].copy_from_slice(&r[1..]);
    }
    next.check_finite()?;
    Ok(next)
}

/// `(-Delta)^s u + b . grad u + c u - f` for the interpolated solution at interior probes.
pub fn residual_report(
    sol: &DiscreteSolution,
    f: &ScalarField,
    coeffs: &CoefficientBundle,
    params: &ProblemParams,
    spec: &SolverSpec,
) -> Result<ResidualReport> {
    sol.check_finite()?;
    let n = params.n;
    let interp = sol.interpolant()?;
    let field = interp.field();
    let cub = Cubature::new(n, &spec.residual_quadrature)?;
    let c_pv = kernels::constants(params).c_pv;
    let (probes, weights) = probe_points(n, spec);
    let values: Vec<Result<Option<(f64, f64)>>> = probes
        .par_iter()
        .map(|x| {
            let lap = match cub.frac_laplacian(&field, x, params.s, c_pv) {
                Ok(v) => v,
                Err(Error::TooCloseToBoundary { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut grad = [0.0; MAX_DIM];
            let u = interp.value_gradient(x, &mut grad[..n]);
            let mut bv = [0.0; MAX_DIM];
            coeffs.b.eval_into(x, &mut bv[..n]);
            let drift: f64 = (0..n).map(|k| bv[k] * grad[k]).sum();
            let fx = f.eval(x);
            let res = lap + drift + coeffs.c.eval(x) * u - fx;
            if !res.is_finite() {
                return Err(Error::NonFinite { at: x.clone() });
            }
            Ok(Some((res, fx)))
        })
        .collect();
    let mut kept_pts = Vec::new();
    let mut kept_w = Vec::new();
    let mut res = Vec::new();
    let mut forcing = Vec::new();
    let mut skipped = 0;
    for ((v, x), w) in values.into_iter().zip(&probes).zip(&weights) {
        match v? {
            Some((r, fx)) => {
                kept_pts.push(x.clone());
                kept_w.push(*w);
                res.push(r);
                forcing.push(fx);
            }
            None => skipped += 1,
        }
    }
    Ok(ResidualReport {
        norm: node_norm(&kept_pts, &kept_w, &res, params.p, params.r),
        forcing_norm: node_norm(&kept_pts, &kept_w, &forcing, params.p, params.r),
        max_abs: res.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
        probes_used: res.len(),
        probes_skipped: skipped,
    })
}

/// Weighted `L^p_r` probe norm of the equation residual.
pub fn residual_norm(
    sol: &DiscreteSolution,
    f: &ScalarField,
    coeffs: &CoefficientBundle,
    params: &ProblemParams,
    spec: &SolverSpec,
) -> Result<f64> {
    Ok(residual_report(sol, f, coeffs, params, spec)?.norm)
}

/// `||(-Delta)^s u|| / ||f||`, both in the weighted `L^p_r` norm over the residual probes.
pub fn apriori_ratio(sol: &DiscreteSolution, f: &ScalarField, params: &ProblemParams, spec: &SolverSpec) -> Result<f64> {
    let n = params.n;
    let field = sol.interpolant()?.field();
    let cub = Cubature::new(n, &spec.residual_quadrature)?;
    let c_pv = kernels::constants(params).c_pv;
    let (probes, weights) = probe_points(n, spec);
    let laps: Vec<Result<f64>> = probes.par_iter().map(|x| cub.frac_laplacian(&field, x, params.s, c_pv)).collect();
    let laps = laps.into_iter().collect::<Result<Vec<_>>>()?;
    let fs: Vec<f64> = probes.iter().map(|x| f.eval(x)).collect();
    let num = node_norm(&probes, &weights, &laps, params.p, params.r);
    let den = node_norm(&probes, &weights, &fs, params.p, params.r);
    if den == 0.0 {
        if num <= 1e-12 {
            return Ok(0.0);
        }
        return Err(Error::DivisionByZero(format!("||f|| = 0 while ||(-Delta)^s u|| = {num:e}")));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleCase {
    pub label: String,
    pub min_value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub tolerance: f64,
    pub cases: Vec<MaxPrincipleCase>,
    pub passed: bool,
}

/// Solves for each nonnegative `f` and checks `min u >= -tolerance` at the nodes.
pub fn max_principle_check(
    coeffs: &CoefficientBundle,
    f_family: &[ScalarField],
    params: &ProblemParams,
    spec: &SolverSpec,
    tolerance: f64,
) -> Result<MaxPrincipleReport> {
    let solver = Solver::new(coeffs, params, spec)?;
    let mut cases = Vec::with_capacity(f_family.len());
    for (k, f) in f_family.iter().enumerate() {
        if let Some(x) = solver.nodes().iter().find(|x| f.eval(x) < 0.0) {
            return Err(Error::Precondition(format!("forcing #{k} is negative at {x:?}")));
        }
        let forcing = solver.forcing(f)?;
        let sol = solver.iterate(&forcing)?;
        let min_value = sol.min_value();
        cases.push(MaxPrincipleCase {
            label: f.label().map_or_else(|| format!("f#{k}"), str::to_string),
            min_value,
            passed: min_value >= -tolerance,
        });
    }
    let passed = cases.iter().all(|c| c.passed);
    Ok(MaxPrincipleReport { tolerance, cases, passed })
}
