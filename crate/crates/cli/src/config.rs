//! JSON experiment configuration.
//!
//! Every section is optional and unknown keys are rejected. Field expressions use the
//! fieldspec grammar of the core library. Exponents accept a number or the string `"inf"`.
//!
//! ```json
//! {
//!   "params": { "n": 2, "s": 0.75, "r": 0.5, "p": 1, "q": 1.2 },
//!   "fields": { "f": "1", "b": ["0.3", "0"], "c": "0.2" },
//!   "quadrature": { "radial_points": 12 },
//!   "solver": { "rings": 12 },
//!   "output": { "dir": "out", "format": "json" }
//! }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use fracball::fieldspec::{parse_field, parse_vector_field};
use fracball::quadrature::{QuadratureSpec, ScalarField, VectorField};
use fracball::solver::SolverSpec;
use fracball::weighted_norms::{TraceClass, TraceThresholds};
use fracball::ProblemParams;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

/// A Lebesgue exponent in `[1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Exponent {
    pub const INF: Exponent = Exponent(f64::INFINITY);

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Exponent;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Exponent, E> {
                Ok(Exponent(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Exponent, E> {
                Ok(Exponent(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Exponent, E> {
                Ok(Exponent(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Exponent, E> {
                match v {
                    "inf" | "infinity" => Ok(Exponent::INF),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub n: usize,
    pub s: f64,
    pub r: f64,
    pub p: Exponent,
    pub q: Exponent,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self { n: 2, s: 0.75, r: 0.5, p: Exponent(1.0), q: Exponent(1.2) }
    }
}

impl ParamsConfig {
    pub fn to_params(&self) -> Result<ProblemParams, CliError> {
        let params = ProblemParams { n: self.n, s: self.s, r: self.r, p: self.p.0, q: self.q.0 };
        params.validate().map_err(CliError::from_core)?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldsConfig {
    /// Right-hand side or density.
    pub f: Option<String>,
    /// Drift components, one expression per coordinate.
    pub b: Option<Vec<String>>,
    /// Zero-order coefficient.
    pub c: Option<String>,
    /// Exterior datum.
    pub g: Option<String>,
    /// A function to probe directly.
    pub u: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subject {
    /// The explicit singular s-harmonic function.
    Nontrivial,
    /// `G*f` for `fields.f`.
    GreenPotential,
    /// `P*g` for `fields.g`.
    PoissonExtension,
    /// `fields.u` itself.
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub subject: Subject,
    /// Shell thicknesses `2^-first ..= 2^-last`.
    pub first: u32,
    pub last: u32,
    pub thresholds: TraceThresholds,
    /// When set, the report passes only if the classification matches.
    pub expect: Option<TraceClass>,
    /// Chebyshev nodes of the radial interpolant used for radial Green potentials; 0 evaluates directly.
    pub radial_nodes: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            subject: Subject::Nontrivial,
            first: 3,
            last: 9,
            thresholds: TraceThresholds::default(),
            expect: None,
            radial_nodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub subject: Subject,
    pub probes: usize,
    pub probe_radius: f64,
    /// PV values must satisfy `|(-Delta)^s u| <= pv_tolerance * C(n,s)`.
    pub pv_tolerance: f64,
    /// Relative tolerance between the extrapolated trace limit and its closed form.
    pub limit_tolerance: f64,
    pub first: u32,
    pub last: u32,
    pub thresholds: TraceThresholds,
    pub radial_nodes: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            subject: Subject::Nontrivial,
            probes: 10,
            probe_radius: 0.7,
            pv_tolerance: 1e-2,
            limit_tolerance: 0.05,
            first: 3,
            last: 9,
            thresholds: TraceThresholds::default(),
            radial_nodes: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Parameters `t` of the family `f_t = delta^(-s+t)`.
    pub t_values: Vec<f64>,
    /// Include the gradient column; `None` includes it whenever its hypotheses hold.
    pub gradient: Option<bool>,
    /// Largest admissible relative change of a ratio under refinement.
    pub stability: f64,
    /// Refinement factor applied to the quadrature for the stability check.
    pub refine: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            t_values: (1..=8).map(|k| k as f64 / 20.0).collect(),
            gradient: None,
            stability: 0.1,
            refine: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// The residual norm must not exceed this multiple of the forcing norm.
    pub residual_tolerance: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { residual_tolerance: 5e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantName {
    /// `C_{n,s}` of the principal-value operator.
    Pv,
    /// `c(n,s)` of the Poisson kernel.
    Poisson,
    /// `kappa(n,s)` of the Green function.
    Green,
}

/// Multiplies one kernel constant, to check that the suite detects it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub constant: ConstantName,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertiesConfig {
    pub seed: u64,
    /// Samples of the boundary-ratio inequality.
    pub ratio_samples: usize,
    /// Samples per parameter pair of the Green bound.
    pub bound_samples: usize,
    /// Pairs for the finite-difference gradient check.
    pub gradient_pairs: usize,
    /// Samples per parameter pair of the weighted gradient bound.
    pub gradient_bound_samples: usize,
    /// `(n, s)` pairs for the Green bound and the normalization tests.
    pub pairs: Vec<(usize, f64)>,
    /// Probe points for the Poisson normalization.
    pub normalization_probes: usize,
    pub fault: Option<FaultConfig>,
}

impl Default for PropertiesConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            ratio_samples: 100_000,
            bound_samples: 10_000,
            gradient_pairs: 100,
            gradient_bound_samples: 10_000,
            pairs: vec![(2, 0.4), (2, 0.75), (3, 0.6)],
            normalization_probes: 20,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ParamsConfig,
    pub fields: FieldsConfig,
    pub quadrature: Option<QuadratureSpec>,
    pub solver: Option<SolverSpec>,
    pub output: OutputConfig,
    pub trace: TraceConfig,
    pub verify: VerifyConfig,
    pub embedding: EmbeddingConfig,
    pub solve: SolveConfig,
    pub properties: PropertiesConfig,
    pub kernel: KernelConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Apply the global `--seed` override to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let mut quad = self.quadrature.take().unwrap_or_else(|| QuadratureSpec::default_for(self.params.n));
        quad.seed = seed;
        self.quadrature = Some(quad);
        let mut solver = self.solver.take().unwrap_or_else(|| SolverSpec::default_for(self.params.n));
        solver.seed = seed;
        solver.quadrature.seed = seed;
        solver.residual_quadrature.seed = seed;
        self.solver = Some(solver);
        self.properties.seed = seed;
        self
    }

    /// Apply the global `--refine` factor to every quadrature and to the collocation grid.
    pub fn refined(mut self, factor: usize) -> Self {
        let quad = self.quadrature.take().unwrap_or_else(|| QuadratureSpec::default_for(self.params.n));
        self.quadrature = Some(quad.refined(factor));
        let mut solver = self.solver.take().unwrap_or_else(|| SolverSpec::default_for(self.params.n));
        solver.rings *= factor;
        solver.ring_points *= factor;
        solver.quadrature = solver.quadrature.refined(factor);
        solver.residual_quadrature = solver.residual_quadrature.refined(factor);
        self.solver = Some(solver);
        self
    }

    pub fn params(&self) -> Result<ProblemParams, CliError> {
        self.params.to_params()
    }

    pub fn quadrature(&self) -> Result<QuadratureSpec, CliError> {
        let spec = self.quadrature.clone().unwrap_or_else(|| QuadratureSpec::default_for(self.params.n));
        spec.validate().map_err(CliError::from_core)?;
        Ok(spec)
    }

    pub fn solver(&self) -> Result<SolverSpec, CliError> {
        let spec = self.solver.clone().unwrap_or_else(|| SolverSpec::default_for(self.params.n));
        spec.validate().map_err(CliError::from_core)?;
        Ok(spec)
    }

    pub fn scalar(&self, text: Option<&str>, default: &str, params: &ProblemParams) -> Result<ScalarField, CliError> {
        parse_field(text.unwrap_or(default), params).map_err(CliError::from_field)
    }

    pub fn require_scalar(&self, name: &str, text: Option<&str>, params: &ProblemParams) -> Result<ScalarField, CliError> {
        let text = text.ok_or_else(|| CliError::Config(format!("fields.{name} is required for this command")))?;
        parse_field(text, params).map_err(CliError::from_field)
    }

    pub fn drift(&self, params: &ProblemParams) -> Result<VectorField, CliError> {
        match &self.fields.b {
            Some(b) => parse_vector_field(b, params).map_err(CliError::from_field),
            None => Ok(VectorField::zero(params.n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponents_accept_numbers_and_inf() {
        let p: ParamsConfig = serde_json::from_str(r#"{"n": 3, "s": 0.6, "r": 0.4, "p": "inf", "q": 2}"#).unwrap();
        assert!(p.p.is_infinite());
        assert_eq!(p.q, Exponent(2.0));
        assert_eq!(serde_json::to_string(&Exponent::INF).unwrap(), "\"inf\"");
        assert!(serde_json::from_str::<ParamsConfig>(r#"{"p": "big"}"#).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"params": {"n": 2, "sigma": 1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"colour": "red"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"solver": {"rings": 4, "extra": 1}}"#).is_err());
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn seed_override_reaches_every_spec() {
        let cfg = ExperimentConfig::default().with_seed(42);
        assert_eq!(cfg.quadrature.as_ref().unwrap().seed, 42);
        let solver = cfg.solver.as_ref().unwrap();
        assert_eq!((solver.seed, solver.quadrature.seed, solver.residual_quadrature.seed), (42, 42, 42));
        assert_eq!(cfg.properties.seed, 42);
    }
}
