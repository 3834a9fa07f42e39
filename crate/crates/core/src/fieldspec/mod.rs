//! A small expression language for scalar and vector fields on `R^n`.
//!
//! Expressions use the coordinates `x1 .. xn`, the Euclidean norm `|x|`, the boundary distance
//! `delta = max(0, 1 - |x|)`, the constants `pi` and `s` (the fractional order), the operators
//! `+ - * / ^` with the usual precedence (`^` is right associative and binds tighter than unary
//! minus), and the functions `exp log sqrt abs min max pow inside`. `inside(e)` is `e` on the
//! open unit ball and `0` elsewhere.
//!
//! ```
//! use fracball::{fieldspec::parse_field, ProblemParams};
//! let params = ProblemParams::new(2, 0.75).unwrap();
//! let f = parse_field("inside((1 - |x|^2)^s)", &params).unwrap();
//! assert_eq!(f.eval(&[0.0, 0.0]), 1.0);
//! assert_eq!(f.eval(&[1.0, 0.5]), 0.0);
//! ```

mod ast;
mod lexer;
mod parser;

use std::fmt;
use std::sync::Arc;

pub use ast::{BinOp, Expr, Func, Symbol};

use crate::params::ProblemParams;
use crate::quadrature::{ScalarField, Symmetry, VectorField};

/// Syntax error with the byte offset of the offending token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(position: usize, expected: &[&str], found: &str) -> Self {
        Self { position, expected: expected.iter().map(|s| s.to_string()).collect(), found: found.to_string() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: expected one of {}, found {}", self.position, self.expected.join(", "), self.found)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("parse error {0}")]
    Parse(ParseError),

    #[error("`{function}` at offset {position} takes {expected} argument(s), got {found}")]
    Arity { function: String, expected: usize, found: usize, position: usize },

    #[error("unknown identifier `{name}` at offset {position} ({hint})")]
    UnknownIdentifier { name: String, position: usize, hint: String },

    #[error("expected {expected} field components, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

impl From<ParseError> for FieldError {
    fn from(e: ParseError) -> Self {
        FieldError::Parse(e)
    }
}

impl FieldError {
    /// Source offset of the error, when it refers to a location.
    pub fn position(&self) -> Option<usize> {
        match self {
            FieldError::Parse(e) => Some(e.position),
            FieldError::Arity { position, .. } | FieldError::UnknownIdentifier { position, .. } => Some(*position),
            FieldError::DimensionMismatch { .. } => None,
        }
    }
}

/// A parsed expression bound to a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExpr {
    dim: usize,
    expr: Expr,
}

impl FieldExpr {
    pub fn parse(text: &str, params: &ProblemParams) -> Result<Self, FieldError> {
        Ok(Self { dim: params.n, expr: parser::parse(text, params.n, params.s)? })
    }

    pub fn ast(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }

    /// Evaluable field carrying the support, smoothness and symmetry read off the tree.
    pub fn to_field(&self) -> ScalarField {
        let expr = Arc::new(self.expr.clone());
        let label = self.expr.to_string();
        let eval = expr.clone();
        let mut field = ScalarField::new(self.dim, move |x| eval.eval(x))
            .with_smoothness(expr.smoothness())
            .with_label(label);
        if expr.is_radial() {
            field = field.with_symmetry(Symmetry::Radial);
        }
        if expr.vanishes_outside() {
            field = field.assume_ball_only();
        }
        field
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

/// Parse a scalar field expression.
pub fn parse_field(text: &str, params: &ProblemParams) -> Result<ScalarField, FieldError> {
    Ok(FieldExpr::parse(text, params)?.to_field())
}

/// Parse exactly `params.n` component expressions.
pub fn parse_vector_field<S: AsRef<str>>(texts: &[S], params: &ProblemParams) -> Result<VectorField, FieldError> {
    if texts.len() != params.n {
        return Err(FieldError::DimensionMismatch { expected: params.n, found: texts.len() });
    }
    let components = texts
        .iter()
        .map(|t| parse_field(t.as_ref(), params))
        .collect::<Result<Vec<_>, _>>()?;
    VectorField::new(components).map_err(|_| FieldError::DimensionMismatch { expected: params.n, found: texts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{Smoothness, Support};
    use proptest::prelude::*;

    fn p2() -> ProblemParams {
        ProblemParams::new(2, 0.75).unwrap()
    }

    fn ev(text: &str, x: &[f64]) -> f64 {
        parse_field(text, &p2()).unwrap().eval(x)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2*3", &[0.0, 0.0]), 7.0);
        assert_eq!(ev("-2^2", &[0.0, 0.0]), -4.0);
        assert_eq!(ev("2^3^2", &[0.0, 0.0]), 512.0);
        assert_eq!(ev("2^-1", &[0.0, 0.0]), 0.5);
        assert_eq!(ev("8/2/2", &[0.0, 0.0]), 2.0);
        assert_eq!(ev("1 - 2 - 3", &[0.0, 0.0]), -4.0);
        assert_eq!(ev("(1 - 2) * 3", &[0.0, 0.0]), -3.0);
        assert_eq!(ev("x1*x2 + |x|^2", &[3.0, 4.0]), 37.0);
        assert_eq!(ev("max(x1, x2) - min(x1, x2)", &[3.0, -1.0]), 4.0);
        assert!((ev("delta", &[0.6, 0.0]) - 0.4).abs() < 1e-15);
        assert_eq!(ev("delta", &[2.0, 0.0]), 0.0);
        assert!((ev("s*pi", &[0.0, 0.0]) - 0.75 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn metadata() {
        let params = p2();
        let getoor = parse_field("inside((1-|x|^2)^0.75)", &params).unwrap();
        assert_eq!(getoor.support(), Support::BallOnly);
        assert!(getoor.is_radial());
        assert_eq!(getoor.smoothness(), Smoothness::Smooth);
        assert_eq!(getoor.eval(&[1.0, 0.0]), 0.0);
        assert!((getoor.eval(&[0.5, 0.0]) - 0.75f64.powf(0.75)).abs() < 1e-15);

        let one = parse_field("1", &params).unwrap();
        assert_eq!(one.support(), Support::Global);
        assert_eq!(one.eval(&[5.0, 5.0]), 1.0);

        let rough = parse_field("delta^(-0.49)", &params).unwrap();
        assert_eq!(rough.smoothness(), Smoothness::C0);
        assert!(!parse_field("x2", &params).unwrap().is_radial());
        assert_eq!(parse_field("abs(x1)", &params).unwrap().smoothness(), Smoothness::C0);
        assert_eq!(parse_field("exp(-|x|^2)", &params).unwrap().smoothness(), Smoothness::Smooth);
    }

    #[test]
    fn errors_carry_positions() {
        let params = p2();
        let cases: [(&str, usize); 6] =
            [("1 +", 3), ("(1 + 2", 6), ("x3", 0), ("foo(1)", 0), ("2 * * 3", 4), ("1 2", 2)];
        for (text, pos) in cases {
            let err = parse_field(text, &params).unwrap_err();
            assert_eq!(err.position(), Some(pos), "{text}: {err}");
        }
        let err = parse_field("min(1)", &params).unwrap_err();
        assert!(matches!(err, FieldError::Arity { expected: 2, found: 1, .. }));
        match parse_field("1 +", &params).unwrap_err() {
            FieldError::Parse(e) => assert!(e.expected.iter().any(|s| s == "number")),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn vector_fields() {
        let params = p2();
        let b = parse_vector_field(&["0.3", "0"], &params).unwrap();
        let mut out = [0.0; 2];
        b.eval_into(&[0.1, 0.2], &mut out);
        assert_eq!(out, [0.3, 0.0]);
        let rot = parse_vector_field(&["x2", "-x1"], &params).unwrap();
        rot.eval_into(&[0.1, 0.2], &mut out);
        assert_eq!(out, [0.2, -0.1]);
        assert_eq!(
            parse_vector_field(&["1"], &params).unwrap_err(),
            FieldError::DimensionMismatch { expected: 2, found: 1 }
        );
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|v| Expr::Num(v as f64 / 8.0)),
            (0usize..2).prop_map(Expr::Coord),
            Just(Expr::Norm),
            Just(Expr::Delta),
            Just(Expr::Symbol(Symbol::Pi)),
            Just(Expr::Symbol(Symbol::Order(0.75))),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)];
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Binary(o, Box::new(a), Box::new(b))),
                (0usize..Func::ALL.len(), proptest::collection::vec(inner, 2)).prop_map(|(k, mut args)| {
                    let f = Func::ALL[k];
                    args.truncate(f.arity());
                    Expr::Call(f, args)
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(e in arb_expr()) {
            let text = e.to_string();
            let back = parser::parse(&text, 2, 0.75).unwrap();
            prop_assert_eq!(back, e, "{}", text);
        }

        #[test]
        fn polynomial_matches_hand_evaluation(a in -3.0f64..3.0, b in -3.0f64..3.0, x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
            let text = format!("({a})*x1^2 - ({b})*x1*x2 + x2^3 - 1");
            let f = parse_field(&text, &p2()).unwrap();
            let expected = a * x1 * x1 - b * x1 * x2 + x2 * x2 * x2 - 1.0;
            prop_assert!((f.eval(&[x1, x2]) - expected).abs() <= 1e-14 * (1.0 + expected.abs()));
        }
    }
}
