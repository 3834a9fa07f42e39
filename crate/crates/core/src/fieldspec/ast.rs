use std::fmt;

use crate::params::norm;
use crate::quadrature::Smoothness;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
    Pow,
    /// Multiplies its argument by the indicator of the open unit ball.
    Inside,
}

impl Func {
    pub(crate) const ALL: [Func; 8] =
        [Func::Exp, Func::Log, Func::Sqrt, Func::Abs, Func::Min, Func::Max, Func::Pow, Func::Inside];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
            Func::Inside => "inside",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }

    pub(crate) fn lookup(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symbol {
    Pi,
    /// The fractional order `s`, bound at parse time.
    Order(f64),
}

impl Symbol {
    pub fn value(self) -> f64 {
        match self {
            Symbol::Pi => std::f64::consts::PI,
            Symbol::Order(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree of the field language.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index.
    Coord(usize),
    /// `|x|`
    Norm,
    /// `max(0, 1 - |x|)`
    Delta,
    Symbol(Symbol),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Coord(k) => x[*k],
            Expr::Norm => norm(x),
            Expr::Delta => (1.0 - norm(x)).max(0.0),
            Expr::Symbol(s) => s.value(),
            Expr::Neg(e) => -e.eval(x),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => match f {
                Func::Exp => args[0].eval(x).exp(),
                Func::Log => args[0].eval(x).ln(),
                Func::Sqrt => args[0].eval(x).sqrt(),
                Func::Abs => args[0].eval(x).abs(),
                Func::Min => args[0].eval(x).min(args[1].eval(x)),
                Func::Max => args[0].eval(x).max(args[1].eval(x)),
                Func::Pow => args[0].eval(x).powf(args[1].eval(x)),
                Func::Inside => {
                    if x.iter().map(|v| v * v).sum::<f64>() < 1.0 {
                        args[0].eval(x)
                    } else {
                        0.0
                    }
                }
            },
        }
    }

    fn any(&self, pred: &impl Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Neg(e) => e.any(pred),
            Expr::Binary(_, a, b) => a.any(pred) || b.any(pred),
            Expr::Call(_, args) => args.iter().any(|a| a.any(pred)),
            _ => false,
        }
    }

    /// True when the expression does not reference individual coordinates.
    pub fn is_radial(&self) -> bool {
        !self.any(&|e| matches!(e, Expr::Coord(_)))
    }

    fn constant_value(&self) -> Option<f64> {
        if self.any(&|e| matches!(e, Expr::Coord(_) | Expr::Norm | Expr::Delta)) {
            None
        } else {
            Some(self.eval(&[]))
        }
    }

    /// True when the expression is provably zero outside the open unit ball.
    pub fn vanishes_outside(&self) -> bool {
        match self {
            Expr::Num(v) => *v == 0.0,
            Expr::Delta => true,
            Expr::Call(Func::Inside, _) => true,
            Expr::Neg(e) => e.vanishes_outside(),
            Expr::Binary(BinOp::Add | BinOp::Sub, a, b) => a.vanishes_outside() && b.vanishes_outside(),
            Expr::Binary(BinOp::Mul, a, b) => a.vanishes_outside() || b.vanishes_outside(),
            Expr::Binary(BinOp::Div, a, _) => a.vanishes_outside(),
            Expr::Binary(BinOp::Pow, a, b) => a.vanishes_outside() && b.constant_value().is_some_and(|p| p > 0.0),
            Expr::Call(Func::Pow, args) => {
                args[0].vanishes_outside() && args[1].constant_value().is_some_and(|p| p > 0.0)
            }
            Expr::Call(Func::Sqrt | Func::Abs, args) => args[0].vanishes_outside(),
            _ => false,
        }
    }

    /// Conservative interior regularity of the expression on the open unit ball.
    pub fn smoothness(&self) -> Smoothness {
        match self {
            Expr::Num(_) | Expr::Coord(_) | Expr::Symbol(_) => Smoothness::Smooth,
            Expr::Norm | Expr::Delta => Smoothness::C0,
            Expr::Neg(e) => e.smoothness(),
            Expr::Binary(BinOp::Pow, a, b) => power_smoothness(a, b),
            Expr::Binary(op, a, b) => {
                let m = a.smoothness().min(b.smoothness());
                if *op == BinOp::Div && !interior_nonzero(b) {
                    Smoothness::C0
                } else {
                    m
                }
            }
            Expr::Call(f, args) => match f {
                Func::Exp | Func::Inside => args[0].smoothness(),
                Func::Log => {
                    if interior_nonzero(&args[0]) {
                        args[0].smoothness()
                    } else {
                        Smoothness::C0
                    }
                }
                Func::Sqrt => power_smoothness(&args[0], &Expr::Num(0.5)),
                Func::Pow => power_smoothness(&args[0], &args[1]),
                Func::Abs | Func::Min | Func::Max => Smoothness::C0,
            },
        }
    }
}

fn power_smoothness(base: &Expr, exponent: &Expr) -> Smoothness {
    let exp_smooth = exponent.smoothness();
    let Some(p) = exponent.constant_value() else {
        return if interior_nonzero(base) {
            base.smoothness().min(exp_smooth)
        } else {
            Smoothness::C0
        };
    };
    if matches!(base, Expr::Norm) {
        return if p >= 0.0 && p.fract() == 0.0 && (p as i64) % 2 == 0 {
            Smoothness::Smooth
        } else if p >= 2.0 {
            Smoothness::C1_1
        } else if p > 1.0 {
            Smoothness::C1
        } else {
            Smoothness::C0
        };
    }
    let b = base.smoothness();
    if p >= 0.0 && p.fract() == 0.0 {
        return b;
    }
    if interior_nonzero(base) {
        return b;
    }
    let by_exponent = if p >= 2.0 {
        Smoothness::C1_1
    } else if p > 1.0 {
        Smoothness::C1
    } else {
        Smoothness::C0
    };
    b.min(by_exponent)
}

/// Sample check that an expression keeps one strict sign on the interior of the ball.
fn interior_nonzero(e: &Expr) -> bool {
    if let Some(c) = e.constant_value() {
        return c != 0.0 && c.is_finite();
    }
    let dim = max_coord(e).map_or(2, |k| (k + 1).max(2));
    let mut sign = 0.0;
    let radii = [0.0, 0.2, 0.45, 0.7, 0.9, 0.99];
    let mut p = vec![0.0; dim];
    let mut probe = |p: &[f64]| {
        let value = e.eval(p);
        if !value.is_finite() || value.abs() < 1e-12 {
            return false;
        }
        if sign == 0.0 {
            sign = value.signum();
        }
        value.signum() == sign
    };
    for &r in &radii {
        for k in 0..dim {
            for flip in [1.0, -1.0] {
                p.iter_mut().for_each(|v| *v = 0.0);
                p[k] = flip * r;
                if !probe(&p) {
                    return false;
                }
                p.iter_mut().for_each(|v| *v = flip * r / (dim as f64).sqrt());
                if !probe(&p) {
                    return false;
                }
            }
        }
    }
    true
}

fn max_coord(e: &Expr) -> Option<usize> {
    match e {
        Expr::Coord(k) => Some(*k),
        Expr::Neg(a) => max_coord(a),
        Expr::Binary(_, a, b) => max_coord(a).max(max_coord(b)),
        Expr::Call(_, args) => args.iter().filter_map(max_coord).max(),
        _ => None,
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
            Expr::Neg(_) => PREC_NEG,
            Expr::Binary(BinOp::Pow, ..) => PREC_POW,
            _ => PREC_ATOM,
        }
    }
}

fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints with the minimal parentheses needed to reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Coord(k) => write!(f, "x{}", k + 1),
            Expr::Norm => f.write_str("|x|"),
            Expr::Delta => f.write_str("delta"),
            Expr::Symbol(Symbol::Pi) => f.write_str("pi"),
            Expr::Symbol(Symbol::Order(_)) => f.write_str("s"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                wrap(f, e, e.precedence() < PREC_NEG)
            }
            Expr::Binary(BinOp::Pow, a, b) => {
                wrap(f, a, a.precedence() <= PREC_POW)?;
                f.write_str("^")?;
                wrap(f, b, b.precedence() < PREC_NEG)
            }
            Expr::Binary(op, a, b) => {
                let (prec, sym) = match op {
                    BinOp::Add => (PREC_ADD, " + "),
                    BinOp::Sub => (PREC_ADD, " - "),
                    BinOp::Mul => (PREC_MUL, "*"),
                    _ => (PREC_MUL, "/"),
                };
                wrap(f, a, a.precedence() < prec)?;
                f.write_str(sym)?;
                wrap(f, b, b.precedence() <= prec)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
