//! Recursive-descent parser.
//!
//! ```text
//! expr   = term { ("+" | "-") term } ;
//! term   = unary { ("*" | "/") unary } ;
//! unary  = "-" unary | power ;
//! power  = atom [ "^" unary ] ;
//! atom   = number | "|x|" | "delta" | "pi" | "s" | "x" digit+
//!        | func "(" expr { "," expr } ")" | "(" expr ")" ;
//! func   = "exp" | "log" | "sqrt" | "abs" | "min" | "max" | "pow" | "inside" ;
//! ```

use super::ast::{BinOp, Expr, Func, Symbol};
use super::lexer::{tokenize, Spanned, Tok};
use super::{FieldError, ParseError};

const ATOM_START: &[&str] = &["number", "identifier", "`|x|`", "`(`", "`-`"];

pub(crate) struct Parser {
    toks: Vec<Spanned>,
    at: usize,
    dim: usize,
    order: f64,
}

pub(crate) fn parse(src: &str, dim: usize, order: f64) -> Result<Expr, FieldError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, at: 0, dim, order };
    let e = p.expr()?;
    match p.peek() {
        Tok::Eof => Ok(e),
        other => Err(ParseError::new(
            p.pos(),
            &["`+`", "`-`", "`*`", "`/`", "`^`", "end of input"],
            &other.describe(),
        )
        .into()),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, expected: &[&str]) -> Result<(), FieldError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::new(self.pos(), expected, &self.peek().describe()).into())
        }
    }

    fn expr(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, FieldError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, FieldError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, FieldError> {
        let Spanned { tok, pos } = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::NormX => Ok(Expr::Norm),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, &["`)`", "operator"])?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(name, pos),
            other => Err(ParseError::new(pos, ATOM_START, &other.describe()).into()),
        }
    }

    fn identifier(&mut self, name: String, pos: usize) -> Result<Expr, FieldError> {
        if let Some(func) = Func::lookup(&name) {
            return self.call(func, pos);
        }
        match name.as_str() {
            "delta" => return Ok(Expr::Delta),
            "pi" => return Ok(Expr::Symbol(Symbol::Pi)),
            "s" => return Ok(Expr::Symbol(Symbol::Order(self.order))),
            _ => {}
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let k: usize = digits.parse().unwrap_or(0);
                if k >= 1 && k <= self.dim {
                    return Ok(Expr::Coord(k - 1));
                }
                return Err(FieldError::UnknownIdentifier {
                    name,
                    position: pos,
                    hint: format!("coordinates run from x1 to x{}", self.dim),
                });
            }
        }
        Err(FieldError::UnknownIdentifier {
            name,
            position: pos,
            hint: "known names: x1..xn, delta, pi, s, exp, log, sqrt, abs, min, max, pow, inside".into(),
        })
    }

    fn call(&mut self, func: Func, pos: usize) -> Result<Expr, FieldError> {
        self.expect(Tok::LParen, &["`(`"])?;
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, &["`)`", "`,`", "operator"])?;
        if args.len() != func.arity() {
            return Err(FieldError::Arity {
                function: func.name().to_string(),
                expected: func.arity(),
                found: args.len(),
                position: pos,
            });
        }
        Ok(Expr::Call(func, args))
    }
}
