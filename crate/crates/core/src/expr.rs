//! Closed-form expressions over configuration-space variables.
//!
//! Grammar (usual precedence, `^` right-associative and binding tighter than
//! unary minus):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'q'<k> | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | exp | sqrt
//! ```
//!
//! Variables are 1-based: `q1 .. qd`.

use std::fmt;

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} (at byte {position} of `{source_text}`)")]
pub struct ExprError {
    pub message: String,
    pub position: usize,
    pub source_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based variable index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses `src`, accepting variables `q1 ..= q{dim}`.
    pub fn parse(src: &str, dim: usize) -> Result<Expr, ExprError> {
        let mut p = Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            dim,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval<T: Real>(&self, q: &[T]) -> T {
        match self {
            Expr::Num(x) => T::lit(*x),
            Expr::Var(i) => q[*i],
            Expr::Neg(a) => -a.eval(q),
            Expr::Add(a, b) => a.eval(q) + b.eval(q),
            Expr::Sub(a, b) => a.eval(q) - b.eval(q),
            Expr::Mul(a, b) => a.eval(q) * b.eval(q),
            Expr::Div(a, b) => a.eval(q) / b.eval(q),
            Expr::Pow(a, b) => {
                let base = a.eval(q);
                match b.as_ref() {
                    Expr::Num(k) if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 => {
                        base.powi(*k as i32)
                    }
                    _ => base.powf(b.eval(q)),
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(q);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => x.sqrt(),
                }
            }
        }
    }

    /// Highest variable index referenced plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    pub fn is_literal_zero(&self) -> bool {
        matches!(self, Expr::Num(x) if *x == 0.0)
    }

    /// True when `self` is structurally the negation of `other`.
    pub fn is_negation_of(&self, other: &Expr) -> bool {
        match (self, other) {
            (Expr::Neg(a), b) | (b, Expr::Neg(a)) => a.as_ref() == b,
            (Expr::Num(a), Expr::Num(b)) => *a == -*b,
            _ => false,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var(i) => write!(f, "q{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError {
            message: message.to_string(),
            position: self.pos,
            source_text: self.src.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map(Expr::Num).map_err(|_| ExprError {
            message: format!("malformed number `{text}`"),
            position: start,
            source_text: self.src.to_string(),
        })
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && b[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if let Some(func) = Func::from_name(name) {
            if !self.eat(b'(') {
                return Err(self.error("expected `(` after function name"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if let Some(idx) = name.strip_prefix('q').and_then(|s| s.parse::<usize>().ok()) {
            if idx == 0 || idx > self.dim {
                return Err(ExprError {
                    message: format!("variable `{name}` outside q1..q{}", self.dim),
                    position: start,
                    source_text: self.src.to_string(),
                });
            }
            return Ok(Expr::Var(idx - 1));
        }
        Err(ExprError {
            message: format!("unknown identifier `{name}`"),
            position: start,
            source_text: self.src.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, q: &[f64]) -> f64 {
        Expr::parse(src, q.len().max(1)).unwrap().eval(q)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[0.0]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[0.0]), -4.0);
        assert_eq!(ev("(1 - 2) - 3", &[0.0]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[0.0]), 1.0);
        assert_eq!(ev("2 * -q1", &[3.0]), -6.0);
    }

    #[test]
    fn functions_and_variables() {
        let v = ev("sin(q1)^2 + cos(q1)^2", &[0.7]);
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(ev("sqrt(q1*q2)", &[2.0, 8.0]), 4.0);
        assert!((ev("exp(1)", &[0.0]) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(ev("1.5e-1 * 2E1", &[0.0]), 3.0);
    }

    #[test]
    fn integer_powers_of_negative_bases() {
        assert_eq!(ev("q1^3", &[-2.0]), -8.0);
        assert_eq!(ev("q1^-2", &[-2.0]), 0.25);
        assert!(ev("q1^0.5", &[-2.0]).is_nan());
    }

    #[test]
    fn generic_over_scalar() {
        let e = Expr::parse("q1 * q1 + 1", 1).unwrap();
        assert_eq!(e.eval(&[3.0f32]), 10.0f32);
    }

    #[test]
    fn diagnostics_carry_position() {
        let err = Expr::parse("q1 + q3", 2).unwrap_err();
        assert_eq!(err.position, 5);
        assert!(err.message.contains("q1..q2"));
        assert!(Expr::parse("sin q1", 1).is_err());
        assert!(Expr::parse("(q1", 1).is_err());
        assert!(Expr::parse("q1 q1", 1).is_err());
        assert!(Expr::parse("tan(q1)", 1).is_err());
        assert!(Expr::parse("", 1).is_err());
    }

    #[test]
    fn structural_negation() {
        let a = Expr::parse("0.3*q1", 1).unwrap();
        let b = Expr::parse("-(0.3*q1)", 1).unwrap();
        assert!(b.is_negation_of(&a));
        assert!(a.is_negation_of(&b));
        assert!(!a.is_negation_of(&a));
        assert_eq!(a.arity(), 1);
    }
}
