//! Expressions in one variable `t` for distortion bounds.
//!
//! Grammar:
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := atom ('^' atom)?
//! atom   := number | 't' | func '(' expr (',' expr)? ')' | '(' expr ')'
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhoError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("domain error at t = {t}: {message}")]
    Domain { t: f64, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Log,
    Sqrt,
    Exp,
    Min,
    Max,
}

impl Func {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    T,
    Call(Func, Vec<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Evaluates at `t`, failing on a negative argument to `sqrt` or `log`, a
    /// zero argument to `log`, division by zero or an undefined value. Overflow
    /// to `∞` is allowed.
    pub fn eval(&self, t: f64) -> Result<f64, RhoError> {
        let dom = |message: &str| RhoError::Domain { t, message: message.into() };
        let v = match self {
            Expr::Num(x) => *x,
            Expr::T => t,
            Expr::Call(f, args) => {
                let a = args[0].eval(t)?;
                match f {
                    Func::Log if a <= 0.0 => return Err(dom("log of a nonpositive value")),
                    Func::Log => a.ln(),
                    Func::Sqrt if a < 0.0 => return Err(dom("sqrt of a negative value")),
                    Func::Sqrt => a.sqrt(),
                    Func::Exp => a.exp(),
                    Func::Min => a.min(args[1].eval(t)?),
                    Func::Max => a.max(args[1].eval(t)?),
                }
            }
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(t)?, r.eval(t)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return Err(dom("division by zero")),
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
        };
        if v.is_nan() {
            Err(dom("undefined value"))
        } else {
            Ok(v)
        }
    }

    fn is_atom(&self) -> bool {
        matches!(self, Expr::Num(_) | Expr::T | Expr::Call(..))
    }
}

/// Prints with every binary operation parenthesized except at the top.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrapped(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if e.is_atom() {
                write!(f, "{e}")
            } else {
                write!(f, "({e})")
            }
        }
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::T => write!(f, "t"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::Bin(op, l, r) => {
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => " * ",
                    BinOp::Div => " / ",
                    BinOp::Pow => "^",
                };
                wrapped(l, f)?;
                write!(f, "{sym}")?;
                wrapped(r, f)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoExpression {
    pub source: String,
    pub ast: Expr,
}

impl RhoExpression {
    pub fn eval(&self, t: f64) -> Result<f64, RhoError> {
        self.ast.eval(t)
    }

    pub fn pretty(&self) -> String {
        self.ast.to_string()
    }
}

pub fn parse_rho(source: &str) -> Result<RhoExpression, RhoError> {
    let mut p = Parser { src: source.as_bytes(), pos: 0 };
    let ast = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(RhoExpression { source: source.into(), ast })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn error(&self, message: &str) -> RhoError {
        let found = match self.src.get(self.pos) {
            Some(&c) => format!(" (found {:?})", c as char),
            None => " (found end of input)".into(),
        };
        RhoError::Syntax { offset: self.pos, message: format!("{message}{found}") }
    }

    fn expect(&mut self, c: u8) -> Result<(), RhoError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {:?}", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, RhoError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek().and_then(|c| match c {
            b'+' => Some(BinOp::Add),
            b'-' => Some(BinOp::Sub),
            _ => None,
        }) {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, RhoError> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.peek().and_then(|c| match c {
            b'*' => Some(BinOp::Mul),
            b'/' => Some(BinOp::Div),
            _ => None,
        }) {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, RhoError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.atom()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, RhoError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                if name == "t" {
                    return Ok(Expr::T);
                }
                let Some(func) = Func::parse(name) else {
                    self.pos = start;
                    return Err(RhoError::Syntax { offset: start, message: format!("unknown identifier {name:?}") });
                };
                self.expect(b'(')?;
                let mut args = vec![self.expr()?];
                if self.peek() == Some(b',') {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                if args.len() != func.arity() {
                    return Err(self.error(&format!("{} takes {} argument(s)", func.name(), func.arity())));
                }
                self.expect(b')')?;
                Ok(Expr::Call(func, args))
            }
            _ => Err(self.error("expected a number, 't', a function or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr, RhoError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos > s
        };
        let mut any = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            any |= digits(self);
        }
        if !any {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if !digits(self) {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::Num).map_err(|_| RhoError::Syntax { offset: start, message: format!("malformed number {text:?}") })
    }
}

/// Result of sampling `ρ` at 1000 evenly spaced points of `[1, horizon]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RhoCheck {
    pub horizon: f64,
    pub samples: usize,
    /// Advisory: sampled decreases and a non-increasing overall range.
    pub warnings: Vec<String>,
}

pub const RHO_SAMPLES: usize = 1000;

/// Fails on a negative or undefined sample; monotonicity and growth are only
/// advisory.
pub fn check_rho(rho: &RhoExpression, horizon: f64) -> Result<RhoCheck, RhoError> {
    if !(horizon > 1.0) {
        return Err(RhoError::Domain { t: horizon, message: "horizon must exceed 1".into() });
    }
    let mut warnings = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let mut first_decrease = None;
    let mut decreases = 0;
    for k in 0..RHO_SAMPLES {
        let t = 1.0 + (horizon - 1.0) * k as f64 / (RHO_SAMPLES - 1) as f64;
        let v = rho.eval(t)?;
        if v < 0.0 {
            return Err(RhoError::Domain { t, message: format!("negative value {v}") });
        }
        if let Some((pt, pv)) = prev {
            if v < pv {
                decreases += 1;
                first_decrease.get_or_insert((pt, t));
            }
        }
        prev = Some((t, v));
    }
    if let Some((a, b)) = first_decrease {
        warnings.push(format!("not monotone: {decreases} sampled decreases, first between t = {a} and t = {b}"));
    }
    let (lo, hi) = (rho.eval(1.0)?, rho.eval(horizon)?);
    if hi <= lo {
        warnings.push(format!("no growth on the horizon: rho(1) = {lo}, rho({horizon}) = {hi}"));
    }
    Ok(RhoCheck { horizon, samples: RHO_SAMPLES, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, t: f64) -> f64 {
        parse_rho(s).unwrap().eval(t).unwrap()
    }

    #[test]
    fn values() {
        assert_eq!(ev("sqrt(t)", 4.0), 2.0);
        assert_eq!(ev("log(1+t)", 0.0), 0.0);
        assert_eq!(ev("2^(3-1)", 0.0), 4.0);
        assert_eq!(ev("1 - 2 - 3", 0.0), -4.0);
        assert_eq!(ev("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("max(t, 3) + min(t, 3)", 5.0), 8.0);
        assert_eq!(ev("1.5e1 + .5", 0.0), 15.5);
        assert!((ev("t^0.5 + log(1+t)", 9.0) - (3.0 + 10f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn syntax_errors() {
        let err = |s: &str| match parse_rho(s) {
            Err(RhoError::Syntax { offset, .. }) => offset,
            other => panic!("{s:?}: {other:?}"),
        };
        assert_eq!(err("t +* 2"), 3);
        assert_eq!(err("foo(t)"), 0);
        assert_eq!(err("x"), 0);
        assert_eq!(err("log(t"), 5);
        assert_eq!(err("t t"), 2);
        assert_eq!(err("max(t)"), 5);
        assert_eq!(err("sqrt(t, 2)"), 9);
        assert_eq!(err(""), 0);
        assert_eq!(err("-t"), 0);
        assert_eq!(err("2^3^1"), 3);
    }

    #[test]
    fn domain_checks() {
        assert!(matches!(parse_rho("sqrt(t - 2)").unwrap().eval(1.0), Err(RhoError::Domain { .. })));
        assert!(check_rho(&parse_rho("log(t - 2)").unwrap(), 10.0).is_err());
        assert!(check_rho(&parse_rho("t - 5").unwrap(), 10.0).is_err());
        let ok = check_rho(&parse_rho("log(1+t)").unwrap(), 1000.0).unwrap();
        assert!(ok.warnings.is_empty());
        let w = check_rho(&parse_rho("2 + max(0, 5 - t)").unwrap(), 10.0).unwrap();
        assert_eq!(w.warnings.len(), 2);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![Just(Expr::T), (0u32..1000).prop_map(|k| Expr::Num(k as f64 / 8.0))];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), 0..4u8).prop_map(|(a, b, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][k as usize];
                    Expr::Bin(op, Box::new(a), Box::new(b))
                }),
                (inner.clone(), 0.0f64..0.5).prop_map(|(a, e)| Expr::Bin(BinOp::Pow, Box::new(a), Box::new(Expr::Num(e)))),
                (inner.clone(), 0..3u8).prop_map(|(a, k)| Expr::Call([Func::Log, Func::Sqrt, Func::Exp][k as usize], vec![a])),
                (inner.clone(), inner, any::<bool>()).prop_map(|(a, b, mx)| Expr::Call(if mx { Func::Max } else { Func::Min }, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(e in arb_expr()) {
            let printed = e.to_string();
            let back = parse_rho(&printed).unwrap();
            prop_assert_eq!(&back.ast, &e);
            for k in 0..1000 {
                let t = k as f64 / 10.0;
                let (a, b) = (e.eval(t), back.eval(t));
                match (a, b) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                    (Err(_), Err(_)) => {}
                    other => prop_assert!(false, "{:?}", other),
                }
            }
        }
    }
}
