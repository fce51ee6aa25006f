//! Arithmetic expression language for metric components, map components and
//! scalar functions in chart coordinates.
//!
//! Supports exact symbolic partial differentiation so Lie derivatives and
//! Jacobians never fall back to finite differences. No simplification beyond
//! constant folding.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub type Bindings = HashMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

/// Immutable expression AST. Values are safe to share and evaluate from many
/// threads at once.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("domain error in `{subexpr}`: {detail}")]
    Domain { subexpr: String, detail: String },
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        Parser::new(src).parse()
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Variable names appearing in the expression, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn eval(&self, bindings: &Bindings) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(name) => *bindings
                .get(name)
                .ok_or_else(|| ExprError::UnboundVariable(name.clone()))?,
            Expr::Neg(e) => -e.eval(bindings)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval(bindings)?;
                let y = b.eval(bindings)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        let r = x.powf(y);
                        if !r.is_finite() {
                            return Err(self.domain("power out of domain"));
                        }
                        r
                    }
                }
            }
            Expr::Call(f, e) => {
                let x = e.eval(bindings)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(self.domain("log of non-positive value"));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain("sqrt of negative value"));
                        }
                        x.sqrt()
                    }
                    Func::Tanh => x.tanh(),
                }
            }
        };
        if v.is_nan() {
            return Err(self.domain("result is NaN"));
        }
        Ok(v)
    }

    fn domain(&self, detail: &str) -> ExprError {
        ExprError::Domain {
            subexpr: self.to_string(),
            detail: detail.to_string(),
        }
    }

    /// Symbolic partial derivative with respect to `v`. Constant-folded but not
    /// otherwise simplified.
    pub fn diff(&self, v: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(name) => {
                if name == v {
                    Expr::Const(1.0)
                } else {
                    Expr::Const(0.0)
                }
            }
            Expr::Neg(e) => neg(e.diff(v)),
            Expr::Bin(op, a, b) => {
                let da = a.diff(v);
                let db = b.diff(v);
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    BinOp::Div => {
                        // (a/b)' = (a'b - ab') / b^2
                        let num = sub(mul(da, (**b).clone()), mul((**a).clone(), db));
                        div(num, pow((**b).clone(), Expr::Const(2.0)))
                    }
                    BinOp::Pow => {
                        if let Expr::Const(c) = **b {
                            // (a^c)' = c a^(c-1) a'
                            mul(
                                mul(Expr::Const(c), pow((**a).clone(), Expr::Const(c - 1.0))),
                                da,
                            )
                        } else {
                            // (a^b)' = a^b (b' log a + b a'/a)
                            let lhs = mul(db, Expr::Call(Func::Log, Box::new((**a).clone())));
                            let rhs = div(mul((**b).clone(), da), (**a).clone());
                            mul(self.clone(), add(lhs, rhs))
                        }
                    }
                }
            }
            Expr::Call(f, e) => {
                let de = e.diff(v);
                let inner = (**e).clone();
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, Box::new(inner)),
                    Func::Cos => neg(Expr::Call(Func::Sin, Box::new(inner))),
                    Func::Exp => Expr::Call(Func::Exp, Box::new(inner)),
                    Func::Log => div(Expr::Const(1.0), inner),
                    Func::Sqrt => div(
                        Expr::Const(0.5),
                        Expr::Call(Func::Sqrt, Box::new(inner)),
                    ),
                    Func::Tanh => sub(
                        Expr::Const(1.0),
                        pow(Expr::Call(Func::Tanh, Box::new(inner)), Expr::Const(2.0)),
                    ),
                };
                mul(outer, de)
            }
        }
    }
}

// Folding constructors: collapse constant subtrees and trivial identities so
// derivative trees stay readable and cheap to evaluate.

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(c), _) if *c == 0.0 => b,
        (_, Expr::Const(c)) if *c == 0.0 => a,
        _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (_, Expr::Const(c)) if *c == 0.0 => a,
        (Expr::Const(c), _) if *c == 0.0 => neg(b),
        _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(c), _) if *c == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(c)) if *c == 0.0 => Expr::Const(0.0),
        (Expr::Const(c), _) if *c == 1.0 => b,
        (_, Expr::Const(c)) if *c == 1.0 => a,
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(c), _) if *c == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(c)) if *c == 1.0 => a,
        (Expr::Const(x), Expr::Const(y)) if *y != 0.0 => Expr::Const(x / y),
        _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(c)) if *c == 1.0 => a,
        (_, Expr::Const(c)) if *c == 0.0 => Expr::Const(1.0),
        _ => Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b)),
    }
}

pub fn neg(a: Expr) -> Expr {
    match &a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => (**inner).clone(),
        _ => Expr::Neg(Box::new(a)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl Expr {
    // Precedence levels: 0 add/sub, 1 mul/div, 2 unary minus, 3 pow, 4 atom.
    fn prec(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 2,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => 4,
            Expr::Neg(_) => 2,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 0,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 1,
            Expr::Bin(BinOp::Pow, ..) => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.prec();
        if p < min {
            write!(f, "(")?;
        }
        match self {
            Expr::Const(c) => write!(f, "{}", c)?,
            Expr::Var(v) => write!(f, "{}", v)?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 3)?;
            }
            Expr::Bin(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => ("+", 0, 1),
                    BinOp::Sub => ("-", 0, 1),
                    BinOp::Mul => ("*", 1, 2),
                    BinOp::Div => ("/", 1, 2),
                    // right-associative
                    BinOp::Pow => ("^", 4, 3),
                };
                a.fmt_prec(f, lp)?;
                write!(f, "{}", sym)?;
                b.fmt_prec(f, rp)?;
            }
            Expr::Call(func, e) => {
                write!(f, "{}(", func.name())?;
                e.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if p < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn parse(mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        if self.pos >= self.bytes.len() {
            return Err(self.err("empty expression"));
        }
        let e = self.expr()?;
        self.skip_ws();
        if self.pos < self.bytes.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(e)
    }

    fn err(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
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

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // right-associative; exponent may carry a unary minus
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.err("expected number, identifier or `(`")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // exponent part
        if self.pos < self.bytes.len() && (self.bytes[self.pos] | 32) == b'e' {
            let mut look = self.pos + 1;
            if look < self.bytes.len() && (self.bytes[look] == b'+' || self.bytes[look] == b'-') {
                look += 1;
            }
            if look < self.bytes.len() && self.bytes[look].is_ascii_digit() {
                self.pos = look;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map(Expr::Const).map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("invalid number literal `{}`", text),
        })
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownFunction {
                name: name.to_string(),
                offset: start,
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.err("expected `)`"));
            }
            self.pos += 1;
            Ok(Expr::Call(func, Box::new(arg)))
        } else {
            Ok(Expr::Var(name.to_string()))
        }
    }
}
