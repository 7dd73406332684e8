//! Arithmetic binding expressions.
//!
//! Interface argument bindings and abstract mappings are written in a tiny
//! infix language: numbers, names (`linear`, `readEncoders.left`), the four
//! binary operators, unary minus, parentheses and the functions `clamp`,
//! `round`, `min` and `max`. Everything evaluates over `f64`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::number::format_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Clamp,
    Round,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "clamp" => Some(Func::Clamp),
            "round" => Some(Func::Round),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Clamp => "clamp",
            Func::Round => "round",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Clamp => 3,
            Func::Round => 1,
            Func::Min | Func::Max => 2,
        }
    }
}

/// Expression tree. Construct through [`parse_expr`] or the helper
/// constructors; `Call` arity is checked at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Number(f64),
    Name(String),
    Neg(Box<ExprAst>),
    Binary {
        op: BinOp,
        lhs: Box<ExprAst>,
        rhs: Box<ExprAst>,
    },
    Call {
        func: Func,
        args: Vec<ExprAst>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprSyntaxError {
    #[error("column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("column {column}: unknown function `{name}`")]
    UnknownFunction { column: usize, name: String },
    #[error("column {column}: `{func}` takes {expected} argument(s), got {got}")]
    Arity {
        column: usize,
        func: &'static str,
        expected: usize,
        got: usize,
    },
}

impl ExprSyntaxError {
    pub fn column(&self) -> usize {
        match self {
            ExprSyntaxError::Syntax { column, .. }
            | ExprSyntaxError::UnknownFunction { column, .. }
            | ExprSyntaxError::Arity { column, .. } => *column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("clamp bounds inverted: lo {lo} > hi {hi}")]
    ClampBounds { lo: f64, hi: f64 },
}

/// Name bindings for evaluation. Lookups of unbound names fail.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Env {
    bindings: BTreeMap<String, f64>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.bind(name, value);
        self
    }

    pub fn bind(&mut self, name: impl Into<String>, value: f64) {
        self.bindings.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.bindings.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<K: Into<String>> FromIterator<(K, f64)> for Env {
    fn from_iter<I: IntoIterator<Item = (K, f64)>>(iter: I) -> Self {
        let mut env = Env::new();
        for (k, v) in iter {
            env.bind(k, v);
        }
        env
    }
}

impl<K: Into<String>> Extend<(K, f64)> for Env {
    fn extend<I: IntoIterator<Item = (K, f64)>>(&mut self, iter: I) {
        for (k, v) in iter {
            self.bind(k, v);
        }
    }
}

impl ExprAst {
    pub fn number(v: f64) -> Self {
        ExprAst::Number(v)
    }

    pub fn name(n: impl Into<String>) -> Self {
        ExprAst::Name(n.into())
    }

    pub fn binary(op: BinOp, lhs: ExprAst, rhs: ExprAst) -> Self {
        ExprAst::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Evaluates the expression. `round` is half-away-from-zero.
    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        match self {
            ExprAst::Number(v) => Ok(*v),
            ExprAst::Name(n) => env.get(n).ok_or_else(|| EvalError::Unbound(n.clone())),
            ExprAst::Neg(inner) => Ok(-inner.eval(env)?),
            ExprAst::Binary { op, lhs, rhs } => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            Ok(a / b)
                        }
                    }
                }
            }
            ExprAst::Call { func, args } => {
                let vals = args.iter().map(|a| a.eval(env)).collect::<Result<Vec<_>, _>>()?;
                match func {
                    Func::Clamp => {
                        let (x, lo, hi) = (vals[0], vals[1], vals[2]);
                        if lo > hi {
                            return Err(EvalError::ClampBounds { lo, hi });
                        }
                        Ok(x.max(lo).min(hi))
                    }
                    Func::Round => Ok(vals[0].round()),
                    Func::Min => Ok(vals[0].min(vals[1])),
                    Func::Max => Ok(vals[0].max(vals[1])),
                }
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            ExprAst::Number(_) => {}
            ExprAst::Name(n) => {
                out.insert(n.clone());
            }
            ExprAst::Neg(inner) => inner.collect_names(out),
            ExprAst::Binary { lhs, rhs, .. } => {
                lhs.collect_names(out);
                rhs.collect_names(out);
            }
            ExprAst::Call { args, .. } => args.iter().for_each(|a| a.collect_names(out)),
        }
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a ExprAst)) {
        f(self);
        match self {
            ExprAst::Neg(inner) => inner.walk(f),
            ExprAst::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprAst::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            ExprAst::Number(_) | ExprAst::Name(_) => {}
        }
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Prints with the minimum parentheses needed for `parse_expr` to rebuild
/// the same tree.
impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprAst::Number(v) => f.write_str(&format_number(*v)),
            ExprAst::Name(n) => f.write_str(n),
            ExprAst::Neg(inner) => {
                let parens = !matches!(inner.as_ref(), ExprAst::Name(_) | ExprAst::Call { .. });
                f.write_str("-")?;
                inner.fmt_operand(f, parens)
            }
            ExprAst::Binary { op, lhs, rhs } => {
                let prec = op.precedence();
                let lhs_parens = matches!(lhs.as_ref(), ExprAst::Binary { op: l, .. } if l.precedence() < prec);
                let rhs_parens = matches!(rhs.as_ref(), ExprAst::Binary { op: r, .. } if r.precedence() <= prec);
                lhs.fmt_operand(f, lhs_parens)?;
                write!(f, " {} ", op.symbol())?;
                rhs.fmt_operand(f, rhs_parens)
            }
            ExprAst::Call { func, args } => {
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

pub fn eval(expr: &ExprAst, env: &Env) -> Result<f64, EvalError> {
    expr.eval(env)
}

pub fn free_vars(expr: &ExprAst) -> BTreeSet<String> {
    expr.free_vars()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ExprSyntaxError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, col) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, col));
            if end {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprSyntaxError> {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += self.peek().map(char::len_utf8).unwrap_or(0);
        }
        let start = self.pos;
        let column = self.src[..start].chars().count() + 1;
        let Some(c) = self.peek() else {
            return Ok((Tok::End, column));
        };
        let tok = match c {
            '+' | '-' | '*' | '/' => {
                self.pos += 1;
                Tok::Op(c)
            }
            '(' => {
                self.pos += 1;
                Tok::LParen
            }
            ')' => {
                self.pos += 1;
                Tok::RParen
            }
            ',' => {
                self.pos += 1;
                Tok::Comma
            }
            '0'..='9' | '.' => {
                let bytes = self.src.as_bytes();
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut exp = end + 1;
                    if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                        exp += 1;
                    }
                    if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                        while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                            exp += 1;
                        }
                        end = exp;
                    }
                }
                let text = &self.src[start..end];
                let v: f64 = text.parse().map_err(|_| ExprSyntaxError::Syntax {
                    column,
                    message: format!("malformed number `{text}`"),
                })?;
                self.pos = end;
                Tok::Num(v)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let bytes = self.src.as_bytes();
                let mut end = start;
                loop {
                    while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                        end += 1;
                    }
                    // dotted names refer to outputs of earlier calls
                    if end + 1 < bytes.len()
                        && bytes[end] == b'.'
                        && (bytes[end + 1].is_ascii_alphabetic() || bytes[end + 1] == b'_')
                    {
                        end += 1;
                        continue;
                    }
                    break;
                }
                self.pos = end;
                Tok::Ident(self.src[start..end].to_string())
            }
            other => {
                return Err(ExprSyntaxError::Syntax {
                    column,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        Ok((tok, column))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].0
    }

    fn column(&self) -> usize {
        self.toks[self.idx].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.idx].0.clone();
        if t != Tok::End {
            self.idx += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprSyntaxError> {
        Err(ExprSyntaxError::Syntax {
            column: self.column(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<ExprAst, ExprSyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = ExprAst::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<ExprAst, ExprSyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = ExprAst::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<ExprAst, ExprSyntaxError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            // `-3` is a literal, `-(3)` and `-x` are negations
            if let Tok::Num(v) = *self.peek() {
                self.bump();
                return Ok(ExprAst::Number(-v));
            }
            let inner = self.unary()?;
            return Ok(ExprAst::Neg(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<ExprAst, ExprSyntaxError> {
        let column = self.column();
        match self.bump() {
            Tok::Num(v) => Ok(ExprAst::Number(v)),
            Tok::Ident(name) => {
                if *self.peek() != Tok::LParen {
                    return Ok(ExprAst::Name(name));
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ExprSyntaxError::UnknownFunction { column, name });
                };
                self.bump();
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        args.push(self.expr()?);
                        match self.peek() {
                            Tok::Comma => {
                                self.bump();
                            }
                            Tok::RParen => break,
                            _ => return self.error("expected `,` or `)`"),
                        }
                    }
                }
                self.bump();
                if args.len() != func.arity() {
                    return Err(ExprSyntaxError::Arity {
                        column,
                        func: func.name(),
                        expected: func.arity(),
                        got: args.len(),
                    });
                }
                Ok(ExprAst::Call { func, args })
            }
            Tok::LParen => {
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.error("expected `)`");
                }
                self.bump();
                Ok(inner)
            }
            Tok::End => Err(ExprSyntaxError::Syntax {
                column,
                message: "unexpected end of expression".into(),
            }),
            other => Err(ExprSyntaxError::Syntax {
                column,
                message: format!("unexpected {}", describe(&other)),
            }),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(n) => format!("name `{n}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::End => "end of expression".into(),
    }
}

/// Parses an expression. `*` and `/` bind tighter than `+` and `-`, all
/// four are left associative.
pub fn parse_expr(text: &str) -> Result<ExprAst, ExprSyntaxError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, idx: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        let t = p.peek().clone();
        return p.error(format!("unexpected {}", describe(&t)));
    }
    Ok(e)
}
