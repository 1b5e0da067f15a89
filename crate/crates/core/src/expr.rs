//! Expression trees for user-supplied fields and Hamiltonians.
//!
//! The grammar supports constants, the phase variables `q1..qd` / `p1..pd`,
//! the time variable `t` (for dynamic-equation right-hand sides, as `x1..xn`
//! state variables there), the binary operators `+ - * / ^` with `^`
//! right-associative and binding tighter than unary minus, and the functions
//! `sin cos tan exp log sqrt abs sign`. Differentiation is exact on the tree;
//! `abs` differentiates to `sign`, which is undefined at zero.

use std::fmt;

use crate::scalar::Real;

/// Variable reference resolved at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Coordinate `q{i+1}`.
    Q(usize),
    /// Momentum `p{i+1}`.
    P(usize),
    /// Time.
    T,
    /// State component `x{i+1}` of a dynamic equation.
    X(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Q(i) => write!(f, "q{}", i + 1),
            Var::P(i) => write!(f, "p{}", i + 1),
            Var::T => write!(f, "t"),
            Var::X(i) => write!(f, "x{}", i + 1),
        }
    }
}

/// Unary functions of the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }
}

/// Expression tree. Constants are stored as `f64` and converted on
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Evaluation context supplying variable values.
#[derive(Debug, Clone, Copy)]
pub struct EvalCtx<'a, R> {
    pub q: &'a [R],
    pub p: &'a [R],
    pub x: &'a [R],
    pub t: R,
}

impl<'a, R: Real> EvalCtx<'a, R> {
    pub fn phase(q: &'a [R], p: &'a [R]) -> Self {
        EvalCtx { q, p, x: &[], t: R::zero() }
    }

    pub fn ode(t: R, x: &'a [R]) -> Self {
        EvalCtx { q: &[], p: &[], x, t }
    }
}

impl Expr {
    /// NaN-propagating evaluation; domain violations surface as non-finite
    /// values, which callers check where it matters.
    pub fn eval<R: Real>(&self, ctx: &EvalCtx<'_, R>) -> R {
        match self {
            Expr::Const(c) => R::of(*c),
            Expr::Var(Var::Q(i)) => ctx.q[*i],
            Expr::Var(Var::P(i)) => ctx.p[*i],
            Expr::Var(Var::X(i)) => ctx.x[*i],
            Expr::Var(Var::T) => ctx.t,
            Expr::Neg(e) => -e.eval(ctx),
            Expr::Add(a, b) => a.eval(ctx) + b.eval(ctx),
            Expr::Sub(a, b) => a.eval(ctx) - b.eval(ctx),
            Expr::Mul(a, b) => a.eval(ctx) * b.eval(ctx),
            Expr::Div(a, b) => a.eval(ctx) / b.eval(ctx),
            Expr::Pow(a, b) => {
                let base = a.eval(ctx);
                let exp = b.eval(ctx);
                // Integer exponents keep negative bases meaningful.
                if let Expr::Const(c) = **b {
                    if c.fract() == 0.0 && c.abs() < 64.0 {
                        return base.powi(c as i32);
                    }
                }
                base.powf(exp)
            }
            Expr::Call(f, e) => {
                let v = e.eval(ctx);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.tan(),
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Sqrt => v.sqrt(),
                    Func::Abs => v.abs(),
                    Func::Sign => {
                        if v == R::zero() {
                            R::nan()
                        } else {
                            v.signum()
                        }
                    }
                }
            }
        }
    }

    /// Exact derivative tree with light constant folding.
    pub fn differentiate(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(e) => neg(e.differentiate(var)),
            Expr::Add(a, b) => add(a.differentiate(var), b.differentiate(var)),
            Expr::Sub(a, b) => sub(a.differentiate(var), b.differentiate(var)),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(var), (**b).clone()),
                mul((**a).clone(), b.differentiate(var)),
            ),
            Expr::Div(a, b) => {
                let num = sub(
                    mul(a.differentiate(var), (**b).clone()),
                    mul((**a).clone(), b.differentiate(var)),
                );
                div(num, mul((**b).clone(), (**b).clone()))
            }
            Expr::Pow(a, b) => {
                if let Expr::Const(c) = **b {
                    // c * u^(c-1) * u'
                    return mul(
                        mul(Expr::Const(c), pow((**a).clone(), Expr::Const(c - 1.0))),
                        a.differentiate(var),
                    );
                }
                // u^v * (v' log u + v u' / u)
                let term = add(
                    mul(b.differentiate(var), Expr::Call(Func::Log, a.clone())),
                    div(mul((**b).clone(), a.differentiate(var)), (**a).clone()),
                );
                mul(self.clone(), term)
            }
            Expr::Call(f, e) => {
                let inner = e.differentiate(var);
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, e.clone()),
                    Func::Cos => neg(Expr::Call(Func::Sin, e.clone())),
                    Func::Tan => div(
                        Expr::Const(1.0),
                        pow(Expr::Call(Func::Cos, e.clone()), Expr::Const(2.0)),
                    ),
                    Func::Exp => Expr::Call(Func::Exp, e.clone()),
                    Func::Log => div(Expr::Const(1.0), (**e).clone()),
                    Func::Sqrt => div(
                        Expr::Const(0.5),
                        Expr::Call(Func::Sqrt, e.clone()),
                    ),
                    Func::Abs => Expr::Call(Func::Sign, e.clone()),
                    // Zero away from the origin, undefined at it.
                    Func::Sign => Expr::Const(0.0),
                };
                mul(outer, inner)
            }
        }
    }

    /// Collects every variable referenced by the tree.
    pub fn variables(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.variables(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.variables(out);
                b.variables(out);
            }
        }
    }

    pub fn uses_time(&self) -> bool {
        let mut vars = Vec::new();
        self.variables(&mut vars);
        vars.contains(&Var::T)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            // Negative literals print with a leading minus and bind like it.
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

// Smart constructors with constant folding; they keep derivative trees small.

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(c), _) if *c == 0.0 => b,
        (_, Expr::Const(c)) if *c == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (_, Expr::Const(c)) if *c == 0.0 => a,
        (Expr::Const(c), _) if *c == 0.0 => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(c), _) if *c == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(c)) if *c == 0.0 => Expr::Const(0.0),
        (Expr::Const(c), _) if *c == 1.0 => b,
        (_, Expr::Const(c)) if *c == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(c), _) if *c == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(c)) if *c == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(c)) if *c == 1.0 => a,
        (_, Expr::Const(c)) if *c == 0.0 => Expr::Const(1.0),
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        _ => Expr::Neg(Box::new(a)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(
            f: &mut fmt::Formatter<'_>,
            e: &Expr,
            parent: u8,
            needs_paren_on_tie: bool,
        ) -> fmt::Result {
            let p = e.precedence();
            if p < parent || (p == parent && needs_paren_on_tie) {
                write!(f, "(")?;
                write!(f, "{e}")?;
                write!(f, ")")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                child(f, e, 3, true)
            }
            Expr::Add(a, b) => {
                child(f, a, 1, false)?;
                write!(f, " + ")?;
                child(f, b, 1, false)
            }
            Expr::Sub(a, b) => {
                child(f, a, 1, false)?;
                write!(f, " - ")?;
                child(f, b, 1, true)
            }
            Expr::Mul(a, b) => {
                child(f, a, 2, false)?;
                write!(f, "*")?;
                child(f, b, 2, false)
            }
            Expr::Div(a, b) => {
                child(f, a, 2, false)?;
                write!(f, "/")?;
                child(f, b, 2, true)
            }
            Expr::Pow(a, b) => {
                child(f, a, 4, true)?;
                write!(f, "^")?;
                // Right-associative: a bare power on the right needs no parens.
                let p = b.precedence();
                if p < 4 {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

/// Parse error with source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// Set of identifiers the parser accepts.
#[derive(Debug, Clone, Copy)]
pub enum VarSet {
    /// `q1..qd`, `p1..pd` (autonomous phase-space expressions).
    Phase { dim: usize },
    /// `t`, `x1..xn` (dynamic-equation right-hand sides).
    Ode { dim: usize },
}

impl VarSet {
    fn resolve(&self, name: &str) -> Option<Var> {
        let index = |s: &str| -> Option<usize> {
            let i: usize = s.parse().ok()?;
            (i >= 1).then(|| i - 1)
        };
        match self {
            VarSet::Phase { dim } => {
                if let Some(rest) = name.strip_prefix('q') {
                    let i = index(rest)?;
                    return (i < *dim).then_some(Var::Q(i));
                }
                if let Some(rest) = name.strip_prefix('p') {
                    let i = index(rest)?;
                    return (i < *dim).then_some(Var::P(i));
                }
                None
            }
            VarSet::Ode { dim } => {
                if name == "t" {
                    return Some(Var::T);
                }
                if let Some(rest) = name.strip_prefix('x') {
                    let i = index(rest)?;
                    return (i < *dim).then_some(Var::X(i));
                }
                None
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

type Spanned = (Tok, u32, u32);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, message: message.into() }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_whitespace() {
                self.bump();
                continue;
            }
            let (line, col) = (self.line, self.col);
            let tok = match c {
                b'+' => {
                    self.bump();
                    Tok::Plus
                }
                b'-' => {
                    self.bump();
                    Tok::Minus
                }
                b'*' => {
                    self.bump();
                    Tok::Star
                }
                b'/' => {
                    self.bump();
                    Tok::Slash
                }
                b'^' => {
                    self.bump();
                    Tok::Caret
                }
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'0'..=b'9' | b'.' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && matches!(self.src[self.pos], b'0'..=b'9' | b'.')
                    {
                        self.bump();
                    }
                    if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
                        let mark = (self.pos, self.line, self.col);
                        self.bump();
                        if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                            self.bump();
                        }
                        if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit()
                            {
                                self.bump();
                            }
                        } else {
                            (self.pos, self.line, self.col) = mark;
                        }
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    let v: f64 = text.parse().map_err(|_| ParseError {
                        line,
                        col,
                        message: format!("malformed number `{text}`"),
                    })?;
                    Tok::Num(v)
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && matches!(self.src[self.pos], b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_')
                    {
                        self.bump();
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    Tok::Ident(text.to_string())
                }
                other => return Err(self.error(format!("unexpected character `{}`", other as char))),
            };
            out.push((tok, line, col));
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    vars: VarSet,
    end_line: u32,
    end_col: u32,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn here(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .map(|&(_, l, c)| (l, c))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError { line, col, message: message.into() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            _ => {
                self.pos = self.pos.saturating_sub(1).min(self.toks.len());
                Err(self.error(format!("expected {what}")))
            }
        }
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let (l_bp, r_bp) = match self.peek() {
                Some(Tok::Plus) | Some(Tok::Minus) => (10, 11),
                Some(Tok::Star) | Some(Tok::Slash) => (20, 21),
                Some(Tok::Caret) => (41, 40),
                _ => break,
            };
            if l_bp < min_bp {
                break;
            }
            let op = self.next().unwrap();
            let rhs = self.parse_expr(r_bp)?;
            lhs = match op {
                Tok::Plus => Expr::Add(Box::new(lhs), Box::new(rhs)),
                Tok::Minus => Expr::Sub(Box::new(lhs), Box::new(rhs)),
                Tok::Star => Expr::Mul(Box::new(lhs), Box::new(rhs)),
                Tok::Slash => Expr::Div(Box::new(lhs), Box::new(rhs)),
                Tok::Caret => Expr::Pow(Box::new(lhs), Box::new(rhs)),
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Expr, ParseError> {
        let (line, col) = self.here();
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::Minus) => {
                // Unary minus binds between `*` and `^`.
                let inner = self.parse_expr(30)?;
                Ok(Expr::Neg(Box::new(inner)))
            }
            Some(Tok::LParen) => {
                let inner = self.parse_expr(0)?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if let Some(func) = Func::from_name(&name) {
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(ParseError {
                            line,
                            col,
                            message: format!("function `{name}` needs an argument list"),
                        });
                    }
                    self.next();
                    let arg = self.parse_expr(0)?;
                    self.expect(Tok::RParen, "closing `)` after function argument")?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                match self.vars.resolve(&name) {
                    Some(v) => Ok(Expr::Var(v)),
                    None => Err(ParseError {
                        line,
                        col,
                        message: format!("unknown identifier `{name}`"),
                    }),
                }
            }
            Some(tok) => Err(ParseError {
                line,
                col,
                message: format!("unexpected token `{tok:?}`"),
            }),
            None => Err(ParseError { line, col, message: "unexpected end of input".into() }),
        }
    }
}

/// Parses `source` against the given variable set.
pub fn parse_expr(source: &str, vars: VarSet) -> Result<Expr, ParseError> {
    let lexer = Lexer::new(source);
    let end = {
        let lines: Vec<&str> = source.split('\n').collect();
        let line = lines.len() as u32;
        let col = lines.last().map(|l| l.chars().count() as u32 + 1).unwrap_or(1);
        (line, col)
    };
    let toks = lexer.tokens()?;
    let mut parser = Parser { toks, pos: 0, vars, end_line: end.0, end_col: end.1 };
    let expr = parser.parse_expr(0)?;
    if parser.pos < parser.toks.len() {
        return Err(parser.error("trailing input after expression"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase1(src: &str) -> Expr {
        parse_expr(src, VarSet::Phase { dim: 1 }).unwrap()
    }

    fn at(e: &Expr, q: f64, p: f64) -> f64 {
        e.eval(&EvalCtx::phase(&[q], &[p]))
    }

    #[test]
    fn parses_variables_and_arithmetic() {
        let e = phase1("p1");
        assert_eq!(e, Expr::Var(Var::P(0)));
        let e = phase1("-q1 - 0.1*p1");
        assert!((at(&e, 1.0, 1.0) + 1.1).abs() < 1e-15);
    }

    #[test]
    fn power_is_right_associative() {
        let e = phase1("2^3^2");
        assert_eq!(at(&e, 0.0, 0.0), 512.0);
        // Unary minus binds looser than the power.
        let e = phase1("-q1^2");
        assert_eq!(at(&e, 3.0, 0.0), -9.0);
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_expr("q1 + r2", VarSet::Phase { dim: 1 }).unwrap_err();
        assert_eq!((err.line, err.col), (1, 6));
        assert!(err.message.contains("r2"));

        let err = parse_expr("q2", VarSet::Phase { dim: 1 }).unwrap_err();
        assert!(err.message.contains("q2"));

        let err = parse_expr("sin", VarSet::Phase { dim: 1 }).unwrap_err();
        assert!(err.message.contains("argument"));

        let err = parse_expr("(q1", VarSet::Phase { dim: 1 }).unwrap_err();
        assert!(err.message.contains("closing"));

        let err = parse_expr("1 + ", VarSet::Phase { dim: 1 }).unwrap_err();
        assert!(err.message.contains("end of input"));
    }

    #[test]
    fn ode_variable_set() {
        let e = parse_expr("t*x1", VarSet::Ode { dim: 1 }).unwrap();
        let v = e.eval(&EvalCtx::ode(2.0, &[3.0]));
        assert_eq!(v, 6.0);
        assert!(e.uses_time());
        assert!(parse_expr("q1", VarSet::Ode { dim: 1 }).is_err());
    }

    #[test]
    fn derivative_examples() {
        let e = phase1("sin(q1)");
        let d = e.differentiate(Var::Q(0));
        assert_eq!(d, Expr::Call(Func::Cos, Box::new(Expr::Var(Var::Q(0)))));

        let e = phase1("q1");
        assert_eq!(e.differentiate(Var::P(0)), Expr::Const(0.0));
    }

    #[test]
    fn derivative_matches_central_difference() {
        let cases = [
            "q1^3 - 2*q1*p1 + exp(0.5*p1)",
            "sin(q1)*cos(p1) + q1/(2 + p1^2)",
            "sqrt(2 + q1^2) + log(1.5 + p1^2)",
            "tan(0.3*q1) + abs(2 + q1^2)",
        ];
        for src in cases {
            let e = phase1(src);
            for var in [Var::Q(0), Var::P(0)] {
                let d = e.differentiate(var);
                for k in 0..5 {
                    let q = -0.8 + 0.37 * k as f64;
                    let p = 0.6 - 0.23 * k as f64;
                    let h = 1e-6;
                    let (qp, qm, pp, pm) = match var {
                        Var::Q(_) => (q + h, q - h, p, p),
                        _ => (q, q, p + h, p - h),
                    };
                    let fd = (at(&e, qp, pp) - at(&e, qm, pm)) / (2.0 * h);
                    let an = at(&d, q, p);
                    let scale = an.abs().max(1.0);
                    assert!(
                        (fd - an).abs() / scale < 1e-7,
                        "{src} d/d{var:?} at ({q},{p}): fd {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn sign_errors_at_zero() {
        let e = phase1("abs(q1)");
        let d = e.differentiate(Var::Q(0));
        assert_eq!(at(&d, 2.0, 0.0), 1.0);
        assert_eq!(at(&d, -2.0, 0.0), -1.0);
        assert!(at(&d, 0.0, 0.0).is_nan());
    }

    #[test]
    fn print_parse_print_is_idempotent() {
        let sources = [
            "p1",
            "-q1 - 0.1*p1",
            "2^3^2",
            "(q1 + p1)*(q1 - p1)/(1 + q1^2)",
            "sin(q1)*cos(p1) - exp(-q1)",
            "-(q1 + p1)^2",
            "q1 - (p1 - 1)",
            "1/(2*p1)",
        ];
        for src in sources {
            let once = phase1(src).to_string();
            let twice = phase1(&once).to_string();
            assert_eq!(once, twice, "for source `{src}`");
            // And the reparse evaluates identically.
            let e1 = phase1(src);
            let e2 = phase1(&once);
            assert_eq!(at(&e1, 0.7, -0.4), at(&e2, 0.7, -0.4));
        }
    }
}
