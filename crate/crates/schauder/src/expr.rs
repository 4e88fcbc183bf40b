//! Whitelisted analytic expression grammar with symbolic differentiation.
//!
//! Coefficients, nonlinearities and test fields are given as expressions over
//! a fixed vocabulary: numbers, named variables, + - * / ^, and the functions
//! sin, cos, exp, log, sqrt, abs. Derivative bounds required by the solvers
//! (e.g. the monotonization shift for sub/supersolution iteration) are taken
//! from the symbolic derivative, never from finite differences of a black
//! box.
//!
//! `abs` differentiates to `sign` away from 0; fields with kinks are admitted
//! for norm estimation but should not be fed to solvers expecting C^1 data.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
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
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        let tokens = tokenize(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expression()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!("trailing input at token {}", p.pos)));
        }
        Ok(e)
    }

    /// Evaluate with variables bound by `lookup`.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => {
                lookup(name).ok_or_else(|| Error::Expr(format!("unbound variable '{name}'")))?
            }
            Expr::Add(a, b) => a.eval(lookup)? + b.eval(lookup)?,
            Expr::Sub(a, b) => a.eval(lookup)? - b.eval(lookup)?,
            Expr::Mul(a, b) => a.eval(lookup)? * b.eval(lookup)?,
            Expr::Div(a, b) => a.eval(lookup)? / b.eval(lookup)?,
            Expr::Pow(a, p) => a.eval(lookup)?.powf(*p),
            Expr::Neg(a) => -a.eval(lookup)?,
            Expr::Call(f, a) => f.eval(a.eval(lookup)?),
        })
    }

    /// Evaluate as a function of a single scalar variable `var`.
    pub fn eval1(&self, var: &str, x: f64) -> Result<f64> {
        self.eval(&|name| if name == var { Some(x) } else { None })
    }

    /// Evaluate with coordinate variables x1..xn (aliases x, y, z for the
    /// first three axes).
    pub fn eval_at(&self, point: &[f64]) -> Result<f64> {
        self.eval(&|name| coord_var(name, point))
    }

    /// Symbolic partial derivative.
    pub fn derivative(&self, var: &str) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(name) => Expr::Num(if name == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                );
                Expr::Div(Box::new(num), Box::new(Expr::Pow(b.clone(), 2.0)))
            }
            Expr::Pow(a, p) => mul(
                mul(Expr::Num(*p), Expr::Pow(a.clone(), p - 1.0)),
                a.derivative(var),
            ),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Call(f, a) => {
                let inner = a.derivative(var);
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Expr::Call(Func::Sin, a.clone())),
                    Func::Exp => Expr::Call(Func::Exp, a.clone()),
                    Func::Log => Expr::Div(Box::new(Expr::Num(1.0)), a.clone()),
                    Func::Sqrt => Expr::Div(
                        Box::new(Expr::Num(0.5)),
                        Box::new(Expr::Call(Func::Sqrt, a.clone())),
                    ),
                    Func::Abs => Expr::Call(Func::Sign, a.clone()),
                    Func::Sign => Expr::Num(0.0),
                };
                mul(outer, inner)
            }
        }
    }
}

/// Axis bound to a coordinate variable name: x1..x9 plus x/y/z/t aliases and
/// r for 1-D radial coordinates.
pub fn coord_axis(name: &str) -> Option<usize> {
    match name {
        "x" | "x1" | "r" | "y1" => Some(0),
        "y" | "x2" | "t" => Some(1),
        "z" | "x3" => Some(2),
        _ => {
            let rest = name.strip_prefix('x')?;
            rest.parse::<usize>().ok()?.checked_sub(1)
        }
    }
}

/// Resolve coordinate variable names against a point.
pub fn coord_var(name: &str, point: &[f64]) -> Option<f64> {
    point.get(coord_axis(name)?).copied()
}

impl Expr {
    /// Rename every coordinate-variable alias to its canonical form x1..xn,
    /// so symbolic differentiation with respect to x{a} sees all spellings.
    pub fn canonicalize_coords(&self) -> Expr {
        let rename = |e: &Expr| -> Expr { e.canonicalize_coords() };
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(name) => match coord_axis(name) {
                Some(a) => Expr::Var(format!("x{}", a + 1)),
                None => Expr::Var(name.clone()),
            },
            Expr::Add(a, b) => Expr::Add(Box::new(rename(a)), Box::new(rename(b))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(rename(a)), Box::new(rename(b))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(rename(a)), Box::new(rename(b))),
            Expr::Div(a, b) => Expr::Div(Box::new(rename(a)), Box::new(rename(b))),
            Expr::Pow(a, p) => Expr::Pow(Box::new(rename(a)), *p),
            Expr::Neg(a) => Expr::Neg(Box::new(rename(a))),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(rename(a))),
        }
    }
}

// constant-folding smart constructors keep derivatives readable and cheap
fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        (Expr::Num(z), _) if *z == 0.0 => b,
        (_, Expr::Num(z)) if *z == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        (_, Expr::Num(z)) if *z == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        (Expr::Num(z), _) | (_, Expr::Num(z)) if *z == 0.0 => Expr::Num(0.0),
        (Expr::Num(o), _) if *o == 1.0 => b,
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match &a {
        Expr::Num(x) => Expr::Num(-x),
        _ => Expr::Neg(Box::new(a)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
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

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E'
                        || ((bytes[i] == '+' || bytes[i] == '-')
                            && i > start
                            && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                {
                    i += 1;
                }
                let s: String = bytes[start..i].iter().collect();
                let v = s
                    .parse::<f64>()
                    .map_err(|_| Error::Expr(format!("bad number '{s}'")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(bytes[start..i].iter().collect()));
            }
            other => return Err(Error::Expr(format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::Expr(format!("expected {t:?}, got {got:?}"))),
        }
    }

    fn expression(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    e = Expr::Add(Box::new(e), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    e = Expr::Sub(Box::new(e), Box::new(self.term()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    e = Expr::Mul(Box::new(e), Box::new(self.factor()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    e = Expr::Div(Box::new(e), Box::new(self.factor()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if let Some(Token::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.bump();
            // exponent: optionally signed numeric literal or parenthesized literal
            let neg = matches!(self.peek(), Some(Token::Minus));
            if neg {
                self.bump();
            }
            let p = match self.bump() {
                Some(Token::Num(v)) => v,
                Some(Token::LParen) => {
                    let inner_neg = matches!(self.peek(), Some(Token::Minus));
                    if inner_neg {
                        self.bump();
                    }
                    let v = match self.bump() {
                        Some(Token::Num(v)) => v,
                        got => {
                            return Err(Error::Expr(format!(
                                "expected numeric exponent, got {got:?}"
                            )))
                        }
                    };
                    self.expect(Token::RParen)?;
                    if inner_neg {
                        -v
                    } else {
                        v
                    }
                }
                got => {
                    return Err(Error::Expr(format!(
                        "expected numeric exponent, got {got:?}"
                    )))
                }
            };
            let p = if neg { -p } else { p };
            return Ok(Expr::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "log" => Func::Log,
                        "sqrt" => Func::Sqrt,
                        "abs" => Func::Abs,
                        "sign" => Func::Sign,
                        other => return Err(Error::Expr(format!("unknown function '{other}'"))),
                    };
                    self.bump();
                    let arg = self.expression()?;
                    self.expect(Token::RParen)?;
                    Ok(Expr::Call(f, Box::new(arg)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Token::LParen) => {
                let e = self.expression()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            got => Err(Error::Expr(format!("unexpected token {got:?}"))),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, p) => write!(f, "({a}^{p})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("2*u*(1 - u)").unwrap();
        assert!((e.eval1("u", 0.25).unwrap() - 0.375).abs() < 1e-15);
        let e = Expr::parse("sin(3.14159265358979/2)").unwrap();
        assert!((e.eval_at(&[]).unwrap() - 1.0).abs() < 1e-9);
        let e = Expr::parse("abs(x)^0.5").unwrap();
        assert!((e.eval_at(&[-0.25]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_rules() {
        let e = Expr::parse("2*u*(1-u)").unwrap();
        let d = e.derivative("u");
        // f'(u) = 2 - 4u
        for u in [0.0, 0.3, 1.0] {
            assert!((d.eval1("u", u).unwrap() - (2.0 - 4.0 * u)).abs() < 1e-12);
        }
        let e = Expr::parse("exp(2*x) + x^3 / 3").unwrap();
        let d = e.derivative("x");
        for x in [-0.5f64, 0.0, 1.2] {
            let expect = 2.0 * (2.0 * x).exp() + x * x;
            assert!((d.eval1("x", x).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_unknown_symbols() {
        assert!(Expr::parse("tan(x)").is_err());
        assert!(Expr::parse("x + !").is_err());
        let e = Expr::parse("q + 1").unwrap();
        assert!(e.eval_at(&[1.0]).is_err());
    }

    #[test]
    fn coordinate_aliases() {
        let e = Expr::parse("x + 2*y + 4*z").unwrap();
        assert_eq!(e.eval_at(&[1.0, 1.0, 1.0]).unwrap(), 7.0);
        let e2 = Expr::parse("x1 + 2*x2 + 4*x3").unwrap();
        assert_eq!(e2.eval_at(&[1.0, 1.0, 1.0]).unwrap(), 7.0);
    }
}
