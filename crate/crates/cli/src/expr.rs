//! Arithmetic expressions for analytic fields in config files.
//!
//! The grammar covers +, -, *, /, ^, sin, cos, exp, the constant pi,
//! coordinates x1..x9, and the time variable t. Expressions are parsed
//! once, evaluated many times on grid points, and differentiated
//! symbolically where a gradient is required (anisotropy densities), so
//! no finite-difference error enters configured models.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index; `x1` parses to `Coord(0)`.
    Coord(usize),
    Time,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    /// Only produced by differentiation of general powers; the grammar
    /// itself has no logarithm.
    Ln(Box<Expr>),
}

/// Parse failure with the byte offset into the expression string.
#[derive(Debug, Clone)]
pub struct ExprError {
    pub message: String,
    pub offset: usize,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at offset {}", self.message, self.offset)
    }
}

impl std::error::Error for ExprError {}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Open,
    Close,
}

fn lex(src: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = src[i..].chars().next().expect("in range");
        let start = i;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push((Token::Plus, start));
                i += 1;
            }
            '-' | '−' => {
                out.push((Token::Minus, start));
                i += c.len_utf8();
            }
            '*' | '×' => {
                out.push((Token::Star, start));
                i += c.len_utf8();
            }
            '/' => {
                out.push((Token::Slash, start));
                i += 1;
            }
            '^' => {
                out.push((Token::Caret, start));
                i += 1;
            }
            '(' => {
                out.push((Token::Open, start));
                i += 1;
            }
            ')' => {
                out.push((Token::Close, start));
                i += 1;
            }
            'π' => {
                out.push((Token::Ident("pi".into()), start));
                i += c.len_utf8();
            }
            '0'..='9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        j = k;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let text = &src[i..j];
                let value = text.parse::<f64>().map_err(|_| ExprError {
                    message: format!("bad number literal '{text}'"),
                    offset: start,
                })?;
                out.push((Token::Num(value), start));
                i = j;
            }
            'a'..='z' | 'A'..='Z' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Token::Ident(src[i..j].to_string()), start));
                i = j;
            }
            other => {
                return Err(ExprError {
                    message: format!("unexpected character '{other}'"),
                    offset: start,
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(Token, usize)],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |(_, o)| *o)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += t.is_some() as usize;
        t
    }

    fn expect_close(&mut self) -> Result<(), ExprError> {
        match self.bump() {
            Some(Token::Close) => Ok(()),
            _ => Err(ExprError { message: "expected ')'".into(), offset: self.offset() }),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(tok) = self.peek() {
            let op = match tok {
                Token::Plus => Expr::Add as fn(_, _) -> _,
                Token::Minus => Expr::Sub as fn(_, _) -> _,
                _ => break,
            };
            self.bump();
            let rhs = self.product()?;
            lhs = op(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            let op = match tok {
                Token::Star => Expr::Mul as fn(_, _) -> _,
                Token::Slash => Expr::Div as fn(_, _) -> _,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = op(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // The power binds tighter than unary minus, so -x1^2 reads -(x1^2),
    // while exponents themselves may open with a sign: x1^-2.
    fn unary(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::Open) => {
                let inner = self.sum()?;
                self.expect_close()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "t" => Ok(Expr::Time),
                "sin" | "cos" | "exp" => {
                    match self.bump() {
                        Some(Token::Open) => {}
                        _ => {
                            return Err(ExprError {
                                message: format!("{name} needs a parenthesized argument"),
                                offset: self.offset(),
                            })
                        }
                    }
                    let arg = Box::new(self.sum()?);
                    self.expect_close()?;
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(arg),
                        "cos" => Expr::Cos(arg),
                        _ => Expr::Exp(arg),
                    })
                }
                _ => {
                    if let Some(rest) = name.strip_prefix('x') {
                        if let Ok(k) = rest.parse::<usize>() {
                            if (1..=9).contains(&k) {
                                return Ok(Expr::Coord(k - 1));
                            }
                        }
                    }
                    Err(ExprError { message: format!("unknown name '{name}'"), offset })
                }
            },
            _ => Err(ExprError { message: "expected a value".into(), offset }),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens: &tokens, pos: 0, len: src.len() };
        let e = p.sum()?;
        if p.pos != tokens.len() {
            return Err(ExprError { message: "trailing input".into(), offset: p.offset() });
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Coord(i) => x.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Time => t,
            Expr::Neg(a) => -a.eval(x, t),
            Expr::Add(a, b) => a.eval(x, t) + b.eval(x, t),
            Expr::Sub(a, b) => a.eval(x, t) - b.eval(x, t),
            Expr::Mul(a, b) => a.eval(x, t) * b.eval(x, t),
            Expr::Div(a, b) => a.eval(x, t) / b.eval(x, t),
            Expr::Pow(a, b) => a.eval(x, t).powf(b.eval(x, t)),
            Expr::Sin(a) => a.eval(x, t).sin(),
            Expr::Cos(a) => a.eval(x, t).cos(),
            Expr::Exp(a) => a.eval(x, t).exp(),
            Expr::Ln(a) => a.eval(x, t).ln(),
        }
    }

    /// Highest coordinate index referenced, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Num(_) | Expr::Time => None,
            Expr::Coord(i) => Some(*i),
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) | Expr::Ln(a) => {
                a.max_coord()
            }
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => match (a.max_coord(), b.max_coord()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Coord(_) => false,
            Expr::Time => true,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) | Expr::Ln(a) => {
                a.uses_time()
            }
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.uses_time() || b.uses_time(),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `wrt`.
    pub fn derivative(&self, wrt: usize) -> Expr {
        match self {
            Expr::Num(_) | Expr::Time => Expr::Num(0.0),
            Expr::Coord(i) => Expr::Num(if *i == wrt { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(wrt)),
            Expr::Add(a, b) => add(a.derivative(wrt), b.derivative(wrt)),
            Expr::Sub(a, b) => sub(a.derivative(wrt), b.derivative(wrt)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(wrt), (**b).clone()),
                mul((**a).clone(), b.derivative(wrt)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.derivative(wrt), (**b).clone()),
                    mul((**a).clone(), b.derivative(wrt)),
                ),
                mul((**b).clone(), (**b).clone()),
            ),
            Expr::Pow(a, b) => {
                if let Expr::Num(c) = **b {
                    // c·a^(c-1)·a'
                    mul(
                        mul(Expr::Num(c), pow((**a).clone(), Expr::Num(c - 1.0))),
                        a.derivative(wrt),
                    )
                } else {
                    // a^b · (b'·ln a + b·a'/a)
                    mul(
                        pow((**a).clone(), (**b).clone()),
                        add(
                            mul(b.derivative(wrt), Expr::Ln(Box::new((**a).clone()))),
                            div(mul((**b).clone(), a.derivative(wrt)), (**a).clone()),
                        ),
                    )
                }
            }
            Expr::Sin(a) => mul(Expr::Cos(a.clone()), a.derivative(wrt)),
            Expr::Cos(a) => neg(mul(Expr::Sin(a.clone()), a.derivative(wrt))),
            Expr::Exp(a) => mul(Expr::Exp(a.clone()), a.derivative(wrt)),
            Expr::Ln(a) => div(a.derivative(wrt), (**a).clone()),
        }
    }
}

// Constructors that fold the constants differentiation produces in bulk,
// keeping derivative trees from exploding.

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 1.0)
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    Expr::Add(Box::new(a), Box::new(b))
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return neg(b);
    }
    Expr::Sub(Box::new(a), Box::new(b))
}

fn neg(a: Expr) -> Expr {
    if is_zero(&a) {
        return a;
    }
    Expr::Neg(Box::new(a))
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_one(&b) {
        return a;
    }
    if is_zero(&b) || is_one(&a) {
        return b;
    }
    Expr::Mul(Box::new(a), Box::new(b))
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_one(&b) {
        return a;
    }
    Expr::Div(Box::new(a), Box::new(b))
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        return a;
    }
    if is_zero(&b) {
        return Expr::Num(1.0);
    }
    Expr::Pow(Box::new(a), Box::new(b))
}
