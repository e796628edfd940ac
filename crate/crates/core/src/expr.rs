//! Scalar expression mini-language.
//!
//! Vector-field components, Lyapunov functions and rate functions are all
//! entered as text over the variables `t` and `x1`..`xn`. The grammar is
//! closed:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 't' | 'x'K | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | ln | abs | sqrt
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so
//! `-x1^2` is `-(x1^2)` and `2^3^2` is `2^(3^2)`.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use thiserror::Error;

/// A variable reference: time or a 0-based state component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Time,
    State(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Time => f.write_str("t"),
            Var::State(k) => write!(f, "x{}", k + 1),
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

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Abs,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Exp, Func::Ln, Func::Abs, Func::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Abstract syntax tree of a scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken { found: String, expected: &'static str },
    UnexpectedEnd { expected: &'static str },
    UnknownIdentifier(String),
    VariableOutOfRange { index: usize, dim: usize },
    InvalidNumber(String),
    EmptyInput,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "expected {expected}, found {found:?}")
            }
            ParseErrorKind::UnexpectedEnd { expected } => {
                write!(f, "expected {expected}, found end of input")
            }
            ParseErrorKind::UnknownIdentifier(id) => write!(f, "unknown identifier {id:?}"),
            ParseErrorKind::VariableOutOfRange { index, dim } => {
                write!(f, "variable x{index} exceeds dimension {dim}")
            }
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number literal {s:?}"),
            ParseErrorKind::EmptyInput => f.write_str("empty expression"),
        }
    }
}

/// Syntax or name-resolution failure, with the byte offset into the source.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at offset {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogOfNonPositive,
    ZeroToNegativePower,
    SqrtOfNegative,
    MissingVariable(usize),
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalErrorKind::DivisionByZero => f.write_str("division by zero"),
            EvalErrorKind::LogOfNonPositive => f.write_str("ln of non-positive value"),
            EvalErrorKind::ZeroToNegativePower => f.write_str("zero raised to a negative power"),
            EvalErrorKind::SqrtOfNegative => f.write_str("sqrt of negative value"),
            EvalErrorKind::MissingVariable(k) => {
                write!(f, "state vector has no component x{}", k + 1)
            }
        }
    }
}

/// Domain error during evaluation; `subexpr` is the offending node.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} in `{subexpr}`")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub subexpr: String,
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

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => format!("{v}"),
            Token::Ident(s) => s.clone(),
            Token::Plus => "+".into(),
            Token::Minus => "-".into(),
            Token::Star => "*".into(),
            Token::Slash => "/".into(),
            Token::Caret => "^".into(),
            Token::LParen => "(".into(),
            Token::RParen => ")".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<alloc::vec::Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = alloc::vec::Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // optional exponent: e, E followed by optional sign and digits
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::InvalidNumber(text.to_string()),
                })?;
                out.push((start, Token::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Token::Ident(src[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('\u{fffd}');
                return Err(ParseError { offset: start, kind: ParseErrorKind::UnexpectedChar(ch) });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: alloc::vec::Vec<(usize, Token)>,
    pos: usize,
    end: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        let kind = match self.peek() {
            Some(t) => ParseErrorKind::UnexpectedToken { found: t.describe(), expected },
            None => ParseErrorKind::UnexpectedEnd { expected },
        };
        ParseError { offset: self.offset(), kind }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Token::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return Err(self.unexpected("operand"));
        };
        match tok {
            Token::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Token::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    if self.peek() != Some(&Token::LParen) {
                        return Err(self.unexpected("'(' after function name"));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                self.variable(&name, offset).map(Expr::Var)
            }
            _ => Err(self.unexpected("operand")),
        }
    }

    fn variable(&self, name: &str, offset: usize) -> Result<Var, ParseError> {
        if name == "t" {
            return Ok(Var::Time);
        }
        let unknown = || ParseError {
            offset,
            kind: ParseErrorKind::UnknownIdentifier(name.to_string()),
        };
        let digits = name.strip_prefix('x').ok_or_else(unknown)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let index: usize = digits.parse().map_err(|_| unknown())?;
        if index == 0 || index > self.dim {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::VariableOutOfRange { index, dim: self.dim },
            });
        }
        Ok(Var::State(index - 1))
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.peek() == Some(&Token::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected("')'"))
        }
    }
}

/// Parses `source` against a state dimension `dim`.
pub fn parse_expr(source: &str, dim: usize) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    if tokens.is_empty() {
        return Err(ParseError { offset: 0, kind: ParseErrorKind::EmptyInput });
    }
    let mut parser = Parser { tokens, pos: 0, end: source.len(), dim };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.unexpected("operator or end of input"));
    }
    Ok(expr)
}

impl Expr {
    /// Evaluates the tree at time `t` and state `x`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        let fail = |kind| Err(EvalError { kind, subexpr: self.to_string() });
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(Var::Time) => Ok(t),
            Expr::Var(Var::State(k)) => match x.get(*k) {
                Some(v) => Ok(*v),
                None => fail(EvalErrorKind::MissingVariable(*k)),
            },
            Expr::Neg(a) => Ok(-a.eval(t, x)?),
            Expr::Bin(op, a, b) => {
                let a = a.eval(t, x)?;
                let b = b.eval(t, x)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div if b == 0.0 => fail(EvalErrorKind::DivisionByZero),
                    BinOp::Div => Ok(a / b),
                    BinOp::Pow if a == 0.0 && b < 0.0 => fail(EvalErrorKind::ZeroToNegativePower),
                    BinOp::Pow => Ok(pow(a, b)),
                }
            }
            Expr::Call(func, a) => {
                let a = a.eval(t, x)?;
                match func {
                    Func::Sin => Ok(libm::sin(a)),
                    Func::Cos => Ok(libm::cos(a)),
                    Func::Exp => Ok(libm::exp(a)),
                    Func::Ln if a <= 0.0 => fail(EvalErrorKind::LogOfNonPositive),
                    Func::Ln => Ok(libm::log(a)),
                    Func::Abs => Ok(libm::fabs(a)),
                    Func::Sqrt if a < 0.0 => fail(EvalErrorKind::SqrtOfNegative),
                    Func::Sqrt => Ok(libm::sqrt(a)),
                }
            }
        }
    }

    /// Evaluates an expression that may only depend on `t`.
    pub fn eval_t(&self, t: f64) -> Result<f64, EvalError> {
        self.eval(t, &[])
    }

    /// Exact set of variables appearing in the tree.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// True if the expression references any state component.
    pub fn depends_on_state(&self) -> bool {
        self.free_vars().iter().any(|v| matches!(v, Var::State(_)))
    }
}

/// Free-variable set of `e`, as a function to mirror [`parse_expr`].
pub fn free_vars(e: &Expr) -> BTreeSet<Var> {
    e.free_vars()
}

// Integer exponents go through repeated multiplication so that `x1^2`
// is exactly `x1*x1`.
fn pow(base: f64, exponent: f64) -> f64 {
    if exponent == libm::trunc(exponent) && libm::fabs(exponent) <= 16.0 {
        let n = exponent as i32;
        let mut acc = 1.0;
        for _ in 0..n.unsigned_abs() {
            acc *= base;
        }
        if n < 0 {
            1.0 / acc
        } else {
            acc
        }
    } else {
        libm::pow(base, exponent)
    }
}

/// Fully parenthesised rendering; reparses to a structurally identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn eval(src: &str, t: f64, x: &[f64]) -> f64 {
        parse_expr(src, x.len().max(1)).unwrap().eval(t, x).unwrap()
    }

    #[test]
    fn trivial_values() {
        assert_eq!(eval("cos(t)", 0.0, &[]), 1.0);
        assert_eq!(eval("-3*t^2 + cos(t)", 0.0, &[]), 1.0);
        assert_eq!(eval("0.5*(x1^2+x2^2)", 0.0, &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn hand_evaluation_at_pi() {
        let v = eval("t*(cos(t)-0.5)", core::f64::consts::PI, &[]);
        let expected = -3.0 * core::f64::consts::PI / 2.0;
        assert!((v - expected).abs() < 1e-12, "{v}");
        assert!((v + 4.712389).abs() < 1e-6);
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        let err = parse_expr("(x1", 1).unwrap_err();
        assert_eq!(err.offset, 3);
        assert!(matches!(err.kind, ParseErrorKind::UnexpectedEnd { .. }));
    }

    #[test]
    fn name_resolution_errors() {
        let err = parse_expr("x3 + 1", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::VariableOutOfRange { index: 3, dim: 2 });
        let err = parse_expr("2 * y", 2).unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("y".into()));
        assert!(parse_expr("x0", 2).is_err());
        assert!(parse_expr("sin t", 1).is_err());
        assert!(parse_expr("1 2", 1).is_err());
        assert!(parse_expr("  ", 1).is_err());
        assert!(parse_expr("1 # 2", 1).is_err());
    }

    #[test]
    fn domain_errors_name_subexpression() {
        let e = parse_expr("x1/ x2", 2).unwrap();
        let err = e.eval(0.0, &[1.0, 0.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
        assert_eq!(err.subexpr, "(x1 / x2)");

        let err = parse_expr("1 + ln(x1)", 1).unwrap().eval(0.0, &[0.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::LogOfNonPositive);
        assert_eq!(err.subexpr, "ln(x1)");

        let err = parse_expr("x1^(0-2)", 1).unwrap().eval(0.0, &[0.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::ZeroToNegativePower);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("2+3*4", 0.0, &[]), 14.0);
        assert_eq!(eval("-2^2", 0.0, &[]), -4.0);
        assert_eq!(eval("2^3^2", 0.0, &[]), 512.0);
        assert_eq!(eval("2^-1", 0.0, &[]), 0.5);
        assert_eq!(eval("8/4/2", 0.0, &[]), 1.0);
        assert_eq!(eval("8-4-2", 0.0, &[]), 2.0);
        assert_eq!(eval("1.5e-1*10", 0.0, &[]), 1.5);
    }

    #[test]
    fn free_variable_sets() {
        assert!(parse_expr("-2", 1).unwrap().free_vars().is_empty());
        let vars: vec::Vec<_> = parse_expr("-3*t^2+cos(t)", 1).unwrap().free_vars().into_iter().collect();
        assert_eq!(vars, vec![Var::Time]);
        let vars: vec::Vec<_> = parse_expr("x1-2*x2", 2).unwrap().free_vars().into_iter().collect();
        assert_eq!(vars, vec![Var::State(0), Var::State(1)]);
    }
}
