//! Coefficient expressions evaluated per grid node.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary | implicit-factor)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | x | y | pi | π | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! A number directly followed by an identifier or a parenthesis multiplies
//! it, so `9x sin(5pi x)` reads as `9·x·sin(5·π·x)`.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("cannot parse expression at offset {offset}: {message}")]
pub struct ExprError {
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Max,
    Min,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "abs" => Self::Abs,
            "sqrt" => Self::Sqrt,
            "max" => Self::Max,
            "min" => Self::Min,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Self::Max | Self::Min => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            tokens: tokenize(src)?,
            pos: 0,
        };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some((off, t)) => Err(ExprError {
                offset: off,
                message: format!("unexpected {t}"),
            }),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Num(v) => *v,
            Self::X => x,
            Self::Y => y,
            Self::Neg(a) => -a.eval(x, y),
            Self::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Self::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Self::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Self::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Self::Pow(a, b) => a.eval(x, y).powf(b.eval(x, y)),
            Self::Call(f, args) => {
                let a = args[0].eval(x, y);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => a.sqrt(),
                    Func::Max => a.max(args[1].eval(x, y)),
                    Func::Min => a.min(args[1].eval(x, y)),
                }
            }
        }
    }

    /// Whether the expression reads `y`.
    pub fn uses_y(&self) -> bool {
        match self {
            Self::Y => true,
            Self::Num(_) | Self::X => false,
            Self::Neg(a) => a.uses_y(),
            Self::Add(a, b)
            | Self::Sub(a, b)
            | Self::Mul(a, b)
            | Self::Div(a, b)
            | Self::Pow(a, b) => a.uses_y() || b.uses_y(),
            Self::Call(_, args) => args.iter().any(Expr::uses_y),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Num(v) => write!(f, "number {v}"),
            Self::Ident(s) => write!(f, "identifier '{s}'"),
            Self::Op(c) => write!(f, "'{c}'"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(off, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_digit() || c == '.' {
            let mut end = off;
            let mut prev = c;
            while let Some(&(i, d)) = chars.peek() {
                let exponent_sign = (d == '-' || d == '+') && (prev == 'e' || prev == 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exponent_sign {
                    // An `e` not followed by a digit or sign starts `exp`.
                    if d == 'e' || d == 'E' {
                        let rest = &src[i + 1..];
                        if !rest.starts_with(|r: char| r.is_ascii_digit() || r == '-' || r == '+') {
                            break;
                        }
                    }
                    end = i + d.len_utf8();
                    prev = d;
                    chars.next();
                } else {
                    break;
                }
            }
            let text = &src[off..end];
            let v = text.parse::<f64>().map_err(|_| ExprError {
                offset: off,
                message: format!("bad number '{text}'"),
            })?;
            out.push((off, Token::Num(v)));
        } else if c.is_alphabetic() || c == '_' {
            let mut end = off;
            while let Some(&(i, d)) = chars.peek() {
                if d.is_alphanumeric() || d == '_' {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((off, Token::Ident(src[off..end].to_string())));
        } else if "+-*/^(),".contains(c) {
            out.push((off, Token::Op(c)));
            chars.next();
        } else {
            return Err(ExprError {
                offset: off,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<(usize, &Token)> {
        self.tokens.get(self.pos).map(|(o, t)| (*o, t))
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(o, _)| *o)
            .or_else(|| self.tokens.last().map(|(o, _)| o + 1))
            .unwrap_or(0)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn eat(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some((_, Token::Op(c))) if *c == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        if self.eat(op) {
            Ok(())
        } else {
            self.fail(format!("expected '{op}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else if matches!(self.peek(), Some((_, Token::Ident(_) | Token::Num(_))))
                || matches!(self.peek(), Some((_, Token::Op('('))))
            {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.power()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some((_, tok)) = self.peek() else {
            return self.fail("unexpected end of expression");
        };
        match tok.clone() {
            Token::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Token::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => Ok(Expr::X),
                    "y" => Ok(Expr::Y),
                    "pi" | "π" => Ok(Expr::Num(PI)),
                    _ => {
                        let Some(func) = Func::lookup(&name) else {
                            self.pos -= 1;
                            return self.fail(format!("unknown identifier '{name}'"));
                        };
                        self.expect('(')?;
                        let mut args = vec![self.expr()?];
                        while self.eat(',') {
                            args.push(self.expr()?);
                        }
                        self.expect(')')?;
                        if args.len() != func.arity() {
                            return self.fail(format!(
                                "'{name}' takes {} argument(s), got {}",
                                func.arity(),
                                args.len()
                            ));
                        }
                        Ok(Expr::Call(func, args))
                    }
                }
            }
            other => self.fail(format!("unexpected {other}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(src: &str, x: f64, y: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x, y)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(at("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(at("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(at("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(at("10 - 4 - 3", 0.0, 0.0), 3.0);
        assert_eq!(at("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(at("2^-1", 0.0, 0.0), 0.5);
    }

    #[test]
    fn implicit_products_and_constants() {
        assert_eq!(at("4x", 0.25, 0.0), 1.0);
        assert!((at("2pi", 0.0, 0.0) - 2.0 * PI).abs() < 1e-15);
        assert!((at("9x sin(5π x)", 0.1, 0.0) - 0.9 * (0.5 * PI).sin()).abs() < 1e-15);
        assert_eq!(at("3(x + 1)", 1.0, 0.0), 6.0);
    }

    #[test]
    fn presets_match_closed_forms() {
        for &x in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            let sin = (9.0 * x * (5.0 * PI * x).sin()).max(0.0);
            assert!((at("max(0, 9*x*sin(5*pi*x))", x, 0.0) - sin).abs() < 1e-14);
            let cos = 15.0 * ((2.0 * PI * x).cos() + 1.0);
            assert!((at("15*(cos(2*pi*x) + 1)", x, 0.0) - cos).abs() < 1e-13);
        }
        let g = at("5*exp(-((x-1)^2 + (y-1)^2)/0.5)", 0.5, 0.25);
        assert!((g - 5.0 * (-(0.25 + 0.5625) / 0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn scientific_numbers_and_exp() {
        assert_eq!(at("1e-3", 0.0, 0.0), 1e-3);
        assert_eq!(at("2.5E2", 0.0, 0.0), 250.0);
        assert_eq!(at("exp(0)", 0.0, 0.0), 1.0);
        assert_eq!(at("2exp(0)", 0.0, 0.0), 2.0);
    }

    #[test]
    fn two_argument_functions() {
        assert_eq!(at("max(x, y)", 0.2, 0.7), 0.7);
        assert_eq!(at("min(x, y)", 0.2, 0.7), 0.2);
        assert!((at("abs(x - y)", 0.2, 0.7) - 0.5).abs() < 1e-15);
        assert_eq!(at("sqrt(16)", 0.0, 0.0), 4.0);
    }

    #[test]
    fn tracks_y_usage() {
        assert!(!Expr::parse("4x").unwrap().uses_y());
        assert!(Expr::parse("cos(pi y) + x").unwrap().uses_y());
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "",
            "1 +",
            "(x",
            "foo(x)",
            "max(1)",
            "sin(1, 2)",
            "x $ 2",
            "z",
            "1.2.3",
        ] {
            assert!(Expr::parse(bad).is_err(), "{bad:?} should fail");
        }
        let err = Expr::parse("x + q").unwrap_err();
        assert_eq!(err.offset, 4);
    }
}
