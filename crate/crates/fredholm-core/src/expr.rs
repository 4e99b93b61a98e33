//! A small arithmetic grammar for user-supplied kernels and right-hand sides.
//!
//! Supported syntax: `+ - * / ^`, `exp(..)`, `abs(..)`, numeric literals,
//! the variables `s` and `t`, parentheses, and unary minus. `^` is
//! right-associative and binds tighter than unary minus on its left operand,
//! so `-s^2` parses as `-(s^2)`. This is deliberately tiny: kernels that need
//! more than products of exponentials and rational factors should be supplied
//! programmatically.

use crate::error::{FredholmError, Result};

/// Parsed expression tree over the variables `s` and `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    S,
    T,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Abs(Box<Expr>),
}

impl Expr {
    /// Parses `src`, consuming the whole string.
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some(tok) => Err(FredholmError::Expr(format!(
                "unexpected trailing token {tok:?} in '{src}'"
            ))),
        }
    }

    /// Evaluates at the point `(s, t)`. Expressions of one variable simply
    /// ignore the other argument.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::S => s,
            Expr::T => t,
            Expr::Neg(a) => -a.eval(s, t),
            Expr::Add(a, b) => a.eval(s, t) + b.eval(s, t),
            Expr::Sub(a, b) => a.eval(s, t) - b.eval(s, t),
            Expr::Mul(a, b) => a.eval(s, t) * b.eval(s, t),
            Expr::Div(a, b) => a.eval(s, t) / b.eval(s, t),
            Expr::Pow(a, b) => a.eval(s, t).powf(b.eval(s, t)),
            Expr::Exp(a) => a.eval(s, t).exp(),
            Expr::Abs(a) => a.eval(s, t).abs(),
        }
    }

    /// True if the expression mentions the variable `t` anywhere. Right-hand
    /// sides are functions of `s` alone, and this is how that gets checked.
    pub fn uses_t(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::S => false,
            Expr::T => true,
            Expr::Neg(a) | Expr::Exp(a) | Expr::Abs(a) => a.uses_t(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.uses_t() || b.uses_t(),
        }
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

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
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
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Exponent part, accepting a sign directly after e/E.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| FredholmError::Expr(format!("bad numeric literal '{text}'")))?;
                out.push(Token::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push(Token::Ident(src[start..i].to_string()));
            }
            other => {
                return Err(FredholmError::Expr(format!(
                    "unexpected character '{other}' at byte {i}"
                )))
            }
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

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.bump() {
            Some(ref t) if *t == want => Ok(()),
            other => Err(FredholmError::Expr(format!(
                "expected {want:?}, found {other:?}"
            ))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if let Some(Token::Caret) = self.peek() {
            self.bump();
            // Right-associative; the exponent may itself carry a unary minus.
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "s" => Ok(Expr::S),
                "t" => Ok(Expr::T),
                "exp" | "abs" => {
                    self.expect(Token::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Token::RParen)?;
                    Ok(match name.as_str() {
                        "exp" => Expr::Exp(Box::new(arg)),
                        _ => Expr::Abs(Box::new(arg)),
                    })
                }
                other => Err(FredholmError::Expr(format!(
                    "unknown identifier '{other}' (expected s, t, exp, abs)"
                ))),
            },
            other => Err(FredholmError::Expr(format!(
                "expected a value, found {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, s: f64, t: f64) -> f64 {
        Expr::parse(src).unwrap().eval(s, t)
    }

    #[test]
    fn literals_and_variables() {
        assert_eq!(eval("3.5", 0.0, 0.0), 3.5);
        assert_eq!(eval("s", 2.0, 5.0), 2.0);
        assert_eq!(eval("t", 2.0, 5.0), 5.0);
        assert_eq!(eval("1e-3", 0.0, 0.0), 1e-3);
        assert_eq!(eval("2.5E+2", 0.0, 0.0), 250.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(eval("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(eval("2 ^ 3 ^ 2", 0.0, 0.0), 512.0); // right-assoc
        assert_eq!(eval("8 / 4 / 2", 0.0, 0.0), 1.0); // left-assoc
        assert_eq!(eval("-s^2", 3.0, 0.0), -9.0);
        assert_eq!(eval("2^-1", 0.0, 0.0), 0.5);
    }

    #[test]
    fn functions() {
        assert!((eval("exp(1)", 0.0, 0.0) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(eval("abs(-3)", 0.0, 0.0), 3.0);
        let v = eval("exp(-(s-t)^2)", 1.0, 2.0);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_kernel_expression() {
        let e = Expr::parse("exp(-s^2 - t^2)").unwrap();
        assert!((e.eval(1.0, 1.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert!(e.uses_t());
        assert!(!Expr::parse("exp(-s^2)").unwrap().uses_t());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("s +").is_err());
        assert!(Expr::parse("foo(s)").is_err());
        assert!(Expr::parse("1..2").is_err());
        assert!(Expr::parse("s t").is_err());
        assert!(Expr::parse("(s").is_err());
        assert!(Expr::parse("s @ t").is_err());
    }
}
