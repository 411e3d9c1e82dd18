//! Text syntax for polynomials and polynomial vector fields.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' integer)?
//! atom   := integer | variable | '(' expr ')'
//! field  := '[' expr (',' expr)* ']'
//! ```
//!
//! Variables are `x1..xd` or `y1..yd` unless a custom name list is given.
//! Division is only allowed by nonzero constants, so `3/2*x1` and `x1/2`
//! both parse. The printer emits terms in descending graded-lex order and
//! its output parses back to the same polynomial.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::field::PolyVectorField;
use crate::poly::Polynomial;
use crate::Rational;

/// How variable names map to indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarNames {
    /// `x1..xd` and `y1..yd` are both accepted; printing uses the prefix.
    Indexed { dim: usize, prefix: char },
    Custom(Vec<String>),
}

impl VarNames {
    pub fn x(dim: usize) -> Self {
        VarNames::Indexed { dim, prefix: 'x' }
    }

    pub fn y(dim: usize) -> Self {
        VarNames::Indexed { dim, prefix: 'y' }
    }

    pub fn dim(&self) -> usize {
        match self {
            VarNames::Indexed { dim, .. } => *dim,
            VarNames::Custom(names) => names.len(),
        }
    }

    fn resolve(&self, name: &str) -> Option<usize> {
        match self {
            VarNames::Indexed { dim, .. } => {
                let rest = name.strip_prefix('x').or_else(|| name.strip_prefix('y'))?;
                if rest.starts_with('0') {
                    return None;
                }
                let i: usize = rest.parse().ok()?;
                (1..=*dim).contains(&i).then(|| i - 1)
            }
            VarNames::Custom(names) => names.iter().position(|n| n == name),
        }
    }

    fn name(&self, index: usize) -> String {
        match self {
            VarNames::Indexed { prefix, .. } => format!("{prefix}{}", index + 1),
            VarNames::Custom(names) => names[index].clone(),
        }
    }
}

pub fn parse_polynomial(src: &str, dim: usize) -> Result<Polynomial> {
    parse_polynomial_with(src, &VarNames::x(dim))
}

pub fn parse_polynomial_with(src: &str, names: &VarNames) -> Result<Polynomial> {
    let mut p = Parser::new(src, names);
    let out = p.expr()?;
    p.skip_ws();
    if let Some(c) = p.peek() {
        return Err(p.error(format!("unexpected '{c}'")));
    }
    Ok(out)
}

/// Parses `[p1, ..., pd]`; the component count must equal the dimension.
pub fn parse_field(src: &str, dim: usize) -> Result<PolyVectorField> {
    parse_field_with(src, &VarNames::x(dim))
}

pub fn parse_field_with(src: &str, names: &VarNames) -> Result<PolyVectorField> {
    let components = parse_list_with(src, names)?;
    let dim = names.dim();
    if components.len() != dim {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected {dim} components, found {}", components.len()),
        });
    }
    PolyVectorField::new(components)
}

/// Parses a bracketed, comma-separated list of polynomials.
pub fn parse_list_with(src: &str, names: &VarNames) -> Result<Vec<Polynomial>> {
    let mut p = Parser::new(src, names);
    p.skip_ws();
    p.expect('[')?;
    let mut out = Vec::new();
    loop {
        out.push(p.expr()?);
        p.skip_ws();
        match p.peek() {
            Some(',') => {
                p.bump();
            }
            Some(']') => {
                p.bump();
                break;
            }
            Some(c) => return Err(p.error(format!("expected ',' or ']', found '{c}'"))),
            None => return Err(p.error("unterminated list".into())),
        }
    }
    p.skip_ws();
    if let Some(c) = p.peek() {
        return Err(p.error(format!("unexpected '{c}' after list")));
    }
    Ok(out)
}

/// Parses a rational literal such as `3`, `-1/2` or `0`.
pub fn parse_rational(src: &str) -> Result<Rational> {
    let p = parse_polynomial_with(src, &VarNames::Custom(Vec::new()))?;
    p.as_constant().ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "expected a rational constant".into(),
    })
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    names: &'a VarNames,
}

impl<'a> Parser<'a> {
    fn new(src: &str, names: &'a VarNames) -> Self {
        Parser {
            chars: src.chars().collect(),
            pos: 0,
            names,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) {
        self.pos += 1;
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn location(&self, pos: usize) -> (usize, usize) {
        let mut line = 1;
        let mut col = 1;
        for &c in &self.chars[..pos.min(self.chars.len())] {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    }

    fn error(&self, message: String) -> Error {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, pos: usize, message: String) -> Error {
        let (line, column) = self.location(pos);
        Error::Parse {
            line,
            column,
            message,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(x) if x == c => {
                self.bump();
                Ok(())
            }
            Some(x) => Err(self.error(format!("expected '{c}', found '{x}'"))),
            None => Err(self.error(format!("expected '{c}', found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.bump();
                    acc = &acc + &self.term()?;
                }
                Some('-') => {
                    self.bump();
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') => {
                    self.bump();
                    acc = &acc * &self.unary()?;
                }
                Some('/') => {
                    self.bump();
                    self.skip_ws();
                    let at = self.pos;
                    let rhs = self.unary()?;
                    acc = acc
                        .div_constant(&rhs)
                        .map_err(|_| self.error_at(at, "division by a non-constant or zero expression".into()))?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Polynomial> {
        self.skip_ws();
        if self.peek() == Some('-') {
            self.bump();
            return Ok(-self.unary()?);
        }
        if self.peek() == Some('+') {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Polynomial> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some('^') {
            self.bump();
            self.skip_ws();
            let at = self.pos;
            let digits = self.digits();
            if digits.is_empty() {
                return Err(self.error_at(at, "expected a non-negative integer exponent".into()));
            }
            let e: u32 = digits
                .parse()
                .map_err(|_| self.error_at(at, "exponent too large".into()))?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn digits(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn atom(&mut self) -> Result<Polynomial> {
        self.skip_ws();
        let dim = self.names.dim();
        let start = self.pos;
        match self.peek() {
            Some('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => {
                let digits = self.digits();
                let n: BigInt = digits
                    .parse()
                    .map_err(|_| self.error_at(start, "bad integer literal".into()))?;
                Ok(Polynomial::constant(dim, Rational::from_integer(n)))
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                match self.names.resolve(&name) {
                    Some(i) => Ok(Polynomial::var(dim, i)),
                    None => Err(self.error_at(start, format!("unknown variable '{name}'"))),
                }
            }
            Some(c) => Err(self.error(format!("unexpected '{c}'"))),
            None => Err(self.error("unexpected end of input".into())),
        }
    }
}

/// Display adapter printing a polynomial with the given variable names.
pub struct PolyDisplay<'a> {
    poly: &'a Polynomial,
    names: &'a VarNames,
}

impl Polynomial {
    pub fn display_with<'a>(&'a self, names: &'a VarNames) -> PolyDisplay<'a> {
        PolyDisplay { poly: self, names }
    }

    pub fn to_string_with(&self, names: &VarNames) -> String {
        self.display_with(names).to_string()
    }
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.poly.terms().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            match (i, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            let mut factors: Vec<String> = Vec::new();
            for (j, &e) in m.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(self.names.name(j)),
                    _ => factors.push(format!("{}^{e}", self.names.name(j))),
                }
            }
            if factors.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                f.write_str(&factors.join("*"))?;
            } else {
                write!(f, "{abs}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = VarNames::x(self.dim());
        fmt::Display::fmt(&self.display_with(&names), f)
    }
}

/// Formats a list of polynomials as `[p1, p2, ...]`.
pub fn format_list(polys: &[Polynomial], names: &VarNames) -> String {
    let parts: Vec<String> = polys.iter().map(|p| p.to_string_with(names)).collect();
    format!("[{}]", parts.join(", "))
}

/// Formats a rational exactly (`3`, `-1/2`).
pub fn format_rational(c: &Rational) -> String {
    if c.is_zero() {
        "0".into()
    } else {
        c.to_string()
    }
}
