//! Recursive-descent parser for
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := base ('^' uint)?
//! base   := rational | ident | '(' expr ')'
//! rational := int ('/' uint)?
//! ```
//!
//! An `int` in base position may carry a leading `-`. Implicit multiplication
//! is rejected.

use num_bigint::BigInt;
use num_traits::Zero;

use super::{PolyExpr, Rational};
use crate::error::{Error, Result};

pub fn parse_poly(src: &str, vars: &[impl AsRef<str>]) -> Result<PolyExpr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        vars: vars.iter().map(|v| v.as_ref().to_string()).collect(),
    };
    let out = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error(&["'+'", "'-'", "'*'", "'^'", "end of input"]));
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: Vec<String>,
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

    fn error(&self, expected: &[&str]) -> Error {
        Error::Syntax {
            position: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn nvars(&self) -> usize {
        self.vars.len()
    }

    fn expr(&mut self) -> Result<PolyExpr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = acc.add(&t)?;
                }
                Some(b'-') => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = acc.sub(&t)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<PolyExpr> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let f = self.factor()?;
            acc = acc.mul(&f)?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<PolyExpr> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let digits = self.digits();
            if digits.is_empty() {
                return Err(self.error(&["unsigned integer exponent"]));
            }
            let k: u32 = digits
                .parse()
                .map_err(|_| self.error(&["exponent below 2^32"]))?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn digits(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn base(&mut self) -> Result<PolyExpr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error(&["')'"]));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'-' => self.rational(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(PolyExpr::var(self.nvars(), i)),
                    None => Err(Error::UnknownVariable(name)),
                }
            }
            _ => Err(self.error(&["number", "identifier", "'('"])),
        }
    }

    fn rational(&mut self) -> Result<PolyExpr> {
        let negative = if self.src[self.pos] == b'-' {
            self.pos += 1;
            true
        } else {
            false
        };
        // the sign must be glued to the digits
        let num = self.digits();
        if num.is_empty() {
            return Err(self.error(&["digit"]));
        }
        let mut value = Rational::from_integer(num.parse::<BigInt>().expect("digits"));
        if self.peek() == Some(b'/') {
            self.pos += 1;
            self.skip_ws();
            let den = self.digits();
            if den.is_empty() {
                return Err(self.error(&["unsigned integer denominator"]));
            }
            let den: BigInt = den.parse().expect("digits");
            if den.is_zero() {
                return Err(self.error(&["nonzero denominator"]));
            }
            value /= Rational::from_integer(den);
        }
        if negative {
            value = -value;
        }
        Ok(PolyExpr::constant(self.nvars(), value))
    }
}
