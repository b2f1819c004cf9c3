//! Restricted infix syntax for polynomials, e.g. `"x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1"`.
//!
//! Grammar: sums and differences of products of numbers, variables, and parenthesized
//! sub-expressions, each optionally raised to a non-negative integer power.

use crate::error::{Error, Result};
use crate::poly::Polynomial;

/// Parses `text` as a polynomial in the named variables.
pub fn parse_polynomial(text: &str, variables: &[String]) -> Result<Polynomial> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        vars: variables,
    };
    let poly = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(poly)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at column {}", self.pos + 1))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let d = self.vars.len();
        let mut acc = Polynomial::zero(d);
        let mut sign = 1.0;
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                sign = -1.0;
            }
            Some(b'+') => self.pos += 1,
            _ => {}
        }
        loop {
            let t = self.term()?;
            acc = acc.add(&t.scale(sign));
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    sign = 1.0;
                }
                Some(b'-') => {
                    self.pos += 1;
                    sign = -1.0;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.power()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            acc = acc.mul(&self.power()?);
        }
        Ok(acc)
    }

    fn power(&mut self) -> Result<Polynomial> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected a non-negative integer exponent"));
            }
            let k: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial> {
        let d = self.vars.len();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() {
                    let c = self.src[self.pos];
                    let exp_sign = (c == b'-' || c == b'+')
                        && self.pos > start
                        && matches!(self.src[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = s.parse().map_err(|_| self.err("malformed number"))?;
                Ok(Polynomial::constant(d, v))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match self.vars.iter().position(|v| v == name) {
                    Some(i) => Ok(Polynomial::var(d, i)),
                    None => {
                        self.pos = start;
                        Err(self.err(&format!("unknown variable '{name}'")))
                    }
                }
            }
            _ => Err(self.err("expected a number, variable or '('")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn motzkin() {
        let f = parse_polynomial("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", &vars(2)).unwrap();
        assert_eq!(f.num_terms(), 4);
        assert_eq!(f.eval(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(f.eval(&[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn parentheses_and_unary_minus() {
        let f = parse_polynomial("-(x1 - 1)^2 + 2.5e-1", &vars(1)).unwrap();
        assert_eq!(f.eval(&[3.0]).unwrap(), -4.0 + 0.25);
    }

    #[test]
    fn errors_carry_a_column() {
        let e = parse_polynomial("x1 + y", &vars(1)).unwrap_err().to_string();
        assert!(e.contains("unknown variable 'y'") && e.contains("column 6"), "{e}");
        assert!(parse_polynomial("x1^", &vars(1)).is_err());
        assert!(parse_polynomial("(x1", &vars(1)).is_err());
        assert!(parse_polynomial("x1 x1", &vars(1)).is_err());
    }
}
