//! Poly-string printing and parsing, plus the JSON form of `RingElt`.
//!
//! Variables print as `t`, `x` (or `x1`, `x2`, ..), `e` (or `e1`, ..).
//! The parser also accepts `q` as shorthand for `1 + t`.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{is_negative, Exps, Rat, RingElt};
use crate::error::{Error, Result};

fn var_names(nx: usize, ne: usize) -> Vec<String> {
    let mut v = vec!["t".to_string()];
    if nx == 1 {
        v.push("x".into());
    } else {
        v.extend((1..=nx).map(|i| format!("x{i}")));
    }
    if ne == 1 {
        v.push("e".into());
    } else {
        v.extend((1..=ne).map(|i| format!("e{i}")));
    }
    v
}

impl fmt::Display for RingElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let names = var_names(self.nx(), self.ne());
        for (idx, (m, c)) in self.terms().enumerate() {
            let neg = is_negative(c);
            let a = c.abs();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            let mut factors = Vec::new();
            for (v, &k) in m.iter().enumerate() {
                match k {
                    0 => {}
                    1 => factors.push(names[v].clone()),
                    _ => factors.push(format!("{}^{}", names[v], k)),
                }
            }
            if factors.is_empty() {
                write!(f, "{a}")?;
            } else if a.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{}*{}", a, factors.join("*"))?;
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    nx: usize,
    ne: usize,
    trunc: u32,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn number(&mut self) -> Result<BigInt> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a number"));
        }
        let txt = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        txt.parse().map_err(|_| self.err("bad number"))
    }

    fn small(&mut self) -> Result<u32> {
        let n = self.number()?;
        u32::try_from(n).map_err(|_| self.err("exponent too large"))
    }

    fn expr(&mut self) -> Result<RingElt> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<RingElt> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = &acc * &self.unary()?;
                }
                Some(b'/') => {
                    self.pos += 1;
                    let d = self.number()?;
                    if d.is_zero() {
                        return Err(self.err("division by zero"));
                    }
                    acc = acc.scale(&Rat::new(BigInt::one(), d));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<RingElt> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.small()?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<RingElt> {
        let (nx, ne, n) = (self.nx, self.ne, self.trunc);
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => {
                let v = self.number()?;
                Ok(RingElt::constant(Rat::from_integer(v), nx, ne, n))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                self.pos += 1;
                let has_index = self.pos < self.s.len() && self.s[self.pos].is_ascii_digit();
                let idx = if has_index { Some(self.small()? as usize) } else { None };
                let index = |count: usize, this: &Self| -> Result<usize> {
                    match idx {
                        None if count == 1 => Ok(0),
                        Some(i) if i >= 1 && i <= count => Ok(i - 1),
                        _ => Err(this.err("variable index out of range")),
                    }
                };
                match c {
                    b't' if idx.is_none() => Ok(RingElt::t(nx, ne, n)),
                    b'q' if idx.is_none() => {
                        Ok(&RingElt::one(nx, ne, n) + &RingElt::t(nx, ne, n))
                    }
                    b'x' => Ok(RingElt::x(index(nx, self)?, nx, ne, n)),
                    b'e' => Ok(RingElt::eps(index(ne, self)?, nx, ne, n)),
                    _ => Err(self.err("unknown variable")),
                }
            }
            _ => Err(self.err("unexpected input")),
        }
    }
}

/// Parses a polynomial expression in the ring with `nx` x-variables, `ne`
/// e-variables and truncation `trunc`.
pub fn parse_poly(s: &str, nx: usize, ne: usize, trunc: u32) -> Result<RingElt> {
    let mut p = Parser {
        s: s.as_bytes(),
        pos: 0,
        nx,
        ne,
        trunc,
    };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    t: u32,
    x: Vec<u32>,
    eps: Vec<u32>,
    num: String,
    den: String,
}

#[derive(Serialize, Deserialize)]
struct RingEltJson {
    #[serde(rename = "N")]
    n: u32,
    #[serde(default)]
    nx: Option<usize>,
    #[serde(default)]
    ne: Option<usize>,
    terms: Vec<TermJson>,
}

impl Serialize for RingElt {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let nx = self.nx();
        let terms = self
            .terms()
            .map(|(m, c)| TermJson {
                t: m[0],
                x: m[1..1 + nx].to_vec(),
                eps: m[1 + nx..].to_vec(),
                num: c.numer().to_string(),
                den: c.denom().to_string(),
            })
            .collect();
        RingEltJson {
            n: self.trunc(),
            nx: Some(nx),
            ne: Some(self.ne()),
            terms,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for RingElt {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = RingEltJson::deserialize(de)?;
        if j.n == 0 {
            return Err(D::Error::custom("N must be positive"));
        }
        let nx = j.nx.or_else(|| j.terms.first().map(|t| t.x.len())).unwrap_or(0);
        let ne = j.ne.or_else(|| j.terms.first().map(|t| t.eps.len())).unwrap_or(0);
        let mut terms = Vec::with_capacity(j.terms.len());
        for t in j.terms {
            if t.x.len() != nx || t.eps.len() != ne {
                return Err(D::Error::custom("inconsistent exponent lengths"));
            }
            if t.t >= j.n {
                return Err(D::Error::custom("t-exponent not below N"));
            }
            let num: BigInt = t.num.parse().map_err(D::Error::custom)?;
            let den: BigInt = t.den.parse().map_err(D::Error::custom)?;
            if den.is_zero() {
                return Err(D::Error::custom("zero denominator"));
            }
            let mut m = Exps::with_capacity(1 + nx + ne);
            m.push(t.t);
            m.extend(t.x);
            m.extend(t.eps);
            terms.push((m, Rat::new(num, den)));
        }
        RingElt::from_terms(nx, ne, j.n, terms).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn print_and_parse() {
        let f = parse_poly("3*t^2*x - x^2/2 + e*(x + 1) + q", 1, 1, 4).unwrap();
        let s = f.to_string();
        assert_eq!(parse_poly(&s, 1, 1, 4).unwrap(), f);
        assert_eq!(parse_poly("0", 2, 0, 3).unwrap().to_string(), "0");
        let g = parse_poly("x1*x2 - e2", 2, 2, 3).unwrap();
        assert_eq!(g.to_string(), "-e2 + x1*x2");
        assert!(parse_poly("x3", 2, 0, 3).is_err());
        assert!(parse_poly("x +", 1, 0, 3).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let f = parse_poly("3/7*t*x^2*e - 5", 1, 1, 3).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: RingElt = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.shape(), f.shape());
    }
}
