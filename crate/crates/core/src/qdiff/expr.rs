//! Operator expressions such as `nabla*x - q*x*nabla` or `d1[2] + t*x1*d2[1]`.
//!
//! Atoms: integers, `x`/`x<i>`, `t`, `q`, `nabla`/`nabla<i>` (also `∇`),
//! and divided derivatives `d[k]`/`d<i>[k]`. Products use `*`, powers `^`,
//! and `/` divides by a nonzero constant.

use super::nabla::nabla;
use super::DiffOp;
use crate::coords::CoordinateSystem;
use crate::error::{Error, Result};
use crate::ring::{MultiIndex, Rat, RingElt};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(u64),
    Ident(String),
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let st = i;
            while i < cs.len() && cs[i].is_ascii_digit() {
                i += 1;
            }
            let txt: String = cs[st..i].iter().collect();
            out.push(Tok::Num(txt.parse().map_err(|_| Error::Parse(format!("bad number {txt}")))?));
        } else if c.is_alphabetic() || c == '∇' {
            let st = i;
            i += 1;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(cs[st..i].iter().collect()));
        } else if "+-*/^()[]".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    psi: &'a CoordinateSystem,
    trunc: u32,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Parse(format!("expected '{c}'")))
        }
    }

    fn number(&mut self) -> Result<u64> {
        match self.toks.get(self.pos) {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(*v)
            }
            _ => Err(Error::Parse("expected a number".into())),
        }
    }

    fn n(&self) -> usize {
        self.psi.n
    }

    fn scalar(&self, r: Rat) -> DiffOp {
        DiffOp::mul_by(&RingElt::constant(r, self.n(), 0, self.trunc))
    }

    fn expr(&mut self) -> Result<DiffOp> {
        let mut acc = if self.eat('-') {
            self.term()?.scale(&Rat::from_integer((-1).into()))
        } else {
            self.eat('+');
            self.term()?
        };
        loop {
            if self.eat('+') {
                acc = acc.add(&self.term()?);
            } else if self.eat('-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<DiffOp> {
        let mut acc = self.power()?;
        loop {
            if self.eat('*') {
                acc = acc.compose(&self.power()?);
            } else if self.eat('/') {
                let d = self.power()?;
                let c = constant_of(&d)?;
                acc = acc.scale(&(Rat::from_integer(1.into()) / c));
            } else {
                return Ok(acc);
            }
        }
    }

    fn power(&mut self) -> Result<DiffOp> {
        let base = self.atom()?;
        if self.eat('^') {
            let k = self.number()?;
            let k = u32::try_from(k).map_err(|_| Error::Parse("exponent too large".into()))?;
            Ok(base.pow(k))
        } else {
            Ok(base)
        }
    }

    fn index_suffix(&self, name: &str, rest: &str) -> Result<usize> {
        if rest.is_empty() {
            if self.n() == 1 {
                return Ok(0);
            }
            return Err(Error::Parse(format!("{name} needs an index with n = {}", self.n())));
        }
        let i: usize = rest
            .parse()
            .map_err(|_| Error::Parse(format!("unknown symbol {name}{rest}")))?;
        if i == 0 || i > self.n() {
            return Err(Error::Parse(format!("index {i} out of range")));
        }
        Ok(i - 1)
    }

    fn atom(&mut self) -> Result<DiffOp> {
        let (n, trunc) = (self.n(), self.trunc);
        match self.toks.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(self.scalar(Rat::from_integer(v.into())))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(id)) => {
                self.pos += 1;
                if id == "t" {
                    return Ok(DiffOp::mul_by(&RingElt::t(n, 0, trunc)));
                }
                if id == "q" {
                    return Ok(DiffOp::mul_by(&(&RingElt::one(n, 0, trunc) + &RingElt::t(n, 0, trunc))));
                }
                for pre in ["nabla", "∇"] {
                    if let Some(rest) = id.strip_prefix(pre) {
                        let i = self.index_suffix(pre, rest)?;
                        return nabla(self.psi, i, trunc);
                    }
                }
                if let Some(rest) = id.strip_prefix('x') {
                    let i = self.index_suffix("x", rest)?;
                    return Ok(DiffOp::mul_by(&RingElt::x(i, n, 0, trunc)));
                }
                if let Some(rest) = id.strip_prefix('d') {
                    let i = self.index_suffix("d", rest)?;
                    self.expect('[')?;
                    let k = u32::try_from(self.number()?)
                        .map_err(|_| Error::Parse("derivative order too large".into()))?;
                    self.expect(']')?;
                    let mut idx = MultiIndex::zero(n);
                    idx.0[i] = k;
                    return Ok(DiffOp::divided(&idx, trunc));
                }
                Err(Error::Parse(format!("unknown symbol {id}")))
            }
            other => Err(Error::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

fn constant_of(d: &DiffOp) -> Result<Rat> {
    let zero = MultiIndex::zero(d.n());
    let c = d.coeff(&zero);
    let ok = d.terms().all(|(k, _)| k == &zero) && c.terms().all(|(m, _)| m.iter().all(|&e| e == 0));
    if !ok || c.is_zero() {
        return Err(Error::Parse("can only divide by a nonzero constant".into()));
    }
    Ok(c.constant_term())
}

/// Parses an operator expression; `nabla` refers to the q-derivations of
/// `psi`.
pub fn parse_operator(s: &str, psi: &CoordinateSystem, trunc: u32) -> Result<DiffOp> {
    let mut p = Parser {
        toks: tokenize(s)?,
        pos: 0,
        psi,
        trunc,
    };
    let out = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::Parse(format!("trailing input after token {}", p.pos)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weyl_relation_normalizes_to_identity() {
        let s = CoordinateSystem::standard(3, 1).unwrap();
        for n in 2..=6 {
            let op = parse_operator("nabla*x - q*x*nabla", &s, n).unwrap();
            assert_eq!(op, DiffOp::identity(1, n));
        }
    }

    #[test]
    fn atoms() {
        let s = CoordinateSystem::standard(3, 2).unwrap();
        let op = parse_operator("(2*x1 - t/3)*d2[2]", &s, 3).unwrap();
        let c = crate::ring::parse_poly("2*x1 - t/3", 2, 0, 3).unwrap();
        assert_eq!(op, DiffOp::term(MultiIndex(vec![0, 2]), c));
        assert!(parse_operator("x", &s, 3).is_err());
        assert!(parse_operator("d1[1] / x1", &s, 3).is_err());
        assert!(parse_operator("x1 +", &s, 3).is_err());
    }
}
