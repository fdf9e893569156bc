//! Differential operators `sum_K c_K d^[K]` in the divided-power basis.
//!
//! Modulo `t^N` every convergent operator the algebra needs has finite
//! support, so a `DiffOp` is a finite map `K -> c_K`. It doubles as a
//! functional on e-series through `pair(D, sum g_K e^K) = sum c_K g_K`,
//! and `apply(D, f) = pair(D, f(x + e))`.

mod nabla;
mod expr;
mod structure;

pub use nabla::{
    a_psi_member, dual_basis, dual_basis_product_formula, nabla, nabla_power, shifts_for,
    to_nabla_basis, transition_matrix, verify_nabla_phi, xi, Membership, NablaCache,
};
pub use expr::parse_operator;
pub use structure::{
    structure_constants, structure_constants_route_a, structure_constants_route_b, structure_table,
    StructureTable,
};

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ring::{MultiIndex, Rat, RingElt};

#[derive(Clone, PartialEq, Eq)]
pub struct DiffOp {
    n: usize,
    trunc: u32,
    terms: BTreeMap<MultiIndex, RingElt>,
    /// Optional bound on the e-degree this operator may be paired with.
    cap: Option<u32>,
}

impl DiffOp {
    pub fn zero(n: usize, trunc: u32) -> Self {
        DiffOp {
            n,
            trunc,
            terms: BTreeMap::new(),
            cap: None,
        }
    }

    pub fn identity(n: usize, trunc: u32) -> Self {
        Self::mul_by(&RingElt::one(n, 0, trunc))
    }

    /// Multiplication by `f` (a polynomial in x and t).
    pub fn mul_by(f: &RingElt) -> Self {
        Self::term(MultiIndex::zero(f.nx()), f.clone())
    }

    /// `d^[K]`.
    pub fn divided(k: &MultiIndex, trunc: u32) -> Self {
        Self::term(k.clone(), RingElt::one(k.len(), 0, trunc))
    }

    /// `c d^[K]`.
    pub fn term(k: MultiIndex, c: RingElt) -> Self {
        let n = k.len();
        let mut d = Self::zero(n, c.trunc());
        d.add_term(k, c);
        d
    }

    pub fn from_terms<I>(n: usize, trunc: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, RingElt)>,
    {
        let mut d = Self::zero(n, trunc);
        for (k, c) in terms {
            if k.len() != n || c.ne() != 0 || c.nx() > n {
                return Err(Error::InvalidInput(format!(
                    "operator term {k} does not fit n = {n}"
                )));
            }
            d.add_term(k, c);
        }
        Ok(d)
    }

    fn add_term(&mut self, k: MultiIndex, c: RingElt) {
        let c = c.embed(self.n, 0).with_trunc(self.trunc.min(c.trunc())).with_trunc(self.trunc);
        if c.is_zero() {
            return;
        }
        let merged = match self.terms.remove(&k) {
            Some(old) => &old + &c,
            None => c,
        };
        if !merged.is_zero() {
            self.terms.insert(k, merged);
        }
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn cap(&self) -> Option<u32> {
        self.cap
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trunc(&self) -> u32 {
        self.trunc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &RingElt)> {
        self.terms.iter()
    }

    pub fn coeff(&self, k: &MultiIndex) -> RingElt {
        self.terms
            .get(k)
            .cloned()
            .unwrap_or_else(|| RingElt::zero(self.n, 0, self.trunc))
    }

    /// Largest `|K|` in the support, 0 for the zero operator.
    pub fn order(&self) -> u32 {
        self.terms.keys().map(|k| k.degree()).max().unwrap_or(0)
    }

    /// Componentwise maximum of the support.
    pub fn max_index(&self) -> MultiIndex {
        let mut m = MultiIndex::zero(self.n);
        for k in self.terms.keys() {
            for (a, b) in m.0.iter_mut().zip(&k.0) {
                *a = (*a).max(*b);
            }
        }
        m
    }

    pub fn truncate(&self, trunc: u32) -> Self {
        let mut d = Self::zero(self.n, trunc.min(self.trunc));
        for (k, c) in &self.terms {
            d.add_term(k.clone(), c.truncate(trunc));
        }
        d.cap = self.cap;
        d
    }

    pub fn add(&self, other: &DiffOp) -> DiffOp {
        let mut d = self.truncate(other.trunc);
        for (k, c) in &other.terms {
            d.add_term(k.clone(), c.clone());
        }
        d
    }

    pub fn sub(&self, other: &DiffOp) -> DiffOp {
        self.add(&other.scale(&Rat::from_integer((-1).into())))
    }

    pub fn scale(&self, r: &Rat) -> DiffOp {
        let mut d = Self::zero(self.n, self.trunc);
        for (k, c) in &self.terms {
            d.add_term(k.clone(), c.scale(r));
        }
        d.cap = self.cap;
        d
    }

    /// `f * D` (left multiplication by a function).
    pub fn left_mul(&self, f: &RingElt) -> DiffOp {
        let trunc = self.trunc.min(f.trunc());
        let mut d = Self::zero(self.n, trunc);
        for (k, c) in &self.terms {
            d.add_term(k.clone(), f * c);
        }
        d.cap = self.cap;
        d
    }

    /// `sum_K c_K d^[K] f`.
    pub fn apply(&self, f: &RingElt) -> RingElt {
        let trunc = self.trunc.min(f.trunc());
        let f = f.embed(self.n.max(f.nx()), f.ne());
        let mut out = RingElt::zero(f.nx(), f.ne(), trunc);
        for (k, c) in &self.terms {
            let dk = f.divided_derivative_multi(k);
            if !dk.is_zero() {
                out = &out + &(c * &dk);
            }
        }
        out
    }

    /// `sum_K c_K g_K` for `g = sum_K g_K e^K` with `g` in the ring with n
    /// e-variables.
    pub fn pair(&self, g: &RingElt) -> Result<RingElt> {
        if g.ne() != self.n && !(g.ne() == 0 && g.eps_degree() == 0) {
            return Err(Error::InvalidInput(format!(
                "pairing needs {} e-variables, element has {}",
                self.n,
                g.ne()
            )));
        }
        if let Some(cap) = self.cap {
            let deg = g.eps_degree();
            if deg > cap {
                return Err(Error::EpsilonCapExceeded { degree: deg, cap });
            }
        }
        let trunc = self.trunc.min(g.trunc());
        let mut out = RingElt::zero(self.n, 0, trunc);
        if g.ne() == 0 {
            return Ok(&self.coeff(&MultiIndex::zero(self.n)) * g);
        }
        for (k, gk) in g.eps_parts() {
            if let Some(c) = self.terms.get(&k) {
                out = &out + &(c * &gk);
            }
        }
        Ok(out)
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &DiffOp) -> DiffOp {
        assert_eq!(self.n, other.n, "operators act on different rings");
        let trunc = self.trunc.min(other.trunc);
        let mut acc: BTreeMap<MultiIndex, RingElt> = BTreeMap::new();
        for (a, c) in &self.terms {
            for sub in a.below() {
                let rest = a.checked_sub(&sub).unwrap();
                for (b, d) in &other.terms {
                    let dd = d.divided_derivative_multi(&sub);
                    if dd.is_zero() {
                        continue;
                    }
                    let target = rest.add(b);
                    let mult = Rat::from_integer(target.binomial(b));
                    let v = (c * &dd).scale(&mult);
                    if v.is_zero() {
                        continue;
                    }
                    match acc.get_mut(&target) {
                        Some(e) => *e = &*e + &v,
                        None => {
                            acc.insert(target, v);
                        }
                    }
                }
            }
        }
        let mut out = Self::zero(self.n, trunc);
        for (k, c) in acc {
            out.add_term(k, c);
        }
        out
    }

    /// `self^k` under composition.
    pub fn pow(&self, k: u32) -> DiffOp {
        let mut acc = Self::identity(self.n, self.trunc);
        for _ in 0..k {
            acc = self.compose(&acc);
        }
        acc
    }

    /// `true` iff every coefficient is p-integral.
    pub fn p_integral(&self, p: u32) -> bool {
        self.terms.values().all(|c| c.p_integral(p))
    }

}

impl std::fmt::Debug for DiffOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(k, c)| format!("({c})*d{k}"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    #[serde(rename = "K")]
    k: MultiIndex,
    coeff: RingElt,
}

#[derive(Serialize, Deserialize)]
struct DiffOpJson {
    #[serde(rename = "N")]
    trunc: u32,
    n: usize,
    terms: Vec<TermJson>,
}

impl Serialize for DiffOp {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        DiffOpJson {
            trunc: self.trunc,
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|(k, c)| TermJson {
                    k: k.clone(),
                    coeff: c.clone(),
                })
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DiffOp {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = DiffOpJson::deserialize(de)?;
        if j.trunc == 0 {
            return Err(D::Error::custom("N must be positive"));
        }
        for t in &j.terms {
            if t.coeff.trunc() != j.trunc {
                return Err(D::Error::custom("coefficient truncation differs from N"));
            }
        }
        DiffOp::from_terms(j.n, j.trunc, j.terms.into_iter().map(|t| (t.k, t.coeff)))
            .map_err(D::Error::custom)
    }
}
