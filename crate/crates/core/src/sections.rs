//! Coordinate-change sections between two lifts of the same polynomial ring.
//!
//! A section is stored by its values `c_K = s(e^K)` where `e_i` is the
//! coordinate with `delta_0(x_i) = tau'(x_i) + e_i`. When `tau'` is the
//! identity this is literally the differential operator `sum_K c_K d^[K]`.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coords::CoordinateSystem;
use crate::delta::{Convention, DeltaRing, Variant};
use crate::error::{Error, Result};
use crate::qdiff::DiffOp;
use crate::ring::{parse_poly, MultiIndex, RingElt};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub src: CoordinateSystem,
    pub tgt: CoordinateSystem,
    pub tau: Vec<RingElt>,
    pub op: DiffOp,
}

fn is_identity_tau(tau: &[RingElt]) -> bool {
    let n = tau.len();
    tau.iter()
        .enumerate()
        .all(|(i, f)| *f == RingElt::x(i, n, 0, f.trunc()))
}

impl Section {
    pub fn new(src: &CoordinateSystem, tgt: &CoordinateSystem, tau: Option<Vec<RingElt>>, op: DiffOp) -> Result<Self> {
        if src.p != tgt.p || src.n != tgt.n || op.n() != src.n {
            return Err(Error::CoordinateMismatch(format!(
                "section {} -> {} does not fit its operator",
                src.label, tgt.label
            )));
        }
        let trunc = op.trunc();
        let tau = tau.unwrap_or_else(|| DeltaRing::identity_tau(src.n, trunc));
        let tau = tau
            .into_iter()
            .map(|f| f.embed(src.n, 0).with_trunc(trunc.min(f.trunc())).with_trunc(trunc))
            .collect();
        Ok(Section {
            src: src.clone(),
            tgt: tgt.clone(),
            tau,
            op,
        })
    }

    /// `e^K -> δ_{K,0}`.
    pub fn trivial(src: &CoordinateSystem, tgt: &CoordinateSystem, trunc: u32) -> Result<Self> {
        Self::new(src, tgt, None, DiffOp::identity(src.n, trunc))
    }

    pub fn trunc(&self) -> u32 {
        self.op.trunc()
    }

    pub fn n(&self) -> usize {
        self.src.n
    }

    pub fn has_identity_tau(&self) -> bool {
        is_identity_tau(&self.tau)
    }

    /// `s(1) = 1` and `c_K ∈ (t)` for `K != 0`.
    pub fn check_invariants(&self) -> Result<()> {
        let zero = MultiIndex::zero(self.n());
        if !self.op.coeff(&zero).is_one() {
            return Err(Error::AssertionFailure("s(1) != 1".into()));
        }
        for (k, c) in self.op.terms() {
            if k != &zero && !c.truncate(1).is_zero() {
                return Err(Error::AssertionFailure(format!(
                    "coefficient at {k} is not divisible by t"
                )));
            }
        }
        Ok(())
    }

    /// `(s ∘ delta_0)(f) = sum_K c_K (d^[K] f)(tau'(x))`.
    pub fn eval(&self, f: &RingElt) -> RingElt {
        let n = self.n();
        let trunc = self.trunc().min(f.trunc());
        let f = f.embed(n, 0).with_trunc(trunc);
        let mut out = RingElt::zero(n, 0, trunc);
        for (k, c) in self.op.terms() {
            let d = f.divided_derivative_multi(k);
            if d.is_zero() {
                continue;
            }
            let d = if self.has_identity_tau() {
                d
            } else {
                d.substitute(&self.tau, &[], None)
            };
            out = &out + &(c * &d);
        }
        out
    }

    /// The operator `f -> (s ∘ delta_0)(f)` in divided-power form. With
    /// `w = tau'(x) - x` this is `d_L = sum_K binom(L, K) w^(L-K) c_K`,
    /// finite because `w ∈ (t)`.
    pub fn operator(&self) -> Result<DiffOp> {
        if self.has_identity_tau() {
            return Ok(self.op.clone());
        }
        let n = self.n();
        let trunc = self.trunc();
        let w: Vec<RingElt> = (0..n)
            .map(|i| &self.tau[i] - &RingElt::x(i, n, 0, trunc))
            .collect();
        if w.iter().any(|wi| !wi.truncate(1).is_zero()) {
            return Err(Error::InvalidInput(
                "tau' must reduce to the identity mod t to give an operator".into(),
            ));
        }
        let mut out = DiffOp::zero(n, trunc);
        for (k, c) in self.op.terms() {
            for extra in MultiIndex::all_up_to(n, trunc - 1) {
                let l = k.add(&extra);
                let mut f = c.scale(&crate::ring::Rat::from_integer(l.binomial(k)));
                for (i, &e) in extra.0.iter().enumerate() {
                    if e > 0 {
                        f = &f * &w[i].pow(e);
                    }
                }
                if !f.is_zero() {
                    out = out.add(&DiffOp::term(l, f));
                }
            }
        }
        Ok(out)
    }

    fn from_operator(src: &CoordinateSystem, tgt: &CoordinateSystem, op: DiffOp) -> Result<Self> {
        Self::new(src, tgt, None, op)
    }
}

/// `t ∘ s`, a section from `s.src` to `t.tgt`.
pub fn compose_sections(t: &Section, s: &Section) -> Result<Section> {
    if s.tgt != t.src {
        return Err(Error::CoordinateMismatch(format!(
            "cannot compose {} -> {} after {} -> {}",
            t.src.label, t.tgt.label, s.src.label, s.tgt.label
        )));
    }
    let op = t.operator()?.compose(&s.operator()?);
    Section::from_operator(&s.src, &t.tgt, op)
}

/// Inverse of an operator congruent to the identity mod t, as the finite
/// geometric series `sum_{j<N} (1 - D)^j`.
pub fn invert_operator(d: &DiffOp) -> Result<DiffOp> {
    let n = d.n();
    let trunc = d.trunc();
    let id = DiffOp::identity(n, trunc);
    let nil = id.sub(d);
    if nil.terms().any(|(_, c)| !c.truncate(1).is_zero()) {
        return Err(Error::InvalidInput("operator is not the identity mod t".into()));
    }
    let mut acc = id.clone();
    let mut power = id;
    for _ in 1..trunc {
        power = nil.compose(&power);
        if power.is_zero() {
            break;
        }
        acc = acc.add(&power);
    }
    Ok(acc)
}

/// The two-sided inverse, a section from `s.tgt` back to `s.src`.
pub fn invert(s: &Section) -> Result<Section> {
    let op = invert_operator(&s.operator()?)?;
    Section::from_operator(&s.tgt, &s.src, op)
}

/// `s ∘ ζ ∘ s^-1`.
pub fn conjugate(s: &Section, zeta: &DiffOp) -> Result<DiffOp> {
    let d = s.operator()?;
    let inv = invert_operator(&d)?;
    Ok(d.compose(zeta).compose(&inv))
}

/// The section with `s(n_J Gamma_J) = δ_{J,0}` for the γ-basis of the
/// given variant. With the modified variant this is the canonical section,
/// congruent to `tau'` mod `t^(p-1)`; with the standard variant it is the
/// projection section.
pub fn section_from_basis(
    src: &CoordinateSystem,
    tgt: &CoordinateSystem,
    tau: Option<Vec<RingElt>>,
    trunc: u32,
    cap: u32,
    variant: Variant,
) -> Result<Section> {
    if src.p == 2 {
        return Err(Error::PrimeTwoUnsupported);
    }
    let ring = DeltaRing::new(src, tgt, tau, Convention::Stratification, trunc)?;
    let n = src.n;
    let basis = ring.gamma_basis(cap, variant)?;
    // b[J][K] = e^K coefficient of n_J Gamma_J
    let b: Vec<BTreeMap<MultiIndex, RingElt>> = basis
        .iter()
        .map(|be| be.body.scale(&be.scale).eps_parts())
        .collect();
    let mut c: BTreeMap<MultiIndex, RingElt> = BTreeMap::new();
    let zero = || RingElt::zero(n, 0, trunc);
    let mut start = 0;
    while start < basis.len() {
        let deg = basis[start].index.degree();
        let end = basis[start..]
            .iter()
            .position(|be| be.index.degree() != deg)
            .map(|o| start + o)
            .unwrap_or(basis.len());
        // fixed-point iteration inside the block of equal degree; the
        // off-diagonal entries of a block are divisible by t
        for round in 0..=trunc + 1 {
            let mut changed = false;
            for j in start..end {
                let idx = &basis[j].index;
                let mut rhs = if idx.is_zero() { RingElt::one(n, 0, trunc) } else { zero() };
                for (k, v) in &b[j] {
                    if k == idx {
                        continue;
                    }
                    if let Some(ck) = c.get(k) {
                        rhs = &rhs - &(ck * v);
                    }
                }
                let diag = b[j].get(idx).cloned().unwrap_or_else(zero);
                let v = rhs.exact_divide(&diag)?;
                if c.get(idx) != Some(&v) {
                    changed = true;
                    c.insert(idx.clone(), v);
                }
            }
            if !changed {
                break;
            }
            if round == trunc + 1 {
                return Err(Error::AssertionFailure(format!(
                    "section solve did not settle in degree {deg}"
                )));
            }
        }
        start = end;
    }
    let op = DiffOp::from_terms(n, trunc, c)?;
    let s = Section::new(src, tgt, Some(ring.tau.clone()), op)?;
    s.check_invariants()?;
    Ok(s)
}

/// The canonical p-adic section, with its asserted properties:
/// invariants, p-integrality, envelope membership and `s ∘ delta_0 = tau'`
/// mod `t^(p-1)`.
pub fn canonical_section(
    src: &CoordinateSystem,
    tgt: &CoordinateSystem,
    tau: Option<Vec<RingElt>>,
    trunc: u32,
    cap: u32,
) -> Result<Section> {
    let s = section_from_basis(src, tgt, tau, trunc, cap, Variant::Modified)?;
    let p = src.p;
    if !s.op.p_integral(p) {
        return Err(Error::AssertionFailure("canonical section is not p-integral".into()));
    }
    let zero = MultiIndex::zero(s.n());
    for (k, c) in s.op.terms() {
        if k != &zero && !c.truncate(p - 1).is_zero() {
            return Err(Error::AssertionFailure(format!(
                "s ∘ delta_0 differs from tau' below t^(p-1) at {k}"
            )));
        }
    }
    if !qcrys_member(&s, cap)? {
        return Err(Error::AssertionFailure(
            "canonical section does not extend to the envelope".into(),
        ));
    }
    Ok(s)
}

/// The projection section built from the standard γ-basis.
pub fn generic_section(
    src: &CoordinateSystem,
    tgt: &CoordinateSystem,
    tau: Option<Vec<RingElt>>,
    trunc: u32,
    cap: u32,
) -> Result<Section> {
    section_from_basis(src, tgt, tau, trunc, cap, Variant::Standard)
}

/// `s(Gamma_I)` is p-integral for every element of the standard γ-basis of
/// the pair with `|I| <= cap`, i.e. `s` extends to the q-PD envelope.
pub fn qcrys_member(s: &Section, cap: u32) -> Result<bool> {
    let ring = DeltaRing::new(&s.src, &s.tgt, Some(s.tau.clone()), Convention::Stratification, s.trunc())?;
    let p = s.src.p;
    for b in ring.gamma_basis(cap, Variant::Standard)? {
        if !s.op.pair(&b.body)?.p_integral(p) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Serialize, Deserialize)]
struct SectionJson {
    src: CoordinateSystem,
    tgt: CoordinateSystem,
    tau: Vec<String>,
    op: DiffOp,
}

impl Serialize for Section {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        SectionJson {
            src: self.src.clone(),
            tgt: self.tgt.clone(),
            tau: self.tau.iter().map(|f| f.to_string()).collect(),
            op: self.op.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Section {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = SectionJson::deserialize(de)?;
        let trunc = j.op.trunc();
        let tau = j
            .tau
            .iter()
            .map(|s| parse_poly(s, j.src.n, 0, trunc))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Section::new(&j.src, &j.tgt, Some(tau), j.op).map_err(D::Error::custom)
    }
}

pub(crate) fn is_trivial(s: &Section) -> bool {
    s.has_identity_tau()
        && s.op.terms().count() == 1
        && s.op.coeff(&MultiIndex::zero(s.n())).is_one()
        && !s.op.coeff(&MultiIndex::zero(s.n())).is_zero()
}
