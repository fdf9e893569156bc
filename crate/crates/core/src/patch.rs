//! Gluing the p-adic canonical sections for the odd primes that matter at a
//! given truncation into one section with integral coefficients.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::coords::{is_prime, CoordinateSystem};
use crate::error::{Error, Result};
use crate::qdiff::{a_psi_member, DiffOp, Membership, NablaCache};
use crate::ring::{Exps, MultiIndex, Rat, RingElt};
use crate::sections::{canonical_section, invert_operator, Section};

/// A lift given by integer shifts `F_i = (x_i + c_i)^p - c_i`, defined for
/// every p. Its `∇` does not depend on p.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftFamily {
    pub shifts: Vec<i64>,
}

impl LiftFamily {
    pub fn standard(n: usize) -> Self {
        LiftFamily { shifts: vec![0; n] }
    }

    pub fn shift(n: usize, c: i64) -> Self {
        LiftFamily { shifts: vec![c; n] }
    }

    pub fn n(&self) -> usize {
        self.shifts.len()
    }

    pub fn from_coords(psi: &CoordinateSystem) -> Result<Self> {
        let shifts = psi.shifts().ok_or_else(|| {
            Error::InvalidInput(format!("lift {} is not a shifted power map", psi.label))
        })?;
        let shifts = shifts
            .iter()
            .map(|c| {
                if c.is_integer() {
                    i64::try_from(c.to_integer())
                        .map_err(|_| Error::InvalidInput("shift out of range".into()))
                } else {
                    Err(Error::InvalidInput(format!("shift {c} is not an integer")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(LiftFamily { shifts })
    }

    pub fn at_prime(&self, p: u32) -> Result<CoordinateSystem> {
        if self.shifts.iter().all(|&c| c == 0) {
            CoordinateSystem::standard(p, self.n())
        } else if self.shifts.iter().all(|&c| c == self.shifts[0]) {
            CoordinateSystem::shift(p, self.n(), self.shifts[0])
        } else {
            CoordinateSystem::shift_each(p, &self.shifts)
        }
    }
}

/// Odd primes with `p - 1 < N`. The canonical section at p agrees with the
/// identity mod `t^(p-1)`, so the others contribute nothing at truncation N.
pub fn relevant_primes(trunc: u32) -> Vec<u32> {
    (3..=trunc).filter(|&p| is_prime(p)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSection {
    pub p: u32,
    pub section: Section,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchBundle {
    pub psi1: LiftFamily,
    pub psi2: LiftFamily,
    #[serde(rename = "N")]
    pub trunc: u32,
    #[serde(rename = "K")]
    pub cap: u32,
    /// CRT modulus exponent: the global agrees with each local mod `p^E`.
    pub exponent: u32,
    pub locals: Vec<LocalSection>,
    /// The glued section in operator form.
    pub global: DiffOp,
}

const MAX_EXPONENT: u32 = 64;

/// Residue of a p-integral rational mod `m = p^E`.
fn residue(c: &Rat, m: &BigInt) -> Option<BigInt> {
    let den = c.denom().mod_floor(m);
    let g = den.extended_gcd(m);
    if !g.gcd.is_one() {
        return None;
    }
    Some((c.numer() * g.x).mod_floor(m))
}

/// The minimal non-negative `r` with `r ≡ r_i mod m_i`.
fn crt(pairs: &[(BigInt, BigInt)]) -> BigInt {
    let mut r = BigInt::zero();
    let mut m = BigInt::one();
    for (ri, mi) in pairs {
        // r + m k ≡ ri mod mi
        let g = m.extended_gcd(mi);
        let k = ((ri - &r) * g.x).mod_floor(mi);
        r += &m * k;
        m *= mi;
        r = r.mod_floor(&m);
    }
    r
}

fn glue(locals: &[(u32, DiffOp)], n: usize, trunc: u32, e: u32) -> Result<DiffOp> {
    let mut keys: BTreeMap<MultiIndex, BTreeSet<Exps>> = BTreeMap::new();
    for (_, op) in locals {
        for (k, c) in op.terms() {
            keys.entry(k.clone())
                .or_default()
                .extend(c.terms().map(|(m, _)| m.clone()));
        }
    }
    let mut out = BTreeMap::new();
    for (k, monos) in keys {
        let mut terms = Vec::new();
        for mono in monos {
            let mut pairs = Vec::new();
            for (p, op) in locals {
                let modulus = BigInt::from(*p).pow(e);
                let c = op.coeff(&k).coeff(&mono);
                let r = residue(&c, &modulus).ok_or_else(|| {
                    Error::AssemblyInconsistent(format!("local coefficient {c} is not {p}-integral"))
                })?;
                pairs.push((r, modulus));
            }
            terms.push((mono, Rat::from_integer(crt(&pairs))));
        }
        out.insert(k, RingElt::from_terms(n, 0, trunc, terms)?);
    }
    DiffOp::from_terms(n, trunc, out)
}

fn local_ok(global: &DiffOp, locals: &[(u32, DiffOp)], psi1: &LiftFamily) -> Result<bool> {
    for (p, op) in locals {
        let b = invert_operator(op)?.compose(global);
        if !a_psi_member(&b, &psi1.at_prime(*p)?, &Membership::Prime(*p))? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn local_ops(b: &PatchBundle) -> Result<Vec<(u32, DiffOp)>> {
    b.locals
        .iter()
        .map(|l| Ok((l.p, l.section.operator()?)))
        .collect()
}

/// `s ∇^I_{ψ1} s^-1` has a `∇_{ψ2}`-expansion with only powers of 2 in the
/// denominators, for `|I| <= 3`.
pub fn conjugation_check(global: &DiffOp, psi1: &LiftFamily, psi2: &LiftFamily, trunc: u32) -> Result<bool> {
    // the ∇ operators of a shift family do not depend on p
    let mut c1 = NablaCache::new(&psi1.at_prime(3)?, trunc)?;
    let mut c2 = NablaCache::new(&psi2.at_prime(3)?, trunc)?;
    let inv = invert_operator(global)?;
    let mode = Membership::Global(vec![2]);
    for idx in MultiIndex::all_up_to(psi1.n(), 3) {
        let z = global.compose(&c1.power(&idx)).compose(&inv);
        if !c2.expand(&z)?.values().all(|a| mode.accepts(a)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Local canonical sections for the relevant primes and their CRT gluing.
pub fn assemble(psi1: &LiftFamily, psi2: &LiftFamily, trunc: u32, cap: u32) -> Result<PatchBundle> {
    assemble_at(psi1, psi2, trunc, cap, &relevant_primes(trunc))
}

pub fn assemble_at(
    psi1: &LiftFamily,
    psi2: &LiftFamily,
    trunc: u32,
    cap: u32,
    primes: &[u32],
) -> Result<PatchBundle> {
    if primes.contains(&2) {
        return Err(Error::PrimeTwoUnsupported);
    }
    if psi1.n() != psi2.n() {
        return Err(Error::CoordinateMismatch("lifts in different dimensions".into()));
    }
    let n = psi1.n();
    let mut locals = Vec::new();
    for &p in primes {
        if !is_prime(p) {
            return Err(Error::InvalidInput(format!("{p} is not prime")));
        }
        let s = canonical_section(&psi1.at_prime(p)?, &psi2.at_prime(p)?, None, trunc, cap)?;
        locals.push(LocalSection { p, section: s });
    }
    let mut bundle = PatchBundle {
        psi1: psi1.clone(),
        psi2: psi2.clone(),
        trunc,
        cap,
        exponent: 0,
        locals,
        global: DiffOp::identity(n, trunc),
    };
    let ops = local_ops(&bundle)?;
    if !ops.is_empty() {
        let found = (1..=MAX_EXPONENT).find_map(|e| match glue(&ops, n, trunc, e) {
            Ok(g) => match local_ok(&g, &ops, psi1) {
                Ok(true) => Some(Ok((e, g))),
                Ok(false) => None,
                Err(err) => Some(Err(err)),
            },
            Err(err) => Some(Err(err)),
        });
        let (e, g) = found.unwrap_or_else(|| {
            Err(Error::AssemblyInconsistent(
                "no CRT exponent reconciles the local sections".into(),
            ))
        })?;
        bundle.exponent = e;
        bundle.global = g;
    }
    if !conjugation_check(&bundle.global, psi1, psi2, trunc)? {
        return Err(Error::AssemblyInconsistent(
            "the glued section does not conjugate the operator algebras".into(),
        ));
    }
    Ok(bundle)
}

fn denominators_are_two_powers(op: &DiffOp) -> bool {
    let mode = Membership::Global(vec![2]);
    op.terms().all(|(_, c)| mode.accepts(c))
}

/// The bundle invariants: each local class matches, no irrelevant primes,
/// `s(1) = 1`, `s ≡ id mod t`, and denominators powers of 2.
pub fn validate_bundle(b: &PatchBundle) -> Result<bool> {
    let relevant = relevant_primes(b.trunc);
    if b.locals.iter().any(|l| !relevant.contains(&l.p)) {
        return Ok(false);
    }
    let n = b.psi1.n();
    let zero = MultiIndex::zero(n);
    if !b.global.coeff(&zero).is_one() {
        return Ok(false);
    }
    if b.global
        .terms()
        .any(|(k, c)| k != &zero && !c.truncate(1).is_zero())
    {
        return Ok(false);
    }
    if !denominators_are_two_powers(&b.global) {
        return Ok(false);
    }
    local_ok(&b.global, &local_ops(b)?, &b.psi1)
}

/// Whether `global ∘ perturbation` still has every local class. A
/// perturbation outside `A_{ψ1,p}` at a listed p must break this.
pub fn verify_uniqueness(b: &PatchBundle, perturbation: &DiffOp) -> Result<bool> {
    let g = b.global.compose(&perturbation.truncate(b.trunc));
    local_ok(&g, &local_ops(b)?, &b.psi1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::parse_poly;

    #[test]
    fn primes_by_truncation() {
        assert!(relevant_primes(1).is_empty());
        assert!(relevant_primes(2).is_empty());
        assert_eq!(relevant_primes(3), vec![3]);
        assert_eq!(relevant_primes(4), vec![3]);
        assert_eq!(relevant_primes(6), vec![3, 5]);
        assert_eq!(relevant_primes(12), vec![3, 5, 7, 11]);
    }

    #[test]
    fn crt_pieces() {
        let m = BigInt::from(27);
        assert_eq!(residue(&Rat::new(1.into(), 2.into()), &m), Some(BigInt::from(14)));
        assert_eq!(residue(&Rat::new(1.into(), 3.into()), &m), None);
        let r = crt(&[(BigInt::from(2), BigInt::from(9)), (BigInt::from(3), BigInt::from(25))]);
        assert_eq!(r, BigInt::from(128));
    }

    #[test]
    fn trivial_cases() {
        let a = LiftFamily::standard(1);
        let b = assemble(&a, &a, 3, 3).unwrap();
        assert_eq!(b.global, DiffOp::identity(1, 3));
        let c = assemble(&a, &LiftFamily::shift(1, 1), 1, 3).unwrap();
        assert!(c.locals.is_empty());
        assert_eq!(c.global, DiffOp::identity(1, 1));
        assert!(matches!(
            assemble_at(&a, &a, 3, 3, &[2, 3]),
            Err(Error::PrimeTwoUnsupported)
        ));
    }

    #[test]
    fn standard_vs_shift() {
        let a = LiftFamily::standard(1);
        let sh = LiftFamily::shift(1, 1);
        let b = assemble(&a, &sh, 3, 3).unwrap();
        assert!(validate_bundle(&b).unwrap());
        assert_ne!(b.global, DiffOp::identity(1, 3));
        assert!(verify_uniqueness(&b, &DiffOp::identity(1, 3)).unwrap());
        let bad = DiffOp::identity(1, 3).add(&DiffOp::term(
            MultiIndex(vec![3]),
            parse_poly("t^2/3", 1, 0, 3).unwrap(),
        ));
        assert!(!verify_uniqueness(&b, &bad).unwrap());
        let cache = NablaCache::new(&a.at_prime(3).unwrap(), 3).unwrap();
        let member = DiffOp::identity(1, 3).add(&cache.generator(0).left_mul(&parse_poly("t", 1, 0, 3).unwrap()));
        assert!(verify_uniqueness(&b, &member).unwrap());
    }

    #[test]
    fn two_primes() {
        let a = LiftFamily::standard(1);
        let sh = LiftFamily::shift(1, 1);
        let b = assemble(&a, &sh, 5, 6).unwrap();
        assert_eq!(b.locals.len(), 2);
        assert!(validate_bundle(&b).unwrap());
    }

    #[test]
    fn json_roundtrip() {
        let b = assemble(&LiftFamily::standard(1), &LiftFamily::shift(1, 1), 3, 3).unwrap();
        let back: PatchBundle = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back, b);
    }
}
