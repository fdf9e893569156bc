//! The q-derivations `∇_{ψ,i}`, their dual basis and the `∇`-normal form.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;

use super::DiffOp;
use crate::coords::CoordinateSystem;
use crate::delta::{DeltaRing, Variant};
use crate::error::{Error, Result};
use crate::ring::{q_integer, q_multi_factorial, MultiIndex, Rat, RingElt};

/// The shifts `c_i` with `F_i = (x_i + c_i)^p - c_i`; `∇_ψ` is only
/// available for such lifts.
pub fn shifts_for(psi: &CoordinateSystem) -> Result<Vec<Rat>> {
    psi.shifts().ok_or_else(|| {
        Error::InvalidInput(format!(
            "lift {} is not a shifted power map; its q-derivations are not polynomial",
            psi.label
        ))
    })
}

fn shifted_x(i: usize, n: usize, c: &Rat, trunc: u32) -> RingElt {
    &RingElt::x(i, n, 0, trunc) + &RingElt::constant(c.clone(), n, 0, trunc)
}

/// `∇_{ψ,i} = sum_{k=1}^{N} t^(k-1) (x_i + c_i)^(k-1) d_i^[k]`.
pub fn nabla(psi: &CoordinateSystem, i: usize, trunc: u32) -> Result<DiffOp> {
    let c = shifts_for(psi)?;
    let n = psi.n;
    let y = shifted_x(i, n, &c[i], trunc);
    let ty = &RingElt::t(n, 0, trunc) * &y;
    let mut d = DiffOp::zero(n, trunc);
    for k in 1..=trunc {
        let mut idx = MultiIndex::zero(n);
        idx.0[i] = k;
        d.add_term(idx, ty.pow(k - 1));
    }
    Ok(d)
}

/// Memoizes `∇^I` and the dual elements for one lift and truncation.
pub struct NablaCache {
    pub psi: CoordinateSystem,
    pub trunc: u32,
    shifts: Vec<Rat>,
    gens: Vec<DiffOp>,
    powers: HashMap<MultiIndex, DiffOp>,
    duals: HashMap<MultiIndex, RingElt>,
}

impl NablaCache {
    pub fn new(psi: &CoordinateSystem, trunc: u32) -> Result<Self> {
        let shifts = shifts_for(psi)?;
        let gens = (0..psi.n)
            .map(|i| nabla(psi, i, trunc))
            .collect::<Result<_>>()?;
        Ok(NablaCache {
            psi: psi.clone(),
            trunc,
            shifts,
            gens,
            powers: HashMap::new(),
            duals: HashMap::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.psi.n
    }

    pub fn generator(&self, i: usize) -> &DiffOp {
        &self.gens[i]
    }

    /// `∇^I = prod_i ∇_i^(I_i)`; the generators commute.
    pub fn power(&mut self, idx: &MultiIndex) -> DiffOp {
        if let Some(d) = self.powers.get(idx) {
            return d.clone();
        }
        let d = match idx.0.iter().rposition(|&k| k > 0) {
            None => DiffOp::identity(self.n(), self.trunc),
            Some(i) => {
                let mut prev = idx.clone();
                prev.0[i] -= 1;
                let prev = self.power(&prev);
                self.gens[i].compose(&prev)
            }
        };
        self.powers.insert(idx.clone(), d.clone());
        d
    }

    /// `Gamma_I` with `pair(∇^J, Gamma_I) = δ_{IJ}`, by a triangular solve
    /// over `K <= I` (the `d^[J]` coefficient of `∇^J` is `[J]_q!`).
    pub fn dual(&mut self, idx: &MultiIndex) -> Result<RingElt> {
        if let Some(g) = self.duals.get(idx) {
            return Ok(g.clone());
        }
        let n = self.n();
        let trunc = self.trunc;
        let below = idx.below();
        let mut g: BTreeMap<MultiIndex, RingElt> = BTreeMap::new();
        for j in below.iter().rev() {
            let pj = self.power(j);
            let mut rhs = if j == idx {
                RingElt::one(n, 0, trunc)
            } else {
                RingElt::zero(n, 0, trunc)
            };
            for (k, gk) in &g {
                let a = pj.coeff(k);
                if !a.is_zero() {
                    rhs = &rhs - &(&a * gk);
                }
            }
            let v = rhs.exact_divide(&pj.coeff(j))?;
            if !v.is_zero() {
                g.insert(j.clone(), v);
            }
        }
        let out = RingElt::from_eps_parts(n, n, trunc, &g);
        self.duals.insert(idx.clone(), out.clone());
        Ok(out)
    }

    /// The integral dual element `[I]_q! Gamma_I`.
    pub fn dual_integral(&mut self, idx: &MultiIndex) -> Result<RingElt> {
        Ok(&self.dual(idx)? * &q_multi_factorial(idx, self.trunc))
    }

    /// `ξ_I = ∇^I / [I]_q!`, the functional dual to `[I]_q! Gamma_I`.
    pub fn xi(&mut self, idx: &MultiIndex) -> Result<DiffOp> {
        let qf = q_multi_factorial(idx, self.trunc);
        let p = self.power(idx);
        let mut out = DiffOp::zero(self.n(), self.trunc);
        for (k, c) in p.terms() {
            out.add_term(k.clone(), c.exact_divide(&qf)?);
        }
        Ok(out)
    }

    /// Coefficients `a_I` with `D = sum_I a_I ∇^I`. Only `|I| < ord(D) + N`
    /// can be nonzero; the expansion is re-composed and compared with `D`.
    pub fn expand(&mut self, d: &DiffOp) -> Result<BTreeMap<MultiIndex, RingElt>> {
        let n = self.n();
        let trunc = self.trunc.min(d.trunc());
        let d = d.truncate(trunc);
        let mut out = BTreeMap::new();
        if d.is_zero() {
            return Ok(out);
        }
        let bound = d.order() + trunc - 1;
        let support: Vec<MultiIndex> = d.terms().map(|(k, _)| k.clone()).collect();
        for idx in MultiIndex::all_up_to(n, bound) {
            if !support.iter().any(|k| k.le(&idx)) {
                continue;
            }
            let a = d.pair(&self.dual(&idx)?.with_trunc(trunc))?;
            if !a.is_zero() {
                out.insert(idx, a);
            }
        }
        let mut back = DiffOp::zero(n, trunc);
        for (idx, a) in &out {
            back = back.add(&self.power(idx).truncate(trunc).left_mul(a));
        }
        if back != d {
            return Err(Error::AssertionFailure(
                "∇-expansion does not reproduce the operator".into(),
            ));
        }
        Ok(out)
    }

    pub fn shifts(&self) -> &[Rat] {
        &self.shifts
    }
}

/// `Gamma_I` for all `|I| <= cap`, with the integrality assertion on
/// `[I]_q! Gamma_I`.
pub fn dual_basis(psi: &CoordinateSystem, trunc: u32, cap: u32) -> Result<Vec<(MultiIndex, RingElt)>> {
    let mut cache = NablaCache::new(psi, trunc)?;
    let mut out = Vec::new();
    for idx in MultiIndex::all_up_to(psi.n, cap) {
        let g = cache.dual(&idx)?;
        let scaled = &g * &q_multi_factorial(&idx, trunc);
        if !scaled.is_integral() {
            return Err(Error::AssertionFailure(format!(
                "[I]_q! Gamma_I is not integral for I = {idx}"
            )));
        }
        out.push((idx, g));
    }
    Ok(out)
}

/// `prod_i prod_{k < I_i} (e_i - ((1+t)^k - 1)(x_i + c_i)) / [I]_q!`, an
/// independent closed form of the dual element.
pub fn dual_basis_product_formula(psi: &CoordinateSystem, idx: &MultiIndex, trunc: u32) -> Result<RingElt> {
    let c = shifts_for(psi)?;
    let n = psi.n;
    let one = RingElt::one(n, n, trunc);
    let q = &one + &RingElt::t(n, n, trunc);
    let mut acc = one.clone();
    for (i, &k) in idx.0.iter().enumerate() {
        let y = shifted_x(i, n, &c[i], trunc).embed(n, n);
        for j in 0..k {
            let f = &RingElt::eps(i, n, n, trunc) - &(&(&q.pow(j) - &one) * &y);
            acc = &acc * &f;
        }
    }
    acc.exact_divide(&q_multi_factorial(idx, trunc))
}

/// `ξ_I = ∇^I / [I]_q!`.
pub fn xi(psi: &CoordinateSystem, idx: &MultiIndex, trunc: u32) -> Result<DiffOp> {
    NablaCache::new(psi, trunc)?.xi(idx)
}

/// `∇^I`.
pub fn nabla_power(psi: &CoordinateSystem, idx: &MultiIndex, trunc: u32) -> Result<DiffOp> {
    Ok(NablaCache::new(psi, trunc)?.power(idx))
}

/// `D = sum_I a_I ∇^I_ψ`.
pub fn to_nabla_basis(d: &DiffOp, psi: &CoordinateSystem) -> Result<BTreeMap<MultiIndex, RingElt>> {
    NablaCache::new(psi, d.trunc())?.expand(d)
}

/// Integrality mode for membership in `A_ψ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Membership {
    /// p-integral coefficients.
    Prime(u32),
    /// Denominators built only from the listed primes.
    Global(Vec<u32>),
}

pub(crate) fn denominator_within(den: &BigInt, allowed: &[u32]) -> bool {
    let mut d = den.clone();
    for &p in allowed {
        let pb = BigInt::from(p);
        while d.is_multiple_of(&pb) {
            d /= &pb;
        }
    }
    d.is_one()
}

impl Membership {
    pub fn accepts(&self, r: &RingElt) -> bool {
        match self {
            Membership::Prime(p) => r.p_integral(*p),
            Membership::Global(allowed) => r
                .terms()
                .all(|(_, c)| denominator_within(c.denom(), allowed)),
        }
    }
}

/// `true` iff every coefficient of the `∇_ψ`-expansion is integral in the
/// given mode.
pub fn a_psi_member(d: &DiffOp, psi: &CoordinateSystem, mode: &Membership) -> Result<bool> {
    Ok(to_nabla_basis(d, psi)?.values().all(|a| mode.accepts(a)))
}

/// Entries `pair(∇^J, Gamma^γ_I)`: the γ-basis of the self-pair written in
/// the `∇`-dual basis.
pub fn transition_matrix(
    ring: &DeltaRing,
    cap: u32,
) -> Result<BTreeMap<(MultiIndex, MultiIndex), RingElt>> {
    if ring.src != ring.tgt {
        return Err(Error::CoordinateMismatch(
            "transition matrix is defined for a single lift".into(),
        ));
    }
    let mut cache = NablaCache::new(&ring.tgt, ring.trunc)?;
    let basis = ring.gamma_basis(cap, Variant::Standard)?;
    let mut out = BTreeMap::new();
    for b in &basis {
        for j in MultiIndex::all_up_to(ring.n(), b.index.degree()) {
            let v = cache.power(&j).pair(&b.body)?;
            if !v.is_zero() {
                out.insert((b.index.clone(), j), v);
            }
        }
    }
    Ok(out)
}

/// Checks `∇_i(φ(f)) = [p]_q (x_i + c_i)^(p-1) φ(∇_i f)` on the samples and
/// returns the failing ones.
pub fn verify_nabla_phi(
    psi: &CoordinateSystem,
    i: usize,
    samples: &[RingElt],
    trunc: u32,
) -> Result<Vec<RingElt>> {
    let c = shifts_for(psi)?;
    let n = psi.n;
    let nab = nabla(psi, i, trunc)?;
    let factor = &q_integer(psi.p, trunc) * &shifted_x(i, n, &c[i], trunc).pow(psi.p - 1);
    let mut bad = Vec::new();
    for f in samples {
        let f = f.embed(n, 0).with_trunc(trunc.min(f.trunc()));
        let lhs = nab.apply(&psi.frobenius(&f)?);
        let rhs = &factor * &psi.frobenius(&nab.apply(&f))?;
        if lhs != rhs {
            bad.push(f);
        }
    }
    Ok(bad)
}
