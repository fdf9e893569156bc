//! The δ-structure on `R_2[e_1..e_n]` attached to a pair of lifts, the
//! q-divided powers γ and the elements Γ_I.
//!
//! `R_2[e]` is the infinitesimal neighbourhood of the diagonal written in
//! target coordinates: `x_i` carries the target lift, and `tau'(x_i) + e_i`
//! must carry the source lift.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::coords::CoordinateSystem;
use crate::error::{Error, Result};
use crate::ring::{binomial, q_integer, unit_u, MultiIndex, Rat, RingElt};

/// Elements of the q-PD envelope are represented by their image in the
/// rational ε-series ring.
pub type EnvelopeElt = RingElt;

/// How `delta(e_i)` is installed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Taylor formula for `delta(tau'(x) + e)` solved for `delta(e)`.
    Retraction,
    /// `phi(e)` read off from `phi(tau'(x) + e) = F^src(tau'(x) + e)`.
    Stratification,
}

impl std::str::FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retraction" => Ok(Convention::Retraction),
            "stratification" => Ok(Convention::Stratification),
            _ => Err(Error::InvalidInput(format!("unknown convention {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Standard,
    Modified,
}

/// One element `Gamma_I` together with its scaling `n_I` (1 for the
/// standard variant).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisElt {
    pub index: MultiIndex,
    pub body: EnvelopeElt,
    pub scale: Rat,
}

#[derive(Clone, Debug)]
pub struct DeltaRing {
    pub src: CoordinateSystem,
    pub tgt: CoordinateSystem,
    pub tau: Vec<RingElt>,
    pub convention: Convention,
    pub trunc: u32,
    p: u32,
    n: usize,
    x_imgs: Vec<RingElt>,
    e_imgs: Vec<RingElt>,
    t_img: RingElt,
    delta_eps: Vec<RingElt>,
}

/// `p^{v_p(k!)}`.
pub fn p_part_factorial(k: u32, p: u32) -> BigInt {
    let mut v = 0;
    let mut q = p;
    while q <= k {
        v += k / q;
        q = match q.checked_mul(p) {
            Some(q) => q,
            None => break,
        };
    }
    BigInt::from(p).pow(v)
}

/// `[I!]_p = prod_j p^{v_p(I_j!)}`.
pub fn p_part_multi_factorial(i: &MultiIndex, p: u32) -> BigInt {
    i.0.iter()
        .fold(BigInt::one(), |acc, &k| acc * p_part_factorial(k, p))
}

fn digits(mut i: u32, p: u32) -> Vec<u32> {
    let mut out = Vec::new();
    while i > 0 {
        out.push(i % p);
        i /= p;
    }
    out
}

impl DeltaRing {
    /// Identity `tau'` images.
    pub fn identity_tau(n: usize, trunc: u32) -> Vec<RingElt> {
        (0..n).map(|i| RingElt::x(i, n, 0, trunc)).collect()
    }

    pub fn new(
        src: &CoordinateSystem,
        tgt: &CoordinateSystem,
        tau: Option<Vec<RingElt>>,
        convention: Convention,
        trunc: u32,
    ) -> Result<Self> {
        if src.p != tgt.p || src.n != tgt.n {
            return Err(Error::CoordinateMismatch(format!(
                "{} (p={}, n={}) vs {} (p={}, n={})",
                src.label, src.p, src.n, tgt.label, tgt.p, tgt.n
            )));
        }
        let (p, n) = (tgt.p, tgt.n);
        let tau = tau.unwrap_or_else(|| Self::identity_tau(n, trunc));
        if tau.len() != n {
            return Err(Error::InvalidInput("wrong number of tau' images".into()));
        }
        let tau: Vec<RingElt> = tau
            .into_iter()
            .map(|f| {
                if f.ne() != 0 || f.nx() > n {
                    Err(Error::InvalidInput("tau' images must be polynomials in x".into()))
                } else {
                    Ok(f.embed(n, 0).with_trunc(trunc.min(f.trunc())).with_trunc(trunc))
                }
            })
            .collect::<Result<_>>()?;
        let x_imgs: Vec<RingElt> = tgt.phi_images(trunc).iter().map(|f| f.embed(n, n)).collect();
        let t_img = tgt.t_image(n, n, trunc);
        let mut ring = DeltaRing {
            src: src.clone(),
            tgt: tgt.clone(),
            tau,
            convention,
            trunc,
            p,
            n,
            x_imgs,
            e_imgs: Vec::new(),
            t_img,
            delta_eps: Vec::new(),
        };
        let de = ring.delta_on_epsilon_by(convention)?;
        ring.e_imgs = (0..n)
            .map(|i| {
                let e = RingElt::eps(i, n, n, trunc);
                &e.pow(p) + &de[i].scale_int(p as i64)
            })
            .collect();
        ring.delta_eps = de;
        Ok(ring)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn zero(&self) -> RingElt {
        RingElt::zero(self.n, self.n, self.trunc)
    }

    pub fn one(&self) -> RingElt {
        RingElt::one(self.n, self.n, self.trunc)
    }

    pub fn eps(&self, i: usize) -> RingElt {
        RingElt::eps(i, self.n, self.n, self.trunc)
    }

    pub fn x(&self, i: usize) -> RingElt {
        RingElt::x(i, self.n, self.n, self.trunc)
    }

    /// `tau(f) = f(tau'(x) + e)` for `f` in the source ring.
    pub fn tau_of(&self, f: &RingElt) -> RingElt {
        let imgs: Vec<RingElt> = (0..self.n)
            .map(|i| &self.tau[i].embed(self.n, self.n) + &self.eps(i))
            .collect();
        f.embed(self.n, 0).with_trunc(self.trunc.min(f.trunc())).substitute(&imgs, &[], None)
    }

    /// `tau'(f) = f(tau'(x))`, staying in `R_2`.
    pub fn tau_prime_of(&self, f: &RingElt) -> RingElt {
        f.embed(self.n, 0)
            .with_trunc(self.trunc.min(f.trunc()))
            .substitute(&self.tau, &[], None)
    }

    fn delta_on_epsilon_by(&self, convention: Convention) -> Result<Vec<RingElt>> {
        let (p, n, trunc) = (self.p, self.n, self.trunc);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let xi = RingElt::x(i, n, 0, trunc);
            let tau_xi = self.tau[i].embed(n, n);
            let phi_tau = self.tgt.frobenius(&self.tau[i])?.embed(n, n);
            let e = self.eps(i);
            let d = match convention {
                Convention::Stratification => {
                    let f1 = self.src.phi_image(i, trunc);
                    let phi_e = &self.tau_of(&f1) - &phi_tau;
                    (&phi_e - &e.pow(p)).div_int(p as i64)
                }
                Convention::Retraction => {
                    // delta(a + b) = delta(a) + delta(b) - sum_{0<j<p} binom(p,j)/p a^j b^(p-j)
                    let delta_src = (&self.src.phi_image(i, trunc) - &xi.pow(p)).div_int(p as i64);
                    let mut taylor = self.zero();
                    let cap = delta_src.x_degree();
                    for k in MultiIndex::all_up_to(n, cap) {
                        let deriv = delta_src.divided_derivative_multi(&k);
                        if deriv.is_zero() {
                            continue;
                        }
                        let mut term = self.tau_prime_of(&deriv).embed(n, n);
                        for (j, &kj) in k.0.iter().enumerate() {
                            term = &term * &self.eps(j).pow(kj);
                        }
                        taylor = &taylor + &term;
                    }
                    let tau_delta = (&phi_tau - &tau_xi.pow(p)).div_int(p as i64);
                    let mut cross = self.zero();
                    for j in 1..p {
                        let c = Rat::new(binomial(p, j), BigInt::from(p));
                        cross = &cross + &(&tau_xi.pow(j) * &e.pow(p - j)).scale(&c);
                    }
                    &(&taylor - &tau_delta) + &cross
                }
            };
            out.push(d);
        }
        Ok(out)
    }

    /// The installed `delta(e_i)`.
    pub fn delta_on_epsilon(&self) -> &[RingElt] {
        &self.delta_eps
    }

    /// Recomputes `delta(e_i)` under the other convention.
    pub fn delta_on_epsilon_with(&self, convention: Convention) -> Result<Vec<RingElt>> {
        self.delta_on_epsilon_by(convention)
    }

    /// Checks `delta(tau(x_i)) = tau(delta^src(x_i))` for each i.
    pub fn oracle_check(&self) -> Result<()> {
        let (p, n, trunc) = (self.p, self.n, self.trunc);
        for i in 0..n {
            let y = &self.tau[i].embed(n, n) + &self.eps(i);
            let lhs = self.delta(&y)?;
            let xi = RingElt::x(i, n, 0, trunc);
            let delta_src = (&self.src.phi_image(i, trunc) - &xi.pow(p)).div_int(p as i64);
            let rhs = self.tau_of(&delta_src);
            if lhs != rhs {
                return Err(Error::AssertionFailure(format!(
                    "delta(tau(x{})) = {lhs} but tau(delta(x{})) = {rhs}",
                    i + 1,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// The Frobenius lift on `R_2[e]`.
    pub fn frobenius(&self, f: &RingElt) -> RingElt {
        let f = f.embed(self.n.max(f.nx()), self.n.max(f.ne()));
        let trunc = self.trunc.min(f.trunc());
        let xs: Vec<RingElt> = self.x_imgs.iter().map(|g| g.with_trunc(trunc)).collect();
        let es: Vec<RingElt> = self.e_imgs.iter().map(|g| g.with_trunc(trunc)).collect();
        f.substitute(&xs, &es, Some(&self.t_img.with_trunc(trunc)))
    }

    /// `(phi(f) - f^p)/p` without an integrality check; divided-power
    /// elements are not p-integral but still need it.
    pub fn delta_raw(&self, f: &RingElt) -> RingElt {
        (&self.frobenius(f) - &f.pow(self.p)).div_int(self.p as i64)
    }

    /// δ on p-integral elements.
    pub fn delta(&self, f: &RingElt) -> Result<RingElt> {
        if !f.p_integral(self.p) {
            return Err(Error::NotDivisible(format!(
                "delta needs a {}-integral argument",
                self.p
            )));
        }
        Ok(self.delta_raw(f))
    }

    /// `[p]_q` in this ring.
    pub fn qp(&self) -> RingElt {
        q_integer(self.p, self.trunc)
    }

    /// `d = u [p]_q`.
    pub fn d_modified(&self) -> Result<RingElt> {
        Ok(&unit_u(self.p, self.trunc)? * &self.qp())
    }

    /// `phi(a)/d - delta(a)`.
    pub fn gamma(&self, a: &RingElt, d: &RingElt) -> Result<RingElt> {
        let q = self.frobenius(a).exact_divide(d)?;
        Ok(&q - &self.delta_raw(a))
    }

    /// `gamma_p(a) = phi(a)/[p]_q - delta(a)`.
    pub fn gamma_p(&self, a: &RingElt) -> Result<RingElt> {
        self.gamma(a, &self.qp())
    }

    /// `gamma_{p^k}`, the k-fold iterate of `gamma_p`.
    pub fn gamma_p_power(&self, k: u32, a: &RingElt) -> Result<RingElt> {
        let mut g = a.clone();
        for _ in 0..k {
            g = self.gamma_p(&g)?;
        }
        Ok(g)
    }

    /// `gamma_i(a) = prod_k gamma_{p^k}(a)^{i_k}` over the p-adic digits of i.
    pub fn gamma_composite(&self, i: u32, a: &RingElt) -> Result<RingElt> {
        self.composite_with(i, a, |k, a| self.gamma_p_power(k, a))
    }

    fn composite_with<F>(&self, i: u32, a: &RingElt, level: F) -> Result<RingElt>
    where
        F: Fn(u32, &RingElt) -> Result<RingElt>,
    {
        let mut acc = self.one();
        for (k, &dk) in digits(i, self.p).iter().enumerate() {
            if dk > 0 {
                acc = &acc * &level(k as u32, a)?.pow(dk);
            }
        }
        Ok(acc)
    }

    /// Level k of the modified recursion. Both displayed forms are computed
    /// at every level and must agree.
    pub fn gamma_modified_recursion(&self, k: u32, a: &RingElt) -> Result<RingElt> {
        let p = self.p;
        let m = p - 1;
        let d = self.d_modified()?;
        let dp = &d - &RingElt::from_int(p as i64, 0, 0, self.trunc);
        let mut g = a.clone();
        for level in 1..=k {
            let big_m = m.pow(level - 1);
            let dm = d.pow(big_m);
            let dpm = dp.pow(big_m);
            let ratio = self.frobenius(&g).exact_divide(&dm)?;
            let coeff = (&dm - &dpm).div_int(p as i64);
            let form1 = &(-self.delta_raw(&g)) + &(&coeff * &ratio);
            let form2 = (&g.pow(p) - &(&dpm * &ratio)).div_int(p as i64);
            if form1 != form2 {
                return Err(Error::AssertionFailure(format!(
                    "modified recursion forms disagree at level {level}"
                )));
            }
            g = form1;
        }
        Ok(g)
    }

    /// `phi(gamma_{p^k}(a)) / d^{m^k}`, checked to lie in the envelope
    /// lattice spanned by the γ-basis.
    pub fn modified_divisibility_check(&self, k: u32, a: &RingElt) -> Result<RingElt> {
        let g = self.gamma_modified_recursion(k, a)?;
        let d = self.d_modified()?;
        let q = self.frobenius(&g).exact_divide(&d.pow((self.p - 1).pow(k)))?;
        let coords = self.envelope_coordinates(&q)?;
        for (i, c) in &coords {
            if !c.p_integral(self.p) {
                return Err(Error::AssertionFailure(format!(
                    "phi(gamma_(p^{k})) / d^(m^{k}) has non-integral coordinate at {i}"
                )));
            }
        }
        Ok(q)
    }

    /// `gamma^mod_i` over digits, using the modified `gamma_{p^k}`.
    pub fn gamma_modified_composite(&self, i: u32, a: &RingElt) -> Result<RingElt> {
        self.composite_with(i, a, |k, a| self.gamma_modified_recursion(k, a))
    }

    fn gamma_table(&self, cap: u32, variant: Variant) -> Result<Vec<Vec<RingElt>>> {
        // table[j][i] = gamma_i(e_j)
        let mut levels: Vec<Vec<RingElt>> = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let e = self.eps(j);
            let mut pk = Vec::new();
            let mut k = 0u32;
            while self.p.pow(k) <= cap.max(1) {
                pk.push(match variant {
                    Variant::Standard => self.gamma_p_power(k, &e)?,
                    Variant::Modified => self.gamma_modified_recursion(k, &e)?,
                });
                k += 1;
            }
            let mut row = Vec::with_capacity(cap as usize + 1);
            for i in 0..=cap {
                let mut acc = self.one();
                for (k, &dk) in digits(i, self.p).iter().enumerate() {
                    if dk > 0 {
                        acc = &acc * &pk[k].pow(dk);
                    }
                }
                row.push(acc);
            }
            levels.push(row);
        }
        Ok(levels)
    }

    /// `Gamma_I` for `|I| <= cap`, in canonical index order. Asserts the
    /// congruence `Gamma_I = e^I/[I!]_p mod t`, and for the modified variant
    /// `n_I Gamma_I = e^I mod t^(p-1)` with `n_I = [I!]_p`.
    pub fn gamma_basis(&self, cap: u32, variant: Variant) -> Result<Vec<BasisElt>> {
        let table = self.gamma_table(cap, variant)?;
        let mut out = Vec::new();
        for idx in MultiIndex::all_up_to(self.n, cap) {
            let mut body = self.one();
            let mut mono = self.one();
            for (j, &k) in idx.0.iter().enumerate() {
                body = &body * &table[j][k as usize];
                mono = &mono * &self.eps(j).pow(k);
            }
            let np = Rat::from_integer(p_part_multi_factorial(&idx, self.p));
            let expect = mono.scale(&(Rat::one() / &np));
            if !body.congruent_mod_t(&expect, 1) {
                return Err(Error::AssertionFailure(format!(
                    "Gamma_{idx} is not e^I/[I!]_p mod t"
                )));
            }
            let scale = match variant {
                Variant::Standard => Rat::one(),
                Variant::Modified => {
                    if !body.scale(&np).congruent_mod_t(&mono, self.p - 1) {
                        return Err(Error::AssertionFailure(format!(
                            "n_I Gamma_{idx} is not e^I mod t^(p-1)"
                        )));
                    }
                    np
                }
            };
            out.push(BasisElt {
                index: idx,
                body,
                scale,
            });
        }
        Ok(out)
    }

    /// Coordinates of `e` in the standard γ-basis. The top e-degree part of
    /// `Gamma_I` is a unit of `Q[t]` times `e^I`, so the expansion is a
    /// triangular solve from the top degree down.
    pub fn envelope_coordinates(&self, e: &RingElt) -> Result<BTreeMap<MultiIndex, RingElt>> {
        let cap = e.eps_degree();
        let basis = self.gamma_basis(cap, Variant::Standard)?;
        self.coordinates_in(e, &basis)
    }

    /// Expands `e` in a basis whose elements are triangular in e-degree.
    pub fn coordinates_in(
        &self,
        e: &RingElt,
        basis: &[BasisElt],
    ) -> Result<BTreeMap<MultiIndex, RingElt>> {
        let n = self.n;
        let mut rest = e.embed(n, n).with_trunc(self.trunc.min(e.trunc()));
        let by_index: BTreeMap<&MultiIndex, &BasisElt> = basis.iter().map(|b| (&b.index, b)).collect();
        let mut out = BTreeMap::new();
        while !rest.is_zero() {
            let deg = rest.eps_degree();
            let parts = rest.eps_parts();
            let mut changed = false;
            for (idx, coeff) in parts.iter().rev() {
                if idx.degree() != deg {
                    continue;
                }
                let b = by_index.get(idx).ok_or_else(|| {
                    Error::EpsilonCapExceeded {
                        degree: deg,
                        cap: basis.iter().map(|b| b.index.degree()).max().unwrap_or(0),
                    }
                })?;
                let lead = b.body.eps_coefficient(idx);
                let a = coeff.exact_divide(&lead)?;
                rest = &rest - &(&a * &b.body);
                out.insert(idx.clone(), a);
                changed = true;
            }
            if !changed {
                return Err(Error::AssertionFailure("basis is not triangular".into()));
            }
            if rest.eps_degree() >= deg && !rest.is_zero() {
                // leading parts must have cancelled
                let top: Vec<_> = rest
                    .eps_parts()
                    .into_iter()
                    .filter(|(k, v)| k.degree() >= deg && !v.is_zero())
                    .collect();
                if !top.is_empty() {
                    return Err(Error::AssertionFailure("top-degree terms did not cancel".into()));
                }
            }
        }
        out.retain(|_, v| !v.is_zero());
        Ok(out)
    }

    /// `true` iff `e` has p-integral coordinates in the γ-basis.
    pub fn in_envelope(&self, e: &RingElt) -> Result<bool> {
        Ok(self
            .envelope_coordinates(e)?
            .values()
            .all(|c| c.p_integral(self.p)))
    }
}

/// Convenience for the common single-lift case.
pub fn self_pair(psi: &CoordinateSystem, convention: Convention, trunc: u32) -> Result<DeltaRing> {
    DeltaRing::new(psi, psi, None, convention, trunc)
}
