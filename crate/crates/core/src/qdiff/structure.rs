//! Structure constants `ξ_J ∘ ξ_I = sum_K t_{I,J}(K) ξ_K` for the basis
//! `ξ_I = ∇^I/[I]_q!`, dual to `Gamma'_I = [I]_q! Gamma_I`.

use std::collections::BTreeMap;

use super::nabla::NablaCache;
use crate::coords::CoordinateSystem;
use crate::error::{Error, Result};
use crate::ring::{MultiIndex, RingElt};

/// Keyed by `(I, J, K)`.
pub type StructureTable = BTreeMap<(MultiIndex, MultiIndex, MultiIndex), RingElt>;

/// Route (a): compose the operators and read off coefficients by pairing
/// with `Gamma'_K`, for `|K| <= cap`.
pub fn structure_constants_route_a(
    cache: &mut NablaCache,
    i: &MultiIndex,
    j: &MultiIndex,
    cap: u32,
) -> Result<BTreeMap<MultiIndex, RingElt>> {
    let comp = cache.xi(j)?.compose(&cache.xi(i)?);
    let mut out = BTreeMap::new();
    for k in MultiIndex::all_up_to(cache.n(), cap) {
        let v = comp.pair(&cache.dual_integral(&k)?)?;
        if !v.is_zero() {
            out.insert(k, v);
        }
    }
    Ok(out)
}

/// Route (b): in the ring with e-variables `(e, u)`, expand
/// `Gamma'_K(x, e + u)` in the products `Gamma'_I(x + e, u) Gamma'_J(x, e)`.
/// Each product is `u^I e^J` modulo t, so the expansion is found by
/// iterating on the residual, gaining one power of t per round.
pub fn structure_constants_route_b(
    cache: &mut NablaCache,
    k: &MultiIndex,
) -> Result<BTreeMap<(MultiIndex, MultiIndex), RingElt>> {
    let n = cache.n();
    let trunc = cache.trunc;
    let ne = 2 * n;
    let x = |i: usize| RingElt::x(i, n, ne, trunc);
    let e = |i: usize| RingElt::eps(i, n, ne, trunc);
    let u = |i: usize| RingElt::eps(n + i, n, ne, trunc);
    let xs: Vec<RingElt> = (0..n).map(x).collect();
    let xe: Vec<RingElt> = (0..n).map(|i| &x(i) + &e(i)).collect();
    let es: Vec<RingElt> = (0..n).map(e).collect();
    let us: Vec<RingElt> = (0..n).map(u).collect();
    let eu: Vec<RingElt> = (0..n).map(|i| &e(i) + &u(i)).collect();

    let target = cache.dual_integral(k)?.substitute(&xs, &eu, None);
    let split = |m: &MultiIndex| -> (MultiIndex, MultiIndex) {
        // exponent layout is (e, u): J from e, I from u
        (MultiIndex(m.0[n..].to_vec()), MultiIndex(m.0[..n].to_vec()))
    };
    let mut products: BTreeMap<(MultiIndex, MultiIndex), RingElt> = BTreeMap::new();
    let mut coeffs: BTreeMap<(MultiIndex, MultiIndex), RingElt> = BTreeMap::new();
    let mut residual = target.clone();
    for _round in 0..=trunc {
        if residual.is_zero() {
            break;
        }
        for (m, c) in residual.eps_parts() {
            let key = split(&m);
            if !products.contains_key(&key) {
                let a = cache.dual_integral(&key.0)?.substitute(&xe, &us, None);
                let b = cache.dual_integral(&key.1)?.substitute(&xs, &es, None);
                products.insert(key.clone(), &a * &b);
            }
            let entry = coeffs
                .entry(key)
                .or_insert_with(|| RingElt::zero(n, 0, trunc));
            *entry = &*entry + &c;
        }
        let mut sum = RingElt::zero(n, ne, trunc);
        for (key, c) in &coeffs {
            sum = &sum + &(c * &products[key]);
        }
        residual = &target - &sum;
    }
    if !residual.is_zero() {
        return Err(Error::AssertionFailure(format!(
            "expansion of Gamma'_{k} did not terminate"
        )));
    }
    coeffs.retain(|_, v| !v.is_zero());
    Ok(coeffs)
}

/// `t_{I,J}(K)` for `|K| <= cap`, computed by both routes and compared.
pub fn structure_constants(
    psi: &CoordinateSystem,
    i: &MultiIndex,
    j: &MultiIndex,
    trunc: u32,
    cap: u32,
) -> Result<BTreeMap<MultiIndex, RingElt>> {
    if i.degree() + j.degree() > cap {
        return Err(Error::InvalidInput(format!(
            "|I| + |J| = {} exceeds the cap {cap}",
            i.degree() + j.degree()
        )));
    }
    let mut cache = NablaCache::new(psi, trunc)?;
    let a = structure_constants_route_a(&mut cache, i, j, cap)?;
    for k in MultiIndex::all_up_to(psi.n, cap) {
        let b = structure_constants_route_b(&mut cache, &k)?;
        let vb = b.get(&(i.clone(), j.clone()));
        let va = a.get(&k);
        let same = match (va, vb) {
            (None, None) => true,
            (Some(x), Some(y)) => x == y,
            (Some(x), None) | (None, Some(x)) => x.is_zero(),
        };
        if !same {
            return Err(Error::AssertionFailure(format!(
                "t_(I={i},J={j})(K={k}) differs between the two routes"
            )));
        }
    }
    Ok(a)
}

/// Full table over `|I| + |J| <= cap`, `|K| <= cap`, from route (a), with
/// route (b) cross-checked when `check` is set.
pub fn structure_table(
    cache: &mut NablaCache,
    cap: u32,
    check: bool,
) -> Result<StructureTable> {
    let n = cache.n();
    let mut table = StructureTable::new();
    let idx = MultiIndex::all_up_to(n, cap);
    for i in &idx {
        for j in &idx {
            if i.degree() + j.degree() > cap {
                continue;
            }
            for (k, v) in structure_constants_route_a(cache, i, j, cap)? {
                table.insert((i.clone(), j.clone(), k), v);
            }
        }
    }
    if check {
        for k in &idx {
            let b = structure_constants_route_b(cache, k)?;
            for ((i, j), v) in &b {
                if table.get(&(i.clone(), j.clone(), k.clone())) != Some(v) {
                    return Err(Error::AssertionFailure(format!(
                        "t_(I={i},J={j})(K={k}) differs between the two routes"
                    )));
                }
            }
            for ((i, j, kk), _) in table.iter().filter(|((_, _, kk), _)| kk == k) {
                if !b.contains_key(&(i.clone(), j.clone())) {
                    return Err(Error::AssertionFailure(format!(
                        "t_(I={i},J={j})(K={kk}) missing from the substitution route"
                    )));
                }
            }
        }
    }
    Ok(table)
}
