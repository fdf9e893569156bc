//! The functors `F_s (M, ∇) = (M, ∇ ∘ ψ_s)` with `ψ_s(ζ) = s ζ s^-1`, and
//! the natural isomorphisms between them.
//!
//! `F_s(M)` has the module structure `f * m = ∇(s f s^-1)(m)`. The basis
//! `e_j` stays a basis for it (the twist is trivial mod t), and transported
//! matrices are written in that basis.

use super::{
    basis_vector, column, from_columns, mat_mul, vec_add, vec_is_zero, vec_sub, Action, Matrix,
    QConnection, Vector,
};
use crate::error::{Error, Result};
use crate::qdiff::{DiffOp, NablaCache};
use crate::ring::RingElt;
use crate::sections::{compose_sections, conjugate, invert_operator, Section};

struct Twist {
    d_s: DiffOp,
    d_inv: DiffOp,
}

impl Twist {
    fn new(s: &Section, trunc: u32) -> Result<Self> {
        if s.trunc() < trunc {
            return Err(Error::InvalidInput(format!(
                "section is truncated at {} below the connection's {trunc}",
                s.trunc()
            )));
        }
        let d_s = s.operator()?.truncate(trunc);
        let d_inv = invert_operator(&d_s)?;
        Ok(Twist { d_s, d_inv })
    }

    fn conj(&self, z: &DiffOp) -> DiffOp {
        self.d_s.compose(z).compose(&self.d_inv)
    }

    /// `sum_k g_k * e_k`.
    fn combine(&self, act: &mut Action, g: &Vector) -> Result<Vector> {
        let (r, n, trunc) = (act.conn.rank, act.conn.n(), act.conn.trunc);
        let mut out = vec![RingElt::zero(n, 0, trunc); r];
        for (k, gk) in g.iter().enumerate() {
            if gk.is_zero() {
                continue;
            }
            let op = self.conj(&DiffOp::mul_by(gk));
            out = vec_add(&out, &act.apply(&op, &basis_vector(r, k, n, trunc))?);
        }
        Ok(out)
    }

    /// Coordinates of `v` in the basis `e_j` of `F_s(M)`. The map
    /// `g -> sum_k g_k * e_k` is the identity mod t, so the correction
    /// iteration gains a power of t each round.
    fn coords(&self, act: &mut Action, v: &Vector) -> Result<Vector> {
        let mut g = v.clone();
        for _ in 0..=act.conn.trunc {
            let r = vec_sub(v, &self.combine(act, &g)?);
            if vec_is_zero(&r) {
                return Ok(g);
            }
            g = vec_add(&g, &r);
        }
        Err(Error::AssertionFailure(
            "twisted coordinates did not converge".into(),
        ))
    }
}

fn check_integral(m: &Matrix, p: u32, what: &str) -> Result<()> {
    if m.iter().flatten().all(|f| f.p_integral(p)) {
        Ok(())
    } else {
        Err(Error::NotDivisible(format!("{what} is not {p}-integral")))
    }
}

/// `F_s(M)` for `s` from `ψ1` to `ψ2` and `M` over `ψ2`; the result lives
/// over `ψ1`.
pub fn transport(s: &Section, m: &QConnection) -> Result<QConnection> {
    if s.tgt != m.base {
        return Err(Error::CoordinateMismatch(format!(
            "section ends at {} but the connection lives over {}",
            s.tgt.label, m.base.label
        )));
    }
    let trunc = m.trunc;
    let p = m.base.p;
    let tw = Twist::new(s, trunc)?;
    let mut act = Action::new(m)?;
    let src_cache = NablaCache::new(&s.src, trunc)?;
    let mut mats = Vec::with_capacity(m.n());
    for i in 0..m.n() {
        let z = tw.conj(src_cache.generator(i));
        if act.cache().expand(&z)?.values().any(|a| !a.p_integral(p)) {
            return Err(Error::NotDivisible(format!(
                "ψ_s(∇_{i}) leaves the {p}-integral operator algebra"
            )));
        }
        let image = act.apply_basis(&z)?;
        let cols = (0..m.rank)
            .map(|j| tw.coords(&mut act, &column(&image, j)))
            .collect::<Result<Vec<_>>>()?;
        let mat = from_columns(&cols);
        check_integral(&mat, p, "transported matrix")?;
        mats.push(mat);
    }
    QConnection::new(&s.src, trunc, mats)
}

/// The matrix of `u_ξ = ∇(ξ): F_s(M) -> F_{s'}(M)`, written in the basis of
/// `F_{s'}(M)`; `ξ` is the operator with `s' = ξ ∘ s`.
pub fn natural_iso(xi: &DiffOp, s_prime: &Section, m: &QConnection) -> Result<Matrix> {
    let tw = Twist::new(s_prime, m.trunc)?;
    let mut act = Action::new(m)?;
    let image = act.apply_basis(&xi.truncate(m.trunc))?;
    let cols = (0..m.rank)
        .map(|j| tw.coords(&mut act, &column(&image, j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(from_columns(&cols))
}

/// `F_s(φ)` for an R-linear `φ: M1 -> M2` given by its matrix.
pub fn transport_morphism(s: &Section, m2: &QConnection, phi: &Matrix) -> Result<Matrix> {
    let tw = Twist::new(s, m2.trunc)?;
    let mut act = Action::new(m2)?;
    let cols = (0..phi[0].len())
        .map(|j| tw.coords(&mut act, &column(phi, j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(from_columns(&cols))
}

/// `U` commutes with the generators: `U A_i = ∇^{M2}_i(U)` columnwise.
pub fn is_morphism(m1: &QConnection, m2: &QConnection, u: &Matrix) -> Result<bool> {
    if m1.base != m2.base || m1.trunc != m2.trunc {
        return Err(Error::CoordinateMismatch("connections over different bases".into()));
    }
    let act = Action::new(m2)?;
    for i in 0..m1.n() {
        let ua = mat_mul(u, &m1.matrices[i]);
        for j in 0..m1.rank {
            if act.nabla_vec(i, &column(u, j)) != column(&ua, j) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The operator `ζ` with `target = ζ ∘ chain[last] ∘ ... ∘ chain[0]`.
pub fn discrepancy(target: &Section, chain: &[&Section]) -> Result<DiffOp> {
    let (first, rest) = chain
        .split_first()
        .ok_or_else(|| Error::InvalidInput("empty chain".into()))?;
    let mut acc = (*first).clone();
    for s in rest {
        acc = compose_sections(s, &acc)?;
    }
    if acc.src != target.src || acc.tgt != target.tgt {
        return Err(Error::CoordinateMismatch(
            "chain and target connect different lifts".into(),
        ));
    }
    Ok(target.operator()?.compose(&invert_operator(&acc.operator()?)?))
}

/// Sections `s_{j,i}` from lift `i` to lift `j`.
#[derive(Clone, Debug)]
pub struct CoherenceSections {
    pub s10: Section,
    pub s21: Section,
    pub s32: Section,
    pub s20: Section,
    pub s31: Section,
    pub s30: Section,
}

/// The square `t_{3,1,0} ∘ F_{s_{1,0}}(t_{3,2,1}) = t_{3,2,0} ∘ t_{2,1,0}` on
/// `M` over lift 3, compared on the basis.
pub fn coherence_check(cs: &CoherenceSections, m: &QConnection) -> Result<bool> {
    if cs.s30.tgt != m.base {
        return Err(Error::CoordinateMismatch(
            "connection does not live over the last lift".into(),
        ));
    }
    let trunc = m.trunc;
    let z321 = discrepancy(&cs.s31, &[&cs.s21, &cs.s32])?.truncate(trunc);
    let z210 = discrepancy(&cs.s20, &[&cs.s10, &cs.s21])?.truncate(trunc);
    let z320 = discrepancy(&cs.s30, &[&cs.s20, &cs.s32])?.truncate(trunc);
    let z310 = discrepancy(&cs.s30, &[&cs.s10, &cs.s31])?.truncate(trunc);
    // t_{2,1,0} at F_{s32}(M) acts through ψ_{s32}
    let z210 = conjugate(&cs.s32, &z210)?.truncate(trunc);
    let mut act = Action::new(m)?;
    let (r, n) = (m.rank, m.n());
    for j in 0..r {
        let e = basis_vector(r, j, n, trunc);
        let left = act.apply(&z321, &e)?;
        let left = act.apply(&z310, &left)?;
        let right = act.apply(&z210, &e)?;
        let right = act.apply(&z320, &right)?;
        if left != right {
            return Ok(false);
        }
    }
    Ok(true)
}
