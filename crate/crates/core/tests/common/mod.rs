#![allow(dead_code)]

use qweyl::coords::CoordinateSystem;
use qweyl::qconn::QConnection;
use qweyl::qdiff::DiffOp;
use qweyl::ring::{rat_frac, MultiIndex, RingElt};
use qweyl::sections::Section;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seed from `QWEYL_SEED`, 0 when unset.
pub fn seed() -> u64 {
    std::env::var("QWEYL_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

pub fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed());
    r.set_stream(stream);
    r
}

pub fn mi(v: &[u32]) -> MultiIndex {
    MultiIndex(v.to_vec())
}

pub fn small_rat(r: &mut impl Rng) -> qweyl::Rat {
    let num = r.gen_range(-9i64..=9);
    let den = [1i64, 1, 1, 2, 3, 4, 5][r.gen_range(0..7)];
    rat_frac(num, den)
}

/// A random element with up to `terms` monomials; `t_min` is a lower
/// bound for the t-exponents.
pub fn ring_elt(r: &mut impl Rng, nx: usize, ne: usize, trunc: u32, terms: usize, t_min: u32) -> RingElt {
    let mut acc = RingElt::zero(nx, ne, trunc);
    if t_min >= trunc {
        return acc;
    }
    for _ in 0..r.gen_range(0..=terms) {
        let t = r.gen_range(t_min..trunc);
        let x: Vec<u32> = (0..nx).map(|_| r.gen_range(0..=3)).collect();
        let e: Vec<u32> = (0..ne).map(|_| r.gen_range(0..=2)).collect();
        acc = &acc + &RingElt::monomial(small_rat(r), t, &x, &e, trunc);
    }
    acc
}

/// A random operator `sum_K c_K d^[K]` with `|K| <= order`.
pub fn diff_op(r: &mut impl Rng, n: usize, trunc: u32, order: u32, t_min: u32) -> DiffOp {
    let terms = MultiIndex::all_up_to(n, order)
        .into_iter()
        .map(|k| (k, ring_elt(r, n, 0, trunc, 3, t_min)));
    DiffOp::from_terms(n, trunc, terms).expect("well-formed terms")
}

pub fn lift(r: &mut impl Rng, p: u32, n: usize) -> CoordinateSystem {
    let cs: Vec<i64> = (0..n).map(|_| r.gen_range(-2..=2)).collect();
    CoordinateSystem::shift_each(p, &cs).expect("shift lift")
}

/// A random section: identity plus a multiple of t, with identity `tau'`
/// or `tau' = x + t g`.
pub fn section(r: &mut impl Rng, p: u32, n: usize, trunc: u32) -> Section {
    let (a, b) = (lift(r, p, n), lift(r, p, n));
    let op = DiffOp::identity(n, trunc).add(&diff_op(r, n, trunc, 3, 1));
    let tau = if r.gen_bool(0.5) {
        None
    } else {
        Some(
            (0..n)
                .map(|i| &RingElt::x(i, n, 0, trunc) + &ring_elt(r, n, 0, trunc, 2, 1))
                .collect(),
        )
    };
    Section::new(&a, &b, tau, op).expect("section")
}

/// A random connection of rank `rank` with integral entries divisible by
/// `p^2`. Usually quasi-nilpotent, not necessarily flat for n > 1.
pub fn connection(r: &mut impl Rng, p: u32, n: usize, rank: usize, trunc: u32) -> QConnection {
    let base = lift(r, p, n);
    let mats = (0..n)
        .map(|_| {
            (0..rank)
                .map(|_| {
                    (0..rank)
                        .map(|_| {
                            ring_elt(r, n, 0, trunc, 2, 0)
                                .map_coeffs(|c| qweyl::Rat::from_integer(c.numer().clone()))
                                .scale_int((p * p) as i64)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    QConnection::new(&base, trunc, mats).expect("connection")
}
