use num_bigint::BigInt;
use num_traits::Zero;

use super::{binomial, rat, MultiIndex, Rat, RingElt};
use crate::error::{Error, Result};

/// `[k]_q = 1 + q + .. + q^(k-1)` in powers of `t = q - 1`, i.e.
/// `sum_i binom(k, i+1) t^i`.
pub fn q_integer(k: u32, n: u32) -> RingElt {
    let terms = (0..k.min(n)).map(|i| {
        let mut m = super::Exps::new();
        m.push(i);
        (m, Rat::from_integer(binomial(k, i + 1)))
    });
    RingElt::from_terms(0, 0, n, terms).expect("shape is fixed")
}

/// `[k]_q! = [1]_q [2]_q .. [k]_q`, with `[0]_q! = 1`.
pub fn q_factorial(k: u32, n: u32) -> RingElt {
    (1..=k).fold(RingElt::one(0, 0, n), |acc, j| &acc * &q_integer(j, n))
}

/// `[I]_q! = prod_k [I_k]_q!`.
pub fn q_multi_factorial(i: &MultiIndex, n: u32) -> RingElt {
    i.0.iter()
        .fold(RingElt::one(0, 0, n), |acc, &k| &acc * &q_factorial(k, n))
}

/// Gaussian binomial `[a choose b]_q`, built from the q-Pascal rule
/// `[a choose b] = [a-1 choose b-1] + q^b [a-1 choose b]` so no division
/// is needed.
pub fn gauss_binomial(a: u32, b: u32, n: u32) -> RingElt {
    if b > a {
        return RingElt::zero(0, 0, n);
    }
    let q = &RingElt::one(0, 0, n) + &RingElt::t(0, 0, n);
    // row[j] = [r choose j]
    let mut row = vec![RingElt::one(0, 0, n)];
    for r in 1..=a {
        let mut next = Vec::with_capacity(r as usize + 1);
        for j in 0..=r {
            let left = if j >= 1 { row[j as usize - 1].clone() } else { RingElt::zero(0, 0, n) };
            let right = if j < r {
                &q.pow(j) * &row[j as usize]
            } else {
                RingElt::zero(0, 0, n)
            };
            next.push(&left + &right);
        }
        row = next;
    }
    row.swap_remove(b as usize)
}

/// The unit `u` with `u = 1 mod t` and `u [p]_q = p mod t^min(N, p-1)`.
///
/// The t^j coefficient of `[p]_q` is `binom(p, j+1)`, divisible by p for
/// `j < p-1`, so each new coefficient is a p-integral solve. Coefficients
/// from `t^(p-1)` on are set to zero.
pub fn unit_u(p: u32, n: u32) -> Result<RingElt> {
    if p == 2 {
        return Err(Error::PrimeTwoUnsupported);
    }
    if p < 2 {
        return Err(Error::InvalidInput(format!("{p} is not a prime")));
    }
    let top = n.min(p - 1) as usize;
    let mut u: Vec<Rat> = vec![rat(1)];
    for j in 1..top {
        let mut s = Rat::zero();
        for (i, ui) in u.iter().enumerate() {
            s += ui * Rat::from_integer(binomial(p, (j - i + 1) as u32));
        }
        u.push(-s / Rat::from_integer(BigInt::from(p)));
    }
    let terms = u.into_iter().enumerate().map(|(i, c)| {
        let mut m = super::Exps::new();
        m.push(i as u32);
        (m, c)
    });
    RingElt::from_terms(0, 0, n, terms)
}
