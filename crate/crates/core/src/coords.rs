//! Frobenius lifts on `Z[x_1..x_n]`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::Zero;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ring::{parse_poly, rat, Rat, RingElt};

/// Truncation used for the t-free polynomials `F_i`. Mixed arithmetic
/// always truncates to the smaller order, so this never leaks.
const POLY_TRUNC: u32 = u32::MAX;

/// A Frobenius lift `x_i -> F_i(x)` with `F_i = x_i^p mod p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoordinateSystem {
    pub p: u32,
    pub n: usize,
    phi: Vec<RingElt>,
    pub label: String,
}

pub fn is_prime(p: u32) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

impl CoordinateSystem {
    /// `F_i = x_i^p`.
    pub fn standard(p: u32, n: usize) -> Result<Self> {
        let phi = (0..n)
            .map(|i| RingElt::x(i, n, 0, POLY_TRUNC).pow(p))
            .collect();
        Self::custom(p, n, phi, "standard")
    }

    /// `F_i = (x_i + c)^p - c`, the lift transported along `x -> x + c`.
    pub fn shift(p: u32, n: usize, c: i64) -> Result<Self> {
        Self::shift_each(p, &vec![c; n])
    }

    /// Per-variable shifts.
    pub fn shift_each(p: u32, cs: &[i64]) -> Result<Self> {
        let n = cs.len();
        let phi = cs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let cc = RingElt::from_int(c, n, 0, POLY_TRUNC);
                &(&RingElt::x(i, n, 0, POLY_TRUNC) + &cc).pow(p) - &cc
            })
            .collect();
        let label = if cs.iter().all(|&c| c == cs[0]) && n > 0 {
            if cs[0] == 0 {
                "standard".to_string()
            } else {
                format!("shift-{}", cs[0])
            }
        } else {
            format!(
                "shift-{}",
                cs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            )
        };
        Self::custom(p, n, phi, &label)
    }

    /// Validates `F_i - x_i^p = 0 mod p` with integer coefficients.
    pub fn custom(p: u32, n: usize, phi: Vec<RingElt>, label: &str) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidInput(format!("{p} is not a prime")));
        }
        if phi.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} Frobenius images, got {}",
                phi.len()
            )));
        }
        let pb = BigInt::from(p);
        let mut imgs = Vec::with_capacity(n);
        for (i, f) in phi.into_iter().enumerate() {
            if f.ne() != 0 || f.nx() > n {
                return Err(Error::InvalidInput("Frobenius image uses foreign variables".into()));
            }
            if f.terms().any(|(m, _)| m[0] > 0) {
                return Err(Error::InvalidInput("Frobenius image must not involve t".into()));
            }
            let f = f.embed(n, 0).with_trunc(POLY_TRUNC);
            if !f.is_integral() {
                return Err(Error::InvalidInput("Frobenius image must have integer coefficients".into()));
            }
            let diff = &f - &RingElt::x(i, n, 0, POLY_TRUNC).pow(p);
            if diff.terms().any(|(_, c)| !c.numer().is_multiple_of(&pb)) {
                return Err(Error::InvalidInput(format!(
                    "image of x{} is not congruent to x{}^{p} mod {p}",
                    i + 1,
                    i + 1
                )));
            }
            imgs.push(f);
        }
        Ok(CoordinateSystem {
            p,
            n,
            phi: imgs,
            label: label.to_string(),
        })
    }

    /// `F_i`, as an element with the given truncation.
    pub fn phi_image(&self, i: usize, trunc: u32) -> RingElt {
        self.phi[i].with_trunc(trunc)
    }

    pub fn phi_images(&self, trunc: u32) -> Vec<RingElt> {
        (0..self.n).map(|i| self.phi_image(i, trunc)).collect()
    }

    /// `c` with `F_i = (x_i + c)^p - c`, if `F_i` has that form.
    pub fn shift_of(&self, i: usize) -> Option<Rat> {
        let n = self.n;
        let p = self.p;
        let mut m = vec![0u32; 1 + n];
        m[1 + i] = p - 1;
        let c = self.phi[i].coeff(&m) / rat(p as i64);
        let cc = RingElt::constant(c.clone(), n, 0, POLY_TRUNC);
        let candidate = &(&RingElt::x(i, n, 0, POLY_TRUNC) + &cc).pow(p) - &cc;
        (candidate == self.phi[i]).then_some(c)
    }

    /// Shifts of all variables, `None` unless every `F_i` is a shifted power.
    pub fn shifts(&self) -> Option<Vec<Rat>> {
        (0..self.n).map(|i| self.shift_of(i)).collect()
    }

    pub fn is_standard(&self) -> bool {
        self.shifts()
            .map(|cs| cs.iter().all(|c| c.is_zero()))
            .unwrap_or(false)
    }

    /// `t -> (1+t)^p - 1` in the given shape.
    pub fn t_image(&self, nx: usize, ne: usize, trunc: u32) -> RingElt {
        let one = RingElt::one(nx, ne, trunc);
        &(&one + &RingElt::t(nx, ne, trunc)).pow(self.p) - &one
    }

    /// The Frobenius on `Q[x][t]/(t^N)`.
    pub fn frobenius(&self, f: &RingElt) -> Result<RingElt> {
        if f.ne() != 0 {
            return Err(Error::InvalidInput(
                "use a DeltaRing for elements involving e-variables".into(),
            ));
        }
        let f = f.embed(self.n.max(f.nx()), 0);
        if f.nx() != self.n {
            return Err(Error::CoordinateMismatch("variable count differs".into()));
        }
        let n = f.trunc();
        Ok(f.substitute(&self.phi_images(n), &[], Some(&self.t_image(self.n, 0, n))))
    }

    /// `delta(f) = (phi(f) - f^p)/p`; the input must be p-integral.
    pub fn delta(&self, f: &RingElt) -> Result<RingElt> {
        if !f.p_integral(self.p) {
            return Err(Error::NotDivisible(format!(
                "delta needs a {}-integral argument",
                self.p
            )));
        }
        let phi = self.frobenius(f)?;
        Ok((&phi - &f.pow(self.p)).div_int(self.p as i64))
    }

    pub fn phi_strings(&self) -> Vec<String> {
        self.phi.iter().map(|f| f.to_string()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CoordsJson {
    p: u32,
    n: usize,
    phi: Vec<String>,
    label: String,
}

impl Serialize for CoordinateSystem {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        CoordsJson {
            p: self.p,
            n: self.n,
            phi: self.phi_strings(),
            label: self.label.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for CoordinateSystem {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = CoordsJson::deserialize(de)?;
        let phi = j
            .phi
            .iter()
            .map(|s| parse_poly(s, j.n, 0, POLY_TRUNC))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        CoordinateSystem::custom(j.p, j.n, phi, &j.label).map_err(D::Error::custom)
    }
}
