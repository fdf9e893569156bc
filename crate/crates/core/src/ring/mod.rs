//! Exact arithmetic in `Q[x_1..x_n, e_1..e_m][t]/(t^N)`.

mod multi_index;
mod qint;
mod text;

pub use multi_index::{binomial, factorial, MultiIndex};
pub use qint::{gauss_binomial, q_factorial, q_integer, q_multi_factorial, unit_u};
pub use text::parse_poly;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_frac(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// p-adic valuation of a nonzero integer.
pub fn int_valuation(n: &BigInt, p: u32) -> u32 {
    debug_assert!(!n.is_zero());
    let p = BigInt::from(p);
    let mut n = n.clone();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&p);
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

/// p-adic valuation of a nonzero rational.
pub fn rat_valuation(r: &Rat, p: u32) -> i64 {
    int_valuation(r.numer(), p) as i64 - int_valuation(r.denom(), p) as i64
}

/// Exponent vector laid out as `[t, x_1..x_nx, e_1..e_ne]`.
///
/// The derived order is lexicographic in that layout, which is the
/// canonical print order.
pub type Exps = SmallVec<[u32; 8]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub nx: usize,
    pub ne: usize,
}

impl Shape {
    pub fn new(nx: usize, ne: usize) -> Self {
        Shape { nx, ne }
    }

    fn width(self) -> usize {
        1 + self.nx + self.ne
    }

    fn join(self, other: Shape) -> Shape {
        Shape::new(self.nx.max(other.nx), self.ne.max(other.ne))
    }
}

/// Element of the truncated ring. Terms with zero coefficient are never stored
/// and every stored t-exponent is below `trunc`.
#[derive(Clone)]
pub struct RingElt {
    shape: Shape,
    trunc: u32,
    terms: BTreeMap<Exps, Rat>,
}

fn embed_exps(e: &Exps, from: Shape, to: Shape) -> Exps {
    if from == to {
        return e.clone();
    }
    let mut out: Exps = SmallVec::from_elem(0, to.width());
    out[0] = e[0];
    for i in 0..from.nx {
        out[1 + i] = e[1 + i];
    }
    for j in 0..from.ne {
        out[1 + to.nx + j] = e[1 + from.nx + j];
    }
    out
}

impl RingElt {
    pub fn zero(nx: usize, ne: usize, trunc: u32) -> Self {
        assert!(trunc >= 1, "truncation order must be positive");
        RingElt {
            shape: Shape::new(nx, ne),
            trunc,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(c: Rat, nx: usize, ne: usize, trunc: u32) -> Self {
        let mut r = Self::zero(nx, ne, trunc);
        r.insert(SmallVec::from_elem(0, 1 + nx + ne), c);
        r
    }

    pub fn from_int(c: i64, nx: usize, ne: usize, trunc: u32) -> Self {
        Self::constant(rat(c), nx, ne, trunc)
    }

    pub fn one(nx: usize, ne: usize, trunc: u32) -> Self {
        Self::from_int(1, nx, ne, trunc)
    }

    /// `c * t^t_exp * x^x * e^e`.
    pub fn monomial(c: Rat, t_exp: u32, x: &[u32], e: &[u32], trunc: u32) -> Self {
        let mut r = Self::zero(x.len(), e.len(), trunc);
        let mut m: Exps = SmallVec::with_capacity(1 + x.len() + e.len());
        m.push(t_exp);
        m.extend_from_slice(x);
        m.extend_from_slice(e);
        r.insert(m, c);
        r
    }

    pub fn t(nx: usize, ne: usize, trunc: u32) -> Self {
        let mut m: Exps = SmallVec::from_elem(0, 1 + nx + ne);
        m[0] = 1;
        let mut r = Self::zero(nx, ne, trunc);
        r.insert(m, Rat::one());
        r
    }

    pub fn x(i: usize, nx: usize, ne: usize, trunc: u32) -> Self {
        assert!(i < nx);
        let mut m: Exps = SmallVec::from_elem(0, 1 + nx + ne);
        m[1 + i] = 1;
        let mut r = Self::zero(nx, ne, trunc);
        r.insert(m, Rat::one());
        r
    }

    pub fn eps(j: usize, nx: usize, ne: usize, trunc: u32) -> Self {
        assert!(j < ne);
        let mut m: Exps = SmallVec::from_elem(0, 1 + nx + ne);
        m[1 + nx + j] = 1;
        let mut r = Self::zero(nx, ne, trunc);
        r.insert(m, Rat::one());
        r
    }

    /// Builds an element from raw `(exps, coeff)` pairs, summing duplicates.
    pub fn from_terms<I>(nx: usize, ne: usize, trunc: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exps, Rat)>,
    {
        let mut r = Self::zero(nx, ne, trunc);
        for (m, c) in terms {
            if m.len() != 1 + nx + ne {
                return Err(Error::InvalidInput(format!(
                    "monomial has {} exponents, expected {}",
                    m.len(),
                    1 + nx + ne
                )));
            }
            r.add_term(m, c);
        }
        Ok(r)
    }

    fn insert(&mut self, m: Exps, c: Rat) {
        if m[0] < self.trunc && !c.is_zero() {
            self.terms.insert(m, c);
        }
    }

    fn add_term(&mut self, m: Exps, c: Rat) {
        if m[0] >= self.trunc || c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn nx(&self) -> usize {
        self.shape.nx
    }

    pub fn ne(&self) -> usize {
        self.shape.ne
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn trunc(&self) -> u32 {
        self.trunc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self
                .terms
                .iter()
                .next()
                .map(|(m, c)| m.iter().all(|&e| e == 0) && c.is_one())
                .unwrap_or(false)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&Exps, &Rat)> {
        self.terms.iter()
    }

    /// Coefficient of the monomial with the given layout, zero if absent.
    pub fn coeff(&self, m: &[u32]) -> Rat {
        self.terms
            .get(&Exps::from_slice(m))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    /// The constant term (t, x and e exponents all zero).
    pub fn constant_term(&self) -> Rat {
        self.coeff(&vec![0; self.shape.width()])
    }

    /// Re-embeds into a ring with at least as many variables of each kind.
    pub fn embed(&self, nx: usize, ne: usize) -> Self {
        let to = Shape::new(nx, ne);
        if to == self.shape {
            return self.clone();
        }
        assert!(nx >= self.shape.nx && ne >= self.shape.ne, "embed cannot drop variables");
        RingElt {
            shape: to,
            trunc: self.trunc,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (embed_exps(m, self.shape, to), c.clone()))
                .collect(),
        }
    }

    /// Drops e-variables, failing if any term uses one.
    pub fn drop_eps(&self) -> Result<Self> {
        let nx = self.shape.nx;
        let mut r = Self::zero(nx, 0, self.trunc);
        for (m, c) in &self.terms {
            if m[1 + nx..].iter().any(|&e| e > 0) {
                return Err(Error::InvalidInput("element depends on e-variables".into()));
            }
            r.terms.insert(Exps::from_slice(&m[..1 + nx]), c.clone());
        }
        Ok(r)
    }

    /// Reduces modulo `t^n` (no-op when `n >= trunc`).
    pub fn truncate(&self, n: u32) -> Self {
        if n >= self.trunc {
            return self.clone();
        }
        let mut r = Self::zero(self.shape.nx, self.shape.ne, n.max(1));
        for (m, c) in &self.terms {
            if m[0] < n {
                r.terms.insert(m.clone(), c.clone());
            }
        }
        r
    }

    /// Same terms, truncation changed. Raising the truncation only
    /// reinterprets the stored data.
    pub fn with_trunc(&self, n: u32) -> Self {
        let mut r = self.truncate(n);
        r.trunc = n;
        r
    }

    fn aligned(a: &RingElt, b: &RingElt) -> (Shape, u32) {
        (a.shape.join(b.shape), a.trunc.min(b.trunc))
    }

    pub fn scale(&self, c: &Rat) -> Self {
        if c.is_zero() {
            return Self::zero(self.shape.nx, self.shape.ne, self.trunc);
        }
        RingElt {
            shape: self.shape,
            trunc: self.trunc,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn scale_int(&self, c: i64) -> Self {
        self.scale(&rat(c))
    }

    /// Multiplies by `t^k`.
    pub fn shift_t(&self, k: u32) -> Self {
        let mut r = Self::zero(self.shape.nx, self.shape.ne, self.trunc);
        for (m, c) in &self.terms {
            let mut m = m.clone();
            m[0] += k;
            r.insert(m, c.clone());
        }
        r
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.shape.nx, self.shape.ne, self.trunc);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Smallest t-exponent present, `None` for zero.
    pub fn t_valuation(&self) -> Option<u32> {
        self.terms.keys().map(|m| m[0]).min()
    }

    /// The coefficient of `t^j`, as an element with no t-dependence.
    pub fn t_layer(&self, j: u32) -> Self {
        let mut r = Self::zero(self.shape.nx, self.shape.ne, self.trunc);
        for (m, c) in self.terms.range(layer_start(j, self.shape)..) {
            if m[0] != j {
                break;
            }
            let mut m = m.clone();
            m[0] = 0;
            r.terms.insert(m, c.clone());
        }
        r
    }

    /// Maximal total e-degree, 0 for zero.
    pub fn eps_degree(&self) -> u32 {
        let s = 1 + self.shape.nx;
        self.terms
            .keys()
            .map(|m| m[s..].iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Maximal total x-degree, 0 for zero.
    pub fn x_degree(&self) -> u32 {
        let nx = self.shape.nx;
        self.terms
            .keys()
            .map(|m| m[1..1 + nx].iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Splits `f = sum_K f_K e^K` into its e-coefficients `f_K` (which live
    /// in the ring without e-variables).
    pub fn eps_parts(&self) -> BTreeMap<MultiIndex, RingElt> {
        let nx = self.shape.nx;
        let mut out: BTreeMap<MultiIndex, RingElt> = BTreeMap::new();
        for (m, c) in &self.terms {
            let k = MultiIndex(m[1 + nx..].to_vec());
            let entry = out
                .entry(k)
                .or_insert_with(|| RingElt::zero(nx, 0, self.trunc));
            entry.terms.insert(Exps::from_slice(&m[..1 + nx]), c.clone());
        }
        out
    }

    /// The coefficient `f_K` of `e^K`.
    pub fn eps_coefficient(&self, k: &MultiIndex) -> RingElt {
        let nx = self.shape.nx;
        let mut r = RingElt::zero(nx, 0, self.trunc);
        for (m, c) in &self.terms {
            if m[1 + nx..] == k.0[..] {
                r.terms.insert(Exps::from_slice(&m[..1 + nx]), c.clone());
            }
        }
        r
    }

    /// Inverse of [`eps_parts`](Self::eps_parts).
    pub fn from_eps_parts<'a, I>(nx: usize, ne: usize, trunc: u32, parts: I) -> Self
    where
        I: IntoIterator<Item = (&'a MultiIndex, &'a RingElt)>,
    {
        let mut r = Self::zero(nx, ne, trunc);
        for (k, f) in parts {
            assert_eq!(k.len(), ne);
            for (m, c) in &f.terms {
                let mut e: Exps = SmallVec::from_elem(0, 1 + nx + ne);
                e[0] = m[0];
                for i in 0..f.shape.nx {
                    e[1 + i] = m[1 + i];
                }
                for j in 0..ne {
                    e[1 + nx + j] = k.0[j];
                }
                r.add_term(e, c.clone());
            }
        }
        r
    }

    /// Divided derivative `d^k/dx_i^k / k!` in an x-variable.
    pub fn divided_derivative(&self, i: usize, k: u32) -> Self {
        let mut r = Self::zero(self.shape.nx, self.shape.ne, self.trunc);
        let idx = 1 + i;
        for (m, c) in &self.terms {
            if m[idx] >= k {
                let b = binomial(m[idx], k);
                let mut m = m.clone();
                m[idx] -= k;
                r.add_term(m, c * Rat::from_integer(b));
            }
        }
        r
    }

    /// Divided derivative `d^[K]` in all x-variables at once.
    pub fn divided_derivative_multi(&self, k: &MultiIndex) -> Self {
        let mut r = Self::zero(self.shape.nx, self.shape.ne, self.trunc);
        'terms: for (m, c) in &self.terms {
            let mut m2 = m.clone();
            let mut b = BigInt::one();
            for (i, &ki) in k.0.iter().enumerate() {
                if m[1 + i] < ki {
                    continue 'terms;
                }
                b *= binomial(m[1 + i], ki);
                m2[1 + i] -= ki;
            }
            r.add_term(m2, c * Rat::from_integer(b));
        }
        r
    }

    /// Simultaneous substitution of x-, e- and t-images. Images must share a
    /// shape; the result lives there. `t_img = None` keeps t.
    pub fn substitute(&self, x_imgs: &[RingElt], e_imgs: &[RingElt], t_img: Option<&RingElt>) -> Self {
        assert_eq!(x_imgs.len(), self.shape.nx, "wrong number of x-images");
        assert_eq!(e_imgs.len(), self.shape.ne, "wrong number of e-images");
        let mut shape = Shape::new(0, 0);
        let mut trunc = self.trunc;
        for f in x_imgs.iter().chain(e_imgs).chain(t_img) {
            shape = shape.join(f.shape);
            trunc = trunc.min(f.trunc);
        }
        let imgs: Vec<RingElt> = x_imgs
            .iter()
            .chain(e_imgs)
            .map(|f| f.embed(shape.nx, shape.ne).with_trunc(trunc))
            .collect();
        let t_img = match t_img {
            Some(f) => f.embed(shape.nx, shape.ne).with_trunc(trunc),
            None => RingElt::t(shape.nx, shape.ne, trunc),
        };
        let t_is_t = t_img == RingElt::t(shape.nx, shape.ne, trunc);
        let mut cache: HashMap<(usize, u32), RingElt> = HashMap::new();
        let mut power = |v: usize, k: u32| -> RingElt {
            if let Some(r) = cache.get(&(v, k)) {
                return r.clone();
            }
            let base = if v == 0 { &t_img } else { &imgs[v - 1] };
            let r = base.pow(k);
            cache.insert((v, k), r.clone());
            r
        };
        let mut out = RingElt::zero(shape.nx, shape.ne, trunc);
        for (m, c) in &self.terms {
            if m[0] >= trunc {
                continue;
            }
            let mut acc = RingElt::constant(c.clone(), shape.nx, shape.ne, trunc);
            for (v, &k) in m.iter().enumerate().skip(1) {
                if k > 0 {
                    acc = &acc * &power(v, k);
                    if acc.is_zero() {
                        break;
                    }
                }
            }
            if t_is_t {
                acc = acc.shift_t(m[0]);
            } else if m[0] > 0 {
                acc = &acc * &power(0, m[0]);
            }
            out = &out + &acc;
        }
        out
    }

    /// `true` iff every coefficient is p-integral.
    pub fn p_integral(&self, p: u32) -> bool {
        let p = BigInt::from(p);
        self.terms.values().all(|c| !c.denom().is_multiple_of(&p))
    }

    /// Minimal p-adic valuation over all coefficients, `None` for zero.
    pub fn p_valuation(&self, p: u32) -> Option<i64> {
        self.terms.values().map(|c| rat_valuation(c, p)).min()
    }

    /// `true` iff every coefficient is an integer.
    pub fn is_integral(&self) -> bool {
        self.terms.values().all(|c| c.is_integer())
    }

    /// Least common multiple of all coefficient denominators.
    pub fn denominator_lcm(&self) -> BigInt {
        self.terms
            .values()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()))
    }

    /// Applies `f` to every coefficient, dropping zeros.
    pub fn map_coeffs<F: Fn(&Rat) -> Rat>(&self, f: F) -> Self {
        let mut r = Self::zero(self.shape.nx, self.shape.ne, self.trunc);
        for (m, c) in &self.terms {
            r.insert(m.clone(), f(c));
        }
        r
    }

    /// Returns `c` with `b * c = self` modulo `t^N`.
    ///
    /// If `t^v` is the lowest power of t in `b`, the quotient is determined
    /// only modulo `t^(N-v)`; the undetermined layers are set to zero.
    pub fn exact_divide(&self, b: &RingElt) -> Result<RingElt> {
        let (shape, trunc) = Self::aligned(self, b);
        let a = self.embed(shape.nx, shape.ne).with_trunc(trunc);
        let b = b.embed(shape.nx, shape.ne).with_trunc(trunc);
        let v = match b.t_valuation() {
            Some(v) => v,
            None => return Err(Error::NotDivisible("division by zero".into())),
        };
        if a.is_zero() {
            return Ok(RingElt::zero(shape.nx, shape.ne, trunc));
        }
        if a.t_valuation().unwrap() < v {
            return Err(Error::NotDivisible(format!(
                "dividend has t-valuation below the divisor's ({v})"
            )));
        }
        let n = trunc - v;
        let b_layers: Vec<Layer> = (0..n).map(|j| Layer::of(&b, j + v)).collect();
        let mut c_layers: Vec<Layer> = Vec::with_capacity(n as usize);
        for j in 0..n {
            let mut rhs = Layer::of(&a, j + v);
            for i in 1..=j as usize {
                if b_layers[i].is_empty() || c_layers[j as usize - i].is_empty() {
                    continue;
                }
                rhs.sub_product(&b_layers[i], &c_layers[j as usize - i]);
            }
            let q = rhs.exact_quotient(&b_layers[0]).ok_or_else(|| {
                Error::NotDivisible(format!("no exact quotient in t-layer {j}"))
            })?;
            c_layers.push(q);
        }
        let mut out = RingElt::zero(shape.nx, shape.ne, trunc);
        for (j, l) in c_layers.into_iter().enumerate() {
            for (m, c) in l.0 {
                let mut e: Exps = SmallVec::with_capacity(shape.width());
                e.push(j as u32);
                e.extend_from_slice(&m);
                out.terms.insert(e, c);
            }
        }
        Ok(out)
    }

    /// Divides every coefficient by the integer `d`.
    pub fn div_int(&self, d: i64) -> Self {
        self.scale(&rat_frac(1, d))
    }

    /// `true` iff `self` and `other` agree modulo `t^m`.
    pub fn congruent_mod_t(&self, other: &RingElt, m: u32) -> bool {
        (self - other).truncate(m).is_zero()
    }
}

fn layer_start(j: u32, shape: Shape) -> Exps {
    let mut m: Exps = SmallVec::from_elem(0, shape.width());
    m[0] = j;
    m
}

/// A polynomial without t, used for the per-layer solve in `exact_divide`.
struct Layer(BTreeMap<Exps, Rat>);

impl Layer {
    fn of(a: &RingElt, j: u32) -> Layer {
        let mut out = BTreeMap::new();
        for (m, c) in a.terms.range(layer_start(j, a.shape)..) {
            if m[0] != j {
                break;
            }
            out.insert(Exps::from_slice(&m[1..]), c.clone());
        }
        Layer(out)
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn sub_product(&mut self, b: &Layer, c: &Layer) {
        for (mb, cb) in &b.0 {
            for (mc, cc) in &c.0 {
                let m: Exps = mb.iter().zip(mc).map(|(x, y)| x + y).collect();
                let v = cb * cc;
                let e = self.0.entry(m.clone()).or_insert_with(Rat::zero);
                *e -= v;
                if e.is_zero() {
                    self.0.remove(&m);
                }
            }
        }
    }

    /// Multivariate exact division by repeatedly cancelling the lex-leading
    /// term. Exact divisibility forces the leading monomials to divide.
    fn exact_quotient(mut self, d: &Layer) -> Option<Layer> {
        let (dm, dc) = d.0.iter().next_back()?;
        let mut q = BTreeMap::new();
        while let Some((m, c)) = self.0.iter().next_back().map(|(m, c)| (m.clone(), c.clone())) {
            let qm: Exps = m
                .iter()
                .zip(dm)
                .map(|(a, b)| a.checked_sub(*b))
                .collect::<Option<_>>()?;
            let qc = &c / dc;
            let single = Layer([(qm.clone(), qc.clone())].into_iter().collect());
            self.sub_product(d, &single);
            q.insert(qm, qc);
        }
        Some(Layer(q))
    }
}

impl PartialEq for RingElt {
    fn eq(&self, other: &Self) -> bool {
        if self.trunc != other.trunc {
            return false;
        }
        if self.shape == other.shape {
            return self.terms == other.terms;
        }
        let s = self.shape.join(other.shape);
        self.embed(s.nx, s.ne).terms == other.embed(s.nx, s.ne).terms
    }
}

impl Eq for RingElt {}

impl fmt::Debug for RingElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod t^{})", self, self.trunc)
    }
}

impl<'a> Add<&'a RingElt> for &'a RingElt {
    type Output = RingElt;
    fn add(self, rhs: &RingElt) -> RingElt {
        let (shape, trunc) = RingElt::aligned(self, rhs);
        let mut r = self.embed(shape.nx, shape.ne).truncate(trunc);
        r.trunc = trunc;
        for (m, c) in &rhs.terms {
            r.add_term(embed_exps(m, rhs.shape, shape), c.clone());
        }
        r
    }
}

impl<'a> Sub<&'a RingElt> for &'a RingElt {
    type Output = RingElt;
    fn sub(self, rhs: &RingElt) -> RingElt {
        let (shape, trunc) = RingElt::aligned(self, rhs);
        let mut r = self.embed(shape.nx, shape.ne).truncate(trunc);
        r.trunc = trunc;
        for (m, c) in &rhs.terms {
            r.add_term(embed_exps(m, rhs.shape, shape), -c.clone());
        }
        r
    }
}

impl<'a> Mul<&'a RingElt> for &'a RingElt {
    type Output = RingElt;
    fn mul(self, rhs: &RingElt) -> RingElt {
        let (shape, trunc) = RingElt::aligned(self, rhs);
        let mut r = RingElt::zero(shape.nx, shape.ne, trunc);
        let a: Vec<(Exps, &Rat)> = self
            .terms
            .iter()
            .map(|(m, c)| (embed_exps(m, self.shape, shape), c))
            .collect();
        let b: Vec<(Exps, &Rat)> = rhs
            .terms
            .iter()
            .map(|(m, c)| (embed_exps(m, rhs.shape, shape), c))
            .collect();
        for (ma, ca) in &a {
            for (mb, cb) in &b {
                if ma[0] + mb[0] >= trunc {
                    continue;
                }
                let m: Exps = ma.iter().zip(mb.iter()).map(|(x, y)| x + y).collect();
                r.add_term(m, *ca * *cb);
            }
        }
        r
    }
}

impl Neg for &RingElt {
    type Output = RingElt;
    fn neg(self) -> RingElt {
        RingElt {
            shape: self.shape,
            trunc: self.trunc,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr<RingElt> for RingElt {
            type Output = RingElt;
            fn $f(self, rhs: RingElt) -> RingElt {
                (&self).$f(&rhs)
            }
        }
        impl<'a> $tr<&'a RingElt> for RingElt {
            type Output = RingElt;
            fn $f(self, rhs: &RingElt) -> RingElt {
                (&self).$f(rhs)
            }
        }
        impl<'a> $tr<RingElt> for &'a RingElt {
            type Output = RingElt;
            fn $f(self, rhs: RingElt) -> RingElt {
                self.$f(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for RingElt {
    type Output = RingElt;
    fn neg(self) -> RingElt {
        -&self
    }
}

/// Numerator sign helper used by printers.
pub(crate) fn is_negative(r: &Rat) -> bool {
    r.is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1() -> RingElt {
        RingElt::x(0, 1, 0, 4)
    }

    #[test]
    fn arithmetic_basics() {
        let x = x1();
        let t = RingElt::t(1, 0, 4);
        let one = RingElt::one(1, 0, 4);
        let s = &x + &t;
        let sq = &s * &s;
        assert_eq!(sq, &(&(&x * &x) + &(&x * &t).scale_int(2)) + &(&t * &t));
        assert!((&s - &s).is_zero());
        assert_eq!(t.pow(4), RingElt::zero(1, 0, 4));
        assert_eq!(&one * &x, x);
    }

    #[test]
    fn mixed_shapes_and_truncations() {
        let a = RingElt::t(0, 0, 3);
        let b = RingElt::x(0, 1, 1, 5);
        let c = &a * &b;
        assert_eq!(c.trunc(), 3);
        assert_eq!(c.shape(), Shape::new(1, 1));
        assert_eq!(c.coeff(&[1, 1, 0]), rat(1));
    }

    #[test]
    fn exact_divide_examples() {
        let t = RingElt::t(0, 0, 4);
        assert_eq!((&t * &t).exact_divide(&t).unwrap(), t);
        let a = &x1() + &RingElt::t(1, 0, 4);
        assert_eq!(a.exact_divide(&RingElt::one(1, 0, 4)).unwrap(), a);
        let qf = q_factorial(2, 3);
        let num = &qf * &RingElt::x(0, 1, 0, 3);
        assert_eq!(num.exact_divide(&qf).unwrap(), RingElt::x(0, 1, 0, 3));
        assert!(RingElt::one(0, 0, 3).exact_divide(&t).is_err());
        let x = x1();
        assert!(x.exact_divide(&(&x * &x)).is_err());
    }

    #[test]
    fn multivariate_layer_division() {
        let x = RingElt::x(0, 1, 1, 3);
        let e = RingElt::eps(0, 1, 1, 3);
        let t = RingElt::t(1, 1, 3);
        let b = &(&x + &e) + &t;
        let c = &(&x * &e) - &(&t * &x);
        let a = &b * &c;
        assert_eq!(a.exact_divide(&b).unwrap(), c);
    }

    #[test]
    fn p_integrality() {
        let a = x1().div_int(3);
        assert!(!a.p_integral(3));
        assert!(a.p_integral(5));
        assert_eq!(a.p_valuation(3), Some(-1));
    }

    #[test]
    fn substitution_and_derivatives() {
        let x = RingElt::x(0, 1, 0, 4);
        let f = x.pow(3);
        let shifted = f.substitute(&[&x + &RingElt::one(1, 0, 4)], &[], None);
        assert_eq!(shifted.constant_term(), rat(1));
        assert_eq!(f.divided_derivative(0, 2), x.scale_int(3));
        let q = &RingElt::one(1, 0, 4) + &RingElt::t(1, 0, 4);
        let g = x.pow(2).substitute(&[&q * &x], &[], None);
        assert_eq!(g, &q.pow(2) * &x.pow(2));
    }

    #[test]
    fn eps_parts_roundtrip() {
        let x = RingElt::x(0, 1, 1, 3);
        let e = RingElt::eps(0, 1, 1, 3);
        let f = &(&x + &e).pow(3) + &RingElt::t(1, 1, 3);
        let parts = f.eps_parts();
        assert_eq!(parts.len(), 4);
        assert_eq!(RingElt::from_eps_parts(1, 1, 3, &parts), f);
        assert_eq!(f.eps_coefficient(&MultiIndex(vec![1])), x.pow(2).drop_eps().unwrap().scale_int(3));
    }
}
