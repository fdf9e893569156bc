//! q-connections on free modules `R^r`, given by the matrices of the
//! generators `∇_{ψ,i}` on the standard basis, and the stratifications they
//! induce.

mod transport;

use std::collections::{BTreeMap, HashMap};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coords::CoordinateSystem;
use crate::error::{Error, Result};
use crate::qdiff::{structure_table, DiffOp, NablaCache};
use crate::ring::{parse_poly, q_multi_factorial, MultiIndex, Rat, RingElt};

pub use transport::{
    coherence_check, discrepancy, is_morphism, natural_iso, transport, transport_morphism,
    CoherenceSections,
};

/// Rows of ring elements.
pub type Matrix = Vec<Vec<RingElt>>;
pub type Vector = Vec<RingElt>;

pub fn identity_matrix(r: usize, n: usize, trunc: u32) -> Matrix {
    (0..r)
        .map(|i| {
            (0..r)
                .map(|j| {
                    if i == j {
                        RingElt::one(n, 0, trunc)
                    } else {
                        RingElt::zero(n, 0, trunc)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn zero_matrix(r: usize, n: usize, trunc: u32) -> Matrix {
    vec![vec![RingElt::zero(n, 0, trunc); r]; r]
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let r = a.len();
    let (n, trunc) = (a[0][0].nx(), a[0][0].trunc().min(b[0][0].trunc()));
    let mut out = zero_matrix(r, n, trunc);
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                out[i][j] = &out[i][j] + &(&a[i][k] * &b[k][j]);
            }
        }
    }
    out
}

pub fn column(m: &Matrix, j: usize) -> Vector {
    m.iter().map(|row| row[j].clone()).collect()
}

pub fn from_columns(cols: &[Vector]) -> Matrix {
    let r = cols.len();
    (0..r).map(|i| (0..r).map(|j| cols[j][i].clone()).collect()).collect()
}

fn basis_vector(r: usize, j: usize, n: usize, trunc: u32) -> Vector {
    (0..r)
        .map(|k| {
            if k == j {
                RingElt::one(n, 0, trunc)
            } else {
                RingElt::zero(n, 0, trunc)
            }
        })
        .collect()
}

fn vec_add(a: &Vector, b: &Vector) -> Vector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn vec_sub(a: &Vector, b: &Vector) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn vec_is_zero(v: &Vector) -> bool {
    v.iter().all(|f| f.is_zero())
}

/// Order in the ideal `(p, [p]_q) = (p, t^(p-1))`; `None` for zero.
pub fn pq_order(f: &RingElt, p: u32) -> Option<u32> {
    f.terms()
        .map(|(m, c)| {
            let v = crate::ring::rat_valuation(c, p).max(0) as u32;
            v + m[0] / (p - 1)
        })
        .min()
}

fn matrix_pq_order(m: &Matrix, p: u32) -> Option<u32> {
    m.iter().flatten().filter_map(|f| pq_order(f, p)).min()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QConnection {
    pub rank: usize,
    pub base: CoordinateSystem,
    pub trunc: u32,
    /// `matrices[i][k][j]` is the `e_k` coordinate of `∇_i(e_j)`.
    pub matrices: Vec<Matrix>,
}

impl QConnection {
    pub fn new(base: &CoordinateSystem, trunc: u32, matrices: Vec<Matrix>) -> Result<Self> {
        if matrices.len() != base.n {
            return Err(Error::InvalidInput(format!(
                "expected {} matrices, got {}",
                base.n,
                matrices.len()
            )));
        }
        let rank = matrices.first().map(|m| m.len()).unwrap_or(0);
        if rank == 0 {
            return Err(Error::InvalidInput("rank must be positive".into()));
        }
        let n = base.n;
        let mut out = Vec::with_capacity(n);
        for m in matrices {
            if m.len() != rank || m.iter().any(|row| row.len() != rank) {
                return Err(Error::InvalidInput("matrices must be square of equal size".into()));
            }
            out.push(
                m.into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|f| {
                                if f.ne() > 0 || f.nx() > n {
                                    Err(Error::InvalidInput(
                                        "matrix entries must be polynomials in x".into(),
                                    ))
                                } else {
                                    Ok(f.embed(n, 0).with_trunc(trunc.min(f.trunc())).with_trunc(trunc))
                                }
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        crate::qdiff::shifts_for(base)?;
        Ok(QConnection {
            rank,
            base: base.clone(),
            trunc,
            matrices: out,
        })
    }

    /// All matrices zero: `R^r` with the componentwise `∇_ψ`.
    pub fn trivial(base: &CoordinateSystem, trunc: u32, rank: usize) -> Result<Self> {
        Self::new(base, trunc, vec![zero_matrix(rank, base.n, trunc); base.n])
    }

    pub fn n(&self) -> usize {
        self.base.n
    }
}

/// Evaluates the operator algebra on a connection. Powers `∇^J(e_j)` are
/// memoized.
pub struct Action {
    pub conn: QConnection,
    cache: NablaCache,
    powers: HashMap<MultiIndex, Matrix>,
}

impl Action {
    pub fn new(conn: &QConnection) -> Result<Self> {
        Ok(Action {
            conn: conn.clone(),
            cache: NablaCache::new(&conn.base, conn.trunc)?,
            powers: HashMap::new(),
        })
    }

    fn n(&self) -> usize {
        self.conn.n()
    }

    fn trunc(&self) -> u32 {
        self.conn.trunc
    }

    pub fn cache(&mut self) -> &mut NablaCache {
        &mut self.cache
    }

    /// `σ_i`: `x_i + c_i -> q (x_i + c_i)`.
    pub fn sigma(&self, i: usize, f: &RingElt) -> RingElt {
        let n = self.n();
        let trunc = self.trunc();
        let c = &self.cache.shifts()[i];
        let imgs: Vec<RingElt> = (0..n)
            .map(|j| {
                let x = RingElt::x(j, n, 0, trunc);
                if j == i {
                    let t = RingElt::t(n, 0, trunc);
                    &(&x + &(&t * &x)) + &t.scale(c)
                } else {
                    x
                }
            })
            .collect();
        f.substitute(&imgs, &[], None)
    }

    /// `∇_i(v)_k = ∇_{ψ,i}(v_k) + sum_j A_i[k][j] σ_i(v_j)`.
    pub fn nabla_vec(&self, i: usize, v: &Vector) -> Vector {
        let g = self.cache.generator(i);
        let a = &self.conn.matrices[i];
        let sv: Vector = v.iter().map(|f| self.sigma(i, f)).collect();
        (0..v.len())
            .map(|k| {
                let mut out = g.apply(&v[k]);
                for (j, s) in sv.iter().enumerate() {
                    out = &out + &(&a[k][j] * s);
                }
                out
            })
            .collect()
    }

    /// `∇^J` applied to an arbitrary vector.
    pub fn nabla_power_vec(&self, idx: &MultiIndex, v: &Vector) -> Vector {
        let mut out = v.clone();
        for (i, &k) in idx.0.iter().enumerate() {
            for _ in 0..k {
                out = self.nabla_vec(i, &out);
            }
        }
        out
    }

    /// Columns `∇^J(e_j)`.
    pub fn power_matrix(&mut self, idx: &MultiIndex) -> Matrix {
        if let Some(m) = self.powers.get(idx) {
            return m.clone();
        }
        let (r, n, trunc) = (self.conn.rank, self.n(), self.trunc());
        let m = match idx.0.iter().position(|&k| k > 0) {
            None => identity_matrix(r, n, trunc),
            Some(i) => {
                let mut prev = idx.clone();
                prev.0[i] -= 1;
                let pm = self.power_matrix(&prev);
                let cols: Vec<Vector> = (0..r).map(|j| self.nabla_vec(i, &column(&pm, j))).collect();
                from_columns(&cols)
            }
        };
        self.powers.insert(idx.clone(), m.clone());
        m
    }

    /// The action of an operator on a vector, through the `∇`-expansion of
    /// `D ∘ v_j` for each component.
    pub fn apply(&mut self, d: &DiffOp, v: &Vector) -> Result<Vector> {
        let (r, n, trunc) = (self.conn.rank, self.n(), self.trunc());
        let mut out = vec![RingElt::zero(n, 0, trunc); r];
        for (j, f) in v.iter().enumerate() {
            if f.is_zero() {
                continue;
            }
            let dj = d.truncate(trunc).compose(&DiffOp::mul_by(f));
            for (idx, a) in self.cache.expand(&dj)? {
                let pm = self.power_matrix(&idx);
                for k in 0..r {
                    out[k] = &out[k] + &(&a * &pm[k][j]);
                }
            }
        }
        Ok(out)
    }

    pub fn apply_basis(&mut self, d: &DiffOp) -> Result<Matrix> {
        let (r, n, trunc) = (self.conn.rank, self.n(), self.trunc());
        let cols = (0..r)
            .map(|j| self.apply(d, &basis_vector(r, j, n, trunc)))
            .collect::<Result<Vec<_>>>()?;
        Ok(from_columns(&cols))
    }

    /// `∇^I/[I]_q!` on the basis, over Q.
    pub fn xi_matrix_rational(&mut self, idx: &MultiIndex) -> Result<Matrix> {
        let qf = q_multi_factorial(idx, self.trunc());
        self.power_matrix(idx)
            .iter()
            .map(|row| row.iter().map(|f| f.exact_divide(&qf)).collect())
            .collect()
    }

    /// `∇(ξ_I)` on the basis; `NotDivisible` unless p-integral.
    pub fn xi_matrix(&mut self, idx: &MultiIndex) -> Result<Matrix> {
        let m = self.xi_matrix_rational(idx)?;
        let p = self.conn.base.p;
        if m.iter().flatten().any(|f| !f.p_integral(p)) {
            return Err(Error::NotDivisible(format!(
                "∇(ξ_{idx}) is not {p}-integral on this connection"
            )));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub violations: Vec<String>,
}

impl Report {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that the generator actions commute, and that the extension to the
/// operator algebra obeys q-Leibniz on sample monomials:
/// `∇_i(f e_j) = ∇_{ψ,i}(f) e_j + σ_i(f) ∇_i(e_j)`.
pub fn validate(m: &QConnection) -> Result<Report> {
    let mut act = Action::new(m)?;
    let (r, n, trunc) = (m.rank, m.n(), m.trunc);
    let mut report = Report::default();
    for i in 0..n {
        for k in i + 1..n {
            for j in 0..r {
                let e = basis_vector(r, j, n, trunc);
                let a = act.nabla_vec(i, &act.nabla_vec(k, &e));
                let b = act.nabla_vec(k, &act.nabla_vec(i, &e));
                if a != b {
                    report
                        .violations
                        .push(format!("∇_{i} and ∇_{k} do not commute on e_{j}"));
                }
            }
        }
    }
    let mut samples = Vec::new();
    for i in 0..n {
        for a in 0..=2 {
            let mut e = vec![0; n];
            e[i] = a;
            samples.push(RingElt::monomial(Rat::from_integer(1.into()), 0, &e, &[], trunc));
        }
    }
    samples.push(&RingElt::t(n, 0, trunc) * &RingElt::x(0, n, 0, trunc));
    for i in 0..n {
        let gen = act.cache().generator(i).clone();
        for f in &samples {
            for j in 0..r {
                let e = basis_vector(r, j, n, trunc);
                let fe: Vector = e.iter().map(|c| c * f).collect();
                let via_algebra = act.apply(&gen, &fe)?;
                let ne = act.nabla_vec(i, &e);
                let sf = act.sigma(i, f);
                let expect: Vector = (0..r)
                    .map(|k| &(&gen.apply(f) * &e[k]) + &(&sf * &ne[k]))
                    .collect();
                if via_algebra != expect {
                    report.violations.push(format!(
                        "q-Leibniz fails for ∇_{i} on ({f}) e_{j}"
                    ));
                }
            }
        }
    }
    Ok(report)
}

/// `∇(ξ_I)` for a valid connection.
pub fn xi_action(m: &QConnection, idx: &MultiIndex) -> Result<Matrix> {
    Action::new(m)?.xi_matrix(idx)
}

pub fn default_horizon(trunc: u32) -> u32 {
    trunc + 2
}

fn xi_table(act: &mut Action, cap: u32) -> Result<BTreeMap<MultiIndex, Matrix>> {
    let mut table = BTreeMap::new();
    for idx in MultiIndex::all_up_to(act.n(), cap) {
        let m = act.xi_matrix(&idx)?;
        table.insert(idx, m);
    }
    Ok(table)
}

/// The tail criterion: `∇(ξ_I) ≡ 0 mod (p, [p]_q)` for `threshold < |I| <= cap`.
fn tail_ok(table: &BTreeMap<MultiIndex, Matrix>, p: u32, threshold: u32) -> bool {
    table
        .iter()
        .filter(|(idx, _)| idx.degree() > threshold)
        .all(|(_, m)| matrix_pq_order(m, p).is_none_or(|o| o >= 1))
}

/// Quasi-nilpotence certificate with horizon `cap`: every `∇(ξ_I)` with
/// `|I| <= cap` is p-integral and the ones above `threshold` vanish mod
/// `(p, [p]_q)`.
pub fn quasi_nilpotent_with(m: &QConnection, cap: u32, threshold: u32) -> Result<bool> {
    let mut act = Action::new(m)?;
    match xi_table(&mut act, cap) {
        Ok(table) => Ok(tail_ok(&table, m.base.p, threshold)),
        Err(Error::NotDivisible(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Horizon `N + 2`, threshold half the horizon.
pub fn quasi_nilpotent(m: &QConnection) -> Result<bool> {
    let cap = default_horizon(m.trunc);
    quasi_nilpotent_with(m, cap, cap / 2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stratification {
    pub rank: usize,
    pub base: CoordinateSystem,
    pub trunc: u32,
    pub cap: u32,
    /// `table[I]` has columns the coordinates of `∇(ξ_I)(e_j)`, the
    /// coefficient of `[I]_q! Gamma_I` in `ε(e_j ⊗ 1)`.
    pub table: BTreeMap<MultiIndex, Matrix>,
}

impl Stratification {
    pub fn entry(&self, idx: &MultiIndex) -> Matrix {
        self.table
            .get(idx)
            .cloned()
            .unwrap_or_else(|| zero_matrix(self.rank, self.base.n, self.trunc))
    }
}

/// `table[I] = ∇(ξ_I)` for `|I| <= cap`, after checking quasi-nilpotence at
/// that horizon.
pub fn stratify(m: &QConnection, cap: u32) -> Result<Stratification> {
    let mut act = Action::new(m)?;
    let table = xi_table(&mut act, cap)?;
    if !tail_ok(&table, m.base.p, cap / 2) {
        return Err(Error::InvalidInput(
            "connection is not quasi-nilpotent at this horizon".into(),
        ));
    }
    Ok(Stratification {
        rank: m.rank,
        base: m.base.clone(),
        trunc: m.trunc,
        cap,
        table,
    })
}

/// The connection read off the first-order part of the table.
pub fn recover(e: &Stratification) -> Result<QConnection> {
    if e.cap < 1 {
        return Err(Error::InvalidInput("stratification has no first-order part".into()));
    }
    let n = e.base.n;
    let mats = (0..n).map(|i| e.entry(&MultiIndex::unit(n, i))).collect();
    QConnection::new(&e.base, e.trunc, mats)
}

/// The cocycle condition in coordinates: `T_0 = 1` and, for
/// `|I| + |J| <= cap`, `∇(ξ_J)(T_I e_j) = sum_K t_{I,J}(K) T_K e_j`, where
/// `∇(ξ_J)` acts on the non-basis vector `T_I e_j` by q-Leibniz through the
/// first-order part of the table.
pub fn cocycle_check(e: &Stratification) -> Result<bool> {
    let (r, n, trunc) = (e.rank, e.base.n, e.trunc);
    if e.entry(&MultiIndex::zero(n)) != identity_matrix(r, n, trunc) {
        return Ok(false);
    }
    if e.cap == 0 {
        return Ok(true);
    }
    let conn = recover(e)?;
    let mut act = Action::new(&conn)?;
    let consts = structure_table(act.cache(), e.cap, false)?;
    let idx = MultiIndex::all_up_to(n, e.cap);
    for i in &idx {
        let ti = e.entry(i);
        for j in &idx {
            if i.degree() + j.degree() > e.cap {
                continue;
            }
            let qf = q_multi_factorial(j, trunc);
            for col in 0..r {
                let lhs = act
                    .nabla_power_vec(j, &column(&ti, col))
                    .iter()
                    .map(|f| f.exact_divide(&qf))
                    .collect::<Result<Vector>>()?;
                let mut rhs = vec![RingElt::zero(n, 0, trunc); r];
                for ((a, b, k), c) in consts.range((i.clone(), j.clone(), MultiIndex::zero(n))..) {
                    if a != i || b != j {
                        break;
                    }
                    let tk = column(&e.entry(k), col);
                    rhs = vec_add(&rhs, &tk.iter().map(|f| c * f).collect());
                }
                if lhs != rhs {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn matrix_strings(m: &Matrix) -> Vec<Vec<String>> {
    m.iter().map(|row| row.iter().map(|f| f.to_string()).collect()).collect()
}

fn parse_matrix(rows: &[Vec<String>], n: usize, trunc: u32) -> Result<Matrix> {
    rows.iter()
        .map(|row| row.iter().map(|s| parse_poly(s, n, 0, trunc)).collect())
        .collect()
}

#[derive(Serialize, Deserialize)]
struct QConnectionJson {
    rank: usize,
    base: CoordinateSystem,
    #[serde(rename = "N")]
    trunc: u32,
    matrices: Vec<Vec<Vec<String>>>,
}

impl Serialize for QConnection {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        QConnectionJson {
            rank: self.rank,
            base: self.base.clone(),
            trunc: self.trunc,
            matrices: self.matrices.iter().map(matrix_strings).collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for QConnection {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = QConnectionJson::deserialize(de)?;
        let mats = j
            .matrices
            .iter()
            .map(|m| parse_matrix(m, j.base.n, j.trunc))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        let c = QConnection::new(&j.base, j.trunc, mats).map_err(D::Error::custom)?;
        if c.rank != j.rank {
            return Err(D::Error::custom("rank does not match the matrices"));
        }
        Ok(c)
    }
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    #[serde(rename = "I")]
    index: MultiIndex,
    matrix: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct StratificationJson {
    rank: usize,
    base: CoordinateSystem,
    #[serde(rename = "N")]
    trunc: u32,
    cap: u32,
    table: Vec<TableEntry>,
}

impl Serialize for Stratification {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        StratificationJson {
            rank: self.rank,
            base: self.base.clone(),
            trunc: self.trunc,
            cap: self.cap,
            table: self
                .table
                .iter()
                .map(|(k, m)| TableEntry {
                    index: k.clone(),
                    matrix: matrix_strings(m),
                })
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Stratification {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = StratificationJson::deserialize(de)?;
        let n = j.base.n;
        let mut table = BTreeMap::new();
        for e in j.table {
            if e.index.0.len() != n {
                return Err(D::Error::custom("table index has the wrong length"));
            }
            let m = parse_matrix(&e.matrix, n, j.trunc).map_err(D::Error::custom)?;
            if m.len() != j.rank || m.iter().any(|row| row.len() != j.rank) {
                return Err(D::Error::custom("table matrix has the wrong size"));
            }
            table.insert(e.index, m);
        }
        Ok(Stratification {
            rank: j.rank,
            base: j.base,
            trunc: j.trunc,
            cap: j.cap,
            table,
        })
    }
}

#[cfg(test)]
mod tests;
