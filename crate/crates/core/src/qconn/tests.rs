use super::*;
use crate::sections::{canonical_section, compose_sections, generic_section, Section};

fn mi(v: &[u32]) -> MultiIndex {
    MultiIndex(v.to_vec())
}

fn poly(s: &str, n: usize, trunc: u32) -> RingElt {
    parse_poly(s, n, 0, trunc).unwrap()
}

fn rank1(base: &CoordinateSystem, trunc: u32, a: &[&str]) -> QConnection {
    let mats = a.iter().map(|s| vec![vec![poly(s, base.n, trunc)]]).collect();
    QConnection::new(base, trunc, mats).unwrap()
}

#[test]
fn validation() {
    let s = CoordinateSystem::standard(3, 1).unwrap();
    assert!(validate(&QConnection::trivial(&s, 3, 2).unwrap()).unwrap().is_valid());
    assert!(validate(&rank1(&s, 3, &["5"])).unwrap().is_valid());
    let s2 = CoordinateSystem::standard(3, 2).unwrap();
    let bad = rank1(&s2, 3, &["x2", "0"]);
    let report = validate(&bad).unwrap();
    assert!(!report.is_valid());
    assert!(validate(&rank1(&s2, 3, &["3*x2", "3*x1"])).unwrap().is_valid());
}

#[test]
fn xi_actions() {
    let s = CoordinateSystem::standard(3, 1).unwrap();
    let m = rank1(&s, 3, &["3*x"]);
    assert_eq!(xi_action(&m, &mi(&[0])).unwrap(), identity_matrix(1, 1, 3));
    assert_eq!(xi_action(&m, &mi(&[1])).unwrap(), m.matrices[0]);
    let triv = QConnection::trivial(&s, 3, 2).unwrap();
    for k in 1..=4 {
        assert_eq!(xi_action(&triv, &mi(&[k])).unwrap(), zero_matrix(2, 1, 3));
    }
    // ∇^2 e = ∇(3x e) = 3 e + 3qx * 3x e
    let two = xi_action(&m, &mi(&[2])).unwrap();
    let expect = poly("(3 + 9*(1+t)*x^2)", 1, 3)
        .exact_divide(&crate::ring::q_integer(2, 3).embed(1, 0))
        .unwrap();
    assert_eq!(two[0][0], expect);
}

#[test]
fn quasi_nilpotence() {
    let s = CoordinateSystem::standard(3, 1).unwrap();
    assert!(quasi_nilpotent(&QConnection::trivial(&s, 3, 1).unwrap()).unwrap());
    assert!(quasi_nilpotent(&rank1(&s, 3, &["3*2"])).unwrap());
    assert!(!quasi_nilpotent(&rank1(&s, 3, &["1"])).unwrap());
    let nil = QConnection::new(
        &s,
        3,
        vec![vec![vec![poly("0", 1, 3), poly("1", 1, 3)], vec![poly("0", 1, 3), poly("0", 1, 3)]]],
    )
    .unwrap();
    assert!(quasi_nilpotent(&nil).unwrap());
    assert!(matches!(
        xi_action(&rank1(&s, 3, &["1"]), &mi(&[3])),
        Err(Error::NotDivisible(_))
    ));
}

#[test]
fn stratification_roundtrip_and_cocycle() {
    let s = CoordinateSystem::standard(3, 1).unwrap();
    let triv = stratify(&QConnection::trivial(&s, 3, 1).unwrap(), 4).unwrap();
    assert!(triv.table.iter().all(|(k, m)| k.is_zero() || m == &zero_matrix(1, 1, 3)));
    assert!(cocycle_check(&triv).unwrap());
    let m = rank1(&s, 3, &["3*x + 3"]);
    let e = stratify(&m, 4).unwrap();
    assert_eq!(recover(&e).unwrap(), m);
    assert!(cocycle_check(&e).unwrap());
    let mut bad = e.clone();
    let entry = bad.table.get_mut(&mi(&[2])).unwrap();
    entry[0][0] = -entry[0][0].clone();
    assert!(!cocycle_check(&bad).unwrap());
}

#[test]
fn stratification_two_variables() {
    let s = CoordinateSystem::shift(3, 2, 1).unwrap();
    let m = rank1(&s, 3, &["3", "3*t"]);
    assert!(validate(&m).unwrap().is_valid());
    let e = stratify(&m, 3).unwrap();
    assert!(cocycle_check(&e).unwrap());
    assert_eq!(recover(&e).unwrap(), m);
}

#[test]
fn json_roundtrip() {
    let s = CoordinateSystem::standard(3, 1).unwrap();
    let m = rank1(&s, 3, &["3*x + t/2"]);
    let back: QConnection = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
    let e = stratify(&rank1(&s, 3, &["3*x"]), 3).unwrap();
    let back: Stratification = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
    assert_eq!(back, e);
}

fn lift(c: i64) -> CoordinateSystem {
    if c == 0 {
        CoordinateSystem::standard(3, 1).unwrap()
    } else {
        CoordinateSystem::shift(3, 1, c).unwrap()
    }
}

fn canon(a: i64, b: i64) -> Section {
    canonical_section(&lift(a), &lift(b), None, 3, 6).unwrap()
}

#[test]
fn transport_basics() {
    let sh = lift(1);
    let m = rank1(&sh, 3, &["3*x"]);
    let id = Section::trivial(&sh, &sh, 3).unwrap();
    assert_eq!(transport(&id, &m).unwrap(), m);
    let s = canon(0, 1);
    let triv = QConnection::trivial(&sh, 3, 1).unwrap();
    assert_eq!(transport(&s, &triv).unwrap(), QConnection::trivial(&lift(0), 3, 1).unwrap());
    let out = transport(&s, &m).unwrap();
    assert!(validate(&out).unwrap().is_valid());
    assert_eq!(out.base, lift(0));
}

#[test]
fn transport_functoriality() {
    let s21 = canon(0, 1);
    let s32 = canon(1, 2);
    let m = rank1(&lift(2), 3, &["3*x + 3"]);
    let two_steps = transport(&s21, &transport(&s32, &m).unwrap()).unwrap();
    let composite = compose_sections(&s32, &s21).unwrap();
    let one_step = transport(&composite, &m).unwrap();
    assert_eq!(two_steps, one_step);
}

#[test]
fn naturality_and_identity_iso() {
    let s = canon(0, 1);
    let s_prime = generic_section(&lift(0), &lift(1), None, 3, 6).unwrap();
    let xi = discrepancy(&s_prime, &[&s]).unwrap();
    let m1 = rank1(&lift(1), 3, &["3*x"]);
    let id = DiffOp::identity(1, 3);
    assert_eq!(natural_iso(&id, &s, &m1).unwrap(), identity_matrix(1, 1, 3));
    // φ = 2: M1 -> M1 is a morphism
    let phi = vec![vec![poly("2", 1, 3)]];
    assert!(is_morphism(&m1, &m1, &phi).unwrap());
    let u = natural_iso(&xi, &s_prime, &m1).unwrap();
    let fs = transport_morphism(&s, &m1, &phi).unwrap();
    let fsp = transport_morphism(&s_prime, &m1, &phi).unwrap();
    assert_eq!(mat_mul(&u, &fs), mat_mul(&fsp, &u));
    let a = transport(&s, &m1).unwrap();
    let b = transport(&s_prime, &m1).unwrap();
    assert!(is_morphism(&a, &b, &u).unwrap());
}

#[test]
fn coherence_square() {
    let cs = CoherenceSections {
        s10: canon(0, 1),
        s21: canon(1, 2),
        s32: canon(2, -1),
        s20: canon(0, 2),
        s31: canon(1, -1),
        s30: canon(0, -1),
    };
    let m = rank1(&lift(-1), 3, &["3*x"]);
    assert!(coherence_check(&cs, &m).unwrap());
}
