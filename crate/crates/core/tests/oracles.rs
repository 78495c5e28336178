//! Self-tests for the shared oracles, against answers worked out by hand.

mod common;

use num_traits::{One, Zero};

use nsqip::algnum::{NfElement, NfMatrix, NumberField};
use nsqip::circuits::{GateDescriptor, Instance};
use nsqip::game::build_game;
use nsqip::lp::{LinearProgram, Relation, Sense};
use nsqip::rational::{int, rat, Rational};

fn row(v: &[i64]) -> Vec<Rational> {
    v.iter().map(|&x| int(x)).collect()
}

#[test]
fn simplex_vertices() {
    // x + y + z = 1 with x, y, z >= 0 is a triangle.
    let mut v = common::polytope_vertices(&[row(&[1, 1, 1])], &row(&[1]), 3);
    v.sort();
    assert_eq!(v, vec![row(&[0, 0, 1]), row(&[0, 1, 0]), row(&[1, 0, 0])]);
}

#[test]
fn square_vertices() {
    // x + s = 1, y + t = 1: the unit square lifted by two slacks.
    let e = [row(&[1, 0, 1, 0]), row(&[0, 1, 0, 1])];
    let v = common::polytope_vertices(&e, &row(&[1, 1]), 4);
    assert_eq!(v.len(), 4);
    assert!(v.iter().all(|p| p.iter().all(|x| x.is_zero() || x.is_one())));
}

#[test]
fn empty_polytope_has_no_vertices() {
    let v = common::polytope_vertices(&[row(&[1, 1])], &row(&[-1]), 2);
    assert!(v.is_empty());
}

#[test]
fn two_gate_game_has_352_vertices() {
    // Local deterministic strategies and PR-box-type points of the N = 2 polytope.
    let inst = Instance::from_gates(vec![GateDescriptor::one(), GateDescriptor::not(0)], 1).unwrap();
    let (value, count) = common::ns_value_by_vertices(&build_game(&inst));
    assert_eq!(count, 352);
    assert_eq!(value, rat(3, 4));
}

#[test]
fn enumeration_solves_textbook_lp() {
    // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18: optimum 36 at (2, 6).
    let mut lp = LinearProgram::new(2, Sense::Maximize);
    lp.set_objective(0, int(3));
    lp.set_objective(1, int(5));
    lp.add_constraint([(0, int(1))], Relation::Le, int(4)).unwrap();
    lp.add_constraint([(1, int(2))], Relation::Le, int(12)).unwrap();
    lp.add_constraint([(0, int(3)), (1, int(2))], Relation::Le, int(18))
        .unwrap();
    assert_eq!(common::lp_by_enumeration(&lp), Some(int(36)));
}

#[test]
fn enumeration_handles_equalities_and_infeasibility() {
    let mut lp = LinearProgram::new(2, Sense::Minimize);
    lp.set_objective(0, int(1));
    lp.add_constraint([(0, int(1)), (1, int(1))], Relation::Eq, int(2))
        .unwrap();
    lp.add_constraint([(1, int(1))], Relation::Le, int(1)).unwrap();
    assert_eq!(common::lp_by_enumeration(&lp), Some(int(1)));
    lp.add_constraint([(0, int(1))], Relation::Ge, int(3)).unwrap();
    assert_eq!(common::lp_by_enumeration(&lp), None);
}

#[test]
fn bareiss_on_known_determinants() {
    let q = NumberField::rationals();
    let m = NfMatrix::from_rationals(&q, &[row(&[2, 0, 1]), row(&[1, 3, 2]), row(&[1, 1, 2])]).unwrap();
    assert_eq!(common::bareiss_det(&m), NfElement::from_rational(&q, int(6)));

    // [[sqrt2, 1], [1, sqrt2]] has determinant 2 - 1 = 1.
    let f = NumberField::sqrt2();
    let s = NfElement::generator(&f);
    let one = NfElement::one(&f);
    let m = NfMatrix::from_rows(&f, vec![vec![s.clone(), one.clone()], vec![one.clone(), s]]).unwrap();
    assert_eq!(common::bareiss_det(&m), one);
}

#[test]
fn interpolated_characteristic_polynomial() {
    // [[1, 2], [3, 4]]: t^2 - 5t - 2, lowest coefficient first.
    let q = NumberField::rationals();
    let m = NfMatrix::from_rationals(&q, &[row(&[1, 2]), row(&[3, 4])]).unwrap();
    let expect: Vec<NfElement> = [-2, -5, 1]
        .iter()
        .map(|&c| NfElement::from_rational(&q, int(c)))
        .collect();
    assert_eq!(common::char_poly_by_interpolation(&m), expect);
}
