//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod calib;
pub mod cusp_oracle;
pub mod flags;
pub mod hsuite;

use std::path::PathBuf;

use lipstrat::defnfun::{Base, FunctionHandle, Polynomial, StackPresentation};
use lipstrat::exact::{qi, Q};
use lipstrat::{Point, SimplicialComplex};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json"))
}

pub fn scene(name: &str) -> StackPresentation {
    lipstrat::io::read_scene(&fixture_path(name))
        .unwrap()
        .stack
        .expect("stack scene")
}

fn poly(nvars: usize, terms: &[(&[u32], i64)]) -> Polynomial {
    let t: Vec<(&[u32], Q)> = terms.iter().map(|(e, c)| (*e, qi(*c))).collect();
    Polynomial::from_terms(nvars, &t)
}

fn seg() -> Vec<Point> {
    vec![Point::from_ints(&[0]), Point::from_ints(&[1])]
}

fn tri() -> Vec<Point> {
    vec![Point::from_ints(&[0, 0]), Point::from_ints(&[1, 0]), Point::from_ints(&[0, 1])]
}

/// Stacks for the stack-map suite: segment and triangle bases, three
/// functions each, every one with a collapsing pair on a proper face.
pub fn h_stacks() -> Vec<(&'static str, StackPresentation)> {
    // over [0, 1]: 0 ≤ y² ≤ 1 + y, first pair collapses at y = 0
    let segment = StackPresentation::new(
        Base::Intervals(vec![(qi(0), qi(1))]),
        vec![
            FunctionHandle::single(seg(), poly(1, &[(&[0], 0)])),
            FunctionHandle::single(seg(), poly(1, &[(&[2], 1)])),
            FunctionHandle::single(seg(), poly(1, &[(&[0], 1), (&[1], 1)])),
        ],
    );
    let base = || Base::Complex(SimplicialComplex::closed_simplex(tri()));
    // over the triangle: 0 ≤ x ≤ 1 + y², collapsing on the edge x = 0
    let wedge = StackPresentation::new(
        base(),
        vec![
            FunctionHandle::single(tri(), poly(2, &[(&[0, 0], 0)])),
            FunctionHandle::single(tri(), poly(2, &[(&[1, 0], 1)])),
            FunctionHandle::single(tri(), poly(2, &[(&[0, 0], 1), (&[0, 2], 1)])),
        ],
    );
    // −x² ≤ x y ≤ 2 − y, first pair meeting along x = 0
    let saddle = StackPresentation::new(
        base(),
        vec![
            FunctionHandle::single(tri(), poly(2, &[(&[2, 0], -1)])),
            FunctionHandle::single(tri(), poly(2, &[(&[1, 1], 1)])),
            FunctionHandle::single(tri(), poly(2, &[(&[0, 0], 2), (&[0, 1], -1)])),
        ],
    );
    vec![("segment", segment), ("wedge", wedge), ("saddle", saddle)]
}
