//! Barycentric subdivision by flag enumeration: one simplex per chain
//! σ₀ ⊊ σ₁ ⊊ … ⊊ σ_k of faces, spanned by their barycentres.

use std::collections::{BTreeMap, BTreeSet};

use lipstrat::exact::{qi, Q};
use lipstrat::{Simplex, SimplicialComplex};

pub type Cell = BTreeSet<Vec<Q>>;

fn centre(k: &SimplicialComplex, s: &Simplex) -> Vec<Q> {
    let n = qi(s.0.len() as i64);
    (0..k.ambient)
        .map(|i| s.0.iter().map(|&v| k.points[v].coords[i].clone()).sum::<Q>() / &n)
        .collect()
}

fn proper_faces(s: &Simplex) -> Vec<Simplex> {
    let m = s.0.len();
    (1u32..(1 << m) - 1)
        .map(|mask| Simplex(s.0.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect()))
        .collect()
}

fn chains_ending_at(s: &Simplex, memo: &mut BTreeMap<Simplex, Vec<Vec<Simplex>>>) -> Vec<Vec<Simplex>> {
    if let Some(c) = memo.get(s) {
        return c.clone();
    }
    let mut out = vec![vec![s.clone()]];
    for f in proper_faces(s) {
        for mut c in chains_ending_at(&f, memo) {
            c.push(s.clone());
            out.push(c);
        }
    }
    memo.insert(s.clone(), out.clone());
    out
}

/// Every simplex of K* as the set of its vertex coordinates.
pub fn flag_subdivision(k: &SimplicialComplex) -> BTreeSet<Cell> {
    let mut memo = BTreeMap::new();
    let mut out = BTreeSet::new();
    for s in &k.simplices {
        for chain in chains_ending_at(s, &mut memo) {
            out.insert(chain.iter().map(|f| centre(k, f)).collect());
        }
    }
    out
}

pub fn as_cells(k: &SimplicialComplex) -> BTreeSet<Cell> {
    k.simplices
        .iter()
        .map(|s| s.0.iter().map(|&v| k.points[v].coords.clone()).collect())
        .collect()
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Standard simplex conv(0, e₁, …, e_d).
pub fn standard_simplex(d: usize) -> SimplicialComplex {
    let mut pts = vec![lipstrat::Point::from_ints(&vec![0; d])];
    for i in 0..d {
        let mut e = vec![0; d];
        e[i] = 1;
        pts.push(lipstrat::Point::from_ints(&e));
    }
    SimplicialComplex::closed_simplex(pts)
}

/// Membership in the closed standard simplex, by its defining inequalities.
pub fn in_standard_simplex(x: &[Q]) -> bool {
    use num_traits::Signed;
    x.iter().all(|c| !c.is_negative()) && x.iter().sum::<Q>() <= qi(1)
}
