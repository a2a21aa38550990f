//! Open simplices, finite simplicial complexes, and barycentric subdivision.
//!
//! Coordinates are exact rationals; every combinatorial predicate is decided
//! exactly. A `Simplex` is the sorted list of vertex ids into its complex's
//! point table and denotes the open simplex.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::exact::{self, qi, Q};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub coords: Vec<Q>,
}

impl Point {
    pub fn new(coords: Vec<Q>) -> Self {
        Point { coords }
    }

    pub fn from_ints(c: &[i64]) -> Self {
        Point::new(c.iter().map(|&x| qi(x)).collect())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        exact::vec_f64(&self.coords)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Simplex(pub Vec<usize>);

impl Simplex {
    pub fn new(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        Simplex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn verts(&self) -> &[usize] {
        &self.0
    }

    pub fn is_face_of(&self, other: &Simplex) -> bool {
        self.0.iter().all(|v| other.0.binary_search(v).is_ok())
    }

    /// All nonempty vertex subsets, including the simplex itself.
    pub fn faces(&self) -> Vec<Simplex> {
        let k = self.0.len();
        (1u32..(1 << k))
            .map(|mask| {
                Simplex(
                    (0..k)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| self.0[i])
                        .collect(),
                )
            })
            .collect()
    }

    /// Codimension-one faces.
    pub fn facets(&self) -> Vec<Simplex> {
        if self.0.len() == 1 {
            return vec![];
        }
        (0..self.0.len())
            .map(|i| {
                let mut v = self.0.clone();
                v.remove(i);
                Simplex(v)
            })
            .collect()
    }
}

/// Exact barycentric coordinates of `p` with respect to `verts`, or `None`
/// if `p` is off their affine span. Vertices must be affinely independent.
pub fn barycentric_coords(verts: &[&Point], p: &Point) -> Option<Vec<Q>> {
    let n = p.dim();
    let k = verts.len();
    let mut a = vec![vec![Q::zero(); k]; n + 1];
    let mut b = vec![Q::zero(); n + 1];
    for (j, v) in verts.iter().enumerate() {
        for (row, c) in a.iter_mut().zip(&v.coords) {
            row[j] = c.clone();
        }
        a[n][j] = qi(1);
    }
    b[..n].clone_from_slice(&p.coords);
    b[n] = qi(1);
    exact::solve_unique(&a, &b)
}

pub fn affinely_independent(verts: &[&Point]) -> bool {
    if verts.len() <= 1 {
        return true;
    }
    let rows: Vec<Vec<Q>> = verts[1..]
        .iter()
        .map(|v| {
            v.coords
                .iter()
                .zip(&verts[0].coords)
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    exact::rank(&rows) == verts.len() - 1
}

pub fn mean_point(verts: &[&Point]) -> Point {
    let n = verts[0].dim();
    let k = qi(verts.len() as i64);
    let mut c = vec![Q::zero(); n];
    for v in verts {
        for (ci, vi) in c.iter_mut().zip(&v.coords) {
            *ci += vi;
        }
    }
    Point::new(c.into_iter().map(|x| x / &k).collect())
}

/// Whether two open simplices (given by vertex points) share a point.
pub fn open_simplices_intersect(s: &[&Point], t: &[&Point]) -> bool {
    let n = s[0].dim();
    let (ks, kt) = (s.len(), t.len());
    // variables: alpha (ks), beta (kt), sigma; lambda_i = sigma + alpha_i.
    let nv = ks + kt + 1;
    let mut a = Vec::with_capacity(n + 2);
    let mut b = Vec::with_capacity(n + 2);
    let mut row = vec![Q::zero(); nv];
    for x in row.iter_mut().take(ks) {
        *x = qi(1);
    }
    row[nv - 1] = qi(ks as i64);
    a.push(row);
    b.push(qi(1));
    let mut row = vec![Q::zero(); nv];
    for x in row.iter_mut().skip(ks).take(kt) {
        *x = qi(1);
    }
    row[nv - 1] = qi(kt as i64);
    a.push(row);
    b.push(qi(1));
    for i in 0..n {
        let mut row = vec![Q::zero(); nv];
        let mut sig = Q::zero();
        for (j, v) in s.iter().enumerate() {
            row[j] = v.coords[i].clone();
            sig += &v.coords[i];
        }
        for (j, w) in t.iter().enumerate() {
            row[ks + j] = -w.coords[i].clone();
            sig -= &w.coords[i];
        }
        row[nv - 1] = sig;
        a.push(row);
        b.push(Q::zero());
    }
    let mut c = vec![Q::zero(); nv];
    c[nv - 1] = qi(1);
    match exact::lp_max(&a, &b, &c) {
        None => false,
        Some(None) => true,
        Some(Some(v)) => v.is_positive(),
    }
}

/// Whether closed `s` ∩ closed `t` lies in the face of `s` spanned by the
/// vertices flagged in `common` (shared with `t`).
pub fn meet_in_common_face(s: &[&Point], t: &[&Point], common: &[bool]) -> bool {
    let n = s[0].dim();
    let (ks, kt) = (s.len(), t.len());
    // variables λ (ks), μ (kt): Σλ = 1, Σμ = 1, Σ λᵢ sᵢ = Σ μⱼ tⱼ
    let nv = ks + kt;
    let mut a = Vec::with_capacity(n + 2);
    let mut b = Vec::with_capacity(n + 2);
    let mut row = vec![Q::zero(); nv];
    row[..ks].fill(qi(1));
    a.push(row);
    b.push(qi(1));
    let mut row = vec![Q::zero(); nv];
    row[ks..].fill(qi(1));
    a.push(row);
    b.push(qi(1));
    for i in 0..n {
        let mut row = vec![Q::zero(); nv];
        for (j, v) in s.iter().enumerate() {
            row[j] = v.coords[i].clone();
        }
        for (j, w) in t.iter().enumerate() {
            row[ks + j] = -w.coords[i].clone();
        }
        a.push(row);
        b.push(Q::zero());
    }
    // weight on the vertices of s outside the common face
    let mut c = vec![Q::zero(); nv];
    for (j, &shared) in common.iter().enumerate() {
        if !shared {
            c[j] = qi(1);
        }
    }
    match exact::lp_max(&a, &b, &c) {
        None => true,
        Some(None) => false,
        Some(Some(v)) => !v.is_positive(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialComplex {
    pub ambient: usize,
    pub points: Vec<Point>,
    pub simplices: BTreeSet<Simplex>,
}

impl SimplicialComplex {
    pub fn empty(ambient: usize) -> Self {
        SimplicialComplex {
            ambient,
            points: vec![],
            simplices: BTreeSet::new(),
        }
    }

    /// Complex generated by the given simplices and all their faces.
    pub fn from_simplices(points: Vec<Point>, tops: &[Vec<usize>]) -> Self {
        let ambient = points.first().map_or(0, Point::dim);
        let mut simplices = BTreeSet::new();
        for t in tops {
            for f in Simplex::new(t.clone()).faces() {
                simplices.insert(f);
            }
        }
        SimplicialComplex {
            ambient,
            points,
            simplices,
        }
    }

    /// The closed simplex on the given points.
    pub fn closed_simplex(points: Vec<Point>) -> Self {
        let top: Vec<usize> = (0..points.len()).collect();
        Self::from_simplices(points, &[top])
    }

    pub fn dim(&self) -> Option<usize> {
        self.simplices.iter().map(Simplex::dim).max()
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn point(&self, v: usize) -> &Point {
        &self.points[v]
    }

    pub fn vertex_points(&self, s: &Simplex) -> Vec<&Point> {
        s.0.iter().map(|&v| &self.points[v]).collect()
    }

    pub fn of_dim(&self, d: usize) -> impl Iterator<Item = &Simplex> {
        self.simplices.iter().filter(move |s| s.dim() == d)
    }

    pub fn count_dim(&self, d: usize) -> usize {
        self.of_dim(d).count()
    }

    pub fn faces(&self, s: &Simplex) -> Vec<Simplex> {
        s.faces()
    }

    pub fn barycentre(&self, s: &Simplex) -> Point {
        mean_point(&self.vertex_points(s))
    }

    /// Simplices of dimension at most `l`. Unused points are kept so that
    /// vertex ids stay stable.
    pub fn skeleton(&self, l: usize) -> SimplicialComplex {
        SimplicialComplex {
            ambient: self.ambient,
            points: self.points.clone(),
            simplices: self
                .simplices
                .iter()
                .filter(|s| s.dim() <= l)
                .cloned()
                .collect(),
        }
    }

    /// Closed top simplices (those not a proper face of another member).
    pub fn maximal(&self) -> Vec<Simplex> {
        self.simplices
            .iter()
            .filter(|s| {
                !self
                    .simplices
                    .iter()
                    .any(|t| t.0.len() > s.0.len() && s.is_face_of(t))
            })
            .cloned()
            .collect()
    }

    /// Exact validity: vertex ids resolve, affine independence, face
    /// closure, and pairwise disjointness of the open simplices.
    pub fn validate(&self) -> Result<()> {
        for s in &self.simplices {
            if s.0.iter().any(|&v| v >= self.points.len()) {
                return Err(GeomError::Input(format!("dangling vertex id in {:?}", s.0)));
            }
            if !affinely_independent(&self.vertex_points(s)) {
                return Err(GeomError::Input(format!("affinely dependent simplex {:?}", s.0)));
            }
            for f in s.faces() {
                if !self.simplices.contains(&f) {
                    return Err(GeomError::Input(format!(
                        "face {:?} of {:?} missing",
                        f.0, s.0
                    )));
                }
            }
        }
        // With nondegenerate simplices and closed faces, the open simplices
        // are disjoint iff any two maximal closed simplices meet in their
        // common face.
        let tops = self.maximal();
        let boxes: Vec<Vec<(Q, Q)>> = tops.iter().map(|s| self.bbox(s)).collect();
        for i in 0..tops.len() {
            for j in (i + 1)..tops.len() {
                let overlap = boxes[i]
                    .iter()
                    .zip(&boxes[j])
                    .all(|((lo1, hi1), (lo2, hi2))| lo1 <= hi2 && lo2 <= hi1);
                if !overlap {
                    continue;
                }
                let (s, t) = (&tops[i], &tops[j]);
                let common: Vec<bool> = s.0.iter().map(|v| t.0.contains(v)).collect();
                if !meet_in_common_face(&self.vertex_points(s), &self.vertex_points(t), &common) {
                    return Err(GeomError::Input(format!(
                        "simplices {:?} and {:?} overlap",
                        s.0, t.0
                    )));
                }
            }
        }
        Ok(())
    }

    fn bbox(&self, s: &Simplex) -> Vec<(Q, Q)> {
        (0..self.ambient)
            .map(|i| {
                let mut lo = self.points[s.0[0]].coords[i].clone();
                let mut hi = lo.clone();
                for &v in &s.0[1..] {
                    let x = &self.points[v].coords[i];
                    if *x < lo {
                        lo = x.clone();
                    }
                    if *x > hi {
                        hi = x.clone();
                    }
                }
                (lo, hi)
            })
            .collect()
    }

    /// The open simplex containing `p`, decided exactly.
    pub fn locate(&self, p: &Point) -> Option<Simplex> {
        let pf = p.to_f64();
        self.simplices
            .iter()
            .filter(|s| {
                // cheap floating rejection with generous slack
                (0..self.ambient).all(|i| {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &v in &s.0 {
                        let x = exact::to_f64(&self.points[v].coords[i]);
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                    pf[i] >= lo - 1e-9 && pf[i] <= hi + 1e-9
                })
            })
            .find(|s| {
                barycentric_coords(&self.vertex_points(s), p)
                    .is_some_and(|l| l.iter().all(|x| x.is_positive()))
            })
            .cloned()
    }

    /// Open simplices in the closed star of nothing: simplices containing `p`
    /// in their closure.
    pub fn closure_contains(&self, s: &Simplex, p: &Point) -> bool {
        barycentric_coords(&self.vertex_points(s), p)
            .is_some_and(|l| l.iter().all(|x| !x.is_negative()))
    }

    pub fn barycentric_subdivision(&self) -> Subdivision {
        barycentric_subdivision(self)
    }
}

/// A subdivision together with the carrier (smallest containing simplex of
/// the original complex) of each new simplex.
#[derive(Clone, Debug)]
pub struct Subdivision {
    pub complex: SimplicialComplex,
    pub carrier: BTreeMap<Simplex, Simplex>,
}

/// Generic cone-over-boundary recursion for a finite poset of convex cells.
///
/// `cells[i]` has dimension `dims[i]`, barycentre `bary[i]`, and proper faces
/// `faces[i]` (indices into `cells`). Returns, for every new simplex, its
/// vertex list (indices into the returned point table) and carrier cell.
pub(crate) fn cone_recursion(
    dims: &[usize],
    faces: &[Vec<usize>],
    bary: &[Point],
) -> (Vec<Point>, Vec<(Simplex, usize)>) {
    let mut order: Vec<usize> = (0..dims.len()).collect();
    order.sort_by_key(|&i| (dims[i], i));
    let mut points: Vec<Point> = Vec::new();
    let mut index: HashMap<Point, usize> = HashMap::new();
    let mut sub: Vec<Vec<Simplex>> = vec![Vec::new(); dims.len()];
    let mut out = Vec::new();
    for &c in &order {
        let b = bary[c].clone();
        let bid = *index.entry(b.clone()).or_insert_with(|| {
            points.push(b);
            points.len() - 1
        });
        let mut mine = vec![Simplex(vec![bid])];
        let mut seen: BTreeSet<Simplex> = BTreeSet::new();
        for &f in &faces[c] {
            for s in &sub[f] {
                if seen.insert(s.clone()) {
                    let mut v = s.0.clone();
                    v.push(bid);
                    mine.push(Simplex::new(v));
                }
            }
        }
        for s in &mine {
            out.push((s.clone(), c));
        }
        // the subdivided closure of c: own cells plus everything on its boundary
        let mut closure = mine;
        closure.extend(seen);
        sub[c] = closure;
    }
    (points, out)
}

/// Barycentric subdivision by coning barycentres over subdivided boundaries.
pub fn barycentric_subdivision(k: &SimplicialComplex) -> Subdivision {
    let cells: Vec<Simplex> = k.simplices.iter().cloned().collect();
    let pos: HashMap<&Simplex, usize> = cells.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let dims: Vec<usize> = cells.iter().map(Simplex::dim).collect();
    let faces: Vec<Vec<usize>> = cells
        .iter()
        .map(|s| s.facets().iter().map(|f| pos[f]).collect())
        .collect();
    let bary: Vec<Point> = cells.iter().map(|s| k.barycentre(s)).collect();
    let (points, out) = cone_recursion(&dims, &faces, &bary);
    let mut simplices = BTreeSet::new();
    let mut carrier = BTreeMap::new();
    for (s, c) in out {
        carrier.insert(s.clone(), cells[c].clone());
        simplices.insert(s);
    }
    Subdivision {
        complex: SimplicialComplex {
            ambient: k.ambient,
            points,
            simplices,
        },
        carrier,
    }
}
