//! Single-apex cones, the cone complex K₃ over a triangulated skeleton, and
//! the conical extension h₃.
//!
//! K₃ is kept abstract: vertex `v` stands for the standard basis vector
//! e_v of ℝ^T, so any family of vertex sets closed under faces is a valid
//! geometric complex. Explicit coordinates are produced on request.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::exact::{qi, Q};
use crate::simplicial::{self, Point, Simplex, SimplicialComplex};

/// Above this vertex count explicit ℝ^T coordinates are not materialised.
pub const EXPLICIT_LIMIT: usize = 50;

/// Open cone `{(1−t)c + t x : x ∈ Γ, t ∈ (0,1)}` over an open simplex Γ.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeCell {
    pub vertex: Point,
    pub base: Vec<Point>,
}

pub fn cone(c: &Point, base: &[Point]) -> Result<ConeCell> {
    if base.is_empty() || base.iter().any(|p| p.dim() != c.dim()) {
        return Err(GeomError::Input("cone base must be a nonempty cell in the apex's space".into()));
    }
    let mut all: Vec<&Point> = base.iter().collect();
    all.push(c);
    if !simplicial::affinely_independent(&all) {
        return Err(GeomError::DegenerateCone);
    }
    Ok(ConeCell {
        vertex: c.clone(),
        base: base.to_vec(),
    })
}

impl ConeCell {
    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// `(1−t)·c + t·x` for `x` given by barycentric weights on the base.
    pub fn point(&self, lam: &[Q], t: &Q) -> Point {
        let n = self.vertex.dim();
        let one_t = Q::one() - t;
        Point::new(
            (0..n)
                .map(|i| {
                    let x = self
                        .base
                        .iter()
                        .zip(lam)
                        .fold(Q::zero(), |a, (v, l)| a + l * &v.coords[i]);
                    &one_t * &self.vertex.coords[i] + t * x
                })
                .collect(),
        )
    }

    /// Vertices of the closed cone, base first and apex last.
    pub fn closure_vertices(&self) -> Vec<Point> {
        let mut v = self.base.clone();
        v.push(self.vertex.clone());
        v
    }

    pub fn contains_open(&self, p: &Point) -> bool {
        let verts = self.closure_vertices();
        simplicial::barycentric_coords(&verts.iter().collect::<Vec<_>>(), p)
            .is_some_and(|l| l.iter().all(|x| x.is_positive()))
    }
}

/// The cone complex over a (d−1)-dimensional triangulation of the skeleton
/// of a d-dimensional complex K₁.
#[derive(Clone, Debug, Serialize)]
pub struct ConeComplexK3 {
    /// Total vertex count T.
    pub t: usize,
    /// Number of vertices coming from K₂ (ids `0..alpha`).
    pub alpha: usize,
    /// K₂ point id of each L vertex.
    pub k2_vertex: Vec<usize>,
    /// The d-simplex of K₁ owning apex `alpha + j`.
    pub tops: Vec<Simplex>,
    pub simplices: BTreeSet<Simplex>,
}

/// Affine-per-simplex map given by images of vertices.
#[derive(Clone, Debug)]
pub struct VertexMap {
    pub images: Vec<Point>,
}

impl VertexMap {
    pub fn apply(&self, s: &Simplex, lam: &[Q]) -> Point {
        let n = self.images[s.0[0]].dim();
        Point::new(
            (0..n)
                .map(|i| {
                    s.0.iter()
                        .zip(lam)
                        .fold(Q::zero(), |a, (&v, l)| a + l * &self.images[v].coords[i])
                })
                .collect(),
        )
    }
}

/// Builds K₃ from K₁ (dimension d) and a triangulation K₂ of its
/// (d−1)-skeleton whose map h₂ is affine on each simplex of K₂ with the
/// given vertex images in K₁'s coordinates.
pub fn build_k3(k1: &SimplicialComplex, k2: &SimplicialComplex, h2: &VertexMap) -> Result<ConeComplexK3> {
    let d = k1.dim().unwrap_or(0);
    let tops: Vec<Simplex> = k1.of_dim(d).cloned().collect();
    let used: BTreeSet<usize> = k2.simplices.iter().flat_map(|s| s.0.iter().copied()).collect();
    let k2_vertex: Vec<usize> = used.into_iter().collect();
    let relabel: BTreeMap<usize, usize> = k2_vertex.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let alpha = k2_vertex.len();
    let top_pts: Vec<Vec<&Point>> = tops.iter().map(|t| k1.vertex_points(t)).collect();

    let mut simplices = BTreeSet::new();
    for (j, _) in tops.iter().enumerate() {
        simplices.insert(Simplex(vec![alpha + j]));
    }
    for s in &k2.simplices {
        let l = Simplex::new(s.0.iter().map(|v| relabel[v]).collect());
        let imgs: Vec<&Point> = s.0.iter().map(|&v| &h2.images[v]).collect();
        // h₂ is affine on s and closed simplices are convex: vertex images decide
        let owners: Vec<usize> = (0..tops.len())
            .filter(|&j| {
                imgs.iter().all(|p| {
                    simplicial::barycentric_coords(&top_pts[j], p).is_some_and(|lam| lam.iter().all(|x| !x.is_negative()))
                })
            })
            .collect();
        if owners.is_empty() {
            // maximal lower-dimensional simplices of K₁ own no apex, but the
            // image must still sit inside some closed simplex of K₁
            let inside = k1.maximal().iter().any(|f| {
                let fp = k1.vertex_points(f);
                imgs.iter().all(|p| {
                    simplicial::barycentric_coords(&fp, p).is_some_and(|lam| lam.iter().all(|x| !x.is_negative()))
                })
            });
            if !inside {
                return Err(GeomError::Incidence(format!("image of {:?} not in any closed simplex", s.0)));
            }
        }
        for j in owners {
            let mut v = l.0.clone();
            v.push(alpha + j);
            simplices.insert(Simplex::new(v));
        }
        simplices.insert(l);
    }
    Ok(ConeComplexK3 {
        t: alpha + tops.len(),
        alpha,
        k2_vertex,
        tops,
        simplices,
    })
}

impl ConeComplexK3 {
    pub fn dim(&self) -> Option<usize> {
        self.simplices.iter().map(|s| s.dim()).max()
    }

    pub fn is_apex(&self, v: usize) -> bool {
        v >= self.alpha
    }

    pub fn apex_of(&self, s: &Simplex) -> Option<usize> {
        s.0.iter().copied().find(|&v| self.is_apex(v)).map(|v| v - self.alpha)
    }

    /// The simplex without its apex.
    pub fn base_part(&self, s: &Simplex) -> Simplex {
        Simplex(s.0.iter().copied().filter(|&v| !self.is_apex(v)).collect())
    }

    /// Face closure and the one-apex rule. Disjointness is automatic for
    /// standard-basis vertices; with few vertices it is also checked
    /// explicitly in exact arithmetic.
    pub fn validate(&self) -> Result<()> {
        for s in &self.simplices {
            if s.0.iter().filter(|&&v| self.is_apex(v)).count() > 1 {
                return Err(GeomError::Validation(format!("{:?} joins two apexes", s.0)));
            }
            if s.0.iter().any(|&v| v >= self.t) {
                return Err(GeomError::Validation(format!("{:?} has an unknown vertex", s.0)));
            }
            for f in s.facets() {
                if !self.simplices.contains(&f) {
                    return Err(GeomError::Validation(format!("face {:?} of {:?} missing", f.0, s.0)));
                }
            }
        }
        if self.t <= EXPLICIT_LIMIT {
            if let Some(k) = self.explicit() {
                k.validate()?;
            }
        }
        Ok(())
    }

    /// The complex with vertices e₁…e_T in ℝ^T, when T is small enough.
    pub fn explicit(&self) -> Option<SimplicialComplex> {
        if self.t > EXPLICIT_LIMIT {
            return None;
        }
        let points = (0..self.t)
            .map(|i| Point::new((0..self.t).map(|j| if i == j { qi(1) } else { qi(0) }).collect()))
            .collect();
        Some(SimplicialComplex {
            ambient: self.t,
            points,
            simplices: self.simplices.clone(),
        })
    }
}

/// f: |L| → |K₂|, `e_β ↦ a_β` extended affinely.
pub fn semilinear_iso_f(k3: &ConeComplexK3, k2: &SimplicialComplex) -> VertexMap {
    VertexMap {
        images: k3.k2_vertex.iter().map(|&v| k2.points[v].clone()).collect(),
    }
}

/// h₃ as vertex images in K₁'s coordinates: L vertices go through h₂∘f,
/// apex j goes to the barycentre of the j-th d-simplex. On apex-joined
/// cells this is `(1−t)·0_△ + t·h₂∘f(x)`.
pub fn conical_extension_h3(
    k3: &ConeComplexK3,
    h2f: &VertexMap,
    barycentres: &[Point],
) -> Result<VertexMap> {
    let mut images: Vec<Point> = h2f.images.clone();
    images.extend(barycentres.iter().cloned());
    let map = VertexMap { images };
    // each apex cell must be a genuine cone over its base image
    for s in &k3.simplices {
        if k3.apex_of(s).is_some() && s.0.len() > 1 {
            let pts: Vec<&Point> = s.0.iter().map(|&v| &map.images[v]).collect();
            if !simplicial::affinely_independent(&pts) {
                return Err(GeomError::DegenerateCone);
            }
        }
    }
    Ok(map)
}

/// The geometric image of K₃ under an affine-per-simplex vertex map.
pub fn image_complex(k3: &ConeComplexK3, h: &VertexMap) -> SimplicialComplex {
    SimplicialComplex {
        ambient: h.images.first().map(|p| p.dim()).unwrap_or(0),
        points: h.images.clone(),
        simplices: k3.simplices.clone(),
    }
}

/// Lipschitz constant of an affine-per-simplex map on one simplex: the
/// operator norm of its linear part.
pub fn simplex_lipschitz(src: &[Point], dst: &[Point]) -> f64 {
    if src.len() < 2 {
        return 0.0;
    }
    let s: Vec<Vec<f64>> = src.iter().map(|p| p.to_f64()).collect();
    let t: Vec<Vec<f64>> = dst.iter().map(|p| p.to_f64()).collect();
    crate::stacks::AffineLocal::from_vertices(&s, &t).a.singular_values().max()
}
