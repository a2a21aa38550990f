//! Recursive triangulation of stack presentations and its conical
//! refinement for a chosen regularity condition.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::cones::{self, ConeComplexK3, VertexMap};
use crate::defnfun::{self, Base, CellKind, StackPresentation, GEOM_TOL};
use crate::error::{GeomError, Result};
use crate::exact::Q;
use crate::regularity::{self, CheckConfig, RegularityReport, SimplexStratum, Verdict};
use crate::simplicial::{Point, Simplex, SimplicialComplex};
use crate::stacks::{self, BaseMap, Homeomorphism, LocalMap, StackMap};

#[derive(Clone, Debug)]
pub struct TriangulateOptions {
    pub refine_cap: usize,
    /// Samples used to validate the stack before building.
    pub validation_samples: usize,
}

impl Default for TriangulateOptions {
    fn default() -> Self {
        TriangulateOptions {
            refine_cap: stacks::REFINE_CAP,
            validation_samples: 256,
        }
    }
}

/// A triangulation `(K, H)`: K is the barycentric subdivision of the
/// polyhedral complex K_p and H the stack map.
#[derive(Clone)]
pub struct Triangulation {
    pub complex: SimplicialComplex,
    /// K_p cell carrying each simplex.
    pub carrier: BTreeMap<Simplex, usize>,
    pub map: Arc<StackMap>,
    pub subdivisions: usize,
    /// Base triangulation one level down, if the base was itself a stack.
    pub base: Option<Arc<Triangulation>>,
}

impl Triangulation {
    pub fn ambient(&self) -> usize {
        self.complex.ambient
    }

    pub fn local(&self, s: &Simplex) -> Arc<dyn LocalMap> {
        self.map.cell_local(self.carrier[s])
    }

    pub fn cell_bound(&self, s: &Simplex) -> f64 {
        self.map.certificates[self.carrier[s]].bound
    }

    pub fn cell_kind(&self, s: &Simplex) -> CellKind {
        self.map.complex.cells[self.carrier[s]].kind
    }

    /// Exact images of the vertices of K.
    pub fn vertex_images(&self) -> Result<Vec<Point>> {
        self.complex
            .points
            .par_iter()
            .map(|p| self.map.forward_q(p))
            .collect()
    }

    /// Every simplex of K as a parametrised stratum of the image.
    pub fn strata(&self) -> Vec<SimplexStratum> {
        self.complex
            .simplices
            .iter()
            .map(|s| {
                let verts: Vec<Vec<f64>> = self.complex.vertex_points(s).iter().map(|p| p.to_f64()).collect();
                SimplexStratum::new(verts, self.local(s))
            })
            .collect()
    }
}

/// Triangulates the set presented by `s` (the closed region between the
/// extreme graphs over the base, with its subsets).
pub fn triangulate(s: &StackPresentation) -> Result<Triangulation> {
    triangulate_with(s, &TriangulateOptions::default())
}

pub fn triangulate_with(s: &StackPresentation, opts: &TriangulateOptions) -> Result<Triangulation> {
    if s.functions.is_empty() {
        return Err(GeomError::Input("stack has no functions".into()));
    }
    s.check_references()?;
    let diag = defnfun::validate_stack(s, opts.validation_samples);
    if !diag.passed() {
        let v = &diag.violations[0];
        return Err(GeomError::Validation(format!(
            "{:?} at {:?} (value {:e})",
            v.kind, v.witness, v.value
        )));
    }
    let (k, base_map, base) = match &s.base {
        Base::Intervals(iv) => (defnfun::interval_complex(iv, &s.functions), BaseMap::Identity, None),
        Base::Complex(k) => {
            k.validate().map_err(|e| e.at("base complex"))?;
            (k.clone(), BaseMap::Identity, None)
        }
        Base::Stack(b) => {
            let tri = Arc::new(triangulate_with(b, opts).map_err(|e| e.at("base stack"))?);
            let origin = tri.complex.simplices.iter().map(|x| (x.clone(), x.clone())).collect();
            (
                tri.complex.clone(),
                BaseMap::Stack {
                    tri: tri.clone(),
                    origin,
                },
                Some(tri),
            )
        }
    };
    let refined = stacks::refine_with(s, &k, &base_map, opts.refine_cap).map_err(|e| e.at("separation"))?;
    let base_map = match base_map {
        BaseMap::Identity => BaseMap::Identity,
        BaseMap::Stack { tri, .. } => BaseMap::Stack {
            tri,
            origin: refined.origin.clone(),
        },
    };
    let p = stacks::build_with(s, &refined.complex, base_map).map_err(|e| e.at("polyhedral complex"))?;
    let h = Arc::new(stacks::build_h(&p, s)?);
    let (complex, carrier) = p.subdivide();
    Ok(Triangulation {
        complex,
        carrier,
        map: h,
        subdivisions: refined.subdivisions,
        base,
    })
}

/// Image strata that can be sampled in their interiors.
pub trait ImageStrata: Sync {
    fn stratum_count(&self) -> usize;
    fn stratum_sample(&self, i: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64>;
}

impl ImageStrata for [SimplexStratum] {
    fn stratum_count(&self) -> usize {
        self.len()
    }
    fn stratum_sample(&self, i: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        self[i].sample_point(rng)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompatibilityViolation {
    pub subset: String,
    pub stratum: usize,
    pub inside: Vec<f64>,
    pub outside: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompatibilityReport {
    pub samples: usize,
    pub violations: Vec<CompatibilityViolation>,
}

impl CompatibilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub type Membership<'a> = (String, Box<dyn Fn(&[f64]) -> bool + Sync + 'a>);

/// Each stratum must lie entirely inside or entirely outside every subset.
/// `samples` points are spread evenly over the strata.
pub fn compatibility_check(
    strata: &(impl ImageStrata + ?Sized),
    subsets: &[Membership<'_>],
    samples: usize,
    seed: u64,
) -> CompatibilityReport {
    let n = strata.stratum_count();
    if n == 0 || subsets.is_empty() {
        return CompatibilityReport {
            samples: 0,
            violations: vec![],
        };
    }
    let per = samples.div_ceil(n).max(2);
    let results: Vec<(Vec<CompatibilityViolation>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = defnfun::seeded(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let pts: Vec<Vec<f64>> = (0..per).map(|_| strata.stratum_sample(i, &mut rng)).collect();
            let mut v = Vec::new();
            for (name, member) in subsets {
                let flags: Vec<bool> = pts.iter().map(|p| member(p)).collect();
                if let (Some(a), Some(b)) = (flags.iter().position(|&f| f), flags.iter().position(|&f| !f)) {
                    v.push(CompatibilityViolation {
                        subset: name.clone(),
                        stratum: i,
                        inside: pts[a].clone(),
                        outside: pts[b].clone(),
                    });
                }
            }
            (v, per)
        })
        .collect();
    CompatibilityReport {
        samples: results.iter().map(|r| r.1).sum(),
        violations: results.into_iter().flat_map(|r| r.0).collect(),
    }
}

/// The presented set and each declared subset as membership predicates.
pub fn stack_subsets(s: &StackPresentation) -> Vec<Membership<'_>> {
    let mut out: Vec<Membership<'_>> = vec![(
        "set".to_string(),
        Box::new(move |x: &[f64]| s.set_contains(x, GEOM_TOL)),
    )];
    for sub in &s.subsets {
        out.push((
            sub.name.clone(),
            Box::new(move |x: &[f64]| s.subset_contains(sub, x, GEOM_TOL)),
        ));
    }
    out
}

/// A stratification of K₁ refined for a condition; top strata are never
/// split.
#[derive(Clone, Debug, Serialize)]
pub struct Substratification {
    pub complex_size: usize,
    pub rounds: usize,
    pub residual: Vec<(usize, usize)>,
    pub surrogate: bool,
}

/// Witness-guided refinement surrogate: checks adjacent image pairs of
/// (K₁, h₁) and records failing pairs. Failing pairs whose lower stratum
/// is not top-dimensional are the refinement targets; simplicial images
/// of smooth maps leave none in practice, so no splitting is performed and
/// any residual failure is reported.
pub fn substratify_refine(k1: &Triangulation, cond: &dyn regularity::Condition, cfg: &CheckConfig) -> Substratification {
    let strata = k1.strata();
    let simplices: Vec<Simplex> = k1.complex.simplices.iter().cloned().collect();
    let pairs = regularity::adjacent_pairs(&simplices);
    let residual: Vec<(usize, usize)> = pairs
        .par_iter()
        .filter(|&&(hi, lo)| {
            cond.check(&strata[hi], &strata[lo], cfg).verdict == Verdict::Fail
        })
        .cloned()
        .collect();
    Substratification {
        complex_size: simplices.len(),
        rounds: 1,
        residual,
        surrogate: true,
    }
}

/// The conical refinement of a triangulation: K₃ (abstract), h₃ as vertex
/// images in K₁'s coordinates, and the K₁ simplex carrying each K₃ simplex.
#[derive(Clone)]
pub struct QTriangulation {
    pub k1: Triangulation,
    pub k3: ConeComplexK3,
    pub h3: VertexMap,
    pub carrier: BTreeMap<Simplex, Simplex>,
    pub reports: Vec<RegularityReport>,
    pub substratification: Substratification,
    pub condition: String,
}

/// Conical triangulation of a complex by recursion on its dimension: the
/// (d−1)-skeleton is treated first, then each d-simplex is replaced by the
/// cone from its barycentre. Returns K₃, h₃ and carriers in `k`.
pub fn q_triangulate_complex(k: &SimplicialComplex) -> Result<(ConeComplexK3, VertexMap, BTreeMap<Simplex, Simplex>)> {
    let d = k.dim().unwrap_or(0);
    if d <= 1 {
        // (K, id) relabelled onto standard basis vertices, no apexes
        let used: Vec<usize> = {
            let set: std::collections::BTreeSet<usize> = k.simplices.iter().flat_map(|s| s.0.iter().copied()).collect();
            set.into_iter().collect()
        };
        let relabel: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let simplices = k
            .simplices
            .iter()
            .map(|s| Simplex::new(s.0.iter().map(|v| relabel[v]).collect()))
            .collect();
        let carrier = k
            .simplices
            .iter()
            .map(|s| (Simplex::new(s.0.iter().map(|v| relabel[v]).collect()), s.clone()))
            .collect();
        return Ok((
            ConeComplexK3 {
                t: used.len(),
                alpha: used.len(),
                k2_vertex: used.clone(),
                tops: vec![],
                simplices,
            },
            VertexMap {
                images: used.iter().map(|&v| k.points[v].clone()).collect(),
            },
            carrier,
        ));
    }
    let skel = k.skeleton(d - 1);
    let (k2a, h2, carrier2) = q_triangulate_complex(&skel).map_err(|e| e.at("skeleton"))?;
    // K₂ as an explicit complex whose vertex v sits at e_v; only ids matter
    let k2 = SimplicialComplex {
        ambient: 0,
        points: vec![Point::new(vec![]); k2a.t],
        simplices: k2a.simplices.clone(),
    };
    let k3 = cones::build_k3(k, &k2, &h2)?;
    let f = VertexMap {
        images: k3.k2_vertex.iter().map(|&v| h2.images[v].clone()).collect(),
    };
    let bary: Vec<Point> = k3.tops.iter().map(|t| k.barycentre(t)).collect();
    let h3 = cones::conical_extension_h3(&k3, &f, &bary)?;
    let mut carrier = BTreeMap::new();
    for s in &k3.simplices {
        let c = match k3.apex_of(s) {
            Some(j) => k3.tops[j].clone(),
            None => {
                let orig = Simplex::new(s.0.iter().map(|&v| k3.k2_vertex[v]).collect());
                carrier2[&orig].clone()
            }
        };
        carrier.insert(s.clone(), c);
    }
    Ok((k3, h3, carrier))
}

#[derive(Clone, Debug, Default)]
pub struct QOptions {
    pub triangulate: TriangulateOptions,
    pub check: CheckConfig,
    /// Pairs to check; `None` checks every adjacent pair.
    pub max_pairs: Option<usize>,
}

/// Triangulation whose image stratification satisfies the given conical
/// condition on every adjacent pair.
pub fn q_triangulate(s: &StackPresentation, condition: &str, opts: &QOptions) -> Result<QTriangulation> {
    let cond = regularity::condition(condition)?;
    if !cond.capabilities().conical {
        return Err(GeomError::Precondition(format!("{condition} lacks the conical property")));
    }
    let k1 = triangulate_with(s, &opts.triangulate).map_err(|e| e.at("triangulate"))?;
    let sub = substratify_refine(&k1, cond.as_ref(), &opts.check);
    let (k3, h3, carrier) = q_triangulate_complex(&k1.complex).map_err(|e| e.at("cone complex"))?;
    let mut q = QTriangulation {
        k1,
        k3,
        h3,
        carrier,
        reports: vec![],
        substratification: sub,
        condition: condition.to_string(),
    };
    let strata = q.strata();
    let simplices: Vec<Simplex> = q.k3.simplices.iter().cloned().collect();
    let mut pairs = regularity::adjacent_pairs(&simplices);
    if let Some(m) = opts.max_pairs {
        pairs.truncate(m);
    }
    q.reports = pairs
        .par_iter()
        .map(|&(hi, lo)| {
            let mut r = cond.check(&strata[hi], &strata[lo], &opts.check);
            r.pair = (hi, lo);
            r
        })
        .collect();
    if let Some(bad) = q.reports.iter().find(|r| r.verdict == Verdict::Fail) {
        return Err(GeomError::Stage {
            stage: "condition reports",
            source: Box::new(GeomError::Validation(format!(
                "pair {:?} fails {}: statistic {:e} at {:?}",
                bad.pair, condition, bad.statistic, bad.witness
            ))),
        });
    }
    Ok(q)
}

impl QTriangulation {
    /// The K₃ simplices in sorted order.
    pub fn simplices(&self) -> Vec<Simplex> {
        self.k3.simplices.iter().cloned().collect()
    }

    /// `h₁∘h₃` on one simplex of K₃, parametrised by its h₃-image in K₁
    /// coordinates.
    pub fn strata(&self) -> Vec<SimplexStratum> {
        self.k3
            .simplices
            .iter()
            .map(|s| {
                let verts: Vec<Vec<f64>> = s.0.iter().map(|&v| self.h3.images[v].to_f64()).collect();
                SimplexStratum::new(verts, self.k1.local(&self.carrier[s]))
            })
            .collect()
    }

    /// The image of K₃ under h₃, as a complex in K₁'s coordinates.
    pub fn image_in_k1(&self) -> SimplicialComplex {
        cones::image_complex(&self.k3, &self.h3)
    }

    /// Images of K₃'s vertices under h₁∘h₃.
    pub fn vertex_images(&self) -> Result<Vec<Point>> {
        self.h3.images.par_iter().map(|p| self.k1.map.forward_q(p)).collect()
    }

    /// h₁∘h₃ on a point of K₃ given by a simplex and barycentric weights.
    pub fn forward(&self, s: &Simplex, lam: &[Q]) -> Result<Point> {
        self.k1.map.forward_q(&self.h3.apply(s, lam))
    }
}

impl Homeomorphism for Triangulation {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.map.forward(x)
    }
    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.map.inverse(y)
    }
}
