//! The polyhedral complex over a triangulated base, its semilinear
//! interpolants ψ_k, and the piecewise map H sending graphs and bands of the
//! ψ's onto graphs and bands of the η's.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::defnfun::{self, BaryMap, CellKind, FunctionHandle, StackPresentation, GEOM_TOL};
use crate::error::{GeomError, Result};
use crate::exact::{self, qi, Q};
use crate::pipeline::Triangulation;
use crate::simplicial::{self, cone_recursion, Point, Simplex, SimplicialComplex};

/// Default cap on barycentric subdivisions while separating consecutive
/// functions on every simplex.
pub const REFINE_CAP: usize = 8;

/// A map with a global inverse on its image.
pub trait Homeomorphism: Send + Sync {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>>;
}

/// A smooth map valid on one closed cell and a neighbourhood of its affine
/// hull, with an analytic Jacobian.
pub trait LocalMap: Send + Sync {
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

pub struct IdentityLocal(pub usize);

impl LocalMap for IdentityLocal {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn jacobian(&self, _: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.0, self.0)
    }
}

/// `x ↦ A x + b`.
pub struct AffineLocal {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineLocal {
    /// The affine map sending `src[i] ↦ dst[i]`, extended to ℝᵐ by acting
    /// through barycentric coordinates of the projection onto the span.
    pub fn from_vertices(src: &[Vec<f64>], dst: &[Vec<f64>]) -> Self {
        let bm = BaryMap::new(src.to_vec());
        let (m, n) = (src[0].len(), dst[0].len());
        let k = src.len();
        let mut d = DMatrix::zeros(n, k);
        for (j, v) in dst.iter().enumerate() {
            for i in 0..n {
                d[(i, j)] = v[i];
            }
        }
        // λ = P [x; 1]
        let p = bm.pinv();
        let full = &d * p;
        let a = full.columns(0, m).into_owned();
        let b = full.column(m).into_owned();
        AffineLocal { a, b }
    }
}

impl LocalMap for AffineLocal {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(x) + &self.b).iter().copied().collect()
    }
    fn jacobian(&self, _: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// `outer ∘ inner`.
pub struct Composed {
    pub outer: Arc<dyn LocalMap>,
    pub inner: Arc<dyn LocalMap>,
}

impl LocalMap for Composed {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.outer.eval(&self.inner.eval(x))
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let y = self.inner.eval(x);
        self.outer.jacobian(&y) * self.inner.jacobian(x)
    }
}

/// Semilinear function: values at the vertices of a base complex, affine on
/// each closed simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolant {
    pub values: Vec<Q>,
}

impl Interpolant {
    pub fn value_at_vertex(&self, v: usize) -> &Q {
        &self.values[v]
    }

    /// Exact value at a point of the closed simplex `s`.
    pub fn eval_q(&self, k: &SimplicialComplex, s: &Simplex, p: &Point) -> Option<Q> {
        let lam = simplicial::barycentric_coords(&k.vertex_points(s), p)?;
        Some(
            lam.iter()
                .zip(&s.0)
                .fold(Q::zero(), |acc, (l, &v)| acc + l * &self.values[v]),
        )
    }
}

/// Interpolant of `h ∘ base` through the vertices of `k`.
pub fn semilinear_interpolant(h: &FunctionHandle, k: &SimplicialComplex) -> Result<Interpolant> {
    interpolate_with(h, k, &BaseMap::Identity)
}

fn interpolate_with(h: &FunctionHandle, k: &SimplicialComplex, base: &BaseMap) -> Result<Interpolant> {
    let used: std::collections::BTreeSet<usize> = k.simplices.iter().flat_map(|s| s.0.iter().copied()).collect();
    let mut values = vec![Q::zero(); k.points.len()];
    for v in used {
        let y = base.forward_q(k, v)?;
        values[v] = h.eval_q(&y)?;
    }
    Ok(Interpolant { values })
}

/// How the base complex of a stack maps into the original base set.
#[derive(Clone)]
pub enum BaseMap {
    Identity,
    /// A recursive triangulation; `cell_of` assigns each simplex of the
    /// current base complex its carrier cell in the triangulation's K_p.
    Stack {
        tri: Arc<Triangulation>,
        origin: BTreeMap<Simplex, Simplex>,
    },
}

impl BaseMap {
    fn forward_q(&self, k: &SimplicialComplex, v: usize) -> Result<Point> {
        match self {
            BaseMap::Identity => Ok(k.points[v].clone()),
            BaseMap::Stack { tri, .. } => tri.map.forward_q(&k.points[v]),
        }
    }

    fn local(&self, s: &Simplex, dim: usize) -> Arc<dyn LocalMap> {
        match self {
            BaseMap::Identity => Arc::new(IdentityLocal(dim)),
            BaseMap::Stack { tri, origin } => {
                let o = origin.get(s).unwrap_or(s);
                tri.local(o)
            }
        }
    }

    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            BaseMap::Identity => Ok(y.to_vec()),
            BaseMap::Stack { tri, .. } => tri.map.inverse(y),
        }
    }

    /// Upper bound for the Lipschitz constant of the base map on `s`.
    fn lipschitz(&self, s: &Simplex) -> f64 {
        match self {
            BaseMap::Identity => 1.0,
            BaseMap::Stack { tri, origin } => {
                let o = origin.get(s).unwrap_or(s);
                tri.cell_bound(o)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Separation {
    Equal,
    Separated { vertex: usize },
    Neither,
}

/// Per closed simplex: η_k ≡ η_{k+1} on the closure, or a vertex where
/// η_k < η_{k+1}.
pub fn vertex_separation_check(
    eta_k: &FunctionHandle,
    eta_k1: &FunctionHandle,
    k: &SimplicialComplex,
) -> Result<Vec<(Simplex, Separation)>> {
    separation_with(eta_k, eta_k1, k, &BaseMap::Identity)
}

fn separation_with(
    f: &FunctionHandle,
    g: &FunctionHandle,
    k: &SimplicialComplex,
    base: &BaseMap,
) -> Result<Vec<(Simplex, Separation)>> {
    let pf = interpolate_with(f, k, base)?;
    let pg = interpolate_with(g, k, base)?;
    let mut out = Vec::with_capacity(k.len());
    for s in &k.simplices {
        if let Some(&v) = s.0.iter().find(|&&v| pf.values[v] < pg.values[v]) {
            out.push((s.clone(), Separation::Separated { vertex: v }));
            continue;
        }
        let equal = match base {
            BaseMap::Identity => {
                let verts: Vec<Point> = k.vertex_points(s).into_iter().cloned().collect();
                equal_on_closure_exact(f, g, &verts)
            }
            BaseMap::Stack { .. } => equal_on_closure_sampled(f, g, k, s, base),
        };
        out.push((s.clone(), if equal { Separation::Equal } else { Separation::Neither }));
    }
    Ok(out)
}

fn equal_on_closure_exact(f: &FunctionHandle, g: &FunctionHandle, verts: &[Point]) -> bool {
    let refs: Vec<&Point> = verts.iter().collect();
    let inside = |h: &FunctionHandle, i: usize| {
        verts.iter().all(|v| {
            simplicial::barycentric_coords(&h.pieces[i].cell.iter().collect::<Vec<_>>(), v)
                .is_some_and(|l| l.iter().all(|x| !x.is_negative()))
        })
    };
    let bary = simplicial::mean_point(&refs);
    match (f.piece_at_q(&bary), g.piece_at_q(&bary)) {
        (Some(i), Some(j)) if inside(f, i) && inside(g, j) => {
            defnfun::vanishes_on_simplex(&f.pieces[i].poly.sub(&g.pieces[j].poly), verts)
        }
        // simplex straddles pieces: compare on a fine lattice instead
        _ => defnfun::lattice(verts.len(), 6).iter().all(|w| {
            let n = verts[0].dim();
            let y = Point::new(
                (0..n)
                    .map(|c| {
                        verts
                            .iter()
                            .zip(w)
                            .fold(Q::zero(), |a, (v, &wi)| a + &v.coords[c] * qi(wi as i64))
                            / qi(6)
                    })
                    .collect(),
            );
            matches!((f.eval_q(&y), g.eval_q(&y)), (Ok(a), Ok(b)) if a == b)
        }),
    }
}

fn equal_on_closure_sampled(
    f: &FunctionHandle,
    g: &FunctionHandle,
    k: &SimplicialComplex,
    s: &Simplex,
    base: &BaseMap,
) -> bool {
    let verts: Vec<Vec<f64>> = k.vertex_points(s).iter().map(|p| p.to_f64()).collect();
    let local = base.local(s, k.ambient);
    defnfun::simplex_sample_sequence(&verts, 64).iter().all(|y| {
        let y2 = local.eval(y);
        match (f.eval(&y2), g.eval(&y2)) {
            (Ok(a), Ok(b)) => (a - b).abs() <= GEOM_TOL * (1.0 + a.abs()),
            _ => false,
        }
    })
}

/// A refined base complex with the simplex of the original complex that
/// carries each refined simplex.
#[derive(Clone, Debug)]
pub struct Refined {
    pub complex: SimplicialComplex,
    pub origin: BTreeMap<Simplex, Simplex>,
    pub subdivisions: usize,
}

/// Iterated barycentric subdivision until every consecutive pair is
/// separated on every simplex.
pub fn refine_until_separated(s: &StackPresentation, k: &SimplicialComplex) -> Result<Refined> {
    refine_with(s, k, &BaseMap::Identity, REFINE_CAP)
}

pub(crate) fn refine_with(
    s: &StackPresentation,
    k: &SimplicialComplex,
    base: &BaseMap,
    cap: usize,
) -> Result<Refined> {
    let mut cur = Refined {
        complex: k.clone(),
        origin: k.simplices.iter().map(|x| (x.clone(), x.clone())).collect(),
        subdivisions: 0,
    };
    loop {
        let base_now = rebase(base, &cur.origin);
        let mut bad = 0;
        for w in s.functions.windows(2) {
            bad += separation_with(&w[0], &w[1], &cur.complex, &base_now)?
                .iter()
                .filter(|(_, v)| *v == Separation::Neither)
                .count();
        }
        if bad == 0 {
            return Ok(cur);
        }
        if cur.subdivisions >= cap {
            return Err(GeomError::Refinement {
                iterations: cur.subdivisions,
                offending: bad,
            });
        }
        let sub = cur.complex.barycentric_subdivision();
        let origin = sub
            .carrier
            .iter()
            .map(|(t, c)| (t.clone(), cur.origin[c].clone()))
            .collect();
        cur = Refined {
            complex: sub.complex,
            origin,
            subdivisions: cur.subdivisions + 1,
        };
    }
}

fn rebase(base: &BaseMap, origin: &BTreeMap<Simplex, Simplex>) -> BaseMap {
    match base {
        BaseMap::Identity => BaseMap::Identity,
        BaseMap::Stack { tri, origin: o0 } => BaseMap::Stack {
            tri: tri.clone(),
            origin: origin
                .iter()
                .map(|(t, c)| (t.clone(), o0.get(c).cloned().unwrap_or_else(|| c.clone())))
                .collect(),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyhedralCell {
    pub kind: CellKind,
    /// Index into `PolyhedralComplex::base_simplices`.
    pub base: usize,
    pub dim: usize,
    /// Distinct vertices of the closed cell (exact).
    #[serde(skip)]
    pub verts: Vec<Point>,
    /// Proper faces (indices into the cell list).
    pub faces: Vec<usize>,
}

#[derive(Clone)]
pub struct PolyhedralComplex {
    pub base_complex: SimplicialComplex,
    pub base_simplices: Vec<Simplex>,
    pub psi: Vec<Interpolant>,
    pub cells: Vec<PolyhedralCell>,
    pub base_map: BaseMap,
}

/// Graph cells for every level and base simplex, band cells where the
/// interpolants are strictly ordered.
pub fn build_polyhedral_complex(s: &StackPresentation, k: &SimplicialComplex) -> Result<PolyhedralComplex> {
    build_with(s, k, BaseMap::Identity)
}

pub(crate) fn build_with(s: &StackPresentation, k: &SimplicialComplex, base: BaseMap) -> Result<PolyhedralComplex> {
    for w in s.functions.windows(2) {
        if separation_with(&w[0], &w[1], k, &base)?
            .iter()
            .any(|(_, v)| *v == Separation::Neither)
        {
            return Err(GeomError::Precondition("vertex separation not established".into()));
        }
    }
    let psi: Vec<Interpolant> = s
        .functions
        .iter()
        .map(|f| interpolate_with(f, k, &base))
        .collect::<Result<_>>()?;
    let b = psi.len();
    let base_simplices: Vec<Simplex> = k.simplices.iter().cloned().collect();
    let sidx: HashMap<&Simplex, usize> = base_simplices.iter().enumerate().map(|(i, x)| (x, i)).collect();

    let eq_on = |lvl: usize, sx: &Simplex| sx.0.iter().all(|&v| psi[lvl].values[v] == psi[lvl + 1].values[v]);
    // canonical graph level: lowest level in the run of coinciding interpolants
    let canon = |mut lvl: usize, sx: &Simplex| {
        while lvl > 0 && eq_on(lvl - 1, sx) {
            lvl -= 1;
        }
        lvl
    };
    let mut cells: Vec<PolyhedralCell> = Vec::new();
    let mut graph_id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut band_id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut order: Vec<usize> = (0..base_simplices.len()).collect();
    order.sort_by_key(|&i| (base_simplices[i].dim(), i));
    let lift = |v: usize, lvl: usize| {
        let mut c = k.points[v].coords.clone();
        c.push(psi[lvl].values[v].clone());
        Point::new(c)
    };
    for &si in &order {
        let sx = &base_simplices[si];
        let proper: Vec<usize> = sx
            .faces()
            .into_iter()
            .filter(|f| f != sx)
            .map(|f| sidx[&f])
            .collect();
        for lvl in 0..b {
            if canon(lvl, sx) != lvl {
                continue;
            }
            let faces = proper.iter().map(|&fi| graph_id[&(canon(lvl, &base_simplices[fi]), fi)]).collect();
            cells.push(PolyhedralCell {
                kind: CellKind::Graph(lvl),
                base: si,
                dim: sx.dim(),
                verts: sx.0.iter().map(|&v| lift(v, lvl)).collect(),
                faces,
            });
            graph_id.insert((lvl, si), cells.len() - 1);
        }
        for lvl in 0..b.saturating_sub(1) {
            if eq_on(lvl, sx) {
                continue;
            }
            let mut faces: Vec<usize> = Vec::new();
            for &fi in proper.iter().chain(std::iter::once(&si)) {
                let fs = &base_simplices[fi];
                faces.push(graph_id[&(canon(lvl, fs), fi)]);
                faces.push(graph_id[&(canon(lvl + 1, fs), fi)]);
                if fi != si {
                    if let Some(&bi) = band_id.get(&(lvl, fi)) {
                        faces.push(bi);
                    }
                }
            }
            faces.sort_unstable();
            faces.dedup();
            let mut verts: Vec<Point> = Vec::new();
            for &v in &sx.0 {
                for l in [lvl, lvl + 1] {
                    let p = lift(v, l);
                    if !verts.contains(&p) {
                        verts.push(p);
                    }
                }
            }
            cells.push(PolyhedralCell {
                kind: CellKind::Band(lvl),
                base: si,
                dim: sx.dim() + 1,
                verts,
                faces,
            });
            band_id.insert((lvl, si), cells.len() - 1);
        }
    }
    Ok(PolyhedralComplex {
        base_complex: k.clone(),
        base_simplices,
        psi,
        cells,
        base_map: base,
    })
}

impl PolyhedralComplex {
    pub fn ambient(&self) -> usize {
        self.base_complex.ambient + 1
    }

    pub fn count_kind(&self, graph: bool) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.kind, CellKind::Graph(_)) == graph)
            .count()
    }

    pub fn barycentre(&self, c: usize) -> Point {
        simplicial::mean_point(&self.cells[c].verts.iter().collect::<Vec<_>>())
    }

    /// Barycentric subdivision: cone each cell's barycentre over its
    /// subdivided boundary. Returns the simplicial complex and each
    /// simplex's carrier cell.
    pub fn subdivide(&self) -> (SimplicialComplex, BTreeMap<Simplex, usize>) {
        let dims: Vec<usize> = self.cells.iter().map(|c| c.dim).collect();
        let faces: Vec<Vec<usize>> = self.cells.iter().map(|c| c.faces.clone()).collect();
        let bary: Vec<Point> = (0..self.cells.len()).map(|c| self.barycentre(c)).collect();
        let (points, out) = cone_recursion(&dims, &faces, &bary);
        let mut simplices = std::collections::BTreeSet::new();
        let mut carrier = BTreeMap::new();
        for (s, c) in out {
            carrier.insert(s.clone(), c);
            simplices.insert(s);
        }
        (
            SimplicialComplex {
                ambient: self.ambient(),
                points,
                simplices,
            },
            carrier,
        )
    }

    /// Exact containment of a point in a closed cell.
    pub fn closed_cell_contains(&self, c: usize, x: &Point) -> bool {
        let cell = &self.cells[c];
        let s = &self.base_simplices[cell.base];
        let n = self.base_complex.ambient;
        let y = Point::new(x.coords[..n].to_vec());
        let z = &x.coords[n];
        let Some(lam) = simplicial::barycentric_coords(&self.base_complex.vertex_points(s), &y) else {
            return false;
        };
        if lam.iter().any(|l| l.is_negative()) {
            return false;
        }
        let at = |lvl: usize| {
            lam.iter()
                .zip(&s.0)
                .fold(Q::zero(), |a, (l, &v)| a + l * &self.psi[lvl].values[v])
        };
        match cell.kind {
            CellKind::Graph(l) => *z == at(l),
            CellKind::Band(l) => *z >= at(l) && *z <= at(l + 1),
        }
    }
}

#[derive(Clone)]
struct SimplexData {
    bary: BaryMap,
    // per level: piece index used by the local formula
    piece: Vec<usize>,
    local_base: Arc<dyn LocalMap>,
    base_lip: f64,
}

/// The map H on |K_p| together with its cell structure and certificates.
#[derive(Clone)]
pub struct StackMap {
    pub complex: PolyhedralComplex,
    pub eta: Vec<FunctionHandle>,
    data: Vec<SimplexData>,
    maximal: Vec<usize>,
    pub certificates: Vec<CellCertificate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellCertificate {
    pub cell: usize,
    pub bound: f64,
    pub ratio_bound: f64,
    pub method: &'static str,
}

/// Builds H for a polyhedral complex built from `s`.
pub fn build_h(p: &PolyhedralComplex, s: &StackPresentation) -> Result<StackMap> {
    if p.psi.len() != s.functions.len() {
        return Err(GeomError::Precondition("complex was built from a different stack".into()));
    }
    let n = p.base_complex.ambient;
    let mut data = Vec::with_capacity(p.base_simplices.len());
    for sx in &p.base_simplices {
        let pts: Vec<Vec<f64>> = p.base_complex.vertex_points(sx).iter().map(|q| q.to_f64()).collect();
        let local_base = p.base_map.local(sx, n);
        let refs: Vec<&Point> = p.base_complex.vertex_points(sx);
        let bq = simplicial::mean_point(&refs);
        let bimg = match &p.base_map {
            BaseMap::Identity => bq,
            BaseMap::Stack { tri, .. } => tri.map.forward_q(&bq)?,
        };
        let piece = s
            .functions
            .iter()
            .map(|f| {
                f.piece_at_q(&bimg)
                    .or_else(|| f.piece_at(&bimg.to_f64()))
                    .ok_or_else(|| GeomError::Domain("base simplex outside the function pieces".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        data.push(SimplexData {
            bary: BaryMap::new(pts),
            piece,
            local_base,
            base_lip: p.base_map.lipschitz(sx),
        });
    }
    let maximal: Vec<usize> = p
        .base_complex
        .maximal()
        .iter()
        .map(|m| p.base_simplices.iter().position(|x| x == m).expect("member"))
        .collect();
    let mut h = StackMap {
        complex: p.clone(),
        eta: s.functions.clone(),
        data,
        maximal,
        certificates: vec![],
    };
    h.certificates = (0..p.cells.len()).map(|c| h.lipschitz_bound(c)).collect();
    Ok(h)
}

impl StackMap {
    fn n(&self) -> usize {
        self.complex.base_complex.ambient
    }

    fn psi_grad_and_value(&self, si: usize, lvl: usize, y: &[f64]) -> (f64, Vec<f64>) {
        let sx = &self.complex.base_simplices[si];
        let (lam, _) = self.data[si].bary.coords(y);
        let vals: Vec<f64> = sx.0.iter().map(|&v| exact::to_f64(&self.complex.psi[lvl].values[v])).collect();
        let value = lam.iter().zip(&vals).map(|(l, v)| l * v).sum();
        let pinv = self.data[si].bary.pinv();
        let n = self.n();
        let grad = (0..n)
            .map(|i| (0..vals.len()).map(|j| pinv[(j, i)] * vals[j]).sum())
            .collect();
        (value, grad)
    }

    fn eta_local(&self, si: usize, lvl: usize, y2: &[f64]) -> (f64, Vec<f64>) {
        let poly = &self.eta[lvl].pieces[self.data[si].piece[lvl]].poly;
        (poly.eval(y2), poly.gradient(y2))
    }

    /// H evaluated with the formula of cell `c`, valid near its closure.
    pub fn eval_cell(&self, c: usize, x: &[f64]) -> Vec<f64> {
        let cell = &self.complex.cells[c];
        let si = cell.base;
        let n = self.n();
        let (y, z) = (&x[..n], x[n]);
        let mut y2 = self.data[si].local_base.eval(y);
        let w = match cell.kind {
            CellKind::Graph(l) => self.eta_local(si, l, &y2).0,
            CellKind::Band(l) => {
                let (p0, _) = self.psi_grad_and_value(si, l, y);
                let (p1, _) = self.psi_grad_and_value(si, l + 1, y);
                let e0 = self.eta_local(si, l, &y2).0;
                let e1 = self.eta_local(si, l + 1, &y2).0;
                // on the collapse locus the band is a graph: take the limit
                let s = if p1 > p0 { (z - p0) / (p1 - p0) } else { 0.0 };
                e0 + s * (e1 - e0)
            }
        };
        y2.push(w);
        y2
    }

    /// Analytic Jacobian of the cell formula.
    pub fn jacobian_cell(&self, c: usize, x: &[f64]) -> DMatrix<f64> {
        let cell = &self.complex.cells[c];
        let si = cell.base;
        let n = self.n();
        let (y, z) = (&x[..n], x[n]);
        let jb = self.data[si].local_base.jacobian(y);
        let y2 = self.data[si].local_base.eval(y);
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&jb);
        let chain = |g: &[f64]| -> DVector<f64> { jb.transpose() * DVector::from_column_slice(g) };
        match cell.kind {
            CellKind::Graph(l) => {
                let (_, g) = self.eta_local(si, l, &y2);
                let gy = chain(&g);
                for i in 0..n {
                    j[(n, i)] = gy[i];
                }
            }
            CellKind::Band(l) => {
                let (p0, gp0) = self.psi_grad_and_value(si, l, y);
                let (p1, gp1) = self.psi_grad_and_value(si, l + 1, y);
                let (e0, ge0) = self.eta_local(si, l, &y2);
                let (e1, ge1) = self.eta_local(si, l + 1, &y2);
                let (ge0, ge1) = (chain(&ge0), chain(&ge1));
                let d = p1 - p0;
                let s = (z - p0) / d;
                let g = e1 - e0;
                for i in 0..n {
                    let dd = gp1[i] - gp0[i];
                    let ds = -(gp0[i] + s * dd) / d;
                    j[(n, i)] = ge0[i] + s * (ge1[i] - ge0[i]) + g * ds;
                }
                j[(n, n)] = g / d;
            }
        }
        j
    }

    pub fn cell_local(self: &Arc<Self>, c: usize) -> Arc<dyn LocalMap> {
        Arc::new(CellLocal { map: self.clone(), cell: c })
    }

    /// Base simplex (maximal) whose closure contains `y`, with its
    /// barycentric coordinates.
    fn locate_base(&self, y: &[f64]) -> Option<usize> {
        let tol = GEOM_TOL * (1.0 + defnfun::norm(y));
        let mut best: Option<(usize, f64)> = None;
        for &si in &self.maximal {
            let (lam, off) = self.data[si].bary.coords(y);
            if off > tol {
                continue;
            }
            let m = lam.iter().copied().fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((si, m));
            }
        }
        best.filter(|&(_, m)| m >= -tol).map(|(s, _)| s)
    }

    fn psi_at(&self, si: usize, y: &[f64]) -> Vec<f64> {
        (0..self.eta.len()).map(|l| self.psi_grad_and_value(si, l, y).0).collect()
    }

    /// Exact H at a rational point of |K_p|.
    pub fn forward_q(&self, x: &Point) -> Result<Point> {
        let n = self.n();
        let y = Point::new(x.coords[..n].to_vec());
        let z = &x.coords[n];
        let k = &self.complex.base_complex;
        let (si, lam) = self
            .maximal
            .iter()
            .find_map(|&si| {
                let sx = &self.complex.base_simplices[si];
                simplicial::barycentric_coords(&k.vertex_points(sx), &y)
                    .filter(|l| l.iter().all(|v| !v.is_negative()))
                    .map(|l| (si, l))
            })
            .ok_or_else(|| GeomError::Domain("point outside the base complex".into()))?;
        let sx = &self.complex.base_simplices[si];
        let psi: Vec<Q> = self
            .complex
            .psi
            .iter()
            .map(|p| lam.iter().zip(&sx.0).fold(Q::zero(), |a, (l, &v)| a + l * &p.values[v]))
            .collect();
        let y2 = match &self.complex.base_map {
            BaseMap::Identity => y.clone(),
            BaseMap::Stack { tri, .. } => tri.map.forward_q(&y)?,
        };
        let eta: Vec<Q> = self.eta.iter().map(|f| f.eval_q(&y2)).collect::<Result<_>>()?;
        let w = if *z == psi[0] {
            eta[0].clone()
        } else {
            let l = (0..psi.len() - 1)
                .find(|&l| *z >= psi[l] && *z <= psi[l + 1])
                .ok_or_else(|| GeomError::Domain("point outside |K_p|".into()))?;
            if *z == psi[l + 1] {
                eta[l + 1].clone()
            } else {
                let s = (z - &psi[l]) / (&psi[l + 1] - &psi[l]);
                &eta[l] + s * (&eta[l + 1] - &eta[l])
            }
        };
        let mut c = y2.coords;
        c.push(w);
        Ok(Point::new(c))
    }

    /// Lipschitz bound on the closed cell `c` from the χ-normalised
    /// estimate of the band formula.
    pub fn lipschitz_bound(&self, c: usize) -> CellCertificate {
        let cell = &self.complex.cells[c];
        let si = cell.base;
        let sx = &self.complex.base_simplices[si];
        let k = &self.complex.base_complex;
        let pts: Vec<Vec<f64>> = k.vertex_points(sx).iter().map(|p| p.to_f64()).collect();
        let img: Vec<Vec<f64>> = pts.iter().map(|y| self.data[si].local_base.eval(y)).collect();
        let lb = self.data[si].base_lip;
        let lip_eta = |l: usize| self.eta[l].lipschitz_bound_on(&img) * lb;
        match cell.kind {
            CellKind::Graph(l) => CellCertificate {
                cell: c,
                bound: lb + lip_eta(l),
                ratio_bound: 1.0,
                method: "graph: base bound plus Lipschitz constant of the level function",
            },
            CellKind::Band(l) => {
                let f = &self.eta[l];
                let g = &self.eta[l + 1];
                let lg = match (f.declared_lipschitz, g.declared_lipschitz) {
                    (Some(a), Some(b)) => a + b,
                    _ => {
                        let pf = &f.pieces[self.data[si].piece[l]].poly;
                        let pg = &g.pieces[self.data[si].piece[l + 1]].poly;
                        let (lo, hi) = bbox(&img);
                        pg.sub(pf).gradient_bound(&lo, &hi)
                    }
                } * lb;
                let gv: Vec<f64> = sx
                    .0
                    .iter()
                    .map(|&v| exact::to_f64(&(&self.complex.psi[l + 1].values[v] - &self.complex.psi[l].values[v])))
                    .collect();
                let diam = pts
                    .iter()
                    .flat_map(|a| pts.iter().map(move |b| defnfun::dist(a, b)))
                    .fold(0.0, f64::max);
                let positive: Vec<f64> = gv.iter().copied().filter(|&x| x > 0.0).collect();
                let kdim = pts.len() - 1;
                let zeros = gv.len() - positive.len();
                let gmin = positive.iter().copied().fold(f64::INFINITY, f64::min);
                let ratio = if zeros == 0 {
                    1.0 + lg * diam / gmin
                } else {
                    // l+1 vanishing vertices: (k − l) = kdim + 1 − zeros
                    lg * diam * (kdim + 1 - zeros) as f64 / gmin
                };
                let (_, gp0) = self.psi_grad_and_value(si, l, &pts[0]);
                let (_, gp1) = self.psi_grad_and_value(si, l + 1, &pts[0]);
                let gpsi0 = defnfun::norm(&gp0);
                let gd = defnfun::norm(&gp0.iter().zip(&gp1).map(|(a, b)| b - a).collect::<Vec<_>>());
                CellCertificate {
                    cell: c,
                    bound: lb + lip_eta(l) + lg + ratio * (gpsi0 + gd + 1.0),
                    ratio_bound: ratio,
                    method: "band: L_g diam T (k-l) / min g over nonvanishing vertices",
                }
            }
        }
    }

    /// Sampled estimate of the Lipschitz constant of H on a closed cell:
    /// maximum of Jacobian operator norms and difference quotients.
    pub fn sampled_lipschitz(&self, c: usize, samples: usize, seed: u64) -> f64 {
        let mut rng = defnfun::seeded(seed);
        let verts: Vec<Vec<f64>> = self.complex.cells[c].verts.iter().map(|p| p.to_f64()).collect();
        let pts: Vec<Vec<f64>> = (0..samples).map(|_| defnfun::random_in_simplex(&verts, &mut rng)).collect();
        let mut best = 0.0f64;
        for (i, p) in pts.iter().enumerate() {
            let jn = self.jacobian_cell(c, p).singular_values().max();
            best = best.max(jn);
            let q = &pts[(i + 1) % pts.len()];
            let d = defnfun::dist(p, q);
            if d > 0.0 {
                best = best.max(defnfun::dist(&self.eval_cell(c, p), &self.eval_cell(c, q)) / d);
            }
        }
        best
    }
}

fn bbox(pts: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = pts[0].len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in pts {
        for i in 0..n {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

impl Homeomorphism for StackMap {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let (y, z) = (&x[..n], x[n]);
        let si = self
            .locate_base(y)
            .ok_or_else(|| GeomError::Domain(format!("{y:?} outside the base complex")))?;
        let psi = self.psi_at(si, y);
        let tol = GEOM_TOL * (1.0 + z.abs());
        let b = psi.len();
        if z < psi[0] - tol || z > psi[b - 1] + tol {
            return Err(GeomError::Domain("point outside |K_p|".into()));
        }
        let mut y2 = self.data[si].local_base.eval(y);
        let eta: Vec<f64> = (0..b).map(|l| self.eta[l].eval(&y2)).collect::<Result<_>>()?;
        let w = match (0..b.saturating_sub(1)).find(|&l| z <= psi[l + 1] + tol && psi[l + 1] - psi[l] > tol) {
            _ if (z - psi[0]).abs() <= tol => eta[0],
            Some(l) if (z - psi[l + 1]).abs() <= tol => eta[l + 1],
            Some(l) => eta[l] + (z - psi[l]) / (psi[l + 1] - psi[l]) * (eta[l + 1] - eta[l]),
            None => eta[b - 1],
        };
        y2.push(w);
        Ok(y2)
    }

    fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let (y2, w) = (&x[..n], x[n]);
        let y = self.complex.base_map.inverse(y2)?;
        let si = self
            .locate_base(&y)
            .ok_or_else(|| GeomError::Domain("preimage outside the base complex".into()))?;
        let psi = self.psi_at(si, &y);
        let b = psi.len();
        let eta: Vec<f64> = (0..b).map(|l| self.eta[l].eval(y2)).collect::<Result<_>>()?;
        let tol = GEOM_TOL * (1.0 + w.abs());
        if w < eta[0] - tol || w > eta[b - 1] + tol {
            return Err(GeomError::Domain("point outside the image".into()));
        }
        let z = if (w - eta[0]).abs() <= tol {
            psi[0]
        } else {
            match (0..b - 1).find(|&l| w <= eta[l + 1] + tol && eta[l + 1] - eta[l] > tol) {
                Some(l) if (w - eta[l + 1]).abs() <= tol => psi[l + 1],
                Some(l) => psi[l] + (w - eta[l]) / (eta[l + 1] - eta[l]) * (psi[l + 1] - psi[l]),
                // collapse locus: every remaining level coincides, take the graph preimage
                None => psi[(0..b).rev().find(|&l| (w - eta[l]).abs() <= tol).unwrap_or(b - 1)],
            }
        };
        let mut out = y;
        out.push(z);
        Ok(out)
    }
}

struct CellLocal {
    map: Arc<StackMap>,
    cell: usize,
}

impl LocalMap for CellLocal {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.map.eval_cell(self.cell, x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.map.jacobian_cell(self.cell, x)
    }
}

/// ζ(x) = x / sqrt(1 + |x|²), a diffeomorphism onto the open unit ball.
pub fn compactify(x: &[f64]) -> Vec<f64> {
    let s = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
    x.iter().map(|v| v / s).collect()
}

pub fn decompactify(u: &[f64]) -> Result<Vec<f64>> {
    let r2: f64 = u.iter().map(|v| v * v).sum();
    if r2 >= 1.0 {
        return Err(GeomError::Domain("decompactify needs |u| < 1".into()));
    }
    let s = (1.0 - r2).sqrt();
    Ok(u.iter().map(|v| v / s).collect())
}

const ZETA_BITS: u32 = 160;

/// ζ in rational arithmetic, with the square root taken to about 2^-160.
/// The double version loses digits in 1 − |u|² near the sphere; this one
/// round-trips to double precision for any moderate |x|.
pub fn compactify_q(x: &Point) -> Point {
    let r2 = x.coords.iter().fold(qi(1), |a, c| a + c * c);
    let s = exact::sqrt_q(&r2, ZETA_BITS);
    Point::new(x.coords.iter().map(|c| exact::round_bits(&(c / &s), ZETA_BITS)).collect())
}

pub fn decompactify_q(u: &Point) -> Result<Point> {
    let r2 = u.coords.iter().fold(Q::zero(), |a, c| a + c * c);
    let rest = qi(1) - r2;
    if !rest.is_positive() {
        return Err(GeomError::Domain("decompactify needs |u| < 1".into()));
    }
    let s = exact::sqrt_q(&rest, ZETA_BITS);
    Ok(Point::new(u.coords.iter().map(|c| c / &s).collect()))
}

pub struct Compactification(pub usize);

impl Homeomorphism for Compactification {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(compactify(x))
    }
    fn inverse(&self, u: &[f64]) -> Result<Vec<f64>> {
        decompactify(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defnfun::{Base, Polynomial};
    use crate::exact::qr;

    fn unit() -> Vec<Point> {
        vec![Point::from_ints(&[0]), Point::from_ints(&[1])]
    }

    fn seg_complex() -> SimplicialComplex {
        SimplicialComplex::closed_simplex(unit())
    }

    fn lin(c: i64) -> FunctionHandle {
        FunctionHandle::single(unit(), Polynomial::affine(qi(0), &[qi(c)]))
    }

    fn sq() -> FunctionHandle {
        FunctionHandle::single(unit(), Polynomial::from_terms(1, &[(&[2], qi(1))]))
    }

    fn stack(fs: Vec<FunctionHandle>) -> StackPresentation {
        StackPresentation::new(Base::Intervals(vec![(qi(0), qi(1))]), fs)
    }

    #[test]
    fn interpolant_examples() {
        let k = seg_complex();
        let p = semilinear_interpolant(&sq(), &k).unwrap();
        assert_eq!(p.values, vec![qi(0), qi(1)]);
        let half = Point::new(vec![qr(1, 2)]);
        assert_eq!(p.eval_q(&k, &Simplex(vec![0, 1]), &half), Some(qr(1, 2)));
        let c = FunctionHandle::constant(unit(), qr(3, 2));
        assert!(semilinear_interpolant(&c, &k).unwrap().values.iter().all(|v| *v == qr(3, 2)));
        let a = semilinear_interpolant(&lin(2), &k).unwrap();
        assert_eq!(a.eval_q(&k, &Simplex(vec![0, 1]), &half), Some(qi(1)));
    }

    #[test]
    fn separation_examples() {
        let k = seg_complex();
        let zero = FunctionHandle::constant(unit(), qi(0));
        let one = FunctionHandle::constant(unit(), qi(1));
        let r = vertex_separation_check(&zero, &one, &k).unwrap();
        assert!(r.iter().all(|(_, v)| matches!(v, Separation::Separated { .. })));
        let r = vertex_separation_check(&zero, &zero, &k).unwrap();
        assert!(r.iter().all(|(_, v)| *v == Separation::Equal));
        let r = vertex_separation_check(&zero, &lin(1), &k).unwrap();
        let top = r.iter().find(|(s, _)| s.0 == vec![0, 1]).unwrap();
        assert_eq!(top.1, Separation::Separated { vertex: 1 });
        let at0 = r.iter().find(|(s, _)| s.0 == vec![0]).unwrap();
        assert_eq!(at0.1, Separation::Equal);
    }

    #[test]
    fn refine_examples() {
        let k = seg_complex();
        let zero = FunctionHandle::constant(unit(), qi(0));
        let r = refine_until_separated(&stack(vec![zero.clone(), lin(1)]), &k).unwrap();
        assert_eq!(r.subdivisions, 0);
        assert_eq!(r.complex, k);
        // max(0, 2y - 1), two pieces
        let hinge = FunctionHandle::new(
            1,
            vec![
                defnfun::Piece::new(
                    vec![Point::from_ints(&[0]), Point::new(vec![qr(1, 2)])],
                    Polynomial::constant(1, qi(0)),
                ),
                defnfun::Piece::new(
                    vec![Point::new(vec![qr(1, 2)]), Point::from_ints(&[1])],
                    Polynomial::affine(qi(-1), &[qi(2)]),
                ),
            ],
            None,
        )
        .unwrap();
        let r = refine_until_separated(&stack(vec![zero.clone(), hinge]), &k).unwrap();
        assert_eq!(r.subdivisions, 0);
        // y(1 - y): zero at both ends, positive inside
        let bump = FunctionHandle::single(unit(), Polynomial::from_terms(1, &[(&[1], qi(1)), (&[2], qi(-1))]));
        let r = refine_until_separated(&stack(vec![zero, bump]), &k).unwrap();
        assert_eq!(r.subdivisions, 1);
        assert!(r.complex.points.contains(&Point::new(vec![qr(1, 2)])));
    }

    #[test]
    fn polyhedral_counts() {
        let k = seg_complex();
        let zero = FunctionHandle::constant(unit(), qi(0));
        let one = FunctionHandle::constant(unit(), qi(1));
        let p = build_polyhedral_complex(&stack(vec![zero.clone(), one]), &k).unwrap();
        assert_eq!(p.cells.len(), 9);
        let p = build_polyhedral_complex(&stack(vec![zero.clone(), zero.clone()]), &k).unwrap();
        assert_eq!(p.count_kind(false), 0);
        assert_eq!(p.cells.len(), 3);
        let pt = SimplicialComplex::from_simplices(vec![Point::from_ints(&[0])], &[vec![0]]);
        let s = StackPresentation::new(Base::Complex(pt.clone()), vec![zero, FunctionHandle::constant(unit(), qi(1))]);
        let p = build_polyhedral_complex(&s, &pt).unwrap();
        assert_eq!((p.count_kind(true), p.count_kind(false)), (2, 1));
    }

    #[test]
    fn precondition_error() {
        let k = seg_complex();
        let zero = FunctionHandle::constant(unit(), qi(0));
        let bump = FunctionHandle::single(unit(), Polynomial::from_terms(1, &[(&[1], qi(1)), (&[2], qi(-1))]));
        assert!(matches!(
            build_polyhedral_complex(&stack(vec![zero, bump]), &k),
            Err(GeomError::Precondition(_))
        ));
    }

    #[test]
    fn h_examples() {
        let k = seg_complex();
        let zero = FunctionHandle::constant(unit(), qi(0));
        let s = stack(vec![zero.clone(), sq()]);
        let p = build_polyhedral_complex(&s, &k).unwrap();
        let h = build_h(&p, &s).unwrap();
        let out = h.forward(&[0.5, 0.25]).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15 && (out[1] - 0.125).abs() < 1e-15);
        let back = h.inverse(&out).unwrap();
        assert!((back[1] - 0.25).abs() < 1e-12);
        let exact = h.forward_q(&Point::new(vec![qr(1, 2), qr(1, 4)])).unwrap();
        assert_eq!(exact.coords, vec![qr(1, 2), qr(1, 8)]);
        // graph branch
        let g = h.forward(&[0.5, 0.5]).unwrap();
        assert!((g[1] - 0.25).abs() < 1e-15);
        // affine data: identity
        let s = stack(vec![zero, lin(1)]);
        let p = build_polyhedral_complex(&s, &k).unwrap();
        let h = build_h(&p, &s).unwrap();
        let out = h.forward(&[0.3, 0.1]).unwrap();
        assert!((out[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ratio_bound_example() {
        let k = seg_complex();
        let zero = FunctionHandle::constant(unit(), qi(0));
        let s = stack(vec![zero, lin(1).with_lipschitz(1.0)]);
        let p = build_polyhedral_complex(&s, &k).unwrap();
        let h = build_h(&p, &s).unwrap();
        let band = p
            .cells
            .iter()
            .position(|c| c.kind == CellKind::Band(0) && c.dim == 2)
            .unwrap();
        // g(y) = y vanishes only at y = 0: L_g · diam · (k − l) / g(1) = 1
        let zero_l = FunctionHandle::constant(unit(), qi(0)).with_lipschitz(0.0);
        let s2 = stack(vec![zero_l, lin(1).with_lipschitz(1.0)]);
        let h2 = build_h(&build_polyhedral_complex(&s2, &k).unwrap(), &s2).unwrap();
        assert!((h2.certificates[band].ratio_bound - 1.0).abs() < 1e-12);
        assert!(h.sampled_lipschitz(band, 200, 1) <= h.certificates[band].bound);
    }

    #[test]
    fn compactify_examples() {
        assert_eq!(compactify(&[0.0, 0.0]), vec![0.0, 0.0]);
        let u = compactify(&[1.0, 0.0]);
        assert!((u[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15 && u[1] == 0.0);
        assert!(decompactify(&[1.0, 0.0]).is_err());
        let mut rng = defnfun::seeded(11);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rand::Rng::gen_range(&mut rng, -577.0..577.0)).collect();
            let p = Point::new(x.iter().map(|&v| exact::qf(v)).collect());
            let back = decompactify_q(&compactify_q(&p)).unwrap().to_f64();
            assert!(defnfun::dist(&back, &x) <= 1e-12);
            // the double version agrees with the exact one on the forward map
            let u = compactify(&x);
            assert!(defnfun::dist(&u, &compactify_q(&p).to_f64()) <= 1e-15);
        }
        assert!(decompactify_q(&Point::from_ints(&[1, 0])).is_err());
    }
}
