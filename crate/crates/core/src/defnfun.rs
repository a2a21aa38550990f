//! Piecewise-polynomial functions over simplicial pieces and the
//! cylindrical stack presentation consumed by the triangulation pipeline.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::exact::{self, qi, Q};
use crate::grassmann::Subspace;
use crate::simplicial::{self, Point, SimplicialComplex};

/// Geometric tolerance for floating membership tests.
pub const GEOM_TOL: f64 = 1e-9;

/// Polynomial with rational coefficients keyed by exponent tuples.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Q>,
    cache: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn new(nvars: usize, terms: BTreeMap<Vec<u32>, Q>) -> Self {
        let terms: BTreeMap<Vec<u32>, Q> = terms.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        let cache = terms.iter().map(|(e, c)| (e.clone(), exact::to_f64(c))).collect();
        Polynomial { nvars, terms, cache }
    }

    pub fn from_terms(nvars: usize, terms: &[(&[u32], Q)]) -> Self {
        let mut m = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent tuple length");
            *m.entry(e.to_vec()).or_insert_with(Q::zero) += c;
        }
        Polynomial::new(nvars, m)
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        let mut m = BTreeMap::new();
        m.insert(vec![0; nvars], c);
        Polynomial::new(nvars, m)
    }

    /// `c₀ + Σ aᵢ yᵢ`.
    pub fn affine(c0: Q, a: &[Q]) -> Self {
        let n = a.len();
        let mut m = BTreeMap::new();
        m.insert(vec![0; n], c0);
        for (i, ai) in a.iter().enumerate() {
            let mut e = vec![0; n];
            e[i] = 1;
            m.insert(e, ai.clone());
        }
        Polynomial::new(n, m)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, Q> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.cache
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(y)
                    .fold(*c, |acc, (&k, &yi)| acc * yi.powi(k as i32))
            })
            .sum()
    }

    pub fn eval_q(&self, y: &[Q]) -> Q {
        let mut s = Q::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (&k, yi) in e.iter().zip(y) {
                for _ in 0..k {
                    t *= yi;
                }
            }
            s += t;
        }
        s
    }

    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut m = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            *m.entry(e2).or_insert_with(Q::zero) += c * qi(e[i] as i64);
        }
        Polynomial::new(self.nvars, m)
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        (0..self.nvars)
            .map(|i| {
                self.cache
                    .iter()
                    .filter(|(e, _)| e[i] > 0)
                    .map(|(e, c)| {
                        let mut t = *c * e[i] as f64;
                        for (j, (&k, &yj)) in e.iter().zip(y).enumerate() {
                            let p = if j == i { k - 1 } else { k };
                            t *= yj.powi(p as i32);
                        }
                        t
                    })
                    .sum()
            })
            .collect()
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        let mut m = self.terms.clone();
        for (e, c) in &other.terms {
            *m.entry(e.clone()).or_insert_with(Q::zero) -= c;
        }
        Polynomial::new(self.nvars, m)
    }

    /// Upper bound of `sup |∇p|` over the box `∏ [lo_i, hi_i]` obtained by
    /// bounding every monomial of every partial derivative in absolute value.
    pub fn gradient_bound(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let amax: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| a.abs().max(b.abs())).collect();
        let mut sq = 0.0;
        for i in 0..self.nvars {
            let d = self.derivative(i);
            let b: f64 = d
                .cache
                .iter()
                .map(|(e, c)| {
                    e.iter()
                        .zip(&amax)
                        .fold(c.abs(), |acc, (&k, &m)| acc * m.powi(k as i32))
                })
                .sum();
            sq += b * b;
        }
        sq.sqrt() * (1.0 + 1e-12)
    }
}

/// Floating barycentric coordinate data of a simplex cell.
#[derive(Clone, Debug)]
pub(crate) struct BaryMap {
    verts: Vec<Vec<f64>>,
    // pseudo-inverse of the (n+1) × (k+1) homogeneous vertex matrix
    pinv: DMatrix<f64>,
}

impl BaryMap {
    pub(crate) fn new(verts: Vec<Vec<f64>>) -> Self {
        let n = verts[0].len();
        let k = verts.len();
        let mut a = DMatrix::zeros(n + 1, k);
        for (j, v) in verts.iter().enumerate() {
            for i in 0..n {
                a[(i, j)] = v[i];
            }
            a[(n, j)] = 1.0;
        }
        let pinv = a
            .pseudo_inverse(1e-14)
            .unwrap_or_else(|_| DMatrix::zeros(k, n + 1));
        BaryMap { verts, pinv }
    }

    /// Barycentric coordinates of the projection of `y` on the affine span,
    /// plus the distance of `y` from that span.
    pub(crate) fn coords(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let n = y.len();
        let mut h = DVector::zeros(n + 1);
        for i in 0..n {
            h[i] = y[i];
        }
        h[n] = 1.0;
        let l = &self.pinv * h;
        let mut off = 0.0;
        for i in 0..n {
            let r: f64 = self.verts.iter().zip(l.iter()).map(|(v, li)| v[i] * li).sum::<f64>() - y[i];
            off += r * r;
        }
        (l.iter().copied().collect(), off.sqrt())
    }

    pub(crate) fn contains_closed(&self, y: &[f64], tol: f64) -> bool {
        let (l, off) = self.coords(y);
        off <= tol && l.iter().all(|&x| x >= -tol)
    }

    pub(crate) fn contains_open(&self, y: &[f64], tol: f64) -> bool {
        let (l, off) = self.coords(y);
        off <= tol && l.iter().all(|&x| x > tol)
    }

    pub(crate) fn verts(&self) -> &[Vec<f64>] {
        &self.verts
    }

    pub(crate) fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }
}

#[derive(Clone, Debug)]
pub struct Piece {
    pub cell: Vec<Point>,
    pub poly: Polynomial,
    bary: BaryMap,
}

impl Piece {
    pub fn new(cell: Vec<Point>, poly: Polynomial) -> Self {
        let bary = BaryMap::new(cell.iter().map(Point::to_f64).collect());
        Piece { cell, poly, bary }
    }
}

/// An evaluable piecewise-polynomial function on ℝᵐ.
#[derive(Clone, Debug)]
pub struct FunctionHandle {
    nvars: usize,
    pub pieces: Vec<Piece>,
    pub declared_lipschitz: Option<f64>,
}

impl FunctionHandle {
    pub fn new(nvars: usize, pieces: Vec<Piece>, declared_lipschitz: Option<f64>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(GeomError::Input("function handle without pieces".into()));
        }
        for p in &pieces {
            if p.poly.nvars() != nvars || p.cell.iter().any(|v| v.dim() != nvars) {
                return Err(GeomError::Input("piece dimension mismatch".into()));
            }
            if !simplicial::affinely_independent(&p.cell.iter().collect::<Vec<_>>()) {
                return Err(GeomError::Input("degenerate piece cell".into()));
            }
        }
        Ok(FunctionHandle {
            nvars,
            pieces,
            declared_lipschitz,
        })
    }

    /// A single polynomial on one simplex cell.
    pub fn single(cell: Vec<Point>, poly: Polynomial) -> Self {
        let n = poly.nvars();
        FunctionHandle::new(n, vec![Piece::new(cell, poly)], None).expect("valid single piece")
    }

    pub fn constant(cell: Vec<Point>, c: Q) -> Self {
        let n = cell[0].dim();
        FunctionHandle::single(cell, Polynomial::constant(n, c))
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.declared_lipschitz = Some(l);
        self
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn piece_at(&self, y: &[f64]) -> Option<usize> {
        let tol = GEOM_TOL * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        self.pieces.iter().position(|p| p.bary.contains_closed(y, tol))
    }

    pub fn piece_at_q(&self, y: &Point) -> Option<usize> {
        self.pieces.iter().position(|p| {
            simplicial::barycentric_coords(&p.cell.iter().collect::<Vec<_>>(), y)
                .is_some_and(|l| l.iter().all(|x| !x.is_negative()))
        })
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        let i = self
            .piece_at(y)
            .ok_or_else(|| GeomError::Domain(format!("{y:?} outside every piece")))?;
        Ok(self.pieces[i].poly.eval(y))
    }

    pub fn eval_q(&self, y: &Point) -> Result<Q> {
        let i = self
            .piece_at_q(y)
            .ok_or_else(|| GeomError::Domain(format!("{:?} outside every piece", y.to_f64())))?;
        Ok(self.pieces[i].poly.eval_q(&y.coords))
    }

    pub fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        let i = self
            .piece_at(y)
            .ok_or_else(|| GeomError::Domain(format!("{y:?} outside every piece")))?;
        Ok(self.pieces[i].poly.gradient(y))
    }

    /// Rigorous Lipschitz bound over the union of pieces meeting the box of
    /// `cell`: the declared constant when present, otherwise the monomial
    /// bound of the gradient.
    pub fn lipschitz_bound_on(&self, cell: &[Vec<f64>]) -> f64 {
        if let Some(l) = self.declared_lipschitz {
            return l;
        }
        let n = self.nvars;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for v in cell {
            for i in 0..n {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        self.pieces
            .iter()
            .filter(|p| {
                (0..n).all(|i| {
                        let (a, b) = p
                            .bary
                            .verts()
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v[i]), b.max(v[i])));
                        a <= hi[i] + GEOM_TOL && lo[i] <= b + GEOM_TOL
                    })
            })
            .map(|p| p.poly.gradient_bound(&lo, &hi))
            .fold(0.0, f64::max)
    }
}

/// Points on a simplex from a nested low-discrepancy sequence; vertices come
/// first so every prefix contains them.
pub fn simplex_sample_sequence(verts: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    let k = verts.len();
    let n = verts[0].len();
    let mut out: Vec<Vec<f64>> = verts.iter().take(count).cloned().collect();
    let primes = [2u64, 3, 5, 7, 11, 13, 17, 19];
    let mut i = 1u64;
    while out.len() < count {
        let mut u: Vec<f64> = (0..k - 1).map(|j| radical_inverse(i, primes[j % primes.len()])).collect();
        u.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut lam = Vec::with_capacity(k);
        let mut prev = 0.0;
        for x in &u {
            lam.push(x - prev);
            prev = *x;
        }
        lam.push(1.0 - prev);
        let p = (0..n)
            .map(|c| verts.iter().zip(&lam).map(|(v, l)| v[c] * l).sum())
            .collect();
        out.push(p);
        i += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Uniform random point of the open simplex.
pub fn random_in_simplex(verts: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let lam = random_weights(verts.len(), rng);
    combine(verts, &lam)
}

pub fn random_weights(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= s;
    }
    w
}

pub fn combine(verts: &[Vec<f64>], lam: &[f64]) -> Vec<f64> {
    let n = verts[0].len();
    (0..n)
        .map(|c| verts.iter().zip(lam).map(|(v, l)| v[c] * l).sum())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub quotient: f64,
    pub gradient: f64,
    pub samples: usize,
}

impl LipschitzEstimate {
    pub fn value(&self) -> f64 {
        self.quotient.max(self.gradient)
    }
}

/// Sampled lower estimate of the Lipschitz constant of `h` on a closed cell.
pub fn lipschitz_estimate(h: &FunctionHandle, cell: &[Point], samples: usize) -> Result<LipschitzEstimate> {
    if samples < 2 {
        return Err(GeomError::Input("need at least two samples".into()));
    }
    if cell.len() < 2 || !simplicial::affinely_independent(&cell.iter().collect::<Vec<_>>()) {
        return Err(GeomError::Input("degenerate cell".into()));
    }
    let verts: Vec<Vec<f64>> = cell.iter().map(Point::to_f64).collect();
    let pts = simplex_sample_sequence(&verts, samples);
    let vals: Vec<f64> = pts.iter().map(|p| h.eval(p)).collect::<Result<_>>()?;
    let mut quotient = 0.0f64;
    for i in 0..pts.len() {
        for j in 0..i {
            let d = dist(&pts[i], &pts[j]);
            if d > 0.0 {
                quotient = quotient.max((vals[i] - vals[j]).abs() / d);
            }
        }
    }
    let gradient = pts
        .iter()
        .map(|p| h.gradient(p).map(|g| norm(&g)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(LipschitzEstimate {
        quotient,
        gradient,
        samples,
    })
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Symbolic selector of cells of a stack: graphs or bands of the functions
/// (1-based levels) over base cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
    /// Base cells: indices into the base cell list, or nested selectors for
    /// a stacked base. Absent means every base cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub over: Option<Vec<BaseSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseSpec {
    Index(usize),
    Cell(CellSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subset {
    pub name: String,
    pub cells: Vec<CellSpec>,
}

#[derive(Clone, Debug)]
pub enum Base {
    /// Closed intervals (degenerate intervals are points) in ℝ.
    Intervals(Vec<(Q, Q)>),
    /// An already triangulated polyhedral base, mapped by the identity.
    Complex(SimplicialComplex),
    /// A lower-dimensional stack, triangulated recursively.
    Stack(Box<StackPresentation>),
}

/// Ordered functions η₁ ≤ … ≤ η_b over a base; the set is the closed region
/// between η₁ and η_b, optionally restricted to `selected` cells.
#[derive(Clone, Debug)]
pub struct StackPresentation {
    pub base: Base,
    pub functions: Vec<FunctionHandle>,
    pub selected: Vec<CellSpec>,
    pub subsets: Vec<Subset>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    Equal,
    Less,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ViolationKind {
    Ordering { k: usize },
    Dichotomy { k: usize, base_cell: usize },
    Continuity { pieces: (usize, usize), function: usize },
    Domain { function: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub witness: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StackDiagnostics {
    pub violations: Vec<Violation>,
    /// Per base cell, relation of each consecutive pair (η_k, η_{k+1}).
    pub dichotomy: Vec<Vec<Option<Relation>>>,
}

impl StackDiagnostics {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Geometry of one base cell: sampler, tangent, and membership.
#[derive(Clone, Debug)]
pub enum BaseCell {
    Simplex(Vec<Vec<f64>>),
    Stacked {
        kind: CellKind,
        base: Box<BaseCell>,
        functions: Vec<FunctionHandle>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Graph(usize),
    Band(usize),
}

impl BaseCell {
    pub fn dim(&self) -> usize {
        match self {
            BaseCell::Simplex(v) => v.len() - 1,
            BaseCell::Stacked { kind, base, .. } => match kind {
                CellKind::Graph(_) => base.dim(),
                CellKind::Band(_) => base.dim() + 1,
            },
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            BaseCell::Simplex(v) => random_in_simplex(v, rng),
            BaseCell::Stacked { kind, base, functions } => {
                let mut y = base.sample(rng);
                let z = match *kind {
                    CellKind::Graph(k) => functions[k].eval(&y).unwrap_or(f64::NAN),
                    CellKind::Band(k) => {
                        let a = functions[k].eval(&y).unwrap_or(f64::NAN);
                        let b = functions[k + 1].eval(&y).unwrap_or(f64::NAN);
                        let s = rng.gen_range(0.01..0.99);
                        a + s * (b - a)
                    }
                };
                y.push(z);
                y
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            BaseCell::Simplex(v) => {
                let m = BaryMap::new(v.clone());
                if v.len() == 1 {
                    return dist(&v[0], x) <= tol;
                }
                m.contains_open(x, tol)
            }
            BaseCell::Stacked { kind, base, functions } => {
                let (y, z) = x.split_at(x.len() - 1);
                if !base.contains(y, tol) {
                    return false;
                }
                match *kind {
                    CellKind::Graph(k) => functions[k].eval(y).is_ok_and(|e| (z[0] - e).abs() <= tol),
                    CellKind::Band(k) => match (functions[k].eval(y), functions[k + 1].eval(y)) {
                        (Ok(a), Ok(b)) => z[0] > a + tol && z[0] < b - tol,
                        _ => false,
                    },
                }
            }
        }
    }

    pub fn tangent(&self, x: &[f64]) -> Subspace {
        match self {
            BaseCell::Simplex(v) => {
                let n = v[0].len();
                let dirs: Vec<Vec<f64>> = v[1..]
                    .iter()
                    .map(|w| w.iter().zip(&v[0]).map(|(a, b)| a - b).collect())
                    .collect();
                Subspace::from_vectors(&dirs, n)
            }
            BaseCell::Stacked { kind, base, functions } => {
                let (y, _) = x.split_at(x.len() - 1);
                let tb = base.tangent(y);
                match *kind {
                    CellKind::Band(_) => tb.times_line(),
                    CellKind::Graph(k) => {
                        let g = functions[k].gradient(y).unwrap_or_else(|_| vec![0.0; y.len()]);
                        let n = y.len();
                        let f = tb.frame();
                        let mut m = DMatrix::zeros(n + 1, f.ncols());
                        for j in 0..f.ncols() {
                            let mut s = 0.0;
                            for i in 0..n {
                                m[(i, j)] = f[(i, j)];
                                s += g[i] * f[(i, j)];
                            }
                            m[(n, j)] = s;
                        }
                        Subspace::span(&m)
                    }
                }
            }
        }
    }
}

impl StackPresentation {
    pub fn new(base: Base, functions: Vec<FunctionHandle>) -> Self {
        StackPresentation {
            base,
            functions,
            selected: vec![],
            subsets: vec![],
        }
    }

    /// Ambient dimension of the stacked set.
    pub fn dim(&self) -> usize {
        self.base_dim() + 1
    }

    pub fn base_dim(&self) -> usize {
        match &self.base {
            Base::Intervals(_) => 1,
            Base::Complex(k) => k.ambient,
            Base::Stack(s) => s.dim(),
        }
    }

    /// Base cells over which the dichotomy is required. For interval bases
    /// the intervals are split at every piece breakpoint.
    pub fn base_complex(&self) -> Option<SimplicialComplex> {
        match &self.base {
            Base::Intervals(iv) => Some(interval_complex(iv, &self.functions)),
            Base::Complex(k) => Some(k.clone()),
            Base::Stack(_) => None,
        }
    }

    pub fn base_cells(&self) -> Vec<BaseCell> {
        match &self.base {
            Base::Stack(s) => s.cells(),
            _ => {
                let k = self.base_complex().expect("polyhedral base");
                k.simplices
                    .iter()
                    .map(|s| BaseCell::Simplex(k.vertex_points(s).iter().map(|p| p.to_f64()).collect()))
                    .collect()
            }
        }
    }

    /// Relations per base cell, decided on interior samples.
    pub fn relations(&self, samples: usize, seed: u64) -> Vec<Vec<Option<Relation>>> {
        let cells = self.base_cells();
        let b = self.functions.len();
        let mut rng = seeded(seed);
        cells
            .iter()
            .map(|c| {
                (0..b.saturating_sub(1))
                    .map(|k| {
                        let mut eq = true;
                        let mut lt = true;
                        for _ in 0..samples.max(1) {
                            let y = c.sample(&mut rng);
                            match (self.functions[k].eval(&y), self.functions[k + 1].eval(&y)) {
                                (Ok(a), Ok(bv)) => {
                                    let tol = GEOM_TOL * (1.0 + a.abs().max(bv.abs()));
                                    if (bv - a).abs() > tol {
                                        eq = false;
                                    }
                                    if bv - a <= tol {
                                        lt = false;
                                    }
                                }
                                _ => return None,
                            }
                        }
                        if eq {
                            Some(Relation::Equal)
                        } else if lt {
                            Some(Relation::Less)
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Symbolic cells: graphs of every η_k (deduplicated where consecutive
    /// functions coincide) and bands where η_k < η_{k+1}, over every base
    /// cell.
    pub fn cells(&self) -> Vec<BaseCell> {
        let rel = self.relations(16, 0x5eed);
        let mut out = Vec::new();
        for (ci, c) in self.base_cells().into_iter().enumerate() {
            for k in 0..self.functions.len() {
                if k > 0 && rel[ci][k - 1] == Some(Relation::Equal) {
                    continue;
                }
                out.push(BaseCell::Stacked {
                    kind: CellKind::Graph(k),
                    base: Box::new(c.clone()),
                    functions: self.functions.clone(),
                });
            }
            for (k, r) in rel[ci].iter().enumerate().take(self.functions.len().saturating_sub(1)) {
                if *r == Some(Relation::Less) {
                    out.push(BaseCell::Stacked {
                        kind: CellKind::Band(k),
                        base: Box::new(c.clone()),
                        functions: self.functions.clone(),
                    });
                }
            }
        }
        out
    }

    /// Whether `x` lies in the closed region η₁ ≤ z ≤ η_b over the base set.
    pub fn region_contains(&self, x: &[f64], tol: f64) -> bool {
        let (y, z) = x.split_at(x.len() - 1);
        if !self.base_contains(y, tol) {
            return false;
        }
        let b = self.functions.len();
        match (self.functions[0].eval(y), self.functions[b - 1].eval(y)) {
            (Ok(lo), Ok(hi)) => z[0] >= lo - tol && z[0] <= hi + tol,
            _ => false,
        }
    }

    pub fn base_contains(&self, y: &[f64], tol: f64) -> bool {
        match &self.base {
            Base::Intervals(iv) => iv.iter().any(|(a, b)| {
                y[0] >= exact::to_f64(a) - tol && y[0] <= exact::to_f64(b) + tol
            }),
            Base::Complex(k) => k.simplices.iter().any(|s| {
                let v: Vec<Vec<f64>> = k.vertex_points(s).iter().map(|p| p.to_f64()).collect();
                if v.len() == 1 {
                    dist(&v[0], y) <= tol
                } else {
                    BaryMap::new(v).contains_closed(y, tol)
                }
            }),
            Base::Stack(s) => s.region_contains(y, tol),
        }
    }

    /// Membership of `x` in a symbolic cell selector.
    pub fn spec_contains(&self, spec: &CellSpec, x: &[f64], tol: f64) -> bool {
        let (y, z) = x.split_at(x.len() - 1);
        let z = z[0];
        let level_ok = match (spec.graph, spec.band) {
            (Some(k), _) if k >= 1 && k <= self.functions.len() => {
                self.functions[k - 1].eval(y).is_ok_and(|e| (z - e).abs() <= tol)
            }
            (None, Some(k)) if k >= 1 && k < self.functions.len() => {
                match (self.functions[k - 1].eval(y), self.functions[k].eval(y)) {
                    (Ok(a), Ok(b)) => z > a + tol && z < b - tol,
                    _ => false,
                }
            }
            _ => false,
        };
        if !level_ok {
            return false;
        }
        match &spec.over {
            None => self.base_contains(y, tol),
            Some(list) => list.iter().any(|b| self.base_spec_contains(b, y, tol)),
        }
    }

    fn base_spec_contains(&self, b: &BaseSpec, y: &[f64], tol: f64) -> bool {
        match (b, &self.base) {
            (BaseSpec::Cell(c), Base::Stack(s)) => s.spec_contains(c, y, tol),
            (BaseSpec::Index(i), Base::Stack(s)) => s.cells().get(*i).is_some_and(|c| c.contains(y, tol)),
            (BaseSpec::Index(i), _) => self.base_cells().get(*i).is_some_and(|c| c.contains(y, tol)),
            (BaseSpec::Cell(_), _) => false,
        }
    }

    pub fn subset_contains(&self, subset: &Subset, x: &[f64], tol: f64) -> bool {
        subset.cells.iter().any(|c| self.spec_contains(c, x, tol))
    }

    /// Membership in the described set: the selected cells, or the whole
    /// closed region when no selection is given.
    pub fn set_contains(&self, x: &[f64], tol: f64) -> bool {
        if self.selected.is_empty() {
            self.region_contains(x, tol)
        } else {
            self.selected.iter().any(|c| self.spec_contains(c, x, tol))
        }
    }

    /// Exact vertex-level check that resolved cell ids point somewhere.
    pub fn check_references(&self) -> Result<()> {
        let ncells = match &self.base {
            Base::Stack(s) => s.cells().len(),
            _ => self.base_cells().len(),
        };
        let b = self.functions.len();
        let all = self.selected.iter().chain(self.subsets.iter().flat_map(|s| s.cells.iter()));
        for spec in all {
            match (spec.graph, spec.band) {
                (Some(k), None) if k >= 1 && k <= b => {}
                (None, Some(k)) if k >= 1 && k < b => {}
                _ => {
                    return Err(GeomError::Input(format!(
                        "cell selector must name exactly one valid graph (1..={b}) or band (1..{b})"
                    )))
                }
            }
            for bs in spec.over.iter().flatten() {
                match bs {
                    BaseSpec::Index(i) if *i >= ncells => {
                        return Err(GeomError::Input(format!("dangling base cell id {i} (base has {ncells} cells)")))
                    }
                    BaseSpec::Cell(c) => match &self.base {
                        Base::Stack(s) => {
                            let mut t = (**s).clone();
                            t.selected = vec![c.clone()];
                            t.subsets.clear();
                            t.check_references()?;
                        }
                        _ => return Err(GeomError::Input("nested base selector over a non-stack base".into())),
                    },
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Interval complex: points and open segments, split at function piece
/// breakpoints that fall inside an interval.
pub fn interval_complex(iv: &[(Q, Q)], functions: &[FunctionHandle]) -> SimplicialComplex {
    let mut points: Vec<Point> = Vec::new();
    let mut tops: Vec<Vec<usize>> = Vec::new();
    let id = |q: &Q, points: &mut Vec<Point>| -> usize {
        let p = Point::new(vec![q.clone()]);
        match points.iter().position(|x| *x == p) {
            Some(i) => i,
            None => {
                points.push(p);
                points.len() - 1
            }
        }
    };
    let mut breaks: Vec<Q> = functions
        .iter()
        .flat_map(|f| f.pieces.iter().flat_map(|p| p.cell.iter().map(|v| v.coords[0].clone())))
        .collect();
    breaks.sort();
    breaks.dedup();
    for (a, b) in iv {
        if a == b {
            let i = id(a, &mut points);
            tops.push(vec![i]);
            continue;
        }
        let mut cuts = vec![a.clone()];
        cuts.extend(breaks.iter().filter(|x| *x > a && *x < b).cloned());
        cuts.push(b.clone());
        for w in cuts.windows(2) {
            let i = id(&w[0], &mut points);
            let j = id(&w[1], &mut points);
            tops.push(vec![i, j]);
        }
    }
    SimplicialComplex::from_simplices(points, &tops)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ordering, per-cell dichotomy, continuity, and domain coverage checks.
pub fn validate_stack(s: &StackPresentation, samples: usize) -> StackDiagnostics {
    let mut diag = StackDiagnostics::default();
    let cells = s.base_cells();
    let mut rng = seeded(0xd1a9);
    let b = s.functions.len();
    for (ci, c) in cells.iter().enumerate() {
        let mut rels = vec![None; b.saturating_sub(1)];
        // interior samples plus vertices of simplex cells
        let mut pts: Vec<Vec<f64>> = (0..samples.max(1)).map(|_| c.sample(&mut rng)).collect();
        let interior = pts.len();
        if let BaseCell::Simplex(v) = c {
            pts.extend(v.iter().cloned());
        }
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
        for y in &pts {
            let mut row = Vec::with_capacity(b);
            for (fi, f) in s.functions.iter().enumerate() {
                match f.eval(y) {
                    Ok(v) => row.push(v),
                    Err(_) => {
                        diag.violations.push(Violation {
                            kind: ViolationKind::Domain { function: fi + 1 },
                            witness: y.clone(),
                            value: f64::NAN,
                        });
                        row.push(f64::NAN);
                    }
                }
            }
            vals.push(row);
        }
        for k in 0..b.saturating_sub(1) {
            let mut eq = true;
            let mut lt = true;
            for (pi, (y, row)) in pts.iter().zip(&vals).enumerate() {
                let (a, bb) = (row[k], row[k + 1]);
                if a.is_nan() || bb.is_nan() {
                    continue;
                }
                let tol = GEOM_TOL * (1.0 + a.abs().max(bb.abs()));
                if a > bb + tol {
                    diag.violations.push(Violation {
                        kind: ViolationKind::Ordering { k: k + 1 },
                        witness: y.clone(),
                        value: a - bb,
                    });
                    lt = false;
                    eq = false;
                    break;
                }
                if pi < interior {
                    if (bb - a).abs() > tol {
                        eq = false;
                    }
                    if bb - a <= tol {
                        lt = false;
                    }
                }
            }
            rels[k] = if eq {
                Some(Relation::Equal)
            } else if lt {
                Some(Relation::Less)
            } else {
                None
            };
            if rels[k].is_none() && !diag.violations.iter().any(|v| v.kind == ViolationKind::Ordering { k: k + 1 }) {
                let w = pts[..interior]
                    .iter()
                    .zip(&vals)
                    .find(|(_, r)| (r[k + 1] - r[k]).abs() <= GEOM_TOL * (1.0 + r[k].abs()))
                    .map(|(y, _)| y.clone())
                    .unwrap_or_default();
                diag.violations.push(Violation {
                    kind: ViolationKind::Dichotomy { k: k + 1, base_cell: ci },
                    witness: w,
                    value: 0.0,
                });
            }
        }
        diag.dichotomy.push(rels);
    }
    // continuity across pieces: compare at shared points of closures
    for (fi, f) in s.functions.iter().enumerate() {
        for i in 0..f.pieces.len() {
            let verts: Vec<Vec<f64>> = f.pieces[i].cell.iter().map(Point::to_f64).collect();
            for y in simplex_sample_sequence(&verts, samples.max(verts.len()) + verts.len()) {
                for j in 0..f.pieces.len() {
                    if j == i {
                        continue;
                    }
                    let tol = GEOM_TOL * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                    if f.pieces[j].bary.contains_closed(&y, tol) {
                        let a = f.pieces[i].poly.eval(&y);
                        let bv = f.pieces[j].poly.eval(&y);
                        if (a - bv).abs() > 1e-9 * (1.0 + a.abs()) {
                            diag.violations.push(Violation {
                                kind: ViolationKind::Continuity {
                                    pieces: (i, j),
                                    function: fi + 1,
                                },
                                witness: y.clone(),
                                value: (a - bv).abs(),
                            });
                        }
                    }
                }
            }
        }
    }
    diag
}

/// Exact test that `p` vanishes identically on the closed simplex: the
/// principal lattice of order `deg p` is unisolvent for polynomials of that
/// degree restricted to the simplex.
pub fn vanishes_on_simplex(p: &Polynomial, verts: &[Point]) -> bool {
    let m = p.degree().max(1) as usize;
    let k = verts.len();
    lattice(k, m).iter().all(|w| {
        let n = verts[0].dim();
        let y: Vec<Q> = (0..n)
            .map(|c| {
                verts
                    .iter()
                    .zip(w)
                    .fold(Q::zero(), |acc, (v, &wi)| acc + &v.coords[c] * qi(wi as i64))
                    / qi(m as i64)
            })
            .collect();
        p.eval_q(&y).is_zero()
    })
}

/// Weight vectors of length `k` with nonnegative integer entries summing to `m`.
pub(crate) fn lattice(k: usize, m: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in 0..=m {
        for mut rest in lattice(k - 1, m - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionReport {
    pub pass: bool,
    pub alpha: f64,
    pub witness: Vec<f64>,
}

/// Sampled infimum of `|v − λ|` over unit tangents `v` of the graph strata.
/// For a tangent space `T`, `inf |v − λ| = sqrt(2 − 2|P_T λ|)`.
pub fn regular_direction_check(
    s: &StackPresentation,
    lambda: &[f64],
    samples: usize,
    alpha0: f64,
) -> Result<DirectionReport> {
    if (norm(lambda) - 1.0).abs() > 1e-9 || lambda.len() != s.dim() {
        return Err(GeomError::Input("direction must be a unit vector of the ambient space".into()));
    }
    let lam = DVector::from_column_slice(lambda);
    let mut rng = seeded(0xd12ec7);
    let mut alpha = f64::INFINITY;
    let mut witness = vec![];
    for c in s.cells() {
        let BaseCell::Stacked { kind: CellKind::Graph(_), .. } = c else {
            continue;
        };
        for _ in 0..samples.max(1) {
            let x = c.sample(&mut rng);
            let t = c.tangent(&x);
            let pn = if t.dim() == 0 { 0.0 } else { t.project(&lam).norm() };
            let a = (2.0 - 2.0 * pn.min(1.0)).max(0.0).sqrt();
            if a < alpha {
                alpha = a;
                witness = x;
            }
        }
    }
    Ok(DirectionReport {
        pass: alpha >= alpha0,
        alpha,
        witness,
    })
}

/// Helper for tests and fixtures: the unit segment or standard simplex.
pub fn standard_cell(n: usize) -> Vec<Point> {
    let mut v = vec![Point::new(vec![Q::zero(); n])];
    for i in 0..n {
        let mut c = vec![Q::zero(); n];
        c[i] = Q::one();
        v.push(Point::new(c));
    }
    v
}

/// Relation of two handles on a closed simplex of a polyhedral base,
/// decided exactly on the principal lattice when both use one piece there.
pub fn exact_equal_on(f: &FunctionHandle, g: &FunctionHandle, verts: &[Point]) -> Option<bool> {
    let bary = simplicial::mean_point(&verts.iter().collect::<Vec<_>>());
    let (i, j) = (f.piece_at_q(&bary)?, g.piece_at_q(&bary)?);
    Some(vanishes_on_simplex(&f.pieces[i].poly.sub(&g.pieces[j].poly), verts))
}
