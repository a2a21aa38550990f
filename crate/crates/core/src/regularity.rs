//! Sampling checkers for regularity conditions on stratified pairs.
//!
//! A pair is Λ (the higher stratum) and Γ ⊂ closure(Λ)∖Λ. Checkers follow
//! families of curves a(t) ∈ Γ, b(t) ∈ Λ converging to a point of Γ along
//! a geometric sequence of parameters and estimate the relevant limit.
//! "pass" means no violation was found at the configured scheme and
//! tolerance.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::defnfun::{self, dist, norm};
use crate::error::{GeomError, Result};
use crate::grassmann::{self, Subspace};
use crate::simplicial::Simplex;
use crate::stacks::LocalMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Worst of two verdicts (fail over inconclusive over pass).
    pub fn and(self, o: Verdict) -> Verdict {
        use Verdict::*;
        match (self, o) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub family: usize,
    pub t: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub condition: String,
    /// Indices of (Λ, Γ) in whatever stratum list the caller uses.
    pub pair: (usize, usize),
    pub verdict: Verdict,
    pub statistic: f64,
    /// Per-level aggregate statistic, coarsest level first.
    pub levels: Vec<f64>,
    pub witness: Option<Witness>,
    pub families: usize,
    pub note: String,
}

impl RegularityReport {
    fn new(condition: &str, verdict: Verdict, statistic: f64, levels: Vec<f64>, witness: Option<Witness>, families: usize) -> Self {
        RegularityReport {
            condition: condition.to_string(),
            pair: (0, 0),
            verdict,
            statistic,
            levels,
            witness,
            families,
            note: "sampling-based: no violation found is not a proof".to_string(),
        }
    }

    fn inconclusive(condition: &str, note: &str) -> Self {
        let mut r = Self::new(condition, Verdict::Inconclusive, f64::NAN, vec![], None, 0);
        r.note = note.to_string();
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckConfig {
    /// Limit statistics at or below this are zero.
    pub tol: f64,
    /// Threshold for liminf positivity.
    pub eps0: f64,
    /// Number of (base point, direction) choices per pair.
    pub directions: usize,
    /// Exponents r in a(t) = c + t^r (q − c).
    pub rates: Vec<f64>,
    /// Parameters t_j = ratio^j, j = 1..=levels.
    pub levels: usize,
    pub ratio: f64,
    /// Bounded-growth threshold for sup statistics across levels.
    pub growth: f64,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            tol: 1e-6,
            eps0: 1e-4,
            directions: 12,
            rates: vec![1.0, 2.0, 3.0, 1.5, 2.5],
            levels: 8,
            ratio: 0.25,
            growth: 2.0,
            seed: 0x5eed,
        }
    }
}

impl CheckConfig {
    pub fn ts(&self) -> Vec<f64> {
        (1..=self.levels).map(|j| self.ratio.powi(j as i32)).collect()
    }
}

/// One point of an approach: a ∈ Γ, b ∈ Λ, their tangent spaces, and the
/// secant a − b computed without cancellation when possible.
#[derive(Clone, Debug)]
pub struct Approach {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub tangent_a: Subspace,
    pub tangent_b: Subspace,
    pub secant: Vec<f64>,
}

pub trait CurveFamily: Sync {
    fn at(&self, t: f64) -> Result<Approach>;
}

/// A stratum given as the image of the relative interior of a convex cell
/// (vertex list in a parameter space) under a smooth local map.
#[derive(Clone)]
pub struct CellStratum {
    pub verts: Vec<Vec<f64>>,
    pub map: Arc<dyn LocalMap>,
    /// Marks the map as affine, so secants can be pushed through the
    /// Jacobian instead of subtracting images.
    pub affine: bool,
    dim: usize,
}

pub type SimplexStratum = CellStratum;

impl CellStratum {
    pub fn new(verts: Vec<Vec<f64>>, map: Arc<dyn LocalMap>) -> Self {
        let dim = span_dim(&verts);
        CellStratum {
            verts,
            map,
            affine: false,
            dim,
        }
    }

    pub fn affine(verts: Vec<Vec<f64>>, map: Arc<dyn LocalMap>) -> Self {
        let mut s = Self::new(verts, map);
        s.affine = true;
        s
    }

    /// The identity chart on a cell.
    pub fn flat(verts: Vec<Vec<f64>>) -> Self {
        let n = verts[0].len();
        Self::affine(verts, Arc::new(crate::stacks::IdentityLocal(n)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_dim(&self) -> usize {
        self.verts[0].len()
    }

    pub fn ambient(&self) -> usize {
        self.map.eval(&self.verts[0]).len()
    }

    pub fn sample_param(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        defnfun::random_in_simplex(&self.verts, rng)
    }

    pub fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.map.eval(&self.sample_param(rng))
    }

    pub fn point(&self, u: &[f64]) -> Vec<f64> {
        self.map.eval(u)
    }

    /// Tangent space at the image of `u`: the Jacobian applied to the
    /// cell's direction space.
    pub fn tangent(&self, u: &[f64]) -> Subspace {
        let j = self.map.jacobian(u);
        let dirs: Vec<Vec<f64>> = self.verts[1..]
            .iter()
            .map(|v| {
                let d: Vec<f64> = v.iter().zip(&self.verts[0]).map(|(a, b)| a - b).collect();
                (&j * nalgebra::DVector::from_column_slice(&d)).iter().copied().collect()
            })
            .collect();
        Subspace::from_vectors(&dirs, self.ambient())
    }

    /// Push a parameter-space difference through the map at `u`.
    fn push(&self, u: &[f64], d: &[f64]) -> Vec<f64> {
        (self.map.jacobian(u) * nalgebra::DVector::from_column_slice(d)).iter().copied().collect()
    }

    /// `M × (0,1)` when `open`, `M × {1}` otherwise.
    pub fn times_interval(&self, open: bool) -> CellStratum {
        let mut verts = Vec::new();
        for v in &self.verts {
            let mut top = v.clone();
            top.push(1.0);
            if open {
                let mut bot = v.clone();
                bot.push(0.0);
                verts.push(bot);
            }
            verts.push(top);
        }
        let map: Arc<dyn LocalMap> = Arc::new(ProductLocal(self.map.clone()));
        let mut s = CellStratum::new(verts, map);
        s.affine = self.affine;
        s
    }
}

fn span_dim(verts: &[Vec<f64>]) -> usize {
    let dirs: Vec<Vec<f64>> = verts[1..]
        .iter()
        .map(|v| v.iter().zip(&verts[0]).map(|(a, b)| a - b).collect())
        .collect();
    if dirs.is_empty() {
        0
    } else {
        Subspace::from_vectors(&dirs, verts[0].len()).dim()
    }
}

/// `(u, s) ↦ (φ(u), s)`.
pub struct ProductLocal(pub Arc<dyn LocalMap>);

impl LocalMap for ProductLocal {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (u, s) = x.split_at(x.len() - 1);
        let mut y = self.0.eval(u);
        y.push(s[0]);
        y
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (u, _) = x.split_at(x.len() - 1);
        let j = self.0.jacobian(u);
        let (r, c) = j.shape();
        let mut out = DMatrix::zeros(r + 1, c + 1);
        out.view_mut((0, 0), (r, c)).copy_from(&j);
        out[(r, c)] = 1.0;
        out
    }
}

/// `b(t) = c + t(p − c)` in Λ's cell and `a(t) = c + t^r (q − c)` in Γ's
/// cell, with c, q in the open Γ cell and p in the open Λ cell.
pub struct LinearApproach {
    pub hi: CellStratum,
    pub lo: CellStratum,
    pub c: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub rate: f64,
}

impl CurveFamily for LinearApproach {
    fn at(&self, t: f64) -> Result<Approach> {
        let tr = t.powf(self.rate);
        let ub: Vec<f64> = self.c.iter().zip(&self.p).map(|(c, p)| c + t * (p - c)).collect();
        let ua: Vec<f64> = self.c.iter().zip(&self.q).map(|(c, q)| c + tr * (q - c)).collect();
        let (a, b) = (self.lo.point(&ua), self.hi.point(&ub));
        let secant = if self.hi.affine && self.lo.affine {
            // ua − ub without the common c
            let d: Vec<f64> = (0..self.c.len())
                .map(|i| tr * (self.q[i] - self.c[i]) - t * (self.p[i] - self.c[i]))
                .collect();
            self.hi.push(&ub, &d)
        } else {
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        };
        Ok(Approach {
            tangent_a: self.lo.tangent(&ua),
            tangent_b: self.hi.tangent(&ub),
            a,
            b,
            secant,
        })
    }
}

/// Curve families for a pair of cell strata sharing a parameter space with
/// Γ's cell in the closure of Λ's.
pub fn pair_families(hi: &CellStratum, lo: &CellStratum, cfg: &CheckConfig, salt: u64) -> Vec<LinearApproach> {
    let mut rng = defnfun::seeded(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = Vec::new();
    for d in 0..cfg.directions {
        let c = lo.sample_param(&mut rng);
        let p = hi.sample_param(&mut rng);
        let q = lo.sample_param(&mut rng);
        // point strata have no room to move: a(t) = c
        let rates: Vec<f64> = if lo.dim == 0 {
            vec![1.0]
        } else {
            cfg.rates.clone()
        };
        let r = rates[d % rates.len()];
        out.push(LinearApproach {
            hi: hi.clone(),
            lo: lo.clone(),
            c,
            p,
            q,
            rate: r,
        });
    }
    out
}

/// Limit of a sequence sampled at geometric parameters, by repeated
/// Aitken Δ² on the tail, clamped to the observed range.
pub fn limit_estimate(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(0.0, f64::max);
    if xs.is_empty() {
        return f64::NAN;
    }
    if hi <= 1e-12 {
        return hi;
    }
    let mut seq: Vec<f64> = xs[xs.len().saturating_sub(7)..].to_vec();
    while seq.len() >= 3 {
        let mut next = Vec::with_capacity(seq.len() - 2);
        for w in seq.windows(3) {
            let d = w[2] - 2.0 * w[1] + w[0];
            let v = if d.abs() <= 1e-15 * (w[2].abs() + w[1].abs() + w[0].abs()) {
                w[2]
            } else {
                w[2] - (w[2] - w[1]).powi(2) / d
            };
            next.push(v.clamp(0.0, hi));
        }
        seq = next;
    }
    // the extrapolated value never exceeds the last observation
    seq[seq.len() - 1].min(xs[xs.len() - 1])
}

fn upper_verdict(stat: f64, tol: f64) -> Verdict {
    if stat.is_nan() {
        Verdict::Inconclusive
    } else if stat <= tol {
        Verdict::Pass
    } else if stat <= tol + 10.0 * tol {
        Verdict::Inconclusive
    } else {
        Verdict::Fail
    }
}

fn lower_verdict(stat: f64, eps0: f64, tol: f64) -> Verdict {
    if stat.is_nan() {
        Verdict::Inconclusive
    } else if stat >= eps0 {
        Verdict::Pass
    } else if stat >= eps0 - 10.0 * tol {
        Verdict::Inconclusive
    } else {
        Verdict::Fail
    }
}

/// Sup statistic per level is bounded when the last level does not exceed
/// `growth` times the level halfway down.
fn growth_verdict(levels: &[f64], growth: f64, tol: f64) -> (Verdict, f64) {
    let last = *levels.last().unwrap_or(&f64::NAN);
    if levels.iter().all(|&x| x <= tol) {
        return (Verdict::Pass, last.max(0.0));
    }
    let mid = levels[levels.len() / 2].max(tol);
    let ratio = last / mid;
    let v = if ratio <= growth {
        Verdict::Pass
    } else if ratio <= 2.0 * growth {
        Verdict::Inconclusive
    } else {
        Verdict::Fail
    };
    (v, ratio)
}

type Stat<'a> = dyn Fn(&Approach) -> Option<f64> + Sync + 'a;

/// Runs `stat` along every family at every level: returns per-family value
/// sequences and the samples where they were attained.
fn sweep(families: &[&dyn CurveFamily], ts: &[f64], stat: &Stat<'_>) -> Result<Vec<Vec<(f64, Approach)>>> {
    use rayon::prelude::*;
    families
        .par_iter()
        .map(|f| {
            let mut seq = Vec::with_capacity(ts.len());
            for &t in ts {
                let ap = f.at(t)?;
                if let Some(v) = stat(&ap) {
                    seq.push((v, ap));
                }
            }
            Ok(seq)
        })
        .collect()
}

fn witness(fam: usize, t: f64, ap: &Approach, value: f64) -> Witness {
    Witness {
        family: fam,
        t,
        a: ap.a.clone(),
        b: ap.b.clone(),
        value,
    }
}

/// Whitney (B): along every family the secant line a − b must approach
/// the tangent spaces of Λ at b.
pub fn whitney_b_check(families: &[&dyn CurveFamily], ts: &[f64], cfg: &CheckConfig) -> Result<RegularityReport> {
    if families.is_empty() {
        return Ok(RegularityReport::inconclusive("whitney-b", "no curve families"));
    }
    let stat = |ap: &Approach| {
        let n = norm(&ap.secant);
        (n > 0.0).then(|| {
            let u: Vec<f64> = ap.secant.iter().map(|x| x / n).collect();
            grassmann::dist_vec_subspace(&u, &ap.tangent_b).unwrap_or(f64::NAN)
        })
    };
    let seqs = sweep(families, ts, &stat)?;
    let mut worst = (0.0f64, None);
    let mut levels = vec![0.0f64; ts.len()];
    for (fi, seq) in seqs.iter().enumerate() {
        if seq.is_empty() {
            continue;
        }
        for (j, (v, _)) in seq.iter().enumerate() {
            levels[j] = levels[j].max(*v);
        }
        let vals: Vec<f64> = seq.iter().map(|x| x.0).collect();
        let lim = limit_estimate(&vals);
        if lim > worst.0 || worst.1.is_none() {
            let (v, ap) = seq.last().expect("nonempty");
            worst = (lim.max(worst.0), Some(witness(fi, ts[seq.len() - 1], ap, *v)));
        }
    }
    let v = upper_verdict(worst.0, cfg.tol);
    Ok(RegularityReport::new("whitney-b", v, worst.0, levels, worst.1, families.len()))
}

/// Verdier: d(T_aΓ, T_bΛ) / |a − b| stays bounded as the pair shrinks.
/// The fitted constant is the largest observed quotient at the last level.
pub fn verdier_check(families: &[&dyn CurveFamily], ts: &[f64], cfg: &CheckConfig) -> Result<RegularityReport> {
    sup_check("verdier", families, ts, cfg, &|ap: &Approach| {
        let d = norm(&ap.secant);
        let g = grassmann::dist_subspace(&ap.tangent_a, &ap.tangent_b).unwrap_or(f64::NAN);
        // below the rounding floor of orthonormal frames the distance is zero
        let floor = 16.0 * ap.tangent_a.ambient() as f64 * f64::EPSILON;
        (d > 0.0).then(|| if g <= floor { 0.0 } else { g / d })
    })
}

/// Weakly Lipschitz: |f(a) − f(b)| / |a − b| stays bounded on shrinking
/// neighbourhoods of Γ.
pub fn weakly_lipschitz_check(
    f: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    families: &[&dyn CurveFamily],
    ts: &[f64],
    cfg: &CheckConfig,
) -> Result<RegularityReport> {
    sup_check("weakly-lipschitz", families, ts, cfg, &|ap: &Approach| {
        let d = dist(&ap.a, &ap.b);
        (d > 0.0).then(|| dist(&f(&ap.a), &f(&ap.b)) / d)
    })
}

fn sup_check(id: &str, families: &[&dyn CurveFamily], ts: &[f64], cfg: &CheckConfig, stat: &Stat<'_>) -> Result<RegularityReport> {
    if families.is_empty() {
        return Ok(RegularityReport::inconclusive(id, "empty sample set"));
    }
    let seqs = sweep(families, ts, stat)?;
    let mut levels = vec![0.0f64; ts.len()];
    let mut best: Option<Witness> = None;
    for (fi, seq) in seqs.iter().enumerate() {
        for (j, (v, ap)) in seq.iter().enumerate() {
            levels[j] = levels[j].max(*v);
            if j + 1 == seq.len() && best.as_ref().is_none_or(|w| *v > w.value) {
                best = Some(witness(fi, ts[j], ap, *v));
            }
        }
    }
    if best.is_none() {
        return Ok(RegularityReport::inconclusive(id, "all samples coincide"));
    }
    let (v, _) = growth_verdict(&levels, cfg.growth, cfg.tol);
    let c = *levels.last().expect("levels");
    let mut r = RegularityReport::new(id, v, c, levels, best, families.len());
    r.note = format!("sup statistic per level; bounded iff last/middle level ratio <= {}", cfg.growth);
    Ok(r)
}

/// Lower Lipschitz bound of f near Γ: the liminf over families of
/// |f(a) − f(b)| / |a − b| must stay above eps0.
pub fn weak_bilipschitz_inverse_check(
    f: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    families: &[&dyn CurveFamily],
    ts: &[f64],
    cfg: &CheckConfig,
) -> Result<RegularityReport> {
    if families.is_empty() {
        return Ok(RegularityReport::inconclusive("weak-bilipschitz", "empty sample set"));
    }
    let stat = |ap: &Approach| {
        let d = dist(&ap.a, &ap.b);
        (d > 0.0).then(|| dist(&f(&ap.a), &f(&ap.b)) / d)
    };
    let seqs = sweep(families, ts, &stat)?;
    let mut levels = vec![f64::INFINITY; ts.len()];
    let mut worst: (f64, Option<Witness>) = (f64::INFINITY, None);
    let mut skipped = 0;
    for (fi, seq) in seqs.iter().enumerate() {
        if seq.is_empty() {
            skipped += 1;
            continue;
        }
        for (j, (v, _)) in seq.iter().enumerate() {
            levels[j] = levels[j].min(*v);
        }
        let vals: Vec<f64> = seq.iter().map(|x| x.0).collect();
        // liminf: the smaller of the extrapolated limit and the tail minimum
        let tail = vals[vals.len().saturating_sub(3)..].iter().copied().fold(f64::INFINITY, f64::min);
        let lim = limit_estimate(&vals).min(tail);
        if lim < worst.0 {
            let (v, ap) = seq.last().expect("nonempty");
            worst = (lim, Some(witness(fi, ts[seq.len() - 1], ap, *v)));
        }
    }
    if worst.1.is_none() {
        return Ok(RegularityReport::inconclusive("weak-bilipschitz", "all samples coincide"));
    }
    let v = lower_verdict(worst.0, cfg.eps0, cfg.tol);
    let mut r = RegularityReport::new("weak-bilipschitz", v, worst.0, levels, worst.1, families.len());
    if skipped > 0 {
        r.note = format!("{skipped} families skipped: coincident samples");
    }
    Ok(r)
}

/// Sup of |f(a) − f(b)| / |a − b| over explicit sample pairs.
pub fn quotient_sup(f: &dyn Fn(&[f64]) -> Vec<f64>, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    pairs
        .iter()
        .filter_map(|(a, b)| {
            let d = dist(a, b);
            (d > 0.0).then(|| dist(&f(a), &f(b)) / d)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfTestReport {
    pub radii: Vec<f64>,
    pub constants: Vec<f64>,
    pub stable: bool,
}

/// Smooth-stratum self test: sup of d(T_x, T_y) / |x − y| over pairs in
/// shrinking parameter balls around `u0`; stable when the constants agree
/// within a factor 1.5.
pub fn verdier_self_test(s: &CellStratum, u0: &[f64], radii: &[f64], samples: usize, seed: u64) -> SelfTestReport {
    let mut rng = defnfun::seeded(seed);
    let k = u0.len();
    let constants: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let mut best = 0.0f64;
            for _ in 0..samples {
                let u: Vec<f64> = (0..k).map(|i| u0[i] + r * rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..k).map(|i| u0[i] + r * rng.gen_range(-1.0..1.0)).collect();
                let d = dist(&s.point(&u), &s.point(&v));
                if d > 0.0 {
                    best = best.max(grassmann::dist_subspace(&s.tangent(&u), &s.tangent(&v)).unwrap_or(f64::NAN) / d);
                }
            }
            best
        })
        .collect();
    let lo = constants.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = constants.iter().copied().fold(0.0, f64::max);
    SelfTestReport {
        radii: radii.to_vec(),
        stable: hi.is_finite() && hi <= 1.5 * lo.max(1e-300),
        constants,
    }
}

/// Declared properties of a condition; none of them is verified here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub local: bool,
    pub definable: bool,
    pub generic: bool,
    pub cq_invariant: bool,
    pub projection: bool,
    pub lifting: bool,
    pub conical: bool,
    /// Smallest differentiability class for which the flags hold.
    pub min_q: u32,
}

impl Capabilities {
    const ALL: Capabilities = Capabilities {
        local: true,
        definable: true,
        generic: true,
        cq_invariant: true,
        projection: true,
        lifting: true,
        conical: true,
        min_q: 1,
    };
}

pub trait Condition: Send + Sync {
    fn id(&self) -> &'static str;
    fn capabilities(&self) -> Capabilities;
    fn check_families(&self, families: &[&dyn CurveFamily], ts: &[f64], cfg: &CheckConfig) -> Result<RegularityReport>;

    /// Checks the pair (Λ = `hi`, Γ = `lo`).
    fn check(&self, hi: &CellStratum, lo: &CellStratum, cfg: &CheckConfig) -> RegularityReport {
        let salt = (hi.dim as u64) << 32 | lo.dim as u64;
        let fams = pair_families(hi, lo, cfg, salt ^ hash_verts(&lo.verts) ^ hash_verts(&hi.verts).rotate_left(17));
        let refs: Vec<&dyn CurveFamily> = fams.iter().map(|f| f as &dyn CurveFamily).collect();
        self.check_families(&refs, &cfg.ts(), cfg)
            .unwrap_or_else(|e| RegularityReport::inconclusive(self.id(), &e.to_string()))
    }
}

fn hash_verts(v: &[Vec<f64>]) -> u64 {
    v.iter()
        .flatten()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, x| (h ^ x.to_bits()).wrapping_mul(0x100_0000_01b3))
}

pub struct WhitneyB;

impl Condition for WhitneyB {
    fn id(&self) -> &'static str {
        "whitney-b"
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }
    fn check_families(&self, families: &[&dyn CurveFamily], ts: &[f64], cfg: &CheckConfig) -> Result<RegularityReport> {
        whitney_b_check(families, ts, cfg)
    }
}

pub struct Verdier;

impl Condition for Verdier {
    fn id(&self) -> &'static str {
        "verdier"
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            min_q: 2,
            ..Capabilities::ALL
        }
    }
    fn check_families(&self, families: &[&dyn CurveFamily], ts: &[f64], cfg: &CheckConfig) -> Result<RegularityReport> {
        verdier_check(families, ts, cfg)
    }
}

pub const CONDITIONS: [&str; 2] = ["whitney-b", "verdier"];

pub fn condition(id: &str) -> Result<Box<dyn Condition>> {
    match id {
        "whitney-b" | "whitney" => Ok(Box::new(WhitneyB)),
        "verdier" => Ok(Box::new(Verdier)),
        _ => Err(GeomError::Input(format!("unknown condition '{id}' (known: {})", CONDITIONS.join(", ")))),
    }
}

/// Pairs (i, j) with simplex j a proper face of simplex i.
pub fn adjacent_pairs(simplices: &[Simplex]) -> Vec<(usize, usize)> {
    let index: std::collections::HashMap<&Simplex, usize> = simplices.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut out = Vec::new();
    for (i, s) in simplices.iter().enumerate() {
        for f in s.faces() {
            if f != *s {
                if let Some(&j) = index.get(&f) {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

/// When there is a unique top stratum whose frontier has lower dimension,
/// only the pairs (Λ, Γ_i) matter; otherwise every adjacent pair.
pub fn maximal_pair_reduction(simplices: &[Simplex]) -> Vec<(usize, usize)> {
    let Some(top) = simplices.iter().map(|s| s.dim()).max() else {
        return vec![];
    };
    let tops: Vec<usize> = (0..simplices.len()).filter(|&i| simplices[i].dim() == top).collect();
    if tops.len() == 1 {
        let t = tops[0];
        let all_in_closure = simplices.iter().all(|s| s.is_face_of(&simplices[t]));
        if all_in_closure {
            return (0..simplices.len()).filter(|&j| j != t).map(|j| (t, j)).collect();
        }
    }
    adjacent_pairs(simplices)
}

/// Runs a condition on (Λ, Γ) and, if it passes, on the four product pairs
/// (Λ×(0,1), Λ×{1}), (Λ×(0,1), Γ×(0,1)), (Λ×(0,1), Γ×{1}),
/// (Γ×(0,1), Γ×{1}).
pub fn conical_transfer_test(cond: &dyn Condition, hi: &CellStratum, lo: &CellStratum, cfg: &CheckConfig) -> Result<Vec<RegularityReport>> {
    let base = cond.check(hi, lo, cfg);
    if base.verdict != Verdict::Pass {
        return Err(GeomError::Precondition(format!(
            "base pair does not pass {} ({:?})",
            cond.id(),
            base.verdict
        )));
    }
    let (mo, m1) = (hi.times_interval(true), hi.times_interval(false));
    let (no, n1) = (lo.times_interval(true), lo.times_interval(false));
    let pairs = [(&mo, &m1), (&mo, &no), (&mo, &n1), (&no, &n1)];
    Ok(pairs.iter().map(|(a, b)| cond.check(a, b, cfg)).collect())
}

/// Built-in fixtures with nonlinear geometry.
pub mod fixtures {
    use super::*;

    /// F(x, y, t) = y² − t²x² + x³; its zero set minus the t-axis is a
    /// smooth surface Λ, the t-axis is Γ.
    pub fn cusp_f(p: &[f64]) -> f64 {
        let (x, y, t) = (p[0], p[1], p[2]);
        y * y - t * t * x * x + x * x * x
    }

    pub fn cusp_grad(p: &[f64]) -> [f64; 3] {
        let (x, y, t) = (p[0], p[1], p[2]);
        [-2.0 * t * t * x + 3.0 * x * x, 2.0 * y, -2.0 * t * x * x]
    }

    /// Approach along x = σ s^p, t = κ s on the upper sheet y ≥ 0, with
    /// a = (0, 0, κ s) on the t-axis.
    #[derive(Clone, Copy, Debug, PartialEq, Serialize)]
    pub struct CuspFamily {
        pub sigma: i32,
        pub p: i32,
        pub kappa: f64,
    }

    impl CuspFamily {
        pub fn point(&self, s: f64) -> Option<[f64; 3]> {
            let x = self.sigma as f64 * s.powi(self.p);
            let t = self.kappa * s;
            let r = t * t * x * x - x * x * x;
            (r >= 0.0).then(|| [x, r.sqrt(), t])
        }
    }

    impl CurveFamily for CuspFamily {
        fn at(&self, s: f64) -> Result<Approach> {
            let b = self
                .point(s)
                .ok_or_else(|| GeomError::Domain(format!("{self:?} leaves the surface at s = {s}")))?;
            let g = cusp_grad(&b);
            let normal = Subspace::line(&g);
            Ok(Approach {
                a: vec![0.0, 0.0, b[2]],
                b: b.to_vec(),
                tangent_a: Subspace::line(&[0.0, 0.0, 1.0]),
                tangent_b: normal.complement(),
                secant: vec![-b[0], -b[1], 0.0],
            })
        }
    }

    /// Families that stay on the real surface for all small s.
    pub fn cusp_families() -> Vec<CuspFamily> {
        let mut out = Vec::new();
        for p in 1..=3 {
            for k in [-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0] {
                out.push(CuspFamily { sigma: -1, p, kappa: k });
            }
        }
        for k in [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0] {
            out.push(CuspFamily { sigma: 1, p: 2, kappa: k });
        }
        for k in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
            out.push(CuspFamily { sigma: 1, p: 3, kappa: k });
        }
        out
    }

    /// Deep geometric levels s_j = 4^{-j}, j = 1..=20.
    pub fn cusp_levels() -> Vec<f64> {
        (1..=20).map(|j| 0.25f64.powi(j)).collect()
    }

    /// Graph of z = 2xy over {y > 0} (Λ) and the x-axis (Γ); the Verdier
    /// quotient tends to 2 at the origin.
    pub struct SaddleFamily {
        pub x0: f64,
        pub dir: [f64; 2],
    }

    impl CurveFamily for SaddleFamily {
        fn at(&self, t: f64) -> Result<Approach> {
            let x = self.x0 * t + self.dir[0] * t;
            let y = self.dir[1] * t;
            let b = vec![x, y, 2.0 * x * y];
            let a = vec![x, 0.0, 0.0];
            let tb = Subspace::from_vectors(&[vec![1.0, 0.0, 2.0 * y], vec![0.0, 1.0, 2.0 * x]], 3);
            Ok(Approach {
                secant: vec![0.0, -y, -2.0 * x * y],
                a,
                b,
                tangent_a: Subspace::line(&[1.0, 0.0, 0.0]),
                tangent_b: tb,
            })
        }
    }

    pub fn saddle_families() -> Vec<SaddleFamily> {
        let mut out = Vec::new();
        for (i, x0) in [-1.0, -0.5, 0.0, 0.5, 1.0, 0.25].iter().enumerate() {
            for y in [0.5, 1.0] {
                out.push(SaddleFamily {
                    x0: *x0,
                    dir: [0.1 * i as f64, y],
                });
            }
        }
        out
    }

    /// z = x² + y² over a square parameter cell.
    pub fn paraboloid() -> CellStratum {
        struct Para;
        impl LocalMap for Para {
            fn eval(&self, u: &[f64]) -> Vec<f64> {
                vec![u[0], u[1], u[0] * u[0] + u[1] * u[1]]
            }
            fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
                DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0 * u[0], 2.0 * u[1]])
            }
        }
        CellStratum::new(
            vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0]],
            Arc::new(Para),
        )
    }

    /// Unit sphere patch (x, y) ↦ (x, y, sqrt(1 − x² − y²)).
    pub fn sphere_cap() -> CellStratum {
        struct Cap;
        impl LocalMap for Cap {
            fn eval(&self, u: &[f64]) -> Vec<f64> {
                vec![u[0], u[1], (1.0 - u[0] * u[0] - u[1] * u[1]).sqrt()]
            }
            fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
                let z = (1.0 - u[0] * u[0] - u[1] * u[1]).sqrt();
                DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -u[0] / z, -u[1] / z])
            }
        }
        CellStratum::new(
            vec![vec![-0.5, -0.5], vec![0.5, -0.5], vec![-0.5, 0.5], vec![0.5, 0.5]],
            Arc::new(Cap),
        )
    }
}
