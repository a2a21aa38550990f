//! Checker calibration fixtures and the measurements run on them.

use std::sync::Arc;

use lipstrat::defnfun::seeded;
use lipstrat::regularity::{self, fixtures, CellStratum, CheckConfig, Condition, CurveFamily, SelfTestReport, Verdict};
use lipstrat::stacks::{AffineLocal, LocalMap};
use lipstrat::Simplex;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::cusp_oracle;
use super::flags;

/// Strata of every face of a complex under an affine map.
fn face_strata(k: &lipstrat::SimplicialComplex, map: &Arc<dyn LocalMap>) -> (Vec<Simplex>, Vec<CellStratum>) {
    let simplices: Vec<Simplex> = k.simplices.iter().cloned().collect();
    let strata = simplices
        .iter()
        .map(|s| CellStratum::affine(k.vertex_points(s).iter().map(|p| p.to_f64()).collect(), map.clone()))
        .collect();
    (simplices, strata)
}

/// Adjacent face pairs of semilinear complexes: subdivided standard
/// simplices in their own space and under random affine embeddings.
pub fn semilinear_pairs() -> Vec<(CellStratum, CellStratum)> {
    let mut rng = seeded(0xa11);
    let mut out = Vec::new();
    for d in 1..=3 {
        let k = flags::standard_simplex(d).barycentric_subdivision().complex;
        let ident: Arc<dyn LocalMap> = Arc::new(lipstrat::stacks::IdentityLocal(d));
        let m = d + 1;
        let emb: Arc<dyn LocalMap> = Arc::new(AffineLocal {
            a: DMatrix::from_fn(m, d, |_, _| rng.gen_range(-2.0..2.0)),
            b: DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)),
        });
        for map in [ident, emb] {
            let (simplices, strata) = face_strata(&k, &map);
            for (hi, lo) in regularity::adjacent_pairs(&simplices) {
                out.push((strata[hi].clone(), strata[lo].clone()));
            }
        }
    }
    out
}

pub struct SemilinearResult {
    pub pairs: usize,
    pub max_statistic: f64,
    pub non_pass: usize,
}

pub fn semilinear_calibration(cond: &dyn Condition) -> SemilinearResult {
    let cfg = CheckConfig::default();
    let mut r = SemilinearResult {
        pairs: 0,
        max_statistic: 0.0,
        non_pass: 0,
    };
    for (hi, lo) in semilinear_pairs() {
        let rep = cond.check(&hi, &lo, &cfg);
        r.pairs += 1;
        r.max_statistic = r.max_statistic.max(rep.statistic);
        if rep.verdict != Verdict::Pass {
            r.non_pass += 1;
        }
    }
    r
}

pub struct CuspResult {
    pub families: usize,
    pub agree: usize,
    pub oracle_failures: usize,
    pub disagreements: Vec<String>,
}

/// Whitney (B) verdict per cusp family against the symbolic limit.
pub fn cusp_agreement() -> CuspResult {
    let cfg = CheckConfig::default();
    let levels = fixtures::cusp_levels();
    let mut out = CuspResult {
        families: 0,
        agree: 0,
        oracle_failures: 0,
        disagreements: vec![],
    };
    for f in fixtures::cusp_families() {
        let rep = regularity::whitney_b_check(&[&f as &dyn CurveFamily], &levels, &cfg).unwrap();
        let holds = cusp_oracle::whitney_b_holds(f.sigma, f.p, f.kappa);
        out.families += 1;
        out.oracle_failures += !holds as usize;
        let expected = if holds { Verdict::Pass } else { Verdict::Fail };
        if rep.verdict == expected {
            out.agree += 1;
        } else {
            out.disagreements.push(format!(
                "{f:?}: checker {:?} ({:e}), oracle limit {}",
                rep.verdict,
                rep.statistic,
                cusp_oracle::whitney_b_limit(f.sigma, f.p, f.kappa)
            ));
        }
    }
    out
}

/// Self tests on the smooth fixtures over three shrinking radii.
pub fn self_tests() -> Vec<(&'static str, SelfTestReport)> {
    let radii = [0.1, 0.01, 0.001];
    vec![
        ("paraboloid", regularity::verdier_self_test(&fixtures::paraboloid(), &[0.1, -0.2], &radii, 400, 3)),
        ("sphere cap", regularity::verdier_self_test(&fixtures::sphere_cap(), &[0.2, 0.1], &radii, 400, 4)),
    ]
}

/// Smooth pairs: the paraboloid over the open square with an edge curve
/// and a corner point in its frontier.
pub fn smooth_pairs() -> Vec<(CellStratum, CellStratum)> {
    let para = fixtures::paraboloid();
    let edge = CellStratum::new(vec![vec![-1.0, -1.0], vec![1.0, -1.0]], para.map.clone());
    let corner = CellStratum::new(vec![vec![1.0, 1.0]], para.map.clone());
    let inner = CellStratum::new(vec![vec![-0.5, 0.0], vec![0.5, 0.0]], para.map.clone());
    vec![(para.clone(), edge), (para.clone(), corner), (para, inner)]
}

pub struct TransferResult {
    pub base_pairs: usize,
    pub passing: usize,
    pub product_pairs: usize,
    pub product_failures: usize,
}

pub fn conical_transfer(cond: &dyn Condition) -> TransferResult {
    let cfg = CheckConfig::default();
    let mut out = TransferResult {
        base_pairs: 0,
        passing: 0,
        product_pairs: 0,
        product_failures: 0,
    };
    for (hi, lo) in semilinear_pairs().into_iter().chain(smooth_pairs()) {
        out.base_pairs += 1;
        let Ok(reports) = regularity::conical_transfer_test(cond, &hi, &lo, &cfg) else {
            continue;
        };
        out.passing += 1;
        for r in reports {
            out.product_pairs += 1;
            out.product_failures += (r.verdict != Verdict::Pass) as usize;
        }
    }
    out
}

pub struct CalculusResult {
    pub lipschitz_pass: bool,
    pub sqrt_fail_with_witness: bool,
    pub composition: (f64, f64, f64),
    pub composition_pass: bool,
    pub product: (f64, f64, f64),
}

type Map = dyn Fn(&[f64]) -> Vec<f64> + Sync;

/// Sample pairs (a, b) from the families at every level.
fn family_pairs(fams: &[&dyn CurveFamily], ts: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    fams.iter()
        .flat_map(|f| ts.iter().map(move |&t| f.at(t).unwrap()))
        .map(|ap| (ap.a, ap.b))
        .collect()
}

pub fn calculus() -> CalculusResult {
    let cfg = CheckConfig::default();
    let ts = cfg.ts();
    // Λ = open triangle, Γ = one of its edges, in ℝ²
    let hi = CellStratum::flat(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    let lo = CellStratum::flat(vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
    let fams = regularity::pair_families(&hi, &lo, &cfg, 7);
    let refs: Vec<&dyn CurveFamily> = fams.iter().map(|f| f as &dyn CurveFamily).collect();

    let f: &Map = &|x: &[f64]| vec![x[0] + 0.5 * x[1].sin(), 2.0 * x[1] + 0.25 * x[0] * x[0]];
    let g: &Map = &|x: &[f64]| vec![x[0].cos() + x[1], 3.0 * x[1] - x[0]];
    let gf: &Map = &|x: &[f64]| g(&f(x));
    let lipschitz_pass = regularity::weakly_lipschitz_check(f, &refs, &ts, &cfg).unwrap().verdict == Verdict::Pass;

    // √|y| on the half plane near the x-axis
    let sqrt: &Map = &|x: &[f64]| vec![x[0], x[1].abs().sqrt()];
    let r = regularity::weakly_lipschitz_check(sqrt, &refs, &ts, &cfg).unwrap();
    let sqrt_fail_with_witness = r.verdict == Verdict::Fail && r.witness.is_some();

    // composition on the same samples
    let pairs = family_pairs(&refs, &ts);
    let s_f = regularity::quotient_sup(f, &pairs);
    let image: Vec<(Vec<f64>, Vec<f64>)> = pairs.iter().map(|(a, b)| (f(a), f(b))).collect();
    let s_g = regularity::quotient_sup(g, &image);
    let s_gf = regularity::quotient_sup(gf, &pairs);
    let composition_pass = regularity::weakly_lipschitz_check(gf, &refs, &ts, &cfg).unwrap().verdict == Verdict::Pass;

    // product f × g on paired samples of two strata pairs
    let hi2 = CellStratum::flat(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]]);
    let lo2 = CellStratum::flat(vec![vec![0.0, 0.0]]);
    let fams2 = regularity::pair_families(&hi2, &lo2, &cfg, 8);
    let refs2: Vec<&dyn CurveFamily> = fams2.iter().map(|f| f as &dyn CurveFamily).collect();
    let pairs2 = family_pairs(&refs2, &ts);
    let n = pairs.len().min(pairs2.len());
    let joined: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|i| ([pairs[i].0.clone(), pairs2[i].0.clone()].concat(), [pairs[i].1.clone(), pairs2[i].1.clone()].concat()))
        .collect();
    let fg: &Map = &|x: &[f64]| [f(&x[..2]), g(&x[2..])].concat();
    let p_f = regularity::quotient_sup(f, &pairs[..n]);
    let p_g = regularity::quotient_sup(g, &pairs2[..n]);
    let s_fg = regularity::quotient_sup(fg, &joined);

    CalculusResult {
        lipschitz_pass,
        sqrt_fail_with_witness,
        composition: (s_gf, s_f, s_g),
        composition_pass,
        product: (s_fg, p_f, p_g),
    }
}
