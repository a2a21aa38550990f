//! Measurements on the stack map H of a triangulated stack.

use lipstrat::defnfun::{dist, random_in_simplex, seeded, StackPresentation};
use lipstrat::exact::qf;
use lipstrat::pipeline::{self, Triangulation};
use lipstrat::regularity::{self, CellStratum, CheckConfig, CurveFamily, Verdict};
use lipstrat::stacks::Homeomorphism;
use lipstrat::{Point, Simplex};
use rand::Rng;

#[derive(Debug, Default)]
pub struct HSuite {
    pub round_trip_max: f64,
    pub round_trip_points: usize,
    /// Full-dimensional cells whose sampled quotient beat the certificate.
    pub quotient_violations: usize,
    pub cells: usize,
    pub liminf_min: f64,
    pub liminf_failures: usize,
    pub pairs: usize,
    pub law_samples: usize,
    pub law_inside: usize,
    pub law_disagreements: usize,
}

fn tops(t: &Triangulation) -> Vec<Vec<Vec<f64>>> {
    let d = t.complex.dim().unwrap_or(0);
    t.complex
        .of_dim(d)
        .map(|s| t.complex.vertex_points(s).iter().map(|p| p.to_f64()).collect())
        .collect()
}

/// Analytic membership in {(y, z): y ∈ base, η₁(y) ≤ z ≤ η_b(y)}, and the
/// distance from the point to that set's boundary in the z direction and
/// the base (for skipping samples within rounding of the boundary).
fn law(s: &StackPresentation, x: &[f64]) -> (bool, f64) {
    let (y, z) = x.split_at(x.len() - 1);
    let base_margin = match y.len() {
        1 => y[0].min(1.0 - y[0]),
        _ => y[0].min(y[1]).min((1.0 - y[0] - y[1]) / 2f64.sqrt()),
    };
    if base_margin < 0.0 {
        return (false, -base_margin);
    }
    let lo = s.functions[0].eval(y).unwrap();
    let hi = s.functions[s.functions.len() - 1].eval(y).unwrap();
    let inside = z[0] >= lo && z[0] <= hi;
    let zm = (z[0] - lo).abs().min((z[0] - hi).abs());
    (inside, zm.min(base_margin))
}

/// Membership in H(|K|): a preimage exists, lies in |K|, and maps back.
fn in_image(t: &Triangulation, x: &[f64]) -> bool {
    let Ok(u) = t.inverse(x) else {
        return false;
    };
    let p = Point::new(u.iter().map(|&c| qf(c)).collect());
    t.complex.locate(&p).is_some() && t.forward(&u).is_ok_and(|y| dist(&y, x) <= 1e-9)
}

pub fn run(s: &StackPresentation, points: usize, seed: u64) -> HSuite {
    let t = pipeline::triangulate(s).expect("triangulates");
    let mut out = HSuite {
        liminf_min: f64::INFINITY,
        ..HSuite::default()
    };
    let mut rng = seeded(seed);
    let cells = tops(&t);

    for _ in 0..points {
        let c = &cells[rng.gen_range(0..cells.len())];
        let x = random_in_simplex(c, &mut rng);
        let y = t.forward(&x).unwrap();
        let back = t.inverse(&y).unwrap();
        out.round_trip_max = out.round_trip_max.max(dist(&back, &x));
        out.round_trip_points += 1;
    }

    let n = s.dim();
    for (c, cert) in t.map.certificates.iter().enumerate() {
        if t.map.complex.cells[c].dim != n {
            continue;
        }
        out.cells += 1;
        if t.map.sampled_lipschitz(c, 200, seed ^ c as u64) > cert.bound + 1e-9 {
            out.quotient_violations += 1;
        }
    }

    let cfg = CheckConfig::default();
    let simplices: Vec<Simplex> = t.complex.simplices.iter().cloned().collect();
    let strata: Vec<CellStratum> = simplices
        .iter()
        .map(|s| CellStratum::flat(t.complex.vertex_points(s).iter().map(|p| p.to_f64()).collect()))
        .collect();
    let h = |x: &[f64]| t.forward(x).unwrap();
    for (i, (hi, lo)) in regularity::adjacent_pairs(&simplices).into_iter().enumerate() {
        let fams = regularity::pair_families(&strata[hi], &strata[lo], &cfg, i as u64);
        let refs: Vec<&dyn CurveFamily> = fams.iter().map(|f| f as &dyn CurveFamily).collect();
        let r = regularity::weak_bilipschitz_inverse_check(&h, &refs, &cfg.ts(), &cfg).unwrap();
        out.pairs += 1;
        out.liminf_min = out.liminf_min.min(r.statistic);
        if r.verdict != Verdict::Pass {
            out.liminf_failures += 1;
        }
    }

    // two-sided samples in a box around the set
    let (zlo, zhi) = (-2.0, 3.0);
    while out.law_samples < points {
        let mut x: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-0.25..1.25)).collect();
        x.push(rng.gen_range(zlo..zhi));
        let (inside, margin) = law(s, &x);
        if margin < 1e-7 {
            continue;
        }
        out.law_samples += 1;
        out.law_inside += inside as usize;
        if in_image(&t, &x) != inside {
            out.law_disagreements += 1;
        }
    }
    out
}
