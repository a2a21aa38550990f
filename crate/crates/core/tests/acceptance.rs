//! Acceptance suite: one pass/fail line per criterion.

mod support;

use std::time::Instant;

use lipstrat::defnfun::seeded;
use lipstrat::exact::qr;
use lipstrat::grassmann::{dist_subspace, dtilde, graph_of_linear_map, LinearMap, Subspace};
use lipstrat::pipeline::{self, QOptions};
use lipstrat::regularity::{self, condition, Verdict, CONDITIONS};
use lipstrat::Point;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use support::{calib, flags, hsuite};

const SLACK: f64 = 1e-9;
const INSTANCES: usize = 10_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn span(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (Subspace, Vec<Vec<f64>>) {
    let gens: Vec<Vec<f64>> = (0..k).map(|_| vector(rng, n)).collect();
    (Subspace::from_vectors(&gens, n), gens)
}

fn d(p: &Subspace, q: &Subspace) -> f64 {
    dist_subspace(p, q).unwrap()
}

fn grassmann_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(1);
    let mut bad = [0usize; 4];
    for n in 2..=6 {
        for _ in 0..INSTANCES {
            // a: sandwich on lines
            let (a, b) = (Subspace::line(&vector(&mut rng, n)), Subspace::line(&vector(&mut rng, n)));
            let (dd, dt) = (d(&a, &b), dtilde(&a, &b).unwrap());
            bad[0] += (dt / 2f64.sqrt() > dd + SLACK || dd > dt + SLACK) as usize;

            // b: product with a line
            let (k, l) = (rng.gen_range(0..=n), rng.gen_range(0..=n));
            let (v, _) = span(&mut rng, n, k);
            let (w, _) = span(&mut rng, n, l);
            bad[1] += ((d(&v.times_line(), &w.times_line()) - d(&v, &w)).abs() > SLACK) as usize;

            // c: monotone in the second argument
            let pk = rng.gen_range(1..=n);
            let (p, _) = span(&mut rng, n, pk);
            let m = rng.gen_range(1..=n);
            let (q, gens) = span(&mut rng, n, m);
            let q_small = Subspace::from_vectors(&gens[..rng.gen_range(0..=m)], n);
            bad[2] += (d(&p, &q) > d(&p, &q_small) + 1e-12) as usize;

            // d: metric axioms on one Grassmannian
            let k = rng.gen_range(1..n);
            let (p, gens) = span(&mut rng, n, k);
            let (q, _) = span(&mut rng, n, k);
            let (r, _) = span(&mut rng, n, k);
            let mixed: Vec<Vec<f64>> = (0..k)
                .map(|i| (0..n).map(|c| gens[i][c] - 0.75 * gens[(i + 1) % k][c]).collect())
                .collect();
            let same = Subspace::from_vectors(&mixed, n);
            let sym = (d(&p, &q) - d(&q, &p)).abs() <= SLACK;
            let tri = d(&p, &r) <= d(&p, &q) + d(&q, &r) + SLACK;
            let ident = d(&p, &p) <= SLACK && (same.dim() < k || d(&p, &same) <= SLACK) && d(&p, &q) > SLACK;
            bad[3] += !(sym && tri && ident) as usize;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        bad == [0; 4] && secs < 30.0,
        format!("violations a/b/c/d = {bad:?} over {INSTANCES} per prop per n in 2..=6, {secs:.1}s"),
    )
}

fn graph_bound() -> Outcome {
    let mut rng = seeded(2);
    let mut bad = 0;
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let n = rng.gen_range(2..=6);
        let k = rng.gen_range(1..n);
        let (e, _) = span(&mut rng, n, k);
        let f = LinearMap::new(e.clone(), DMatrix::from_fn(n, k, |_, _| rng.gen_range(-2.0..2.0))).unwrap();
        let g = LinearMap::new(e, DMatrix::from_fn(n, k, |_, _| rng.gen_range(-2.0..2.0))).unwrap();
        let lhs = d(&graph_of_linear_map(&f), &graph_of_linear_map(&g));
        let rhs = 2.0 * f.sub(&g).operator_norm();
        worst = worst.max(lhs / rhs);
        bad += (lhs > rhs + SLACK) as usize;
    }
    check(bad == 0, format!("{bad} violations in {INSTANCES} pairs, max d/‖f−g‖ ratio {worst:.3} of 2"))
}

fn subdivision() -> Outcome {
    let mut rng = seeded(3);
    let mut problems = vec![];
    let mut points = 0;
    for dim in 0..=4 {
        let k = flags::standard_simplex(dim);
        let sub = k.barycentric_subdivision().complex;
        if flags::as_cells(&sub) != flags::flag_subdivision(&k) {
            problems.push(format!("cells differ at d = {dim}"));
        }
        if sub.count_dim(dim) != flags::factorial(dim + 1) {
            problems.push(format!("{} top cells at d = {dim}", sub.count_dim(dim)));
        }
        if dim == 0 {
            continue;
        }
        for _ in 0..2_500 {
            let p = Point::new((0..dim).map(|_| qr(rng.gen_range(-8..=72), 64)).collect());
            points += 1;
            if sub.locate(&p).is_some() != flags::in_standard_simplex(&p.coords) {
                problems.push(format!("membership differs at {:?}", p.to_f64()));
            }
        }
    }
    check(
        problems.is_empty(),
        format!("d = 0..4, {points} rational points, problems {problems:?}"),
    )
}

fn h_suite() -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for (i, (name, s)) in support::h_stacks().into_iter().enumerate() {
        let r = hsuite::run(&s, INSTANCES, 100 + i as u64);
        ok &= r.round_trip_max <= 1e-9
            && r.round_trip_points == INSTANCES
            && r.quotient_violations == 0
            && r.liminf_min >= 1e-4
            && r.liminf_failures == 0
            && r.law_samples == INSTANCES
            && r.law_disagreements == 0;
        parts.push(format!(
            "{name}: round trip {:.1e}, quotient violations {}/{}, liminf {:.3} on {} pairs, law {}/{} disagree",
            r.round_trip_max, r.quotient_violations, r.cells, r.liminf_min, r.pairs, r.law_disagreements, r.law_samples
        ));
    }
    check(ok, parts.join("; "))
}

fn calibration() -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for id in CONDITIONS {
        let r = calib::semilinear_calibration(condition(id).unwrap().as_ref());
        ok &= r.non_pass == 0 && r.max_statistic <= 1e-12;
        parts.push(format!("{id} semilinear max {:.1e} on {} pairs", r.max_statistic, r.pairs));
    }
    let c = calib::cusp_agreement();
    ok &= c.families >= 20 && c.disagreements.is_empty();
    parts.push(format!("cusp {}/{} agree ({} oracle failures)", c.agree, c.families, c.oracle_failures));
    for (name, r) in calib::self_tests() {
        ok &= r.stable && r.constants.len() == 3 && r.constants.iter().all(|c| c.is_finite());
        parts.push(format!("{name} C {:?}", r.constants.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>()));
    }
    check(ok, parts.join("; "))
}

fn transfer() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = vec![];
    for id in CONDITIONS {
        let r = calib::conical_transfer(condition(id).unwrap().as_ref());
        ok &= r.passing > 0 && r.product_pairs == 4 * r.passing && r.product_failures == 0;
        parts.push(format!(
            "{id}: {}/{} base pairs pass, {} product failures of {}",
            r.passing, r.base_pairs, r.product_failures, r.product_pairs
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    check(ok && secs < 60.0, format!("{}, {secs:.1}s", parts.join("; ")))
}

fn end_to_end() -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for name in ["triangle", "disk"] {
        let s = support::scene(name);
        let start = Instant::now();
        let q = match pipeline::q_triangulate(&s, "whitney-b", &QOptions::default()) {
            Ok(q) => q,
            Err(e) => return Err(format!("{name}: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        let image = q.image_in_k1();
        let closed = image.simplices.iter().all(|t| t.faces().iter().all(|f| image.simplices.contains(f)));
        let valid = closed && q.k3.validate().is_ok() && image.validate().is_ok();
        let c = pipeline::compatibility_check(&q.strata()[..], &pipeline::stack_subsets(&s), INSTANCES, 11);
        let pairs = regularity::adjacent_pairs(&q.simplices()).len();
        let passing = q.reports.iter().filter(|r| r.verdict == Verdict::Pass).count();
        ok &= secs < 60.0 && valid && c.passed() && c.samples >= INSTANCES && passing == pairs;
        parts.push(format!(
            "{name}: {secs:.1}s, {} simplices valid {valid}, {} compatibility violations on {} samples, {passing}/{pairs} pairs pass",
            image.simplices.len(),
            c.violations.len(),
            c.samples
        ));
    }
    check(ok, parts.join("; "))
}

fn calculus() -> Outcome {
    let r = calib::calculus();
    let (gf, f, g) = r.composition;
    let (fg, pf, pg) = r.product;
    let prod = (pf * pf + pg * pg).sqrt();
    check(
        r.lipschitz_pass && r.sqrt_fail_with_witness && r.composition_pass && gf <= f * g + SLACK && fg <= prod + SLACK,
        format!(
            "lipschitz pass {}, sqrt flagged {}, composition {gf:.3} <= {:.3}, product {fg:.3} <= {prod:.3}",
            r.lipschitz_pass,
            r.sqrt_fail_with_witness,
            f * g
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("grassmann suite", grassmann_suite),
        ("graph distance bound", graph_bound),
        ("subdivision combinatorics", subdivision),
        ("stack map suite", h_suite),
        ("checker calibration", calibration),
        ("conical transfer", transfer),
        ("qtriangulate end to end", end_to_end),
        ("weakly Lipschitz calculus", calculus),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match run() {
            Ok(s) => ("PASS", s),
            Err(s) => {
                failed += 1;
                ("FAIL", s)
            }
        };
        println!("[{tag}] {} {name} ({:.1}s): {detail}", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
