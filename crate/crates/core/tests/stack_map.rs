mod support;

use lipstrat::defnfun::{dist, random_in_simplex, seeded};
use lipstrat::pipeline;
use lipstrat::defnfun::CellKind;
use lipstrat::stacks::Homeomorphism;
use rand::Rng;

#[test]
fn stack_map_suite() {
    for (name, s) in support::h_stacks() {
        let r = support::hsuite::run(&s, 2_000, 5);
        assert!(r.round_trip_max <= 1e-9, "{name}: {r:?}");
        assert_eq!(r.quotient_violations, 0, "{name}: {r:?}");
        assert!(r.liminf_min >= 1e-4, "{name}: {r:?}");
        assert_eq!(r.law_disagreements, 0, "{name}: {r:?}");
        assert!(r.law_inside > 0 && r.law_inside < r.law_samples, "{name}: {r:?}");
    }
}

#[test]
fn branches_agree_on_shared_faces() {
    let mut rng = seeded(9);
    for (name, s) in support::h_stacks() {
        let t = pipeline::triangulate(&s).unwrap();
        let cells = &t.map.complex.cells;
        for (c, cell) in cells.iter().enumerate() {
            for &f in &cell.faces {
                let verts: Vec<Vec<f64>> = cells[f].verts.iter().map(|p| p.to_f64()).collect();
                for _ in 0..20 {
                    let x = random_in_simplex(&verts, &mut rng);
                    let gap = dist(&t.map.eval_cell(c, &x), &t.map.eval_cell(f, &x));
                    assert!(gap <= 1e-9, "{name}: cells {c} and {f} differ by {gap}");
                }
            }
        }
    }
}

#[test]
fn inverse_is_locally_bounded_away_from_collapse() {
    // sup quotient of H⁻¹ over pairs at radius r, for shrinking r
    for (name, s) in support::h_stacks() {
        let t = pipeline::triangulate(&s).unwrap();
        let n = s.dim();
        let d = t.complex.dim().unwrap();
        let tops: Vec<Vec<Vec<f64>>> = t
            .complex
            .of_dim(d)
            .map(|x| t.complex.vertex_points(x).iter().map(|p| p.to_f64()).collect())
            .collect();
        let mut rng = seeded(17);
        let mut sups = Vec::new();
        for r in [1e-2, 1e-3, 1e-4] {
            let mut sup = 0.0f64;
            let mut used = 0;
            while used < 400 {
                let x = random_in_simplex(&tops[rng.gen_range(0..tops.len())], &mut rng);
                let a = t.forward(&x).unwrap();
                let (y, _) = a.split_at(n - 1);
                // stay clear of every collapsing pair
                let eta: Vec<f64> = s.functions.iter().map(|f| f.eval(y).unwrap()).collect();
                if eta.windows(2).any(|w| w[1] - w[0] < 0.05) {
                    continue;
                }
                let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let b: Vec<f64> = a.iter().zip(&dir).map(|(p, v)| p + r * v / len).collect();
                let (Ok(ia), Ok(ib)) = (t.inverse(&a), t.inverse(&b)) else {
                    continue;
                };
                sup = sup.max(dist(&ia, &ib) / r);
                used += 1;
            }
            sups.push(sup);
        }
        assert!(sups.iter().all(|v| v.is_finite()), "{name}: {sups:?}");
        assert!(sups[2] <= 2.0 * sups[0].max(sups[1]), "{name}: {sups:?}");
    }
}

#[test]
fn segments_inside_the_domain_respect_the_largest_cell_bound() {
    for (name, s) in support::h_stacks() {
        let t = pipeline::triangulate(&s).unwrap();
        let bound = t.map.certificates.iter().map(|c| c.bound).fold(0.0, f64::max);
        let d = t.complex.dim().unwrap();
        let tops: Vec<Vec<Vec<f64>>> = t
            .complex
            .of_dim(d)
            .map(|x| t.complex.vertex_points(x).iter().map(|p| p.to_f64()).collect())
            .collect();
        let mut rng = seeded(23);
        let mut checked = 0;
        for _ in 0..2_000 {
            let p = random_in_simplex(&tops[rng.gen_range(0..tops.len())], &mut rng);
            let q = random_in_simplex(&tops[rng.gen_range(0..tops.len())], &mut rng);
            // keep pairs whose segment stays in the domain
            let inside = (1..16).all(|i| {
                let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + (b - a) * i as f64 / 16.0).collect();
                t.forward(&m).is_ok()
            });
            if !inside {
                continue;
            }
            checked += 1;
            let (hp, hq) = (t.forward(&p).unwrap(), t.forward(&q).unwrap());
            assert!(dist(&hp, &hq) <= bound * dist(&p, &q) + 1e-9, "{name}");
        }
        assert!(checked > 100, "{name}: only {checked} pairs");
    }
}

#[test]
fn collapsed_graphs_are_single_cells() {
    // the wedge's first two functions agree on x = 0: no band there
    let (_, s) = support::h_stacks().remove(1);
    let t = pipeline::triangulate(&s).unwrap();
    let p = &t.map.complex;
    for cell in &p.cells {
        if let CellKind::Band(0) = cell.kind {
            let xs: Vec<f64> = cell.verts.iter().map(|v| v.to_f64()[0]).collect();
            assert!(xs.iter().any(|&x| x > 0.0));
        }
    }
    assert!(p.count_kind(true) > 0);
}
