//! `lipstrat`: triangulate stacks, build conical triangulations, and run
//! regularity checks from scene files.
//!
//! Exit codes: 0 pass, 1 fail with witness, 2 inconclusive, 3 input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use lipstrat::io::{self, Mesh, MeshFormat, Scene};
use lipstrat::pipeline::{self, QOptions, TriangulateOptions};
use lipstrat::regularity::{self, fixtures, CheckConfig, CurveFamily, RegularityReport, Verdict};
use lipstrat::{GeomError, Simplex};

#[derive(Parser)]
#[command(name = "lipstrat", version, about = "Lipschitz triangulations of piecewise-polynomial stacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct CheckArgs {
    /// Regularity condition (whitney-b, verdier); defaults to the scene's.
    #[arg(long)]
    condition: Option<String>,
    /// Sample budget for validation and compatibility checks.
    #[arg(long)]
    samples: Option<usize>,
    /// Zero threshold for limit statistics.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, env = "LIPSTRAT_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Triangulate a stack scene and write the image mesh.
    Triangulate {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Mesh format (json, off); inferred from the extension by default.
        #[arg(long)]
        format: Option<String>,
        /// Write per-cell Lipschitz certificates here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Conical triangulation whose strata satisfy a regularity condition.
    Qtriangulate {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        check: CheckArgs,
    },
    /// Check a condition on every adjacent pair of a scene's strata.
    Check {
        scene: PathBuf,
        #[command(flatten)]
        check: CheckArgs,
        /// Report destination; stdout by default.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Barycentric subdivision of a mesh, applied n times.
    Subdivide {
        mesh: PathBuf,
        #[arg(short = 'n', long, default_value_t = 1)]
        times: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Ambient dimension for OFF input.
        #[arg(long)]
        ambient: Option<usize>,
    },
}

/// Failure carrying its exit code.
struct Exit(u8, anyhow::Error);

fn input<E: Into<anyhow::Error>>(e: E) -> Exit {
    Exit(3, e.into())
}

fn classify(e: GeomError) -> Exit {
    let code = match (&e, e.root()) {
        (GeomError::Stage { stage: "condition reports", .. }, _) => 1,
        (_, GeomError::Input(_) | GeomError::Validation(_)) => 3,
        _ => 2,
    };
    Exit(code, e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Triangulate {
            scene,
            output,
            format,
            report,
        } => triangulate(&scene, &output, format.as_deref(), report.as_deref()),
        Command::Qtriangulate {
            scene,
            output,
            format,
            report,
            check,
        } => qtriangulate(&scene, &output, format.as_deref(), report.as_deref(), &check),
        Command::Check { scene, check, report } => check_scene(&scene, &check, report.as_deref()),
        Command::Subdivide {
            mesh,
            times,
            output,
            ambient,
        } => subdivide(&mesh, times, &output, ambient),
    };
    match run {
        Ok(v) => ExitCode::from(v.exit_code() as u8),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load_stack(path: &Path) -> Result<(lipstrat::defnfun::StackPresentation, Scene), Exit> {
    let scene = io::read_scene(path).map_err(input)?;
    let stack = scene
        .stack
        .clone()
        .ok_or_else(|| input(anyhow::anyhow!("{}: this command needs a stack scene", path.display())))?;
    Ok((stack, scene))
}

fn config(scene: &Scene, args: &CheckArgs) -> CheckConfig {
    let mut c = scene.config.check_config();
    if let Some(t) = args.tol {
        c.tol = t;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    c
}

fn condition_id(scene: &Scene, args: &CheckArgs) -> String {
    args.condition
        .clone()
        .or_else(|| scene.config.condition.clone())
        .unwrap_or_else(|| "whitney-b".into())
}

fn samples(scene: &Scene, args: &CheckArgs) -> usize {
    args.samples.or(scene.config.samples).unwrap_or(10_000)
}

fn write_mesh(mesh: &Mesh, path: &Path, format: Option<&str>) -> Result<(), Exit> {
    let f = match format {
        Some(f) => MeshFormat::parse(f).map_err(input)?,
        None => MeshFormat::from_path(path),
    };
    mesh.write(path, f).map_err(input)
}

fn write_report(v: &Value, path: Option<&Path>) -> Result<(), Exit> {
    let text = io::report_json(v);
    match path {
        Some(p) => std::fs::write(p, text + "\n")
            .with_context(|| format!("writing {}", p.display()))
            .map_err(input),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn pair_entry(r: &RegularityReport) -> Value {
    json!({
        "pair": [r.pair.0, r.pair.1],
        "verdict": r.verdict,
        "statistic": r.statistic,
        "witness": r.witness,
    })
}

fn triangulate(scene: &Path, output: &Path, format: Option<&str>, report: Option<&Path>) -> Result<Verdict, Exit> {
    let (stack, _) = load_stack(scene)?;
    let t = pipeline::triangulate(&stack).map_err(classify)?;
    let mesh = io::triangulation_mesh(&t).map_err(classify)?;
    write_mesh(&mesh, output, format)?;
    eprintln!(
        "{} simplices ({} vertices) after {} subdivision(s)",
        t.complex.len(),
        mesh.vertices.len(),
        t.subdivisions
    );
    if let Some(p) = report {
        let certs: Vec<Value> = t
            .map
            .certificates
            .iter()
            .map(|c| json!({"cell": c.cell, "bound": c.bound, "ratio_bound": c.ratio_bound, "method": c.method}))
            .collect();
        write_report(
            &json!({"simplices": t.complex.len(), "subdivisions": t.subdivisions, "certificates": certs}),
            Some(p),
        )?;
    }
    Ok(Verdict::Pass)
}

fn qtriangulate(scene: &Path, output: &Path, format: Option<&str>, report: Option<&Path>, args: &CheckArgs) -> Result<Verdict, Exit> {
    let (stack, sc) = load_stack(scene)?;
    let cond = condition_id(&sc, args);
    regularity::condition(&cond).map_err(input)?;
    let mut opts = QOptions {
        check: config(&sc, args),
        ..QOptions::default()
    };
    if let Some(n) = args.samples {
        opts.triangulate.validation_samples = n.max(1);
    }
    let q = pipeline::q_triangulate(&stack, &cond, &opts).map_err(classify)?;
    let mesh = io::q_mesh(&q).map_err(classify)?;
    write_mesh(&mesh, output, format)?;
    let compat = pipeline::compatibility_check(&q.strata()[..], &pipeline::stack_subsets(&stack), samples(&sc, args), opts.check.seed);
    let verdict = q
        .reports
        .iter()
        .fold(Verdict::Pass, |v, r| v.and(r.verdict))
        .and(if compat.passed() { Verdict::Pass } else { Verdict::Fail });
    eprintln!(
        "{} simplices, {} pairs checked for {cond}: {verdict:?}",
        q.k3.simplices.len(),
        q.reports.len()
    );
    if let Some(p) = report {
        write_report(
            &json!({
                "condition": cond,
                "verdict": verdict,
                "strata": q.k3.simplices.len(),
                "substratification": q.substratification,
                "compatibility": compat,
                "pairs": q.reports.iter().map(pair_entry).collect::<Vec<_>>(),
            }),
            Some(p),
        )?;
    }
    Ok(verdict)
}

fn check_scene(scene: &Path, args: &CheckArgs, report: Option<&Path>) -> Result<Verdict, Exit> {
    let sc = io::read_scene(scene).map_err(input)?;
    let cond_id = condition_id(&sc, args);
    let cond = regularity::condition(&cond_id).map_err(input)?;
    let cfg = config(&sc, args);
    let (verdict, body) = match (&sc.stack, sc.fixture.as_deref()) {
        (_, Some(name)) => {
            let (fams, ts): (Vec<Box<dyn CurveFamily>>, Vec<f64>) = match name {
                "cusp" => (
                    fixtures::cusp_families().into_iter().map(|f| Box::new(f) as Box<dyn CurveFamily>).collect(),
                    fixtures::cusp_levels(),
                ),
                _ => (
                    fixtures::saddle_families().into_iter().map(|f| Box::new(f) as Box<dyn CurveFamily>).collect(),
                    cfg.ts(),
                ),
            };
            let refs: Vec<&dyn CurveFamily> = fams.iter().map(|f| f.as_ref()).collect();
            let r = cond.check_families(&refs, &ts, &cfg).map_err(classify)?;
            (
                r.verdict,
                json!({"fixture": name, "condition": cond_id, "verdict": r.verdict, "report": r}),
            )
        }
        (Some(stack), None) => {
            let opts = TriangulateOptions {
                validation_samples: args.samples.unwrap_or(256).max(1),
                ..TriangulateOptions::default()
            };
            let t = pipeline::triangulate_with(stack, &opts).map_err(classify)?;
            let strata = t.strata();
            let simplices: Vec<Simplex> = t.complex.simplices.iter().cloned().collect();
            let pairs = regularity::adjacent_pairs(&simplices);
            let reports: Vec<RegularityReport> = pairs
                .iter()
                .map(|&(hi, lo)| {
                    let mut r = cond.check(&strata[hi], &strata[lo], &cfg);
                    r.pair = (hi, lo);
                    r
                })
                .collect();
            let compat = pipeline::compatibility_check(&strata[..], &pipeline::stack_subsets(stack), samples(&sc, args), cfg.seed);
            let v = reports
                .iter()
                .fold(Verdict::Pass, |v, r| v.and(r.verdict))
                .and(if compat.passed() { Verdict::Pass } else { Verdict::Fail });
            (
                v,
                json!({
                    "condition": cond_id,
                    "verdict": v,
                    "strata": simplices.len(),
                    "compatibility": compat,
                    "pairs": reports.iter().map(pair_entry).collect::<Vec<_>>(),
                }),
            )
        }
        (None, None) => return Err(input(anyhow::anyhow!("empty scene"))),
    };
    write_report(&body, report)?;
    if report.is_some() {
        eprintln!("{cond_id}: {verdict:?}");
    }
    Ok(verdict)
}

fn subdivide(path: &Path, times: usize, output: &Path, ambient: Option<usize>) -> Result<Verdict, Exit> {
    let mesh = Mesh::read(path, ambient).map_err(input)?;
    let mut k = mesh.to_complex();
    k.validate().map_err(input)?;
    for _ in 0..times {
        k = k.barycentric_subdivision().complex;
    }
    write_mesh(&Mesh::from_complex(&k), output, None)?;
    eprintln!("{} simplices after {times} subdivision(s)", k.len());
    Ok(Verdict::Pass)
}
