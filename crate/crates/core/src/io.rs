//! Scene files, meshes and reports.
//!
//! A scene is JSON: a version tag, a recursive stack (base, functions,
//! selected cells, subsets) or the name of a built-in fixture, and checker
//! settings. Rationals are written as integers or strings ("3/4", "0.25").

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::defnfun::{Base, CellSpec, FunctionHandle, Piece, Polynomial, StackPresentation, Subset};
use crate::error::{GeomError, Result};
use crate::exact::{self, Q};
use crate::pipeline::{QTriangulation, Triangulation};
use crate::regularity::CheckConfig;
use crate::simplicial::{Point, Simplex, SimplicialComplex};

pub const SCENE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QText {
    Int(i64),
    Text(String),
}

impl QText {
    fn parse(&self) -> Option<Q> {
        match self {
            QText::Int(i) => Some(exact::qi(*i)),
            QText::Text(s) => exact::parse_q(s),
        }
    }

    pub fn from_q(q: &Q) -> QText {
        QText::Text(exact::fmt_q(q))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: u32,
    /// Ambient dimension, checked against the stack when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<StackFile>,
    /// Name of a built-in fixture ("cusp", "saddle") instead of a stack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default)]
    pub config: ConfigFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackFile {
    pub base: BaseFile,
    pub functions: Vec<FunctionFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected: Vec<CellSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subsets: Vec<Subset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum BaseFile {
    Intervals(Vec<[QText; 2]>),
    Complex {
        points: Vec<Vec<QText>>,
        simplices: Vec<Vec<usize>>,
    },
    Stack(Box<StackFile>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    pub pieces: Vec<PieceFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceFile {
    /// Vertices of the closed simplex the polynomial is used on.
    pub cell: Vec<Vec<QText>>,
    pub terms: Vec<TermFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub exp: Vec<u32>,
    pub coef: QText,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn check_config(&self) -> CheckConfig {
        let mut c = CheckConfig::default();
        if let Some(t) = self.tol {
            c.tol = t;
        }
        if let Some(e) = self.eps0 {
            c.eps0 = e;
        }
        if let Some(d) = self.directions {
            c.directions = d;
        }
        if let Some(l) = self.levels {
            c.levels = l;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}

/// A parsed scene: either a stack presentation or a named fixture.
#[derive(Clone, Debug)]
pub struct Scene {
    pub stack: Option<StackPresentation>,
    pub fixture: Option<String>,
    pub config: ConfigFile,
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GeomError::Input(format!("{}: {e}", path.display())))?;
    parse_scene_str(&text).map_err(|e| match e {
        GeomError::Input(m) => GeomError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Schema check with JSON path and line/column, then conversion and
/// reference checks.
pub fn parse_scene_str(text: &str) -> Result<Scene> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: SceneFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        // serde_json's message already ends with the line and column
        GeomError::Input(format!("schema error at `{path}`: {inner}"))
    })?;
    scene_from_file(file)
}

pub fn scene_from_file(file: SceneFile) -> Result<Scene> {
    if file.version != SCENE_VERSION {
        return Err(GeomError::Input(format!(
            "unsupported scene version {} (expected {SCENE_VERSION})",
            file.version
        )));
    }
    let stack = match (&file.stack, &file.fixture) {
        (Some(s), None) => {
            let st = stack_from_file(s, "stack")?;
            if let Some(d) = file.dim {
                if d != st.dim() {
                    return Err(GeomError::Input(format!("`dim` is {d} but the stack lives in ℝ^{}", st.dim())));
                }
            }
            st.check_references()?;
            Some(st)
        }
        (None, Some(f)) => {
            if !FIXTURES.contains(&f.as_str()) {
                return Err(GeomError::Input(format!("unknown fixture '{f}' (known: {})", FIXTURES.join(", "))));
            }
            None
        }
        _ => return Err(GeomError::Input("scene needs exactly one of `stack` or `fixture`".into())),
    };
    Ok(Scene {
        stack,
        fixture: file.fixture.clone(),
        config: file.config,
    })
}

pub const FIXTURES: [&str; 2] = ["cusp", "saddle"];

fn q_at(t: &QText, at: &str) -> Result<Q> {
    t.parse().ok_or_else(|| GeomError::Input(format!("`{at}`: not a rational number: {t:?}")))
}

fn point_at(v: &[QText], at: &str) -> Result<Point> {
    Ok(Point::new(
        v.iter()
            .enumerate()
            .map(|(i, t)| q_at(t, &format!("{at}[{i}]")))
            .collect::<Result<_>>()?,
    ))
}

fn stack_from_file(s: &StackFile, at: &str) -> Result<StackPresentation> {
    let base = match &s.base {
        BaseFile::Intervals(iv) => {
            let mut out = Vec::new();
            for (i, [a, b]) in iv.iter().enumerate() {
                let (a, b) = (q_at(a, &format!("{at}.base.intervals[{i}]"))?, q_at(b, &format!("{at}.base.intervals[{i}]"))?);
                if a > b {
                    return Err(GeomError::Input(format!("`{at}.base.intervals[{i}]`: empty interval")));
                }
                out.push((a, b));
            }
            Base::Intervals(out)
        }
        BaseFile::Complex { points, simplices } => {
            let pts: Vec<Point> = points
                .iter()
                .enumerate()
                .map(|(i, p)| point_at(p, &format!("{at}.base.complex.points[{i}]")))
                .collect::<Result<_>>()?;
            if let Some((i, _)) = simplices.iter().enumerate().find(|(_, s)| s.iter().any(|&v| v >= pts.len())) {
                return Err(GeomError::Input(format!("`{at}.base.complex.simplices[{i}]`: dangling vertex id")));
            }
            let k = SimplicialComplex::from_simplices(pts, simplices);
            k.validate()
                .map_err(|e| GeomError::Input(format!("`{at}.base.complex`: {e}")))?;
            Base::Complex(k)
        }
        BaseFile::Stack(b) => Base::Stack(Box::new(stack_from_file(b, &format!("{at}.base.stack"))?)),
    };
    let nvars = match &base {
        Base::Intervals(_) => 1,
        Base::Complex(k) => k.ambient,
        Base::Stack(b) => b.dim(),
    };
    let mut functions = Vec::new();
    for (fi, f) in s.functions.iter().enumerate() {
        let fat = format!("{at}.functions[{fi}]");
        let mut pieces = Vec::new();
        for (pi, p) in f.pieces.iter().enumerate() {
            let pat = format!("{fat}.pieces[{pi}]");
            let cell: Vec<Point> = p
                .cell
                .iter()
                .enumerate()
                .map(|(i, v)| point_at(v, &format!("{pat}.cell[{i}]")))
                .collect::<Result<_>>()?;
            let mut terms = BTreeMap::new();
            for (ti, t) in p.terms.iter().enumerate() {
                if t.exp.len() != nvars {
                    return Err(GeomError::Input(format!(
                        "`{pat}.terms[{ti}].exp`: expected {nvars} exponents, got {}",
                        t.exp.len()
                    )));
                }
                let c = q_at(&t.coef, &format!("{pat}.terms[{ti}].coef"))?;
                *terms.entry(t.exp.clone()).or_insert_with(|| exact::qi(0)) += c;
            }
            pieces.push(Piece::new(cell, Polynomial::new(nvars, terms)));
        }
        let h = FunctionHandle::new(nvars, pieces, f.lipschitz).map_err(|e| GeomError::Input(format!("`{fat}`: {e}")))?;
        functions.push(h);
    }
    if functions.is_empty() {
        return Err(GeomError::Input(format!("`{at}.functions`: at least one function required")));
    }
    let mut st = StackPresentation::new(base, functions);
    st.selected = s.selected.clone();
    st.subsets = s.subsets.clone();
    Ok(st)
}

/// Inverse of parsing, used for writing fixtures.
pub fn stack_to_file(s: &StackPresentation) -> StackFile {
    let base = match &s.base {
        Base::Intervals(iv) => BaseFile::Intervals(iv.iter().map(|(a, b)| [QText::from_q(a), QText::from_q(b)]).collect()),
        Base::Complex(k) => BaseFile::Complex {
            points: k.points.iter().map(|p| p.coords.iter().map(QText::from_q).collect()).collect(),
            simplices: k.maximal().into_iter().map(|s| s.0).collect(),
        },
        Base::Stack(b) => BaseFile::Stack(Box::new(stack_to_file(b))),
    };
    let functions = s
        .functions
        .iter()
        .map(|f| FunctionFile {
            pieces: f
                .pieces
                .iter()
                .map(|p| PieceFile {
                    cell: p.cell.iter().map(|v| v.coords.iter().map(QText::from_q).collect()).collect(),
                    terms: p
                        .poly
                        .terms()
                        .iter()
                        .map(|(e, c)| TermFile {
                            exp: e.clone(),
                            coef: QText::from_q(c),
                        })
                        .collect(),
                })
                .collect(),
            lipschitz: f.declared_lipschitz,
        })
        .collect();
    StackFile {
        base,
        functions,
        selected: s.selected.clone(),
        subsets: s.subsets.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSimplex {
    /// Stratum id: the position in the simplex list.
    pub id: usize,
    pub verts: Vec<usize>,
    /// Source cell, e.g. "band 1 over base simplex 3" or "apex 0".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub ambient: usize,
    pub vertices: Vec<Vec<f64>>,
    pub simplices: Vec<MeshSimplex>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Json,
    Off,
}

impl MeshFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(MeshFormat::Json),
            "off" => Ok(MeshFormat::Off),
            other => Err(GeomError::Input(format!("unsupported mesh format '{other}' (json, off)"))),
        }
    }

    /// From a file extension, defaulting to JSON.
    pub fn from_path(p: &Path) -> Self {
        match p.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("off") => MeshFormat::Off,
            _ => MeshFormat::Json,
        }
    }
}

impl Mesh {
    pub fn empty(ambient: usize) -> Self {
        Mesh {
            ambient,
            vertices: vec![],
            simplices: vec![],
        }
    }

    /// Mesh of a complex with its own coordinates.
    pub fn from_complex(k: &SimplicialComplex) -> Self {
        let (vertices, remap) = compact_vertices(k, |p| p.to_f64());
        Mesh {
            ambient: k.ambient,
            vertices,
            simplices: k
                .simplices
                .iter()
                .enumerate()
                .map(|(id, s)| MeshSimplex {
                    id,
                    verts: s.0.iter().map(|v| remap[v]).collect(),
                    source: None,
                })
                .collect(),
        }
    }

    /// The exact complex spanned by the mesh vertices (doubles read back
    /// exactly).
    pub fn to_complex(&self) -> SimplicialComplex {
        let points = self
            .vertices
            .iter()
            .map(|v| Point::new(v.iter().map(|&x| exact::qf(x)).collect()))
            .collect();
        let tops: Vec<Vec<usize>> = self.simplices.iter().map(|s| s.verts.clone()).collect();
        let mut k = SimplicialComplex::from_simplices(points, &tops);
        k.ambient = self.ambient;
        k
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mesh serializes")
    }

    /// OFF with one face line per simplex (points and edges included), so
    /// face index equals stratum id. Coordinates are padded to three.
    pub fn to_off(&self) -> String {
        let mut s = String::from("OFF\n");
        let _ = writeln!(s, "{} {} 0", self.vertices.len(), self.simplices.len());
        for v in &self.vertices {
            let mut c: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            while c.len() < 3 {
                c.push("0.0".into());
            }
            let _ = writeln!(s, "{}", c.join(" "));
        }
        for f in &self.simplices {
            let ids: Vec<String> = f.verts.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{} {}", f.verts.len(), ids.join(" "));
        }
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GeomError::Input(format!("mesh: {e}")))
    }

    /// Reads OFF; the ambient dimension is taken as 3 unless `ambient` is
    /// given (trailing padding coordinates are dropped).
    pub fn from_off(text: &str, ambient: Option<usize>) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let bad = |m: &str| GeomError::Input(format!("OFF: {m}"));
        if lines.next() != Some("OFF") {
            return Err(bad("missing OFF header"));
        }
        let counts: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing counts"))?
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad("bad count")))
            .collect::<Result<_>>()?;
        if counts.len() < 2 {
            return Err(bad("counts line needs vertex and face counts"));
        }
        let n = ambient.unwrap_or(3);
        let mut vertices = Vec::with_capacity(counts[0]);
        for _ in 0..counts[0] {
            let v: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("truncated vertex list"))?
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad("bad coordinate")))
                .collect::<Result<_>>()?;
            if v.len() < n {
                return Err(bad("vertex has too few coordinates"));
            }
            vertices.push(v[..n].to_vec());
        }
        let mut simplices = Vec::with_capacity(counts[1]);
        for id in 0..counts[1] {
            let f: Vec<usize> = lines
                .next()
                .ok_or_else(|| bad("truncated face list"))?
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad("bad index")))
                .collect::<Result<_>>()?;
            if f.is_empty() || f[0] + 1 != f.len() || f[1..].iter().any(|&v| v >= vertices.len()) {
                return Err(bad(&format!("bad face {id}")));
            }
            simplices.push(MeshSimplex {
                id,
                verts: f[1..].to_vec(),
                source: None,
            });
        }
        Ok(Mesh {
            ambient: n,
            vertices,
            simplices,
        })
    }

    pub fn write(&self, path: &Path, format: MeshFormat) -> Result<()> {
        let text = match format {
            MeshFormat::Json => self.to_json(),
            MeshFormat::Off => self.to_off(),
        };
        std::fs::write(path, text).map_err(|e| GeomError::Input(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path, ambient: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GeomError::Input(format!("{}: {e}", path.display())))?;
        match MeshFormat::from_path(path) {
            MeshFormat::Json => Self::from_json(&text),
            MeshFormat::Off => Self::from_off(&text, ambient),
        }
    }
}

fn compact_vertices(k: &SimplicialComplex, coord: impl Fn(&Point) -> Vec<f64>) -> (Vec<Vec<f64>>, BTreeMap<usize, usize>) {
    let used: std::collections::BTreeSet<usize> = k.simplices.iter().flat_map(|s| s.0.iter().copied()).collect();
    let remap: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    (used.iter().map(|&v| coord(&k.points[v])).collect(), remap)
}

fn describe_cell(t: &Triangulation, s: &Simplex) -> String {
    let c = t.carrier[s];
    let cell = &t.map.complex.cells[c];
    let kind = match cell.kind {
        crate::defnfun::CellKind::Graph(k) => format!("graph {}", k + 1),
        crate::defnfun::CellKind::Band(k) => format!("band {}", k + 1),
    };
    format!("{kind} over base simplex {} (cell {c})", cell.base)
}

/// Mesh of the image triangulation {H(△)}; ids follow the sorted simplex
/// order of K.
pub fn triangulation_mesh(t: &Triangulation) -> Result<Mesh> {
    let images = t.vertex_images()?;
    let (vertices, remap) = compact_vertices(&t.complex, |_| vec![]);
    let vertices: Vec<Vec<f64>> = remap.keys().zip(vertices).map(|(&v, _)| images[v].to_f64()).collect();
    Ok(Mesh {
        ambient: t.ambient(),
        vertices,
        simplices: t
            .complex
            .simplices
            .iter()
            .enumerate()
            .map(|(id, s)| MeshSimplex {
                id,
                verts: s.0.iter().map(|v| remap[v]).collect(),
                source: Some(describe_cell(t, s)),
            })
            .collect(),
    })
}

/// Mesh of {h₁∘h₃(△)} for the cone complex K₃.
pub fn q_mesh(q: &QTriangulation) -> Result<Mesh> {
    let images = q.vertex_images()?;
    Ok(Mesh {
        ambient: q.k1.ambient(),
        vertices: images.iter().map(|p| p.to_f64()).collect(),
        simplices: q
            .k3
            .simplices
            .iter()
            .enumerate()
            .map(|(id, s)| MeshSimplex {
                id,
                verts: s.0.clone(),
                source: Some(match q.k3.apex_of(s) {
                    Some(j) => format!("cone from apex {j} in {}", describe_cell(&q.k1, &q.k3.tops[j])),
                    None => format!("skeleton in {}", describe_cell(&q.k1, &q.carrier[s])),
                }),
            })
            .collect(),
    })
}

/// Serializes a report deterministically (stable field order, no
/// timestamps).
pub fn report_json<T: Serialize>(r: &T) -> String {
    serde_json::to_string_pretty(r).expect("report serializes")
}
