//! Flat `key = value` run configuration.
//!
//! ```text
//! # solver
//! lambda = 0.1
//! max_iters = 200
//! # mesh
//! steiner = 50
//! # camera (all four or none)
//! fx = 320.0
//! fy = 320.0
//! cx = 319.5
//! cy = 239.5
//! # synthetic scene
//! width = 128
//! height = 128
//! noise_sigma = 0.005
//! piece.0.region = "below 1 0 64"
//! piece.0.surface = "affine 0.002 0.001 0.4"
//! piece.1.region = "above 1 0 64"
//! piece.1.surface = "quadratic 0 0 0 -0.003 0 0.9"
//! ```
//!
//! Regions are `all`, `rect x0 y0 x1 y1`, `above nx ny c` and `below nx ny c`;
//! surfaces are `affine a b c` and `quadratic a b c d e f`. Unknown keys are
//! rejected.

use std::fmt::Write as _;
use std::path::Path;

use toml::{Table, Value};

use crate::depthio::Intrinsics;
use crate::error::{Error, Result};
use crate::pdsolver::SolverConfig;
use crate::synth::{Piece, Region, SceneSpec, Surface};

/// Default relative tolerance of the accuracy metric.
pub const DEFAULT_REL_TOL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig<f64>,
    /// Steiner grid spacing in pixels; `None` meshes the landmarks and image corners only.
    pub steiner: Option<usize>,
    pub intrinsics: Option<Intrinsics>,
    pub scene: Option<SceneSpec>,
    pub rel_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            solver: SolverConfig::default(),
            steiner: Some(50),
            intrinsics: None,
            scene: None,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

const SCENE_KEYS: [&str; 9] = [
    "width",
    "height",
    "noise_sigma",
    "outlier_frac",
    "outlier_min",
    "outlier_max",
    "invalid_frac",
    "landmark_spacing",
    "seed",
];

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(invalid(format!("{key}: expected a number, got {v}"))),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(invalid(format!("{key}: expected a non-negative integer, got {v}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| invalid(format!("{key}: expected true or false, got {v}")))
}

fn numbers(key: &str, words: &[&str], n: usize) -> Result<Vec<f64>> {
    if words.len() != n {
        return Err(invalid(format!("{key}: expected {n} numbers, got {}", words.len())));
    }
    words
        .iter()
        .map(|w| w.parse::<f64>().map_err(|_| invalid(format!("{key}: bad number {w:?}"))))
        .collect()
}

pub fn parse_region(key: &str, s: &str) -> Result<Region> {
    let words: Vec<&str> = s.split_whitespace().collect();
    let (head, rest) = words.split_first().ok_or_else(|| invalid(format!("{key}: empty region")))?;
    Ok(match *head {
        "all" => {
            numbers(key, rest, 0)?;
            Region::All
        }
        "rect" => {
            if rest.len() != 4 {
                return Err(invalid(format!("{key}: expected 4 integers, got {}", rest.len())));
            }
            let v = rest
                .iter()
                .map(|w| w.parse::<usize>().map_err(|_| invalid(format!("{key}: bad pixel bound {w:?}"))))
                .collect::<Result<Vec<_>>>()?;
            Region::Rect {
                x0: v[0],
                y0: v[1],
                x1: v[2],
                y1: v[3],
            }
        }
        "above" | "below" => {
            let v = numbers(key, rest, 3)?;
            let (nx, ny, c) = (v[0], v[1], v[2]);
            if *head == "above" {
                Region::Above { nx, ny, c }
            } else {
                Region::Below { nx, ny, c }
            }
        }
        other => return Err(invalid(format!("{key}: unknown region {other:?}"))),
    })
}

pub fn parse_surface(key: &str, s: &str) -> Result<Surface> {
    let words: Vec<&str> = s.split_whitespace().collect();
    let (head, rest) = words.split_first().ok_or_else(|| invalid(format!("{key}: empty surface")))?;
    Ok(match *head {
        "affine" => {
            let v = numbers(key, rest, 3)?;
            Surface::Affine {
                a: v[0],
                b: v[1],
                c: v[2],
            }
        }
        "quadratic" => {
            let v = numbers(key, rest, 6)?;
            Surface::Quadratic {
                a: v[0],
                b: v[1],
                c: v[2],
                d: v[3],
                e: v[4],
                f: v[5],
            }
        }
        other => return Err(invalid(format!("{key}: unknown surface {other:?}"))),
    })
}

pub fn format_region(r: &Region) -> String {
    match *r {
        Region::All => "all".into(),
        Region::Rect { x0, y0, x1, y1 } => format!("rect {x0} {y0} {x1} {y1}"),
        Region::Above { nx, ny, c } => format!("above {nx} {ny} {c}"),
        Region::Below { nx, ny, c } => format!("below {nx} {ny} {c}"),
    }
}

pub fn format_surface(s: &Surface) -> String {
    match *s {
        Surface::Affine { a, b, c } => format!("affine {a} {b} {c}"),
        Surface::Quadratic { a, b, c, d, e, f } => format!("quadratic {a} {b} {c} {d} {e} {f}"),
    }
}

fn parse_pieces(table: &Table) -> Result<Vec<Piece>> {
    let mut indexed = Vec::with_capacity(table.len());
    for (idx, entry) in table {
        let n: usize = idx
            .parse()
            .map_err(|_| invalid(format!("piece.{idx}: piece index must be an integer")))?;
        let entry = entry
            .as_table()
            .ok_or_else(|| invalid(format!("piece.{idx}: expected region and surface keys")))?;
        let (mut region, mut surface) = (None, None);
        for (k, v) in entry {
            let key = format!("piece.{idx}.{k}");
            let s = v.as_str().ok_or_else(|| invalid(format!("{key}: expected a quoted string")))?;
            match k.as_str() {
                "region" => region = Some(parse_region(&key, s)?),
                "surface" => surface = Some(parse_surface(&key, s)?),
                _ => return Err(invalid(format!("unknown key {key}"))),
            }
        }
        let region = region.ok_or_else(|| invalid(format!("piece.{idx}: missing region")))?;
        let surface = surface.ok_or_else(|| invalid(format!("piece.{idx}: missing surface")))?;
        indexed.push((n, Piece { region, surface }));
    }
    indexed.sort_by_key(|&(n, _)| n);
    if indexed.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(invalid("duplicate piece index"));
    }
    Ok(indexed.into_iter().map(|(_, p)| p).collect())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| invalid(e.to_string().trim_end().to_string()))?;
        let mut cfg = RunConfig::default();
        let mut cam = [None; 4];
        let mut scene_vals: Vec<(&str, &Value)> = Vec::new();
        let mut pieces = Vec::new();
        for (key, v) in &table {
            let k = key.as_str();
            match k {
                "lambda" => cfg.solver.lambda = as_f64(k, v)?,
                "sigma" => cfg.solver.sigma = as_f64(k, v)?,
                "tau" => cfg.solver.tau = as_f64(k, v)?,
                "theta" => cfg.solver.theta = as_f64(k, v)?,
                "max_iters" => cfg.solver.max_iters = as_usize(k, v)?,
                "energy_rel_tol" => cfg.solver.energy_rel_tol = as_f64(k, v)?,
                "auto_steps" => cfg.solver.auto_steps = as_bool(k, v)?,
                "freeze_normals" => cfg.solver.freeze_normals = as_bool(k, v)?,
                "steiner" => cfg.steiner = Some(as_usize(k, v)?).filter(|&s| s > 0),
                "rel_tol" => cfg.rel_tol = as_f64(k, v)?,
                "fx" => cam[0] = Some(as_f64(k, v)?),
                "fy" => cam[1] = Some(as_f64(k, v)?),
                "cx" => cam[2] = Some(as_f64(k, v)?),
                "cy" => cam[3] = Some(as_f64(k, v)?),
                "piece" => {
                    let t = v.as_table().ok_or_else(|| invalid("piece: expected piece.N.region / piece.N.surface"))?;
                    pieces = parse_pieces(t)?;
                }
                _ if SCENE_KEYS.contains(&k) => scene_vals.push((k, v)),
                _ => return Err(invalid(format!("unknown key {k}"))),
            }
        }
        cfg.solver.validate()?;
        if !(cfg.rel_tol > 0.0 && cfg.rel_tol.is_finite()) {
            return Err(invalid(format!("rel_tol must be positive, got {}", cfg.rel_tol)));
        }
        cfg.intrinsics = match cam {
            [None, None, None, None] => None,
            [Some(fx), Some(fy), Some(cx), Some(cy)] => {
                let k = Intrinsics { fx, fy, cx, cy };
                k.validate()?;
                Some(k)
            }
            _ => return Err(invalid("fx, fy, cx and cy must be given together")),
        };
        if !scene_vals.is_empty() || !pieces.is_empty() {
            cfg.scene = Some(build_scene(&scene_vals, pieces)?);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_config_string(&self) -> String {
        let s = &self.solver;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
        kv("lambda", float(s.lambda));
        kv("sigma", float(s.sigma));
        kv("tau", float(s.tau));
        kv("theta", float(s.theta));
        kv("max_iters", s.max_iters.to_string());
        kv("energy_rel_tol", float(s.energy_rel_tol));
        kv("auto_steps", s.auto_steps.to_string());
        kv("freeze_normals", s.freeze_normals.to_string());
        kv("steiner", self.steiner.unwrap_or(0).to_string());
        kv("rel_tol", float(self.rel_tol));
        if let Some(k) = &self.intrinsics {
            kv("fx", float(k.fx));
            kv("fy", float(k.fy));
            kv("cx", float(k.cx));
            kv("cy", float(k.cy));
        }
        if let Some(scene) = &self.scene {
            out.push_str(&scene_to_config(scene));
        }
        out
    }
}

/// TOML float literal that parses back to the same bits.
fn float(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:?}")
    }
}

fn build_scene(vals: &[(&str, &Value)], pieces: Vec<Piece>) -> Result<SceneSpec> {
    let get = |name: &str| vals.iter().find(|(k, _)| *k == name).map(|(_, v)| *v);
    let width = get("width").ok_or_else(|| invalid("scene: missing width"))?;
    let height = get("height").ok_or_else(|| invalid("scene: missing height"))?;
    if pieces.is_empty() {
        return Err(invalid("scene: at least one piece.N.region / piece.N.surface is required"));
    }
    let mut spec = SceneSpec::single(as_usize("width", width)?, as_usize("height", height)?, pieces[0].surface);
    spec.pieces = pieces;
    for &(k, v) in vals {
        match k {
            "noise_sigma" => spec.noise_sigma = as_f64(k, v)?,
            "outlier_frac" => spec.outlier_frac = as_f64(k, v)?,
            "outlier_min" => spec.outlier_range.0 = as_f64(k, v)?,
            "outlier_max" => spec.outlier_range.1 = as_f64(k, v)?,
            "invalid_frac" => spec.invalid_frac = as_f64(k, v)?,
            "landmark_spacing" => spec.landmark_spacing = Some(as_usize(k, v)?).filter(|&s| s > 0),
            "seed" => spec.seed = as_usize(k, v)? as u64,
            _ => {}
        }
    }
    spec.validate().map_err(|e| match e {
        Error::InvalidSpec(m) => invalid(m),
        other => other,
    })?;
    Ok(spec)
}

pub fn scene_to_config(spec: &SceneSpec) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
    kv("width", spec.width.to_string());
    kv("height", spec.height.to_string());
    kv("noise_sigma", float(spec.noise_sigma));
    kv("outlier_frac", float(spec.outlier_frac));
    kv("outlier_min", float(spec.outlier_range.0));
    kv("outlier_max", float(spec.outlier_range.1));
    kv("invalid_frac", float(spec.invalid_frac));
    kv("landmark_spacing", spec.landmark_spacing.unwrap_or(0).to_string());
    kv("seed", spec.seed.to_string());
    for (n, p) in spec.pieces.iter().enumerate() {
        kv(&format!("piece.{n}.region"), format!("{:?}", format_region(&p.region)));
        kv(&format!("piece.{n}.surface"), format!("{:?}", format_surface(&p.surface)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE: &str = r#"
        # two planes
        lambda = 0.25
        max_iters = 50
        steiner = 16
        width = 32
        height = 24
        noise_sigma = 0.01
        seed = 9
        piece.0.region = "below 1 0 16"
        piece.0.surface = "affine 0.002 0.001 0.4"
        piece.1.region = "above 1 0 16"
        piece.1.surface = "quadratic 0 0 0 -0.003 0 0.9"
    "#;

    #[test]
    fn parses_solver_and_scene() {
        let cfg = RunConfig::parse(SCENE).unwrap();
        assert_eq!(cfg.solver.lambda, 0.25);
        assert_eq!(cfg.solver.max_iters, 50);
        assert_eq!(cfg.steiner, Some(16));
        let scene = cfg.scene.as_ref().unwrap();
        assert_eq!((scene.width, scene.height, scene.seed), (32, 24, 9));
        assert_eq!(scene.pieces.len(), 2);
        assert_eq!(scene.pieces[0].region, Region::Below { nx: 1.0, ny: 0.0, c: 16.0 });
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::parse(SCENE).unwrap();
        cfg.intrinsics = Some(Intrinsics {
            fx: 300.5,
            fy: 301.0,
            cx: 15.5,
            cy: 0.1 + 0.2,
        });
        let again = RunConfig::parse(&cfg.to_config_string()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_config_string(), cfg.to_config_string());
    }

    #[test]
    fn defaults_and_zero_lambda() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("lambda = 0").unwrap().solver.lambda, 0.0);
        assert_eq!(RunConfig::parse("steiner = 0").unwrap().steiner, None);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "lamda = 1",
            "lambda = -1",
            "lambda = \"x\"",
            "max_iters = 0",
            "fx = 1",
            "width = 10",
            "width = 10\nheight = 10\npiece.0.region = \"circle 1\"\npiece.0.surface = \"affine 0 0 1\"",
            "width = 10\nheight = 10\npiece.0.region = \"all\"",
            "= 3",
        ] {
            assert!(
                matches!(RunConfig::parse(text), Err(Error::InvalidConfig(_))),
                "accepted {text:?}"
            );
        }
    }
}
