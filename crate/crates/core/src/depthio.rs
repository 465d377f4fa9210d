//! Reading and writing depth maps, landmarks and meshes.
//!
//! Files always hold metric depth; the in-memory grids hold inverse depth.
//! A pixel whose depth is non-positive or not finite is loaded as invalid,
//! and invalid pixels are written back as depth `0`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::DepthGrid;
use crate::mesh2d::{Landmark, Mesh2D};
use crate::scalar::Scalar;

/// Meters per unit used when writing 16-bit PGM depth.
pub const DEFAULT_PGM_SCALE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthKind {
    Pfm,
    Pgm16,
    Csv,
}

impl DepthKind {
    /// Guess from the file extension: `.pfm`, `.pgm`, `.csv`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        ext.parse().map_err(|_| Error::Format {
            path: path.to_path_buf(),
            msg: format!("cannot infer depth format from extension {ext:?}"),
        })
    }

    pub fn extension(self) -> &'static str {
        match self {
            DepthKind::Pfm => "pfm",
            DepthKind::Pgm16 => "pgm",
            DepthKind::Csv => "csv",
        }
    }
}

impl FromStr for DepthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pfm" => Ok(DepthKind::Pfm),
            "pgm" | "pgm16" => Ok(DepthKind::Pgm16),
            "csv" => Ok(DepthKind::Csv),
            _ => Err(Error::InvalidConfig(format!("unknown depth format {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshKind {
    Obj,
    Ply,
}

impl MeshKind {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        ext.parse().map_err(|_| Error::Format {
            path: path.to_path_buf(),
            msg: format!("cannot infer mesh format from extension {ext:?}"),
        })
    }
}

impl FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshKind::Obj),
            "ply" => Ok(MeshKind::Ply),
            _ => Err(Error::InvalidConfig(format!("unknown mesh format {s:?}"))),
        }
    }
}

/// Pinhole camera parameters in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// A 90 degree horizontal field of view centred on the image.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = width as f64 / 2.0;
        Intrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(self.fx > 0.0 && self.fy > 0.0 && ok(self.fx) && ok(self.fy) && ok(self.cx) && ok(self.cy)) {
            return Err(Error::InvalidConfig(format!(
                "intrinsics need finite positive focal lengths, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Camera-frame point for pixel `u` at inverse depth `xi`.
    pub fn back_project(&self, u: [f64; 2], xi: f64) -> [f64; 3] {
        let z = 1.0 / xi;
        [(u[0] - self.cx) / self.fx * z, (u[1] - self.cy) / self.fy * z, z]
    }
}

/// A triangle mesh in camera coordinates (meters).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl MeshFile {
    pub fn from_mesh<T: Scalar>(mesh: &Mesh2D<T>, intrinsics: &Intrinsics) -> Result<Self> {
        intrinsics.validate()?;
        let vertices = mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let xi = v.xi.to_f64_lossy();
                if !(xi > 0.0 && xi.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "vertex {k} has non-positive inverse depth {xi}"
                    )));
                }
                Ok(intrinsics.back_project([v.u[0].to_f64_lossy(), v.u[1].to_f64_lossy()], xi))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MeshFile {
            vertices,
            faces: mesh.triangles().to_vec(),
        })
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Splits `count` whitespace-separated header tokens off the front of `bytes`
/// and returns them with the offset just past the single whitespace byte that
/// ends the last one.
fn header_tokens<'a>(bytes: &'a [u8], count: usize, path: &Path) -> Result<(Vec<&'a str>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| format_err(path, "non-ASCII header"))?;
        tokens.push(tok);
    }
    if pos >= bytes.len() {
        return Err(format_err(path, "missing pixel data"));
    }
    Ok((tokens, pos + 1))
}

fn parse_dim(tok: &str, path: &Path) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format_err(path, format!("bad image dimension {tok:?}"))),
    }
}

/// A raw single-channel float image, rows top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub little_endian: bool,
}

pub fn read_pfm(path: &Path) -> Result<Pfm> {
    let bytes = read_bytes(path)?;
    let (tok, offset) = header_tokens(&bytes, 4, path)?;
    if tok[0] != "Pf" {
        return Err(format_err(path, format!("expected grayscale PFM magic 'Pf', got {:?}", tok[0])));
    }
    let width = parse_dim(tok[1], path)?;
    let height = parse_dim(tok[2], path)?;
    let scale: f64 = tok[3]
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| format_err(path, format!("bad scale {:?}", tok[3])))?;
    let little_endian = scale < 0.0;
    let payload = &bytes[offset..];
    let n = width * height;
    if payload.len() != 4 * n {
        return Err(format_err(
            path,
            format!("dimension mismatch: {width}x{height} needs {} bytes, found {}", 4 * n, payload.len()),
        ));
    }
    let mut data = vec![0f32; n];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // Stored bottom row first.
        let (x, row) = (k % width, k / width);
        data[(height - 1 - row) * width + x] = v;
    }
    Ok(Pfm {
        width,
        height,
        data,
        little_endian,
    })
}

pub fn write_pfm(path: &Path, pfm: &Pfm) -> Result<()> {
    let n = pfm.width * pfm.height;
    if pfm.data.len() != n || n == 0 {
        return Err(Error::LengthMismatch {
            what: "pfm pixels",
            expected: n,
            got: pfm.data.len(),
        });
    }
    let scale = if pfm.little_endian { "-1.0" } else { "1.0" };
    let mut out = format!("Pf\n{} {}\n{}\n", pfm.width, pfm.height, scale).into_bytes();
    out.reserve(4 * n);
    for row in (0..pfm.height).rev() {
        for &v in &pfm.data[row * pfm.width..(row + 1) * pfm.width] {
            if pfm.little_endian {
                out.extend_from_slice(&v.to_le_bytes());
            } else {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    write_bytes(path, &out)
}

/// A raw 16-bit image with its depth scale in meters per unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm16 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
    pub scale: f64,
}

/// Sidecar file holding the scale of a 16-bit PGM: `<path>.scale`.
pub fn pgm_scale_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scale");
    PathBuf::from(s)
}

pub fn read_pgm16(path: &Path) -> Result<Pgm16> {
    let bytes = read_bytes(path)?;
    let (tok, offset) = header_tokens(&bytes, 4, path)?;
    if tok[0] != "P5" {
        return Err(format_err(path, format!("expected binary PGM magic 'P5', got {:?}", tok[0])));
    }
    let width = parse_dim(tok[1], path)?;
    let height = parse_dim(tok[2], path)?;
    if tok[3] != "65535" {
        return Err(format_err(path, format!("expected 16-bit maxval 65535, got {:?}", tok[3])));
    }
    let payload = &bytes[offset..];
    let n = width * height;
    if payload.len() != 2 * n {
        return Err(format_err(
            path,
            format!("dimension mismatch: {width}x{height} needs {} bytes, found {}", 2 * n, payload.len()),
        ));
    }
    let data = payload.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();

    let scale_path = pgm_scale_path(path);
    let text = read_text(&scale_path)?;
    let scale: f64 = text
        .trim()
        .parse()
        .ok()
        .filter(|s: &f64| *s > 0.0 && s.is_finite())
        .ok_or_else(|| parse_err(&scale_path, 1, format!("bad scale {:?}", text.trim())))?;
    Ok(Pgm16 {
        width,
        height,
        data,
        scale,
    })
}

pub fn write_pgm16(path: &Path, pgm: &Pgm16) -> Result<()> {
    let n = pgm.width * pgm.height;
    if pgm.data.len() != n || n == 0 {
        return Err(Error::LengthMismatch {
            what: "pgm pixels",
            expected: n,
            got: pgm.data.len(),
        });
    }
    if !(pgm.scale > 0.0 && pgm.scale.is_finite()) {
        return Err(Error::InvalidInput(format!("pgm scale must be positive, got {}", pgm.scale)));
    }
    let mut out = format!("P5\n{} {}\n65535\n", pgm.width, pgm.height).into_bytes();
    for v in &pgm.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    write_bytes(path, &out)?;
    write_bytes(&pgm_scale_path(path), format!("{}\n", pgm.scale).as_bytes())
}

/// Raw CSV grid: one line per row, comma-separated values.
pub fn read_csv_grid(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = read_text(path)?;
    let mut width = None;
    let mut data = Vec::new();
    let mut height = 0;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                match f.to_ascii_lowercase().as_str() {
                    "nan" => Ok(f64::NAN),
                    _ => f.parse::<f64>(),
                }
                .map_err(|_| parse_err(path, k + 1, format!("bad number {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(path, k + 1, format!("expected {w} values, found {}", row.len())));
            }
            _ => {}
        }
        data.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| format_err(path, "empty grid"))?;
    Ok((width, height, data))
}

pub fn write_csv_grid(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<()> {
    if data.len() != width * height || data.is_empty() {
        return Err(Error::LengthMismatch {
            what: "csv pixels",
            expected: width * height,
            got: data.len(),
        });
    }
    let mut out = String::with_capacity(data.len() * 8);
    for row in data.chunks(width) {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Inverse-depth grid from metric depths.
pub fn grid_from_depth<T: Scalar>(width: usize, height: usize, depth: &[f64]) -> Result<DepthGrid<T>> {
    let mut values = Vec::with_capacity(depth.len());
    let mut mask = Vec::with_capacity(depth.len());
    for &d in depth {
        let xi = 1.0 / d;
        let ok = d > 0.0 && d.is_finite() && xi.is_finite() && xi > 0.0;
        values.push(if ok { T::of(xi) } else { T::zero() });
        mask.push(ok);
    }
    DepthGrid::new(width, height, values, mask)
}

/// Metric depths from an inverse-depth grid; invalid pixels become `0`.
pub fn depth_from_grid<T: Scalar>(grid: &DepthGrid<T>) -> Vec<f64> {
    (0..grid.len())
        .map(|k| grid.get(k).map_or(0.0, |xi| 1.0 / xi.to_f64_lossy()))
        .collect()
}

pub fn read_depth<T: Scalar>(path: &Path, kind: DepthKind) -> Result<DepthGrid<T>> {
    let (w, h, depth) = match kind {
        DepthKind::Pfm => {
            let pfm = read_pfm(path)?;
            (pfm.width, pfm.height, pfm.data.iter().map(|&v| v as f64).collect::<Vec<_>>())
        }
        DepthKind::Pgm16 => {
            let pgm = read_pgm16(path)?;
            let depth = pgm.data.iter().map(|&v| v as f64 * pgm.scale).collect();
            (pgm.width, pgm.height, depth)
        }
        DepthKind::Csv => read_csv_grid(path)?,
    };
    grid_from_depth(w, h, &depth)
}

/// Writes `grid` as metric depth. PGM output uses [`DEFAULT_PGM_SCALE`] and
/// saturates depths beyond its 16-bit range.
pub fn write_depth<T: Scalar>(grid: &DepthGrid<T>, path: &Path, kind: DepthKind) -> Result<()> {
    let depth = depth_from_grid(grid);
    let (width, height) = (grid.width(), grid.height());
    match kind {
        DepthKind::Pfm => write_pfm(
            path,
            &Pfm {
                width,
                height,
                data: depth.iter().map(|&d| d as f32).collect(),
                little_endian: true,
            },
        ),
        DepthKind::Pgm16 => write_pgm16(
            path,
            &Pgm16 {
                width,
                height,
                data: depth
                    .iter()
                    .map(|&d| (d / DEFAULT_PGM_SCALE).round().clamp(0.0, u16::MAX as f64) as u16)
                    .collect(),
                scale: DEFAULT_PGM_SCALE,
            },
        ),
        DepthKind::Csv => write_csv_grid(path, width, height, &depth),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet<T> {
    pub landmarks: Vec<Landmark<T>>,
    /// Records dropped for a non-positive or non-finite depth.
    pub rejected: usize,
}

/// Landmarks from CSV lines `u1,u2[,depth_m]`. A missing depth gives a
/// landmark with no inverse-depth prior. Blank lines and `#` comments are
/// skipped.
pub fn read_landmarks<T: Scalar>(path: &Path) -> Result<LandmarkSet<T>> {
    parse_landmarks(&read_text(path)?, path)
}

pub fn parse_landmarks<T: Scalar>(text: &str, path: &Path) -> Result<LandmarkSet<T>> {
    let mut set = LandmarkSet {
        landmarks: Vec::new(),
        rejected: 0,
    };
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(
                path,
                k + 1,
                format!("expected u1,u2[,depth_m], found {} fields", fields.len()),
            ));
        }
        let num = |f: &str| {
            f.parse::<f64>()
                .map_err(|_| parse_err(path, k + 1, format!("bad number {f:?}")))
        };
        let (u1, u2) = (num(fields[0])?, num(fields[1])?);
        if !(u1.is_finite() && u2.is_finite()) {
            return Err(parse_err(path, k + 1, "non-finite pixel position"));
        }
        let z = match fields.get(2) {
            None => None,
            Some(f) => {
                let d = num(f)?;
                if !(d > 0.0 && d.is_finite()) {
                    set.rejected += 1;
                    continue;
                }
                Some(T::of(1.0 / d))
            }
        };
        set.landmarks.push(Landmark::new(T::of(u1), T::of(u2), z));
    }
    Ok(set)
}

pub fn write_landmarks<T: Scalar>(path: &Path, landmarks: &[Landmark<T>]) -> Result<()> {
    let mut out = String::new();
    for l in landmarks {
        write!(out, "{},{}", l.u[0], l.u[1]).expect("writing to a String");
        if let Some(z) = l.z {
            write!(out, ",{}", 1.0 / z.to_f64_lossy()).expect("writing to a String");
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

pub fn write_mesh<T: Scalar>(mesh: &Mesh2D<T>, intrinsics: &Intrinsics, path: &Path, kind: MeshKind) -> Result<()> {
    let file = MeshFile::from_mesh(mesh, intrinsics)?;
    match kind {
        MeshKind::Obj => write_obj(path, &file),
        MeshKind::Ply => write_ply(path, &file),
    }
}

pub fn write_obj(path: &Path, mesh: &MeshFile) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v[0], v[1], v[2]).expect("writing to a String");
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("writing to a String");
    }
    write_bytes(path, out.as_bytes())
}

/// Reads `v` and triangular `f` records; other records are ignored.
pub fn read_obj(path: &Path) -> Result<MeshFile> {
    let text = read_text(path)?;
    let mut mesh = MeshFile::default();
    for (k, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .map(|t| t.parse::<f64>().map_err(|_| parse_err(path, k + 1, format!("bad number {t:?}"))))
                    .collect::<Result<_>>()?;
                if c.len() < 3 {
                    return Err(parse_err(path, k + 1, "vertex needs three coordinates"));
                }
                mesh.vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        match head.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(parse_err(path, k + 1, format!("bad face index {t:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(parse_err(path, k + 1, "only triangular faces are supported"));
                }
                mesh.faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    check_faces(path, &mesh)?;
    Ok(mesh)
}

fn check_faces(path: &Path, mesh: &MeshFile) -> Result<()> {
    let n = mesh.vertices.len();
    if let Some(f) = mesh.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
        return Err(format_err(path, format!("face {f:?} references a vertex beyond {n}")));
    }
    Ok(())
}

const PLY_HEADER_END: &str = "end_header\n";

pub fn write_ply(path: &Path, mesh: &MeshFile) -> Result<()> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\n{PLY_HEADER_END}",
        mesh.vertices.len(),
        mesh.faces.len()
    )
    .into_bytes();
    for v in &mesh.vertices {
        for c in v {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            let i = i32::try_from(i).map_err(|_| Error::InvalidInput(format!("vertex index {i} exceeds int32")))?;
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

/// Reads the exact layout produced by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<MeshFile> {
    let bytes = read_bytes(path)?;
    let end = bytes
        .windows(PLY_HEADER_END.len())
        .position(|w| w == PLY_HEADER_END.as_bytes())
        .ok_or_else(|| format_err(path, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| format_err(path, "non-ASCII header"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(format_err(path, "missing 'ply' magic"));
    }
    let (mut n_vertices, mut n_faces) = (None, None);
    let mut little = false;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", fmt, _] => little = *fmt == "binary_little_endian",
            ["element", "vertex", n] => n_vertices = n.parse::<usize>().ok(),
            ["element", "face", n] => n_faces = n.parse::<usize>().ok(),
            _ => {}
        }
    }
    if !little {
        return Err(format_err(path, "only binary_little_endian PLY is supported"));
    }
    let (nv, nf) = match (n_vertices, n_faces) {
        (Some(v), Some(f)) => (v, f),
        _ => return Err(format_err(path, "missing vertex or face element")),
    };
    let body = &bytes[end + PLY_HEADER_END.len()..];
    if body.len() != nv * 12 + nf * 13 {
        return Err(format_err(
            path,
            format!("expected {} body bytes, found {}", nv * 12 + nf * 13, body.len()),
        ));
    }
    let f32_at = |o: usize| f32::from_le_bytes([body[o], body[o + 1], body[o + 2], body[o + 3]]);
    let i32_at = |o: usize| i32::from_le_bytes([body[o], body[o + 1], body[o + 2], body[o + 3]]);
    let vertices = (0..nv)
        .map(|k| [f32_at(12 * k) as f64, f32_at(12 * k + 4) as f64, f32_at(12 * k + 8) as f64])
        .collect();
    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let o = nv * 12 + k * 13;
        if body[o] != 3 {
            return Err(format_err(path, format!("face {k} is not a triangle")));
        }
        let mut f = [0usize; 3];
        for (c, slot) in f.iter_mut().enumerate() {
            let i = i32_at(o + 1 + 4 * c);
            *slot = usize::try_from(i).map_err(|_| format_err(path, format!("negative index in face {k}")))?;
        }
        faces.push(f);
    }
    let mesh = MeshFile { vertices, faces };
    check_faces(path, &mesh)?;
    Ok(mesh)
}
