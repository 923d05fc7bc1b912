use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::surface::TriangleMesh;

const STL_HEADER: usize = 80;
const STL_RECORD: usize = 50;

fn stl_err(reason: impl Into<String>) -> Error {
    Error::Format { format: "STL", reason: reason.into() }
}

fn ply_err(reason: impl Into<String>) -> Error {
    Error::Format { format: "PLY", reason: reason.into() }
}

fn finish<T: Real>(vertices: Vec<Point3<T>>, triangles: Vec<[usize; 3]>, err: fn(String) -> Error) -> Result<TriangleMesh<T>> {
    let mesh = TriangleMesh::new(vertices, triangles)?;
    if mesh.is_empty() {
        return Err(err("no non-degenerate triangles".into()));
    }
    Ok(mesh)
}

/// Parses a binary STL, welding vertices whose coordinates are bitwise equal.
pub fn read_stl<T: Real>(bytes: &[u8]) -> Result<TriangleMesh<T>> {
    if bytes.len() < STL_HEADER + 4 {
        return Err(stl_err(format!("{} bytes is shorter than the 84-byte preamble", bytes.len())));
    }
    let count = u32::from_le_bytes(bytes[STL_HEADER..STL_HEADER + 4].try_into().expect("4 bytes")) as u64;
    if count == 0 {
        return Err(stl_err("zero triangles"));
    }
    let expected = (STL_HEADER + 4) as u64 + count * STL_RECORD as u64;
    if bytes.len() as u64 != expected {
        return Err(stl_err(format!(
            "header declares {count} triangles ({expected} bytes) but the file has {} bytes",
            bytes.len()
        )));
    }
    let mut index: HashMap<[u32; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(count as usize);
    for rec in bytes[STL_HEADER + 4..].chunks_exact(STL_RECORD) {
        let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().expect("4 bytes"));
        let mut tri = [0usize; 3];
        for (c, slot) in tri.iter_mut().enumerate() {
            let base = 12 + 12 * c;
            let xyz = [f(base), f(base + 4), f(base + 8)];
            if xyz.iter().any(|v| !v.is_finite()) {
                return Err(stl_err("non-finite vertex coordinate"));
            }
            *slot = *index.entry(xyz.map(f32::to_bits)).or_insert_with(|| {
                vertices.push(Point3::new(T::lit(xyz[0] as f64), T::lit(xyz[1] as f64), T::lit(xyz[2] as f64)));
                vertices.len() - 1
            });
        }
        triangles.push(tri);
    }
    finish(vertices, triangles, stl_err)
}

/// Serializes to binary STL (coordinates rounded to `f32`).
pub fn write_stl<T: Real>(mesh: &TriangleMesh<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(STL_HEADER + 4 + STL_RECORD * mesh.triangles().len());
    let mut header = [0u8; STL_HEADER];
    let tag = b"binary STL written by ctrecon";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangles().len() as u32).to_le_bytes());
    let v = mesh.vertices();
    for t in mesh.triangles() {
        let n = (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]]));
        let len = n.norm();
        let n = if len > T::zero() { n / len } else { n };
        for x in n.iter().chain(t.iter().flat_map(|&i| v[i].coords.iter())) {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

#[derive(Debug)]
enum Property {
    Scalar(String),
    List(String),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

const PLY_TYPES: [&str; 16] = [
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double", "int8", "uint8", "int16", "uint16",
    "int32", "uint32", "float32", "float64",
];

fn parse_ply_header(text: &str) -> Result<(Vec<Element>, &str)> {
    let mut lines = text.split_inclusive('\n');
    let mut consumed = 0;
    let mut next = || {
        lines.next().map(|l| {
            consumed += l.len();
            l.trim()
        })
    };
    if next() != Some("ply") {
        return Err(ply_err("missing `ply` magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    loop {
        let line = next().ok_or_else(|| ply_err("header has no end_header"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", "1.0"] => format_ok = true,
            ["format", other, ..] => return Err(ply_err(format!("unsupported format `{other}`; only ascii 1.0 is read"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: (*name).to_string(),
                count: count.parse().map_err(|_| ply_err(format!("bad element count `{count}`")))?,
                properties: Vec::new(),
            }),
            ["property", "list", ct, it, name] if PLY_TYPES.contains(ct) && PLY_TYPES.contains(it) => elements
                .last_mut()
                .ok_or_else(|| ply_err("property before any element"))?
                .properties
                .push(Property::List((*name).to_string())),
            ["property", ty, name] if PLY_TYPES.contains(ty) => elements
                .last_mut()
                .ok_or_else(|| ply_err("property before any element"))?
                .properties
                .push(Property::Scalar((*name).to_string())),
            _ => return Err(ply_err(format!("unrecognized header line `{line}`"))),
        }
    }
    if !format_ok {
        return Err(ply_err("missing `format ascii 1.0` line"));
    }
    Ok((elements, &text[consumed..]))
}

/// Parses an ASCII PLY with `vertex` (x, y, z) and `face` (vertex index list)
/// elements. Polygons are fan-triangulated; other elements and properties are
/// skipped.
pub fn read_ply<T: Real>(text: &str) -> Result<TriangleMesh<T>> {
    let (elements, body) = parse_ply_header(text)?;
    let mut tokens = body.split_whitespace();
    let mut take = |what: &str| tokens.next().ok_or_else(|| ply_err(format!("body ends inside {what}")));
    let mut vertices: Vec<Point3<T>> = Vec::new();
    let mut triangles = Vec::new();
    let mut saw_vertex = false;
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            saw_vertex = true;
            for axis in ["x", "y", "z"] {
                if !el.properties.iter().any(|p| matches!(p, Property::Scalar(n) if n == axis)) {
                    return Err(ply_err(format!("vertex element lacks property `{axis}`")));
                }
            }
        }
        if el.properties.is_empty() {
            continue;
        }
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            for p in &el.properties {
                match p {
                    Property::Scalar(name) => {
                        let t = take(&el.name)?;
                        let v: f64 = t.parse().map_err(|_| ply_err(format!("bad number `{t}`")))?;
                        if is_vertex {
                            if let Some(a) = ["x", "y", "z"].iter().position(|x| x == name) {
                                if !v.is_finite() {
                                    return Err(ply_err("non-finite vertex coordinate"));
                                }
                                xyz[a] = v;
                            }
                        }
                    }
                    Property::List(name) => {
                        let t = take(&el.name)?;
                        let n: usize = t.parse().map_err(|_| ply_err(format!("bad list length `{t}`")))?;
                        let mut idx = Vec::with_capacity(n.min(64));
                        for _ in 0..n {
                            let t = take(&el.name)?;
                            idx.push(t.parse::<usize>().map_err(|_| ply_err(format!("bad vertex index `{t}`")))?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(ply_err(format!("face with {n} vertices")));
                            }
                            for k in 1..n - 1 {
                                triangles.push([idx[0], idx[k], idx[k + 1]]);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(Point3::new(T::lit(xyz[0]), T::lit(xyz[1]), T::lit(xyz[2])));
            }
        }
    }
    if !saw_vertex {
        return Err(ply_err("no vertex element"));
    }
    if triangles.is_empty() {
        return Err(ply_err("zero triangles"));
    }
    if let Some(bad) = triangles.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(ply_err(format!("face index {bad} beyond {} vertices", vertices.len())));
    }
    finish(vertices, triangles, ply_err)
}

/// Serializes to ASCII PLY. Coordinates are printed in shortest round-trip
/// form, so `read_ply(write_ply(m))` reproduces an `f64` mesh exactly.
pub fn write_ply<T: Real>(mesh: &TriangleMesh<T>) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64());
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

fn is_ply(path: &Path) -> Option<bool> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "ply" => Some(true),
        "stl" => Some(false),
        _ => None,
    }
}

/// Reads an STL or PLY mesh, chosen by extension (or by the `ply` magic when
/// the extension is neither).
pub fn read_mesh<T: Real>(path: &Path) -> Result<TriangleMesh<T>> {
    let bytes = fs::read(path)?;
    let ply = is_ply(path).unwrap_or_else(|| bytes.starts_with(b"ply\n") || bytes.starts_with(b"ply\r\n"));
    if ply {
        let text = std::str::from_utf8(&bytes).map_err(|_| ply_err("file is not UTF-8 text"))?;
        read_ply(text)
    } else {
        read_stl(&bytes)
    }
}

/// Writes binary STL for `.stl` paths and ASCII PLY for `.ply` paths.
pub fn write_mesh<T: Real>(mesh: &TriangleMesh<T>, path: &Path) -> Result<()> {
    match is_ply(path) {
        Some(true) => fs::write(path, write_ply(mesh))?,
        Some(false) => fs::write(path, write_stl(mesh))?,
        None => {
            return Err(Error::InvalidParameter(format!(
                "cannot infer mesh format of {}; use .stl or .ply",
                path.display()
            )))
        }
    }
    Ok(())
}
