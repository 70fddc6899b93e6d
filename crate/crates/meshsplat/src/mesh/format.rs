//! Mesh file formats: OBJ (v/f records, 1-based indices, polygons fan
//! triangulated) and PLY (ASCII or binary little-endian).

use super::TriMesh;
use crate::math::Vec3;
use crate::ply::{self, Column, Element, Format, Ply, Property, ScalarType};
use crate::{Error, Result};
use std::io::{BufWriter, Write};
use std::path::Path;

/// Loads a mesh, picking the format from the file extension. Returns the
/// mesh and the number of degenerate faces dropped.
pub fn load_mesh(path: &Path) -> Result<(TriMesh, usize)> {
    match extension(path)?.as_str() {
        "obj" => load_obj(path),
        "ply" => load_ply(path),
        other => Err(Error::format(path, format!("unsupported mesh format .{other}"))),
    }
}

/// Saves a mesh; `.obj` writes text, `.ply` writes binary little-endian.
pub fn save_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match extension(path)?.as_str() {
        "obj" => save_obj(path, mesh),
        "ply" => save_ply(path, mesh),
        other => Err(Error::format(path, format!("unsupported mesh format .{other}"))),
    }
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::format(path, "missing file extension"))
}

fn load_obj(path: &Path) -> Result<(TriMesh, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        let bad = |msg: String| Error::format(path, format!("line {}: {msg}", lineno + 1));
        match toks.next() {
            Some("v") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    *c = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad("malformed vertex".into()))?;
                }
                vertices.push(Vec3::new(coord[0], coord[1], coord[2]));
            }
            Some("f") => {
                let mut idx: Vec<u32> = Vec::new();
                for tok in toks {
                    // "i", "i/t", "i//n", "i/t/n"; indices are 1-based,
                    // negative counts from the end.
                    let first = tok.split('/').next().unwrap_or("");
                    let raw: i64 =
                        first.parse().map_err(|_| bad(format!("bad face index {tok:?}")))?;
                    let resolved = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        return Err(bad("face index 0 is invalid".into()));
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(bad(format!("face index {raw} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(bad("face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            // Normals, texcoords, groups, materials, comments: skipped.
            _ => {}
        }
    }
    TriMesh::from_parts(vertices, faces)
}

fn save_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z).map_err(io_err)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn load_ply(path: &Path) -> Result<(TriMesh, usize)> {
    let data = ply::read_ply(path)?;
    let vertex = data
        .element("vertex")
        .ok_or_else(|| Error::format(path, "missing vertex element"))?;
    let coord = |name: &str| {
        vertex
            .scalar_column(name)
            .ok_or_else(|| Error::format(path, format!("missing vertex property {name}")))
    };
    let (xs, ys, zs) = (coord("x")?, coord("y")?, coord("z")?);
    let vertices: Vec<Vec3> = xs
        .iter()
        .zip(ys)
        .zip(zs)
        .map(|((&x, &y), &z)| Vec3::new(x, y, z))
        .collect();

    let mut faces: Vec<[u32; 3]> = Vec::new();
    if let Some(face_el) = data.element("face") {
        let lists = face_el
            .property("vertex_indices")
            .or_else(|| face_el.property("vertex_index"))
            .ok_or_else(|| Error::format(path, "face element lacks vertex indices"))?;
        let Column::List(_, _, rows) = &lists.column else {
            return Err(Error::format(path, "vertex indices must be a list property"));
        };
        for row in rows {
            if row.len() < 3 {
                return Err(Error::format(path, "face with fewer than 3 vertices"));
            }
            let idx: Vec<u32> = row.iter().map(|&v| v as u32).collect();
            for k in 1..idx.len() - 1 {
                faces.push([idx[0], idx[k], idx[k + 1]]);
            }
        }
    }
    TriMesh::from_parts(vertices, faces)
}

fn save_ply(path: &Path, mesh: &TriMesh) -> Result<()> {
    let ply = Ply {
        format: Format::BinaryLittleEndian,
        elements: vec![
            Element {
                name: "vertex".into(),
                count: mesh.vertices.len(),
                properties: vec![
                    Property::scalar(
                        "x",
                        ScalarType::Float,
                        mesh.vertices.iter().map(|v| v.x as f32 as f64).collect(),
                    ),
                    Property::scalar(
                        "y",
                        ScalarType::Float,
                        mesh.vertices.iter().map(|v| v.y as f32 as f64).collect(),
                    ),
                    Property::scalar(
                        "z",
                        ScalarType::Float,
                        mesh.vertices.iter().map(|v| v.z as f32 as f64).collect(),
                    ),
                ],
            },
            Element {
                name: "face".into(),
                count: mesh.faces.len(),
                properties: vec![Property {
                    name: "vertex_indices".into(),
                    column: Column::List(
                        ScalarType::UChar,
                        ScalarType::Int,
                        mesh.faces
                            .iter()
                            .map(|f| f.iter().map(|&i| i as f64).collect())
                            .collect(),
                    ),
                }],
            },
        ],
    };
    ply::write_ply(path, &ply)
}
