//! Triangle mesh: storage, per-face geometry, nearest-surface queries,
//! decimation, depth rendering, OBJ/PLY formats.

pub mod bvh;
pub mod closest;
pub mod decimate;
pub mod depth;
pub mod format;
pub mod shapes;

pub use bvh::MeshBvh;
pub use closest::{closest_point_on_triangle, Region};
pub use decimate::decimate_qem;
pub use depth::{render_depth, DepthMap};
pub use format::{load_mesh, save_mesh};

use crate::math::Vec3;
use crate::{Error, Result};

/// Faces with at most this area are dropped as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Unit normals, oriented by face winding.
    pub face_normals: Vec<Vec3>,
}

impl TriMesh {
    /// Builds a mesh from raw vertices and faces. Degenerate faces
    /// (area <= `DEGENERATE_AREA`) are dropped; the second return value is
    /// how many were dropped.
    pub fn from_parts(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<(TriMesh, usize)> {
        let n = vertices.len() as u32;
        for v in &vertices {
            if !v.is_finite() {
                return Err(Error::Invalid("non-finite vertex position".into()));
            }
        }
        let mut kept = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut dropped = 0usize;
        for f in faces {
            for &i in &f {
                if i >= n {
                    return Err(Error::Invalid(format!(
                        "face index {i} out of range (mesh has {n} vertices)"
                    )));
                }
            }
            let [a, b, c] = [
                vertices[f[0] as usize],
                vertices[f[1] as usize],
                vertices[f[2] as usize],
            ];
            let cross = (b - a).cross(c - a);
            let area = 0.5 * cross.norm();
            if area <= DEGENERATE_AREA {
                dropped += 1;
                continue;
            }
            kept.push(f);
            normals.push(cross * (1.0 / cross.norm()));
        }
        Ok((TriMesh { vertices, faces: kept, face_normals: normals }, dropped))
    }

    pub fn face_vertices(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn face_centroid(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.face_vertices(face);
        (a + b + c) * (1.0 / 3.0)
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_vertices(face);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Mean length of the three edges of one face.
    pub fn face_mean_edge_length(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_vertices(face);
        ((b - a).norm() + (c - b).norm() + (a - c).norm()) / 3.0
    }

    /// Axis-aligned bounds; `None` for an empty vertex set.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices[1..] {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        Some((lo, hi))
    }
}
