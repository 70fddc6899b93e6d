//! AABB tree over mesh faces for nearest-face queries.
//!
//! Traversal accepts a face only if it is strictly closer, or equally close
//! with a lower face id, and prunes only nodes strictly farther than the
//! current best. That makes results identical to a linear scan over faces
//! in id order, ties included.

use super::closest::closest_point_on_triangle;
use super::TriMesh;
use crate::math::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: range into `order`. Inner: `children` set instead.
    range: Option<(u32, u32)>,
    children: Option<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct MeshBvh {
    nodes: Vec<Node>,
    /// Face ids grouped by leaf, ascending inside each leaf.
    order: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestFace {
    pub face: u32,
    pub point: Vec3,
    pub dist: f64,
}

fn face_bounds(mesh: &TriMesh, face: u32) -> (Vec3, Vec3) {
    let [a, b, c] = mesh.face_vertices(face as usize);
    (
        Vec3::new(a.x.min(b.x).min(c.x), a.y.min(b.y).min(c.y), a.z.min(b.z).min(c.z)),
        Vec3::new(a.x.max(b.x).max(c.x), a.y.max(b.y).max(c.y), a.z.max(b.z).max(c.z)),
    )
}

fn aabb_dist(lo: Vec3, hi: Vec3, p: Vec3) -> f64 {
    let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
    let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
    let dz = (lo.z - p.z).max(0.0).max(p.z - hi.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

impl MeshBvh {
    pub fn build(mesh: &TriMesh) -> MeshBvh {
        assert!(!mesh.faces.is_empty(), "cannot build a BVH over an empty mesh");
        let mut order: Vec<u32> = (0..mesh.faces.len() as u32).collect();
        let mut nodes = Vec::new();
        let n = order.len();
        Self::build_node(mesh, &mut nodes, &mut order, 0, n);
        MeshBvh { nodes, order }
    }

    fn build_node(
        mesh: &TriMesh,
        nodes: &mut Vec<Node>,
        order: &mut [u32],
        start: usize,
        len: usize,
    ) -> u32 {
        let slice = &mut order[start..start + len];
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for &f in slice.iter() {
            let (flo, fhi) = face_bounds(mesh, f);
            lo = Vec3::new(lo.x.min(flo.x), lo.y.min(flo.y), lo.z.min(flo.z));
            hi = Vec3::new(hi.x.max(fhi.x), hi.y.max(fhi.y), hi.z.max(fhi.z));
        }
        let idx = nodes.len() as u32;
        nodes.push(Node { lo, hi, range: None, children: None });

        if len <= LEAF_SIZE {
            slice.sort_unstable();
            nodes[idx as usize].range = Some((start as u32, len as u32));
            return idx;
        }

        // Median split on the longest axis of the centroid bounds.
        let ext = hi - lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        slice.sort_unstable_by(|&a, &b| {
            let ca = mesh.face_centroid(a as usize).get(axis);
            let cb = mesh.face_centroid(b as usize).get(axis);
            ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
        });
        let half = len / 2;
        let l = Self::build_node(mesh, nodes, order, start, half);
        let r = Self::build_node(mesh, nodes, order, start + half, len - half);
        nodes[idx as usize].children = Some((l, r));
        idx
    }

    /// Face nearest to `p`, with the closest surface point and distance.
    pub fn nearest_face(&self, mesh: &TriMesh, p: Vec3) -> NearestFace {
        let mut best = NearestFace { face: u32::MAX, point: Vec3::ZERO, dist: f64::INFINITY };
        self.visit(mesh, 0, p, &mut best);
        debug_assert!(best.face != u32::MAX);
        best
    }

    fn visit(&self, mesh: &TriMesh, node: u32, p: Vec3, best: &mut NearestFace) {
        let n = &self.nodes[node as usize];
        if let Some((start, len)) = n.range {
            for &face in &self.order[start as usize..(start + len) as usize] {
                let [a, b, c] = mesh.face_vertices(face as usize);
                let (point, dist, _) = closest_point_on_triangle(p, a, b, c);
                if dist < best.dist || (dist == best.dist && face < best.face) {
                    *best = NearestFace { face, point, dist };
                }
            }
            return;
        }
        let (l, r) = n.children.expect("inner node must have children");
        let dl = aabb_dist(self.nodes[l as usize].lo, self.nodes[l as usize].hi, p);
        let dr = aabb_dist(self.nodes[r as usize].lo, self.nodes[r as usize].hi, p);
        let (first, dfirst, second, dsecond) = if dl <= dr { (l, dl, r, dr) } else { (r, dr, l, dl) };
        if dfirst <= best.dist {
            self.visit(mesh, first, p, best);
        }
        if dsecond <= best.dist {
            self.visit(mesh, second, p, best);
        }
    }
}

/// Reference implementation: scan every face in id order, keep strict
/// improvements. The BVH must reproduce this exactly.
pub fn nearest_face_linear(mesh: &TriMesh, p: Vec3) -> NearestFace {
    let mut best = NearestFace { face: u32::MAX, point: Vec3::ZERO, dist: f64::INFINITY };
    for face in 0..mesh.faces.len() as u32 {
        let [a, b, c] = mesh.face_vertices(face as usize);
        let (point, dist, _) = closest_point_on_triangle(p, a, b, c);
        if dist < best.dist {
            best = NearestFace { face, point, dist };
        }
    }
    best
}
