//! Quadric-error-metric decimation: greedy minimum-cost edge collapse with
//! boundary penalty planes and a topology guard. Stops early when no valid
//! collapse remains.

use super::{TriMesh, DEGENERATE_AREA};
use crate::math::Vec3;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const BOUNDARY_PENALTY: f64 = 1e3;

/// Symmetric 4x4 quadric, upper triangle:
/// [q00 q01 q02 q03 | q11 q12 q13 | q22 q23 | q33].
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn from_plane(n: Vec3, d: f64, weight: f64) -> Quadric {
        let (a, b, c) = (n.x, n.y, n.z);
        Quadric([
            weight * a * a,
            weight * a * b,
            weight * a * c,
            weight * a * d,
            weight * b * b,
            weight * b * c,
            weight * b * d,
            weight * c * c,
            weight * c * d,
            weight * d * d,
        ])
    }

    fn add(&mut self, o: &Quadric) {
        for (s, v) in self.0.iter_mut().zip(o.0.iter()) {
            *s += v;
        }
    }

    fn error(&self, v: Vec3) -> f64 {
        let q = &self.0;
        let (x, y, z) = (v.x, v.y, v.z);
        q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    /// Minimizer of the quadric, if the 3x3 block is well conditioned.
    fn optimal_point(&self) -> Option<Vec3> {
        let q = &self.0;
        let a = [
            [q[0], q[1], q[2]],
            [q[1], q[4], q[5]],
            [q[2], q[5], q[7]],
        ];
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if det.abs() <= 1e-10 * scale.powi(3).max(1e-30) {
            return None;
        }
        let b = Vec3::new(-q[3], -q[6], -q[8]);
        let inv_det = 1.0 / det;
        let x = (b.x * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (b.y * a[2][2] - a[1][2] * b.z)
            + a[0][2] * (b.y * a[2][1] - a[1][1] * b.z))
            * inv_det;
        let y = (a[0][0] * (b.y * a[2][2] - a[1][2] * b.z)
            - b.x * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * b.z - b.y * a[2][0]))
            * inv_det;
        let z = (a[0][0] * (a[1][1] * b.z - b.y * a[2][1])
            - a[0][1] * (a[1][0] * b.z - b.y * a[2][0])
            + b.x * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
            * inv_det;
        let p = Vec3::new(x, y, z);
        p.is_finite().then_some(p)
    }
}

#[derive(Debug)]
struct Candidate {
    cost: f64,
    v1: u32,
    v2: u32,
    ver1: u32,
    ver2: u32,
    target: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // BinaryHeap is a max-heap; invert so the cheapest collapse pops first,
    // with vertex ids as a deterministic tie break.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.v1.cmp(&self.v1))
            .then(other.v2.cmp(&self.v2))
    }
}

struct State {
    positions: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<u32>>,
    quadrics: Vec<Quadric>,
    versions: Vec<u32>,
    alive_faces: usize,
}

impl State {
    fn face_normal_area(&self, f: [u32; 3]) -> (Vec3, f64) {
        let a = self.positions[f[0] as usize];
        let b = self.positions[f[1] as usize];
        let c = self.positions[f[2] as usize];
        let cross = (b - a).cross(c - a);
        (cross, 0.5 * cross.norm())
    }

    /// Sorted vertex neighbors over alive faces.
    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out = Vec::new();
        for &fi in &self.vertex_faces[v as usize] {
            if !self.face_alive[fi as usize] {
                continue;
            }
            for &u in &self.faces[fi as usize] {
                if u != v {
                    out.push(u);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn shared_faces(&self, v1: u32, v2: u32) -> Vec<u32> {
        let mut out = Vec::new();
        for &fi in &self.vertex_faces[v1 as usize] {
            if self.face_alive[fi as usize] && self.faces[fi as usize].contains(&v2) {
                out.push(fi);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn best_target(&self, v1: u32, v2: u32) -> (Vec3, f64) {
        let mut q = self.quadrics[v1 as usize];
        q.add(&self.quadrics[v2 as usize]);
        let p1 = self.positions[v1 as usize];
        let p2 = self.positions[v2 as usize];
        let mut best = (p1, q.error(p1));
        for cand in [p2, (p1 + p2) * 0.5].into_iter().chain(q.optimal_point()) {
            let e = q.error(cand);
            if e < best.1 {
                best = (cand, e);
            }
        }
        (best.0, best.1.max(0.0))
    }

    fn push_candidate(&self, heap: &mut BinaryHeap<Candidate>, v1: u32, v2: u32) {
        let (a, b) = if v1 < v2 { (v1, v2) } else { (v2, v1) };
        let (target, cost) = self.best_target(a, b);
        heap.push(Candidate {
            cost,
            v1: a,
            v2: b,
            ver1: self.versions[a as usize],
            ver2: self.versions[b as usize],
            target,
        });
    }

    /// Manifold link condition plus a normal-flip and degeneracy check.
    fn collapse_is_valid(&self, v1: u32, v2: u32, target: Vec3) -> bool {
        let shared = self.shared_faces(v1, v2);
        if shared.is_empty() {
            return false;
        }
        let mut opposite: Vec<u32> = shared
            .iter()
            .map(|&fi| {
                *self.faces[fi as usize]
                    .iter()
                    .find(|&&u| u != v1 && u != v2)
                    .expect("triangle has a third vertex")
            })
            .collect();
        opposite.sort_unstable();
        opposite.dedup();
        let n1 = self.neighbors(v1);
        let n2 = self.neighbors(v2);
        let common: Vec<u32> = n1.iter().copied().filter(|u| n2.binary_search(u).is_ok()).collect();
        if common != opposite {
            return false;
        }

        // Surviving faces must keep their orientation and stay non-degenerate.
        let mut survivors: Vec<[u32; 3]> = Vec::new();
        for &v in &[v1, v2] {
            for &fi in &self.vertex_faces[v as usize] {
                if !self.face_alive[fi as usize] || shared.contains(&fi) {
                    continue;
                }
                let f = self.faces[fi as usize];
                let (n_before, _) = self.face_normal_area(f);
                let merged = f.map(|u| if u == v2 { v1 } else { u });
                let moved = merged.map(|u| {
                    if u == v1 {
                        target
                    } else {
                        self.positions[u as usize]
                    }
                });
                let cross = (moved[1] - moved[0]).cross(moved[2] - moved[0]);
                if 0.5 * cross.norm() <= DEGENERATE_AREA {
                    return false;
                }
                if n_before.dot(cross) <= 0.0 {
                    return false;
                }
                let mut key = merged;
                key.sort_unstable();
                survivors.push(key);
            }
        }
        // A tetrahedron collapse would leave two mirror copies of one face;
        // rejecting duplicates keeps closed surfaces closed.
        survivors.sort_unstable();
        if survivors.windows(2).any(|w| w[0] == w[1]) {
            return false;
        }
        true
    }

    fn collapse(&mut self, v1: u32, v2: u32, target: Vec3) {
        let shared = self.shared_faces(v1, v2);
        self.positions[v1 as usize] = target;
        let q2 = self.quadrics[v2 as usize];
        self.quadrics[v1 as usize].add(&q2);

        for &fi in &shared {
            if self.face_alive[fi as usize] {
                self.face_alive[fi as usize] = false;
                self.alive_faces -= 1;
            }
        }
        let moved: Vec<u32> = self.vertex_faces[v2 as usize]
            .iter()
            .copied()
            .filter(|&fi| self.face_alive[fi as usize])
            .collect();
        for &fi in &moved {
            for u in self.faces[fi as usize].iter_mut() {
                if *u == v2 {
                    *u = v1;
                }
            }
        }
        let mut merged: Vec<u32> = self.vertex_faces[v1 as usize]
            .iter()
            .chain(moved.iter())
            .copied()
            .filter(|&fi| self.face_alive[fi as usize])
            .collect();
        merged.sort_unstable();
        merged.dedup();
        self.vertex_faces[v1 as usize] = merged;
        self.vertex_faces[v2 as usize].clear();
        self.versions[v1 as usize] += 1;
        self.versions[v2 as usize] += 1;
    }
}

/// Decimates to at most `target_faces` faces where the topology guard
/// allows; the result may have more faces if no valid collapse remains.
pub fn decimate_qem(mesh: &TriMesh, target_faces: usize) -> TriMesh {
    if mesh.faces.len() <= target_faces {
        return mesh.clone();
    }

    let nv = mesh.vertices.len();
    let mut st = State {
        positions: mesh.vertices.clone(),
        faces: mesh.faces.clone(),
        face_alive: vec![true; mesh.faces.len()],
        vertex_faces: vec![Vec::new(); nv],
        quadrics: vec![Quadric::default(); nv],
        versions: vec![0; nv],
        alive_faces: mesh.faces.len(),
    };
    for (fi, f) in mesh.faces.iter().enumerate() {
        for &v in f {
            st.vertex_faces[v as usize].push(fi as u32);
        }
    }

    // Face plane quadrics, area weighted.
    for (fi, f) in mesh.faces.iter().enumerate() {
        let (cross, area) = st.face_normal_area(*f);
        if area <= DEGENERATE_AREA {
            continue;
        }
        let n = cross * (1.0 / cross.norm());
        let d = -n.dot(st.positions[f[0] as usize]);
        let q = Quadric::from_plane(n, d, area);
        for &v in &mesh.faces[fi] {
            st.quadrics[v as usize].add(&q);
        }
    }

    // Boundary edges get a strong perpendicular penalty plane.
    let mut edge_count: std::collections::HashMap<(u32, u32), (u32, u32)> =
        std::collections::HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let e = edge_count.entry(key).or_insert((0, fi as u32));
            e.0 += 1;
        }
    }
    let mut edges: Vec<((u32, u32), (u32, u32))> = edge_count.into_iter().collect();
    edges.sort_unstable();
    for &((a, b), (count, fi)) in &edges {
        if count != 1 {
            continue;
        }
        let pa = st.positions[a as usize];
        let pb = st.positions[b as usize];
        let edge_dir = pb - pa;
        let (cross, _) = st.face_normal_area(mesh.faces[fi as usize]);
        if let Some(n) = edge_dir.cross(cross).normalized() {
            let q = Quadric::from_plane(n, -n.dot(pa), BOUNDARY_PENALTY * edge_dir.norm_sq());
            st.quadrics[a as usize].add(&q);
            st.quadrics[b as usize].add(&q);
        }
    }

    let mut heap = BinaryHeap::new();
    for &((a, b), _) in &edges {
        st.push_candidate(&mut heap, a, b);
    }

    while st.alive_faces > target_faces {
        let Some(cand) = heap.pop() else {
            break;
        };
        if st.versions[cand.v1 as usize] != cand.ver1
            || st.versions[cand.v2 as usize] != cand.ver2
        {
            continue;
        }
        if !st.collapse_is_valid(cand.v1, cand.v2, cand.target) {
            continue;
        }
        st.collapse(cand.v1, cand.v2, cand.target);
        for u in st.neighbors(cand.v1) {
            st.push_candidate(&mut heap, cand.v1, u);
        }
    }

    // Compact the surviving mesh.
    let mut remap = vec![u32::MAX; nv];
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (fi, f) in st.faces.iter().enumerate() {
        if !st.face_alive[fi] {
            continue;
        }
        let mut key = *f;
        key.sort_unstable();
        assert!(seen.insert(key), "duplicate face after decimation");
        let mut out = [0u32; 3];
        for (slot, &v) in out.iter_mut().zip(f) {
            if remap[v as usize] == u32::MAX {
                remap[v as usize] = vertices.len() as u32;
                vertices.push(st.positions[v as usize]);
            }
            *slot = remap[v as usize];
        }
        faces.push(out);
    }
    let (out, dropped) = TriMesh::from_parts(vertices, faces).expect("decimated mesh is valid");
    debug_assert_eq!(dropped, 0, "decimation must not produce degenerate faces");
    out
}
