//! Mesh depth maps: perspective-correct z-buffer rasterization sampled at
//! pixel centers. Pixels with no surface keep a +inf sentinel.

use super::TriMesh;
use crate::math::{Camera, Vec2, Vec3, Z_NEAR};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    /// Row-major camera-space depth; `f64::INFINITY` where no surface.
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn empty(width: u32, height: u32) -> DepthMap {
        DepthMap { width, height, data: vec![f64::INFINITY; (width * height) as usize] }
    }

    pub fn at(&self, px: u32, py: u32) -> f64 {
        self.data[(py * self.width + px) as usize]
    }

    /// All pixels are +inf (no occluder anywhere).
    pub fn all_infinite(&self) -> bool {
        self.data.iter().all(|d| d.is_infinite())
    }
}

/// Renders the mesh depth as seen by `camera`. Depth is camera-space z of
/// the nearest surface through each pixel center.
pub fn render_depth(mesh: &TriMesh, camera: &Camera) -> DepthMap {
    let (w, h) = (camera.width, camera.height);
    let mut map = DepthMap::empty(w, h);

    // Clip each face against the near plane, project, and collect screen
    // triangles with camera-space z per vertex.
    let mut screen_tris: Vec<[(Vec2, f64); 3]> = Vec::new();
    for face in 0..mesh.faces.len() {
        let cam_pts = mesh.face_vertices(face).map(|v| camera.world_to_camera(v));
        for tri in clip_near(&cam_pts) {
            let proj = tri.map(|p| {
                let (u, v, z) = camera
                    .project_point(p)
                    .expect("clipped vertices are in front of the near plane");
                (Vec2::new(u, v), z)
            });
            screen_tris.push(proj);
        }
    }

    // Rows are independent; each row scans every screen triangle.
    map.data
        .par_chunks_mut(w as usize)
        .enumerate()
        .for_each(|(py, row)| {
            let sy = py as f64 + 0.5;
            for tri in &screen_tris {
                let [(a, za), (b, zb), (c, zc)] = *tri;
                let area2 = edge(a, b, c);
                if area2 == 0.0 {
                    continue;
                }
                let min_y = a.y.min(b.y).min(c.y);
                let max_y = a.y.max(b.y).max(c.y);
                if sy < min_y || sy > max_y {
                    continue;
                }
                let min_x = a.x.min(b.x).min(c.x);
                let max_x = a.x.max(b.x).max(c.x);
                let px_lo = ((min_x - 0.5).ceil().max(0.0)) as u32;
                let px_hi = ((max_x - 0.5).floor()).min(w as f64 - 1.0);
                if px_hi < 0.0 {
                    continue;
                }
                let inv_area = 1.0 / area2;
                let (iza, izb, izc) = (1.0 / za, 1.0 / zb, 1.0 / zc);
                for px in px_lo..=px_hi as u32 {
                    let p = Vec2::new(px as f64 + 0.5, sy);
                    // Signed areas; all on the same side (inclusive) = inside.
                    let wa = edge(b, c, p) * inv_area;
                    let wb = edge(c, a, p) * inv_area;
                    let wc = edge(a, b, p) * inv_area;
                    if wa < 0.0 || wb < 0.0 || wc < 0.0 {
                        continue;
                    }
                    // 1/z interpolates linearly in screen space.
                    let inv_z = wa * iza + wb * izb + wc * izc;
                    let z = 1.0 / inv_z;
                    let cell = &mut row[px as usize];
                    if z < *cell {
                        *cell = z;
                    }
                }
            }
        });
    map
}

fn edge(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Sutherland-Hodgman clip of a camera-space triangle against z = Z_NEAR,
/// returning 0..2 triangles.
fn clip_near(tri: &[Vec3; 3]) -> Vec<[Vec3; 3]> {
    let mut poly: Vec<Vec3> = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = tri[i];
        let prev = tri[(i + 2) % 3];
        let cur_in = cur.z > Z_NEAR;
        let prev_in = prev.z > Z_NEAR;
        if cur_in != prev_in {
            let t = (Z_NEAR - prev.z) / (cur.z - prev.z);
            poly.push(prev + (cur - prev) * t);
        }
        if cur_in {
            poly.push(cur);
        }
    }
    match poly.len() {
        0..=2 => Vec::new(),
        n => (1..n - 1).map(|k| [poly[0], poly[k], poly[k + 1]]).collect(),
    }
}

/// Reference depth through one pixel center by intersecting every face
/// (Moller-Trumbore). Used by tests as an oracle.
pub fn raycast_depth(mesh: &TriMesh, camera: &Camera, px: u32, py: u32) -> f64 {
    let dir_cam = camera.pixel_ray(px, py);
    let origin = camera.center();
    let dir = camera.r_cw.transpose().mul_vec(dir_cam);
    let mut best = f64::INFINITY;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_vertices(f);
        let e1 = b - a;
        let e2 = c - a;
        let pvec = dir.cross(e2);
        let det = e1.dot(pvec);
        if det.abs() < 1e-14 {
            continue;
        }
        let inv_det = 1.0 / det;
        let tvec = origin - a;
        let u = tvec.dot(pvec) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let qvec = tvec.cross(e1);
        let v = dir.dot(qvec) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            continue;
        }
        let t = e2.dot(qvec) * inv_det;
        // dir has unit camera-space z, so t equals camera-space depth.
        if t > Z_NEAR && t < best {
            best = t;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use crate::mesh::shapes;
    use crate::mesh::TriMesh;

    fn straight_camera(w: u32, h: u32) -> Camera {
        Camera {
            fx: 60.0,
            fy: 60.0,
            cx: w as f64 * 0.5,
            cy: h as f64 * 0.5,
            width: w,
            height: h,
            r_cw: Mat3::identity(),
            t_cw: Vec3::ZERO,
        }
    }

    fn big_quad(z: f64) -> TriMesh {
        let s = 10.0;
        TriMesh::from_parts(
            vec![
                Vec3::new(-s, -s, z),
                Vec3::new(s, -s, z),
                Vec3::new(s, s, z),
                Vec3::new(-s, s, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
        .0
    }

    #[test]
    fn full_screen_quad_fills_depth() {
        let cam = straight_camera(32, 32);
        let map = render_depth(&big_quad(5.0), &cam);
        assert!(map.data.iter().all(|&d| (d - 5.0).abs() < 1e-9));
    }

    #[test]
    fn empty_mesh_leaves_sentinels() {
        let cam = straight_camera(16, 16);
        let mesh = TriMesh { vertices: vec![], faces: vec![], face_normals: vec![] };
        assert!(render_depth(&mesh, &cam).all_infinite());
    }

    #[test]
    fn nearer_surface_wins_zbuffer() {
        let cam = straight_camera(32, 32);
        let mut mesh = big_quad(5.0);
        let far = big_quad(9.0);
        let off = mesh.vertices.len() as u32;
        mesh.vertices.extend(far.vertices);
        mesh.faces.extend(far.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        mesh.face_normals.extend(far.face_normals);
        let map = render_depth(&mesh, &cam);
        assert!(map.data.iter().all(|&d| (d - 5.0).abs() < 1e-9));

        // Adding an occluder never increases any depth.
        let just_far = render_depth(&big_quad(9.0), &cam);
        for (with_near, far_only) in map.data.iter().zip(just_far.data.iter()) {
            assert!(with_near <= far_only);
        }
    }

    #[test]
    fn partial_coverage_leaves_background_infinite() {
        let cam = straight_camera(32, 32);
        let small = TriMesh::from_parts(
            vec![
                Vec3::new(-0.2, -0.2, 4.0),
                Vec3::new(0.2, -0.2, 4.0),
                Vec3::new(0.2, 0.2, 4.0),
                Vec3::new(-0.2, 0.2, 4.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
        .0;
        let map = render_depth(&small, &cam);
        assert!((map.at(16, 16) - 4.0).abs() < 1e-9, "center covered");
        assert!(map.at(0, 0).is_infinite(), "corner uncovered");
    }

    #[test]
    fn triangle_crossing_near_plane_is_clipped_not_dropped() {
        let cam = straight_camera(32, 32);
        // One vertex far behind the camera; the visible part must still
        // rasterize finite depths.
        let mesh = TriMesh::from_parts(
            vec![
                Vec3::new(0.0, -1.0, -2.0),
                Vec3::new(0.5, 1.0, 3.0),
                Vec3::new(-0.5, 1.0, 3.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
        .0;
        let map = render_depth(&mesh, &cam);
        assert!(map.data.iter().any(|d| d.is_finite()));
        assert!(map.data.iter().all(|&d| d > Z_NEAR * 0.99));
    }

    #[test]
    fn matches_raycast_oracle_away_from_silhouettes() {
        let mesh = shapes::icosphere(0.8, 2);
        let cam = Camera::look_at(Vec3::new(0.0, -2.5, 1.2), Vec3::ZERO, 48.0, 48.0, 48, 48);
        let map = render_depth(&mesh, &cam);
        let oracle: Vec<f64> = (0..48 * 48)
            .map(|i| raycast_depth(&mesh, &cam, i % 48, i / 48))
            .collect();
        let at = |x: i32, y: i32| oracle[(y * 48 + x) as usize];
        let mut checked = 0;
        for py in 0..48i32 {
            for px in 0..48i32 {
                let want = at(px, py);
                // Skip pixels whose 3x3 oracle neighborhood is not flat:
                // those sit on a silhouette where half-pixel placement
                // legitimately differs.
                let mut flat = true;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (px + dx, py + dy);
                        if !(0..48).contains(&nx) || !(0..48).contains(&ny) {
                            flat = false;
                            continue;
                        }
                        let nd = at(nx, ny);
                        if (nd - want).abs() > 0.05 || nd.is_infinite() != want.is_infinite() {
                            flat = false;
                        }
                    }
                }
                if !flat {
                    continue;
                }
                checked += 1;
                let got = map.at(px as u32, py as u32);
                if want.is_infinite() {
                    assert!(got.is_infinite(), "pixel ({px},{py}): got {got}, oracle inf");
                } else {
                    assert!(
                        (got - want).abs() < 1e-4,
                        "pixel ({px},{py}): got {got}, oracle {want}"
                    );
                }
            }
        }
        assert!(checked > 500, "oracle comparison covered too few pixels: {checked}");
    }
}
