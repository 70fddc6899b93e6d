//! Splat parameter storage, covariance construction, EWA screen projection,
//! and tight/loose mesh binding.

use crate::math::sh::{basis_count, eval_sh};
use crate::math::{quat_to_rotmat, sigmoid, Camera, Mat2, Mat3, Quat, Vec2, Vec3, Z_NEAR};
use crate::mesh::{MeshBvh, TriMesh};

/// A tight splat sits within `d_th` of its bound face and is subject to the
/// mesh-alignment regularizers; a loose one is trained by image loss alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplatClass {
    Loose = 0,
    Tight = 1,
}

/// Structure-of-arrays splat storage. Scales live in log domain, opacity in
/// logit domain; `sh` is channel-major per splat with stride
/// `3 * basis_count(sh_degree)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatSet {
    pub positions: Vec<Vec3>,
    pub raw_scales: Vec<Vec3>,
    pub raw_opacities: Vec<f64>,
    pub rotations: Vec<Quat>,
    pub sh_degree: usize,
    pub sh: Vec<f64>,
    pub bound_faces: Vec<Option<u32>>,
    pub classes: Vec<SplatClass>,
    pub ever_visible: Vec<bool>,
}

impl SplatSet {
    pub fn new(sh_degree: usize) -> SplatSet {
        SplatSet {
            positions: Vec::new(),
            raw_scales: Vec::new(),
            raw_opacities: Vec::new(),
            rotations: Vec::new(),
            sh_degree,
            sh: Vec::new(),
            bound_faces: Vec::new(),
            classes: Vec::new(),
            ever_visible: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Coefficients per splat in `sh`.
    pub fn sh_stride(&self) -> usize {
        3 * basis_count(self.sh_degree)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        position: Vec3,
        raw_scale: Vec3,
        raw_opacity: f64,
        rotation: Quat,
        sh: &[f64],
        bound_face: Option<u32>,
        class: SplatClass,
    ) {
        assert_eq!(sh.len(), self.sh_stride(), "sh coefficient count");
        self.positions.push(position);
        self.raw_scales.push(raw_scale);
        self.raw_opacities.push(raw_opacity);
        self.rotations.push(rotation);
        self.sh.extend_from_slice(sh);
        self.bound_faces.push(bound_face);
        self.classes.push(class);
        self.ever_visible.push(false);
    }

    pub fn sh_coeffs(&self, i: usize) -> &[f64] {
        let s = self.sh_stride();
        &self.sh[i * s..(i + 1) * s]
    }

    pub fn sh_coeffs_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.sh_stride();
        &mut self.sh[i * s..(i + 1) * s]
    }

    /// Activated (geometric) scale.
    pub fn scale(&self, i: usize) -> Vec3 {
        self.raw_scales[i].map(f64::exp)
    }

    /// Activated opacity in (0,1).
    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.raw_opacities[i])
    }

    pub fn rotation_matrix(&self, i: usize) -> Mat3 {
        quat_to_rotmat(self.rotations[i].normalized())
    }

    /// Index of the smallest activated scale axis; ties pick the lowest axis.
    pub fn normal_axis(&self, i: usize) -> usize {
        let s = self.raw_scales[i];
        let mut axis = 0;
        for k in 1..3 {
            if s.get(k) < s.get(axis) {
                axis = k;
            }
        }
        axis
    }

    /// Splat normal: the rotated minimum-scale axis. Sign is arbitrary.
    pub fn normal(&self, i: usize) -> Vec3 {
        self.rotation_matrix(i).col(self.normal_axis(i))
    }

    pub fn covariance(&self, i: usize) -> Mat3 {
        build_covariance(self.raw_scales[i], self.rotations[i])
    }

    /// Keeps exactly the splats whose mask entry is true, preserving order.
    pub fn retain(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len(), "mask length");
        let stride = self.sh_stride();
        let mut w = 0;
        for r in 0..keep.len() {
            if !keep[r] {
                continue;
            }
            if r != w {
                self.positions[w] = self.positions[r];
                self.raw_scales[w] = self.raw_scales[r];
                self.raw_opacities[w] = self.raw_opacities[r];
                self.rotations[w] = self.rotations[r];
                self.bound_faces[w] = self.bound_faces[r];
                self.classes[w] = self.classes[r];
                self.ever_visible[w] = self.ever_visible[r];
                self.sh.copy_within(r * stride..(r + 1) * stride, w * stride);
            }
            w += 1;
        }
        self.positions.truncate(w);
        self.raw_scales.truncate(w);
        self.raw_opacities.truncate(w);
        self.rotations.truncate(w);
        self.bound_faces.truncate(w);
        self.classes.truncate(w);
        self.ever_visible.truncate(w);
        self.sh.truncate(w * stride);
    }
}

/// World-space covariance R diag(exp(raw)^2) R^T from raw parameters.
pub fn build_covariance(raw_scale: Vec3, q: Quat) -> Mat3 {
    let r = quat_to_rotmat(q.normalized());
    let d = Mat3::diagonal((raw_scale * 2.0).map(f64::exp));
    r.mul_mat(d.mul_mat(r.transpose()))
}

/// Screen-space footprint of one splat for one camera. `px_lo..=px_hi` x
/// `py_lo..=py_hi` is the image-clamped pixel box of the 3 sigma extent; the
/// box test is part of the blending semantics shared by both renderers.
#[derive(Debug, Clone)]
pub struct ProjectedSplat {
    pub splat: u32,
    /// Projected center in pixel coordinates.
    pub mean: Vec2,
    /// 2D covariance after low-pass dilation, px^2.
    pub cov: Mat2,
    pub cov_inv: Mat2,
    /// Camera-space z of the center.
    pub depth: f64,
    pub rgb: [f64; 3],
    pub opacity: f64,
    /// 3 sigma of the major axis, pixels.
    pub radius: f64,
    pub px_lo: u32,
    pub px_hi: u32,
    pub py_lo: u32,
    pub py_hi: u32,
}

/// Low-pass dilation added to both eigenvalues of the projected covariance.
pub const COV_DILATION: f64 = 0.3;

impl ProjectedSplat {
    /// Whether the pixel lies inside the splat's screen bounding box.
    pub fn covers(&self, px: u32, py: u32) -> bool {
        px >= self.px_lo && px <= self.px_hi && py >= self.py_lo && py <= self.py_hi
    }
}

/// EWA projection of one splat. None when the center is behind the near
/// plane or the 3 sigma footprint misses the image.
pub fn project_splat(set: &SplatSet, i: usize, cam: &Camera) -> Option<ProjectedSplat> {
    let p = set.positions[i];
    let pc = cam.world_to_camera(p);
    if pc.z <= Z_NEAR {
        return None;
    }
    let (u, v, depth) = cam.project_point(pc)?;

    let sigma = set.covariance(i);
    let sigma_cam = cam.r_cw.mul_mat(sigma.mul_mat(cam.r_cw.transpose()));
    let inv_z = 1.0 / pc.z;
    let j = [
        [cam.fx * inv_z, 0.0, -cam.fx * pc.x * inv_z * inv_z],
        [0.0, cam.fy * inv_z, -cam.fy * pc.y * inv_z * inv_z],
    ];
    let mut cov = Mat2::zero();
    for r in 0..2 {
        for c in 0..2 {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += j[r][a] * sigma_cam.m[a][b] * j[c][b];
                }
            }
            cov.m[r][c] = acc;
        }
    }
    cov.m[0][0] += COV_DILATION;
    cov.m[1][1] += COV_DILATION;

    let (lam_max, _) = cov.sym_eigenvalues();
    let radius = 3.0 * lam_max.max(0.0).sqrt();
    let px_lo = (u - radius - 0.5).ceil().max(0.0);
    let px_hi = (u + radius - 0.5).floor().min(cam.width as f64 - 1.0);
    let py_lo = (v - radius - 0.5).ceil().max(0.0);
    let py_hi = (v + radius - 0.5).floor().min(cam.height as f64 - 1.0);
    if px_lo > px_hi || py_lo > py_hi {
        return None;
    }

    let dir = (p - cam.center()).normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
    let rgb = eval_sh(set.sh_degree, set.sh_coeffs(i), dir);

    Some(ProjectedSplat {
        splat: i as u32,
        mean: Vec2::new(u, v),
        cov_inv: cov.inverse().expect("dilated covariance is invertible"),
        cov,
        depth,
        rgb,
        opacity: set.opacity(i),
        radius,
        px_lo: px_lo as u32,
        px_hi: px_hi as u32,
        py_lo: py_lo as u32,
        py_hi: py_hi as u32,
    })
}

/// Gaussian falloff at the center of pixel (px, py), in (0, 1].
pub fn gaussian_weight(g: &ProjectedSplat, px: u32, py: u32) -> f64 {
    let d = Vec2::new(px as f64 + 0.5 - g.mean.x, py as f64 + 0.5 - g.mean.y);
    let q = d.dot(g.cov_inv.mul_vec(d));
    (-0.5 * q).exp().min(1.0)
}

/// Rebinds every splat to its nearest face and reclassifies with the strict
/// rule d < d_th. Returns the per-splat distances.
pub fn classify_splats(set: &mut SplatSet, mesh: &TriMesh, bvh: &MeshBvh, d_th: f64) -> Vec<f64> {
    assert!(!mesh.faces.is_empty(), "classification needs a mesh");
    let mut dists = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let hit = bvh.nearest_face(mesh, set.positions[i]);
        set.bound_faces[i] = Some(hit.face as u32);
        set.classes[i] = if hit.dist < d_th { SplatClass::Tight } else { SplatClass::Loose };
        dists.push(hit.dist);
    }
    dists
}

/// One tight splat per face: centered on the centroid, flattened along the
/// face normal, gray, nearly transparent.
pub fn init_from_mesh(mesh: &TriMesh, sh_degree: usize) -> SplatSet {
    assert!(!mesh.faces.is_empty(), "initialization needs a mesh");
    let mut set = SplatSet::new(sh_degree);
    let sh = vec![0.0; set.sh_stride()];
    let raw_opacity = crate::math::logit(0.1);
    for f in 0..mesh.faces.len() {
        let tangent = (mesh.face_mean_edge_length(f) / 2.0).max(1e-4);
        let raw_t = tangent.ln();
        // Axis 2 carries the smallest scale, so from_to(z, n) aligns the
        // splat normal with the face normal.
        let raw_scale = Vec3::new(raw_t, raw_t, (tangent / 10.0).ln());
        let rotation = Quat::from_to(Vec3::new(0.0, 0.0, 1.0), mesh.face_normals[f]);
        set.push(
            mesh.face_centroid(f),
            raw_scale,
            raw_opacity,
            rotation,
            &sh,
            Some(f as u32),
            SplatClass::Tight,
        );
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut impl Rng) -> Quat {
        Quat {
            w: rng.gen_range(-1.0..1.0),
            x: rng.gen_range(-1.0..1.0),
            y: rng.gen_range(-1.0..1.0),
            z: rng.gen_range(-1.0..1.0),
        }
    }

    /// Eigenvalues of a symmetric 3x3 by cyclic Jacobi rotations.
    fn sym3_eigenvalues(m: &Mat3) -> [f64; 3] {
        let mut a = m.m;
        for _ in 0..64 {
            let mut off = 0.0;
            for r in 0..3 {
                for c in (r + 1)..3 {
                    off += a[r][c] * a[r][c];
                }
            }
            if off < 1e-26 {
                break;
            }
            for p in 0..3 {
                for q in (p + 1)..3 {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..3 {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..3 {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev = [a[0][0], a[1][1], a[2][2]];
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Plain Cholesky; fails iff the matrix is not positive semi-definite
    /// within roundoff.
    fn cholesky_ok(m: &Mat3) -> bool {
        let mut l = [[0.0f64; 3]; 3];
        for r in 0..3 {
            for c in 0..=r {
                let mut s = m.m[r][c];
                for k in 0..c {
                    s -= l[r][k] * l[c][k];
                }
                if r == c {
                    if s < -1e-12 {
                        return false;
                    }
                    l[r][r] = s.max(0.0).sqrt();
                } else if l[c][c] > 0.0 {
                    l[r][c] = s / l[c][c];
                }
            }
        }
        true
    }

    #[test]
    fn covariance_of_identity_parameters_is_identity() {
        let cov = build_covariance(Vec3::ZERO, Quat::IDENTITY);
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((cov.m[r][c] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn covariance_axis_aligned_scale() {
        let cov = build_covariance(Vec3::new(2.0f64.ln(), 0.0, 0.0), Quat::IDENTITY);
        let want = Mat3::diagonal(Vec3::new(4.0, 1.0, 1.0));
        for r in 0..3 {
            for c in 0..3 {
                assert!((cov.m[r][c] - want.m[r][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_eigenvalues_match_squared_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let raw = Vec3::new(
                rng.gen_range(-2.0..1.0),
                rng.gen_range(-2.0..1.0),
                rng.gen_range(-2.0..1.0),
            );
            let cov = build_covariance(raw, random_quat(&mut rng));
            let got = sym3_eigenvalues(&cov);
            let mut want = [raw.x, raw.y, raw.z].map(|v| (2.0 * v).exp());
            want.sort_by(f64::total_cmp);
            for k in 0..3 {
                assert!(
                    (got[k] - want[k]).abs() < 1e-9,
                    "eigenvalue {k}: got {} want {}",
                    got[k],
                    want[k]
                );
            }
        }
    }

    #[test]
    fn covariance_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100_000 {
            let raw = Vec3::new(
                rng.gen_range(-6.0..3.0),
                rng.gen_range(-6.0..3.0),
                rng.gen_range(-6.0..3.0),
            );
            let cov = build_covariance(raw, random_quat(&mut rng));
            assert!(cholesky_ok(&cov), "cholesky failed for raw {raw:?}");
        }
    }

    fn single_splat_set(position: Vec3, raw_scale: Vec3, rotation: Quat) -> SplatSet {
        let mut set = SplatSet::new(0);
        set.push(
            position,
            raw_scale,
            crate::math::logit(0.5),
            rotation,
            &[0.0; 3],
            None,
            SplatClass::Loose,
        );
        set
    }

    fn test_camera() -> Camera {
        Camera::look_at(Vec3::new(0.0, 0.0, -4.0), Vec3::ZERO, 60.0, 60.0, 64, 64)
    }

    #[test]
    fn on_axis_isotropic_splat_projects_isotropically() {
        let sigma: f64 = 0.05;
        let (f, z) = (60.0, 4.0);
        let set = single_splat_set(Vec3::ZERO, Vec3::splat(sigma.ln()), Quat::IDENTITY);
        let proj = project_splat(&set, 0, &test_camera()).expect("visible");
        let want = (f * sigma / z).powi(2);
        assert!((proj.cov.m[0][0] - want - COV_DILATION).abs() < 1e-6);
        assert!((proj.cov.m[1][1] - want - COV_DILATION).abs() < 1e-6);
        assert!(proj.cov.m[0][1].abs() < 1e-6);
        assert!((proj.depth - z).abs() < 1e-12);
    }

    #[test]
    fn doubling_depth_halves_projected_extent() {
        let sigma: f64 = 0.05;
        let cam = test_camera();
        let near = single_splat_set(Vec3::ZERO, Vec3::splat(sigma.ln()), Quat::IDENTITY);
        let far = single_splat_set(Vec3::new(0.0, 0.0, 4.0), Vec3::splat(sigma.ln()), Quat::IDENTITY);
        let pn = project_splat(&near, 0, &cam).unwrap();
        let pf = project_splat(&far, 0, &cam).unwrap();
        let sn = (pn.cov.m[0][0] - COV_DILATION).sqrt();
        let sf = (pf.cov.m[0][0] - COV_DILATION).sqrt();
        assert!((sn / sf - 2.0).abs() < 1e-9, "perspective scaling");
    }

    #[test]
    fn projected_covariance_matches_finite_difference_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cam = test_camera();
        for _ in 0..50 {
            let p = Vec3::new(
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
            );
            let raw = Vec3::new(
                rng.gen_range(-3.5..-1.5),
                rng.gen_range(-3.5..-1.5),
                rng.gen_range(-3.5..-1.5),
            );
            let q = random_quat(&mut rng);
            let set = single_splat_set(p, raw, q);
            let Some(proj) = project_splat(&set, 0, &cam) else {
                continue;
            };

            // Finite-difference Jacobian of project_point around the center.
            let pc = cam.world_to_camera(p);
            let h = 1e-6;
            let mut jfd = [[0.0f64; 3]; 2];
            for c in 0..3 {
                let mut hi = pc;
                let mut lo = pc;
                hi.set(c, pc.get(c) + h);
                lo.set(c, pc.get(c) - h);
                let (u1, v1, _) = cam.project_point(hi).unwrap();
                let (u0, v0, _) = cam.project_point(lo).unwrap();
                jfd[0][c] = (u1 - u0) / (2.0 * h);
                jfd[1][c] = (v1 - v0) / (2.0 * h);
            }
            let sigma_cam =
                cam.r_cw.mul_mat(set.covariance(0).mul_mat(cam.r_cw.transpose()));
            for r in 0..2 {
                for c in 0..2 {
                    let mut want = if r == c { COV_DILATION } else { 0.0 };
                    for a in 0..3 {
                        for b in 0..3 {
                            want += jfd[r][a] * sigma_cam.m[a][b] * jfd[c][b];
                        }
                    }
                    let got = proj.cov.m[r][c];
                    let tol = 1e-4 * want.abs().max(1e-6);
                    assert!((got - want).abs() < tol, "cov[{r}][{c}] got {got} want {want}");
                }
            }
        }
    }

    #[test]
    fn splat_behind_camera_is_culled() {
        let set = single_splat_set(Vec3::new(0.0, 0.0, -8.0), Vec3::splat(-2.0), Quat::IDENTITY);
        assert!(project_splat(&set, 0, &test_camera()).is_none());
    }

    #[test]
    fn footprint_off_image_is_culled() {
        let set = single_splat_set(Vec3::new(50.0, 0.0, 0.0), Vec3::splat(-3.0), Quat::IDENTITY);
        assert!(project_splat(&set, 0, &test_camera()).is_none());
    }

    #[test]
    fn depth_equals_camera_z_exactly() {
        let cam = test_camera();
        let p = Vec3::new(0.3, -0.2, 0.4);
        let set = single_splat_set(p, Vec3::splat(-2.0), Quat::IDENTITY);
        let proj = project_splat(&set, 0, &cam).unwrap();
        assert_eq!(proj.depth.to_bits(), cam.world_to_camera(p).z.to_bits());
    }

    fn manual_projected(mean: Vec2, cov: Mat2) -> ProjectedSplat {
        ProjectedSplat {
            splat: 0,
            mean,
            cov,
            cov_inv: cov.inverse().unwrap(),
            depth: 1.0,
            rgb: [1.0; 3],
            opacity: 1.0,
            radius: 10.0,
            px_lo: 0,
            px_hi: 63,
            py_lo: 0,
            py_hi: 63,
        }
    }

    #[test]
    fn gaussian_weight_is_one_at_the_center() {
        let g = manual_projected(Vec2::new(10.5, 20.5), Mat2::identity());
        assert_eq!(gaussian_weight(&g, 10, 20), 1.0);
    }

    #[test]
    fn gaussian_weight_at_mahalanobis_sqrt2() {
        let g = manual_projected(Vec2::new(10.5 + 2.0f64.sqrt(), 20.5), Mat2::identity());
        let got = gaussian_weight(&g, 10, 20);
        assert!((got - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_weight_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let a: f64 = rng.gen_range(0.5..3.0);
            let d: f64 = rng.gen_range(0.5..3.0);
            let b = rng.gen_range(-0.4..0.4) * (a * d).sqrt();
            let cov = Mat2 { m: [[a, b], [b, d]] };
            let g = manual_projected(
                Vec2::new(rng.gen_range(0.0..32.0), rng.gen_range(0.0..32.0)),
                cov,
            );
            let (px, py) = (rng.gen_range(0..32u32), rng.gen_range(0..32u32));
            let got = gaussian_weight(&g, px, py);

            // Solve cov * y = d directly by Cramer's rule.
            let dv = Vec2::new(px as f64 + 0.5 - g.mean.x, py as f64 + 0.5 - g.mean.y);
            let det = a * d - b * b;
            let y = Vec2::new((dv.x * d - b * dv.y) / det, (a * dv.y - b * dv.x) / det);
            let want = (-0.5 * dv.dot(y)).exp();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn classification_follows_the_strict_distance_rule() {
        let plane = shapes::grid_plane(1.0, 4, 4);
        let bvh = MeshBvh::build(&plane);
        let d_th = 0.25;
        let mut set = SplatSet::new(0);
        let sh = [0.0; 3];
        // On a face, just inside, exactly at threshold, and far away; 0.25
        // and 0.125 are exact in binary so the boundary case is not fuzzy.
        set.push(Vec3::new(0.1, 0.1, 0.0), Vec3::ZERO, 0.0, Quat::IDENTITY, &sh, None, SplatClass::Loose);
        set.push(Vec3::new(0.1, 0.1, 0.125), Vec3::ZERO, 0.0, Quat::IDENTITY, &sh, None, SplatClass::Loose);
        set.push(Vec3::new(0.1, 0.1, 0.25), Vec3::ZERO, 0.0, Quat::IDENTITY, &sh, None, SplatClass::Loose);
        set.push(Vec3::new(0.1, 0.1, 0.5), Vec3::ZERO, 0.0, Quat::IDENTITY, &sh, None, SplatClass::Loose);
        let d = classify_splats(&mut set, &plane, &bvh, d_th);
        assert_eq!(set.classes[0], SplatClass::Tight);
        assert_eq!(d[0], 0.0);
        assert_eq!(set.classes[1], SplatClass::Tight);
        assert_eq!(set.classes[2], SplatClass::Loose, "d == d_th goes loose");
        assert_eq!(set.classes[3], SplatClass::Loose);
        assert!(set.bound_faces.iter().all(|f| f.is_some()), "every splat rebound");
    }

    #[test]
    fn init_places_one_tight_splat_per_face() {
        let (cube, _) = shapes::cube(2.0);
        let mut set = init_from_mesh(&cube, 2);
        assert_eq!(set.len(), 12);
        for i in 0..set.len() {
            assert_eq!(set.positions[i], cube.face_centroid(i));
            assert_eq!(set.bound_faces[i], Some(i as u32));
            assert_eq!(set.classes[i], SplatClass::Tight);
            assert!((set.opacity(i) - 0.1).abs() < 1e-12);
            let align = set.normal(i).dot(cube.face_normals[i]).abs();
            assert!((align - 1.0).abs() < 1e-6, "splat {i} normal misaligned: {align}");
        }
        let bvh = MeshBvh::build(&cube);
        let d = classify_splats(&mut set, &cube, &bvh, 0.01);
        assert!(set.classes.iter().all(|c| *c == SplatClass::Tight));
        assert!(d.iter().all(|&v| v < 1e-12), "centroids sit on their faces");
    }

    #[test]
    fn normal_axis_ignores_permutation_of_the_other_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let raw = Vec3::new(
                rng.gen_range(-3.0..0.0),
                rng.gen_range(-3.0..0.0),
                rng.gen_range(-3.0..0.0),
            );
            let q = random_quat(&mut rng);
            let set = single_splat_set(Vec3::ZERO, raw, q);
            let axis = set.normal_axis(0);
            let others: Vec<usize> = (0..3).filter(|&k| k != axis).collect();
            let mut swapped = raw;
            swapped.set(others[0], raw.get(others[1]));
            swapped.set(others[1], raw.get(others[0]));
            let set2 = single_splat_set(Vec3::ZERO, swapped, q);
            assert_eq!(set2.normal_axis(0), axis);
        }
    }

    #[test]
    fn retain_keeps_order_and_sh_blocks() {
        let mut set = SplatSet::new(1);
        let stride = set.sh_stride();
        for i in 0..5 {
            let sh: Vec<f64> = (0..stride).map(|k| (i * stride + k) as f64).collect();
            set.push(
                Vec3::splat(i as f64),
                Vec3::ZERO,
                0.0,
                Quat::IDENTITY,
                &sh,
                Some(i as u32),
                SplatClass::Loose,
            );
        }
        set.retain(&[true, false, true, false, true]);
        assert_eq!(set.len(), 3);
        assert_eq!(set.positions[1], Vec3::splat(2.0));
        assert_eq!(set.bound_faces[2], Some(4));
        assert_eq!(set.sh_coeffs(1)[0], (2 * stride) as f64);
        assert_eq!(set.sh.len(), 3 * stride);
    }
}
