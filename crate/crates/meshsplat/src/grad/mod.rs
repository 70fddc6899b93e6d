//! Analytic backward passes for the renderer and all loss terms, plus the
//! finite-difference harness behind `check-grad`. The render backward is a
//! second front-to-back walk mirroring the forward blend exactly (same box
//! test, alpha clamp, skip threshold, and transmittance cutoff), using the
//! forward pixel color to form suffix sums instead of storing a tape.

use crate::error::{Error, Result};
use crate::loss::{image_loss_backward, total_loss, LossWeights};
use crate::math::sh::{basis_count, sh_basis_grad};
use crate::math::{
    quat_to_rotmat, quat_to_rotmat_jacobian, Camera, Mat2, Mat3, Quat, Vec2, Vec3,
};
use crate::mesh::{closest_point_on_triangle, TriMesh};
use crate::render::{
    tile_bins, tile_rect, visible_sorted, OcclusionMask, RenderOutput, ALPHA_CLAMP, ALPHA_SKIP,
    T_STOP,
};
use crate::splat::{gaussian_weight, ProjectedSplat, SplatClass, SplatSet};
use rayon::prelude::*;

/// Per-parameter gradient accumulators mirroring `SplatSet`, plus the
/// densification statistics. Zeroed at the start of every training step.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub positions: Vec<Vec3>,
    pub raw_scales: Vec<Vec3>,
    pub raw_opacities: Vec<f64>,
    /// Quaternion component gradients, (w, x, y, z).
    pub rotations: Vec<[f64; 4]>,
    /// Same layout as `SplatSet::sh`.
    pub sh: Vec<f64>,
    /// Accumulated norm of the screen-space center gradient per splat.
    pub screen_norm: Vec<f64>,
    /// Number of views in which the splat was projected.
    pub observations: Vec<u32>,
}

impl GradStore {
    pub fn zeros(set: &SplatSet) -> GradStore {
        let n = set.len();
        GradStore {
            positions: vec![Vec3::ZERO; n],
            raw_scales: vec![Vec3::ZERO; n],
            raw_opacities: vec![0.0; n],
            rotations: vec![[0.0; 4]; n],
            sh: vec![0.0; set.sh.len()],
            screen_norm: vec![0.0; n],
            observations: vec![0; n],
        }
    }

    /// Errors on the first non-finite entry, naming the splat and class.
    pub fn assert_finite(&self) -> Result<()> {
        let bad = |class: &str, splat: usize| {
            Err(Error::NonFiniteGradient(format!("{class} gradient of splat {splat}")))
        };
        for (i, v) in self.positions.iter().enumerate() {
            if !v.is_finite() {
                return bad("position", i);
            }
        }
        for (i, v) in self.raw_scales.iter().enumerate() {
            if !v.is_finite() {
                return bad("raw_scale", i);
            }
        }
        for (i, v) in self.raw_opacities.iter().enumerate() {
            if !v.is_finite() {
                return bad("raw_opacity", i);
            }
        }
        for (i, q) in self.rotations.iter().enumerate() {
            if !q.iter().all(|c| c.is_finite()) {
                return bad("rotation", i);
            }
        }
        let stride = if self.positions.is_empty() { 1 } else { self.sh.len() / self.positions.len() };
        for (k, v) in self.sh.iter().enumerate() {
            if !v.is_finite() {
                return bad("sh", k / stride.max(1));
            }
        }
        Ok(())
    }
}

/// Screen-level gradient of one projected splat, accumulated over pixels
/// before the chain back to raw parameters.
#[derive(Debug, Clone, Copy)]
struct ScreenGrad {
    d_mean: Vec2,
    /// Gradient w.r.t. the inverse 2D covariance entries.
    d_cov_inv: Mat2,
    /// Gradient w.r.t. the activated opacity.
    d_opacity: f64,
    d_rgb: [f64; 3],
}

impl ScreenGrad {
    const ZERO: ScreenGrad = ScreenGrad {
        d_mean: Vec2::ZERO,
        d_cov_inv: Mat2::zero(),
        d_opacity: 0.0,
        d_rgb: [0.0; 3],
    };

    fn add(&mut self, o: &ScreenGrad) {
        self.d_mean += o.d_mean;
        self.d_cov_inv = self.d_cov_inv + o.d_cov_inv;
        self.d_opacity += o.d_opacity;
        for c in 0..3 {
            self.d_rgb[c] += o.d_rgb[c];
        }
    }
}

/// Backward of `blend_pixel`: walks the same splats in the same order and
/// turns dL/d pixel color into per-splat screen-level gradients. The suffix
/// color behind each splat is the forward pixel color minus the prefix, so
/// no per-pixel tape is needed.
fn backward_pixel<'a>(
    ordered: impl Iterator<Item = (usize, &'a ProjectedSplat)>,
    px: u32,
    py: u32,
    pixel_rgb: [f64; 3],
    d_pixel: [f64; 3],
    acc: &mut [ScreenGrad],
) -> Result<()> {
    let mut t = 1.0f64;
    let mut prefix = [0.0f64; 3];
    for (slot, g) in ordered {
        if t < T_STOP {
            break;
        }
        if !g.covers(px, py) {
            continue;
        }
        let gauss = gaussian_weight(g, px, py);
        let pre_clamp = g.opacity * gauss;
        let alpha = pre_clamp.min(ALPHA_CLAMP);
        if alpha < ALPHA_SKIP {
            continue;
        }
        let w = alpha * t;

        let mut d_alpha = 0.0;
        for c in 0..3 {
            let suffix = pixel_rgb[c] - prefix[c] - w * g.rgb[c];
            d_alpha += d_pixel[c] * (t * g.rgb[c] - suffix / (1.0 - alpha));
            acc[slot].d_rgb[c] += d_pixel[c] * w;
        }
        if !d_alpha.is_finite() {
            return Err(Error::NonFiniteGradient(format!(
                "alpha gradient of splat {} at pixel ({px},{py})",
                g.splat
            )));
        }
        // The clamp gates the opacity/shape path; color still flows above it.
        if pre_clamp < ALPHA_CLAMP {
            acc[slot].d_opacity += d_alpha * gauss;
            let d_gauss = d_alpha * g.opacity;
            let d = Vec2::new(px as f64 + 0.5 - g.mean.x, py as f64 + 0.5 - g.mean.y);
            let ad = g.cov_inv.mul_vec(d);
            // gauss = exp(-q/2), q = d^T A d with d = pixel - mean.
            acc[slot].d_mean += ad * (gauss * d_gauss);
            let d_q = -0.5 * gauss * d_gauss;
            acc[slot].d_cov_inv.m[0][0] += d_q * d.x * d.x;
            acc[slot].d_cov_inv.m[0][1] += d_q * d.x * d.y;
            acc[slot].d_cov_inv.m[1][0] += d_q * d.y * d.x;
            acc[slot].d_cov_inv.m[1][1] += d_q * d.y * d.y;
        }

        for c in 0..3 {
            prefix[c] += w * g.rgb[c];
        }
        t *= 1.0 - alpha;
    }
    Ok(())
}

fn frobenius(a: Mat3, b: Mat3) -> f64 {
    let mut s = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            s += a.m[r][c] * b.m[r][c];
        }
    }
    s
}

/// Chain rule through q_hat = q / |q|: projects out the radial component.
fn unit_quat_chain(q: Quat, d_hat: [f64; 4]) -> [f64; 4] {
    let n = q.norm();
    let qh = [q.w / n, q.x / n, q.y / n, q.z / n];
    let dot: f64 = qh.iter().zip(&d_hat).map(|(a, b)| a * b).sum();
    [
        (d_hat[0] - qh[0] * dot) / n,
        (d_hat[1] - qh[1] * dot) / n,
        (d_hat[2] - qh[2] * dot) / n,
        (d_hat[3] - qh[3] * dot) / n,
    ]
}

/// Chains one splat's accumulated screen-level gradient back to raw
/// parameters, recomputing the forward intermediates it needs.
fn chain_to_params(
    set: &SplatSet,
    cam: &Camera,
    g: &ProjectedSplat,
    sg: &ScreenGrad,
    store: &mut GradStore,
) {
    let i = g.splat as usize;
    store.screen_norm[i] += sg.d_mean.norm();
    store.observations[i] += 1;

    // Inverse covariance: dL/d cov = -A G A for A = cov_inv.
    let a = g.cov_inv;
    let d_cov = a.mul_mat(sg.d_cov_inv.mul_mat(a)).scale(-1.0);

    let p = set.positions[i];
    let pc = cam.world_to_camera(p);
    let inv_z = 1.0 / pc.z;
    let j = [
        [cam.fx * inv_z, 0.0, -cam.fx * pc.x * inv_z * inv_z],
        [0.0, cam.fy * inv_z, -cam.fy * pc.y * inv_z * inv_z],
    ];
    let sigma = set.covariance(i);
    let sigma_cam = cam.r_cw.mul_mat(sigma.mul_mat(cam.r_cw.transpose()));

    // cov = J sigma_cam J^T + dilation: pull back through both factors.
    let mut d_sigma_cam = Mat3::zero();
    for ai in 0..3 {
        for bi in 0..3 {
            let mut s = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    s += j[r][ai] * d_cov.m[r][c] * j[c][bi];
                }
            }
            d_sigma_cam.m[ai][bi] = s;
        }
    }
    let mut d_j = [[0.0f64; 3]; 2];
    for r in 0..2 {
        for ai in 0..3 {
            let mut s = 0.0;
            for c in 0..2 {
                for b in 0..3 {
                    s += d_cov.m[r][c] * j[c][b] * sigma_cam.m[b][ai];
                }
            }
            d_j[r][ai] = 2.0 * s;
        }
    }

    // Projection (u, v) has Jacobian exactly J; then J's own dependence on
    // the camera-space point.
    let mut d_pc = Vec3::new(
        j[0][0] * sg.d_mean.x + j[1][0] * sg.d_mean.y,
        j[0][1] * sg.d_mean.x + j[1][1] * sg.d_mean.y,
        j[0][2] * sg.d_mean.x + j[1][2] * sg.d_mean.y,
    );
    d_pc.x += d_j[0][2] * (-cam.fx * inv_z * inv_z);
    d_pc.y += d_j[1][2] * (-cam.fy * inv_z * inv_z);
    d_pc.z += d_j[0][0] * (-cam.fx * inv_z * inv_z)
        + d_j[1][1] * (-cam.fy * inv_z * inv_z)
        + d_j[0][2] * (2.0 * cam.fx * pc.x * inv_z * inv_z * inv_z)
        + d_j[1][2] * (2.0 * cam.fy * pc.y * inv_z * inv_z * inv_z);

    let mut d_p = cam.r_cw.transpose().mul_vec(d_pc);

    // sigma_cam = R_cw sigma R_cw^T, sigma = R diag(s^2) R^T.
    let d_sigma = cam.r_cw.transpose().mul_mat(d_sigma_cam.mul_mat(cam.r_cw));
    let q = set.rotations[i];
    let rot = quat_to_rotmat(q.normalized());
    let s2 = (set.raw_scales[i] * 2.0).map(f64::exp);

    let mut d_raw_scale = Vec3::ZERO;
    for k in 0..3 {
        let rk = rot.col(k);
        // d sigma / d raw_k = 2 s_k^2 r_k r_k^T (exp doubles the log-domain rate).
        d_raw_scale.set(k, 2.0 * s2.get(k) * rk.dot(d_sigma.mul_vec(rk)));
    }

    let d_rot_mat = d_sigma.mul_mat(rot.mul_mat(Mat3::diagonal(s2))).scale(2.0);
    let jac = quat_to_rotmat_jacobian(q.normalized());
    let d_hat = [
        frobenius(d_rot_mat, jac[0]),
        frobenius(d_rot_mat, jac[1]),
        frobenius(d_rot_mat, jac[2]),
        frobenius(d_rot_mat, jac[3]),
    ];
    let d_q = unit_quat_chain(q, d_hat);

    let o = g.opacity;
    let d_raw_op = sg.d_opacity * o * (1.0 - o);

    // SH color: clamp gates per channel, then the view-direction path.
    let nb = basis_count(set.sh_degree);
    let (basis, basis_grad) = sh_basis_grad(set.sh_degree, {
        let w = p - cam.center();
        w.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0))
    });
    let dir_raw = p - cam.center();
    let dir_len = dir_raw.norm();
    let dir = dir_raw.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
    let coeffs = set.sh_coeffs(i);
    let mut d_dir = Vec3::ZERO;
    for ch in 0..3 {
        if g.rgb[ch] <= 0.0 || sg.d_rgb[ch] == 0.0 {
            continue;
        }
        let up = sg.d_rgb[ch];
        for b in 0..nb {
            store.sh[i * 3 * nb + ch * nb + b] += up * basis[b];
            d_dir += basis_grad[b] * (up * coeffs[ch * nb + b]);
        }
    }
    if dir_len > 0.0 {
        // dir = w / |w|: project out the radial component.
        d_p += (d_dir - dir * dir.dot(d_dir)) * (1.0 / dir_len);
    }

    store.positions[i] += d_p;
    store.raw_scales[i] += d_raw_scale;
    store.raw_opacities[i] += d_raw_op;
    for (dst, src) in store.rotations[i].iter_mut().zip(d_q) {
        *dst += src;
    }
}

fn check_upstream(d_image: &[f64], width: u32, height: u32) -> Result<()> {
    if d_image.len() != 3 * (width * height) as usize {
        return Err(Error::Invalid(format!(
            "image gradient length {} does not match {width}x{height}",
            d_image.len()
        )));
    }
    for (k, v) in d_image.iter().enumerate() {
        if !v.is_finite() {
            let p = k / 3;
            return Err(Error::NonFiniteGradient(format!(
                "upstream image gradient at pixel ({}, {})",
                p as u32 % width,
                p as u32 / width
            )));
        }
    }
    Ok(())
}

fn finalize(
    set: &SplatSet,
    cam: &Camera,
    visible: &[ProjectedSplat],
    acc: &[ScreenGrad],
    store: &mut GradStore,
) -> Result<()> {
    for (g, sg) in visible.iter().zip(acc) {
        chain_to_params(set, cam, g, sg, store);
    }
    store.assert_finite()
}

/// Tiled backward of the forward renderer: same bins, per-tile accumulators
/// merged in tile order, so the result is independent of thread count.
pub fn backward_render(
    set: &SplatSet,
    mask: &OcclusionMask,
    cam: &Camera,
    forward: &RenderOutput,
    d_image: &[f64],
    store: &mut GradStore,
) -> Result<()> {
    check_upstream(d_image, cam.width, cam.height)?;
    let visible = visible_sorted(set, mask, cam);
    let (tiles_x, tiles_y, bins) = tile_bins(&visible, cam.width, cam.height);
    let tiles = (tiles_x * tiles_y) as usize;

    let per_tile: Vec<Result<Vec<ScreenGrad>>> = (0..tiles as u32)
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = tile_rect(tile, tiles_x, cam.width, cam.height);
            let bin = &bins[tile as usize];
            let mut acc = vec![ScreenGrad::ZERO; bin.len()];
            for py in y0..y1 {
                for px in x0..x1 {
                    let p = (py * cam.width + px) as usize;
                    let ordered = bin
                        .iter()
                        .enumerate()
                        .map(|(slot, &k)| (slot, &visible[k as usize]));
                    backward_pixel(
                        ordered,
                        px,
                        py,
                        forward.pixel(px, py),
                        [d_image[3 * p], d_image[3 * p + 1], d_image[3 * p + 2]],
                        &mut acc,
                    )?;
                }
            }
            Ok(acc)
        })
        .collect();

    let mut merged = vec![ScreenGrad::ZERO; visible.len()];
    for (tile, res) in per_tile.into_iter().enumerate() {
        let acc = res?;
        for (slot, sg) in acc.iter().enumerate() {
            merged[bins[tile][slot] as usize].add(sg);
        }
    }
    finalize(set, cam, &visible, &merged, store)
}

/// Untiled backward oracle: one global pixel loop over all sorted splats.
pub fn backward_render_reference(
    set: &SplatSet,
    mask: &OcclusionMask,
    cam: &Camera,
    forward: &RenderOutput,
    d_image: &[f64],
    store: &mut GradStore,
) -> Result<()> {
    check_upstream(d_image, cam.width, cam.height)?;
    let visible = visible_sorted(set, mask, cam);
    let mut acc = vec![ScreenGrad::ZERO; visible.len()];
    for py in 0..cam.height {
        for px in 0..cam.width {
            let p = (py * cam.width + px) as usize;
            backward_pixel(
                visible.iter().enumerate(),
                px,
                py,
                forward.pixel(px, py),
                [d_image[3 * p], d_image[3 * p + 1], d_image[3 * p + 2]],
                &mut acc,
            )?;
        }
    }
    finalize(set, cam, &visible, &acc, store)
}

/// Gradients of the weighted loss terms: returns dL/d image for the image
/// term (L1 plus the SSIM adjoint) and adds the three mesh regularizer
/// gradients, which touch only tight splats, directly to the store.
#[allow(clippy::too_many_arguments)]
pub fn backward_losses(
    set: &SplatSet,
    mesh: &TriMesh,
    weights: &LossWeights,
    rendered: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    store: &mut GradStore,
) -> Result<Vec<f64>> {
    if rendered.len() != 3 * width * height || target.len() != rendered.len() {
        return Err(Error::Invalid(format!(
            "loss backward dimension mismatch: {} vs {} for {width}x{height}",
            rendered.len(),
            target.len()
        )));
    }
    let d_image = image_loss_backward(rendered, target, width, height, weights.lambda_img);

    for i in 0..set.len() {
        if set.classes[i] != SplatClass::Tight {
            continue;
        }
        let f = set.bound_faces[i].expect("tight splat has a bound face") as usize;

        // Normal consistency: L += lambda_nc (1 - |n_i . n_f|), argmin axis
        // held constant.
        let axis = set.normal_axis(i);
        let q = set.rotations[i];
        let rot = quat_to_rotmat(q.normalized());
        let n_f = mesh.face_normals[f];
        let dot = rot.col(axis).dot(n_f);
        let sign = if dot > 0.0 {
            1.0
        } else if dot < 0.0 {
            -1.0
        } else {
            0.0
        };
        let d_n = n_f * (-sign * weights.lambda_nc);
        let jac = quat_to_rotmat_jacobian(q.normalized());
        let d_hat = [
            jac[0].col(axis).dot(d_n),
            jac[1].col(axis).dot(d_n),
            jac[2].col(axis).dot(d_n),
            jac[3].col(axis).dot(d_n),
        ];
        let d_q = unit_quat_chain(q, d_hat);
        for (dst, src) in store.rotations[i].iter_mut().zip(d_q) {
            *dst += src;
        }

        // Scale: lambda_min s_min + lambda_max |s_max - rho| in the activated
        // domain; d s / d raw = s. Subgradient 0 exactly at the kink.
        let raw = set.raw_scales[i];
        let (mut kmin, mut kmax) = (0, 0);
        for k in 1..3 {
            if raw.get(k) < raw.get(kmin) {
                kmin = k;
            }
            if raw.get(k) > raw.get(kmax) {
                kmax = k;
            }
        }
        let s = set.scale(i);
        let mut d_raw = store.raw_scales[i];
        d_raw.set(kmin, d_raw.get(kmin) + weights.lambda_min * s.get(kmin));
        let excess = s.get(kmax) - weights.rho;
        if excess != 0.0 {
            d_raw.set(
                kmax,
                d_raw.get(kmax) + weights.lambda_max * excess.signum() * s.get(kmax),
            );
        }
        store.raw_scales[i] = d_raw;

        // Projection: distance to the bound face is 1-Lipschitz with gradient
        // (p - closest)/distance in every closest-point region.
        let [a, b, c] = mesh.face_vertices(f);
        let p = set.positions[i];
        let (closest, dist, _) = closest_point_on_triangle(p, a, b, c);
        if dist > 1e-12 {
            store.positions[i] += (p - closest) * (weights.lambda_proj / dist);
        }
    }
    store.assert_finite()?;
    Ok(d_image)
}

/// A self-contained scene for gradient verification.
#[derive(Debug, Clone)]
pub struct GradCheckScene {
    pub set: SplatSet,
    pub mesh: TriMesh,
    pub cam: Camera,
    pub target: Vec<f64>,
    pub weights: LossWeights,
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub fd_step: f64,
    /// Test hook: offsets the analytic gradients of one parameter class so
    /// the harness must catch and name it.
    pub corrupt_class: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            rel_tol: 1e-4,
            abs_floor: 1e-8,
            fd_step: 1e-5,
            corrupt_class: None,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ClassReport {
    pub class: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_analytic: f64,
    pub worst_fd: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub fd_step: f64,
    pub passed: bool,
    pub wall_seconds: f64,
    pub classes: Vec<ClassReport>,
}

impl GradCheckReport {
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>8} {:>13}  {:<22} {}\n",
            "class", "checked", "max rel err", "worst param", "status"
        ));
        for c in &self.classes {
            out.push_str(&format!(
                "{:<12} {:>8} {:>13.3e}  {:<22} {}\n",
                c.class,
                c.checked,
                c.max_rel_error,
                c.worst_param,
                if c.passed { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "total: {} (rel tol {:.0e}, abs floor {:.0e}, fd step {:.0e}, {:.2}s)\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.rel_tol,
            self.abs_floor,
            self.fd_step,
            self.wall_seconds
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One scalar parameter slot in a `SplatSet`.
#[derive(Debug, Clone, Copy)]
enum ParamRef {
    Position(usize, usize),
    RawScale(usize, usize),
    RawOpacity(usize),
    Rotation(usize, usize),
    Sh(usize, usize),
}

impl ParamRef {
    fn get(self, set: &SplatSet) -> f64 {
        match self {
            ParamRef::Position(i, c) => set.positions[i].get(c),
            ParamRef::RawScale(i, c) => set.raw_scales[i].get(c),
            ParamRef::RawOpacity(i) => set.raw_opacities[i],
            ParamRef::Rotation(i, c) => {
                let q = set.rotations[i];
                [q.w, q.x, q.y, q.z][c]
            }
            ParamRef::Sh(i, k) => set.sh[i * set.sh_stride() + k],
        }
    }

    fn set(self, set: &mut SplatSet, v: f64) {
        match self {
            ParamRef::Position(i, c) => set.positions[i].set(c, v),
            ParamRef::RawScale(i, c) => set.raw_scales[i].set(c, v),
            ParamRef::RawOpacity(i) => set.raw_opacities[i] = v,
            ParamRef::Rotation(i, c) => {
                let q = &mut set.rotations[i];
                match c {
                    0 => q.w = v,
                    1 => q.x = v,
                    2 => q.y = v,
                    3 => q.z = v,
                    _ => unreachable!(),
                }
            }
            ParamRef::Sh(i, k) => {
                let s = set.sh_stride();
                set.sh[i * s + k] = v;
            }
        }
    }

    fn analytic(self, store: &GradStore, stride: usize) -> f64 {
        match self {
            ParamRef::Position(i, c) => store.positions[i].get(c),
            ParamRef::RawScale(i, c) => store.raw_scales[i].get(c),
            ParamRef::RawOpacity(i) => store.raw_opacities[i],
            ParamRef::Rotation(i, c) => store.rotations[i][c],
            ParamRef::Sh(i, k) => store.sh[i * stride + k],
        }
    }

    fn label(self) -> String {
        match self {
            ParamRef::Position(i, c) => format!("position[{i}].{}", ["x", "y", "z"][c]),
            ParamRef::RawScale(i, c) => format!("raw_scale[{i}].{}", ["x", "y", "z"][c]),
            ParamRef::RawOpacity(i) => format!("raw_opacity[{i}]"),
            ParamRef::Rotation(i, c) => format!("rotation[{i}].{}", ["w", "x", "y", "z"][c]),
            ParamRef::Sh(i, k) => format!("sh[{i}][{k}]"),
        }
    }
}

/// Total loss of the scene with the given parameters, rendered without
/// occlusion masking.
fn scene_loss(scene: &GradCheckScene, set: &SplatSet) -> f64 {
    let mut work = set.clone();
    let mask = OcclusionMask::none(work.len());
    let out = crate::render::render_reference(&mut work, &mask, &scene.cam);
    total_loss(
        &out.rgb,
        &scene.target,
        scene.cam.width as usize,
        scene.cam.height as usize,
        set,
        &scene.mesh,
        &scene.weights,
    )
    .expect("scene loss dimensions")
    .total
}

/// Verifies the analytic total-loss gradient against central finite
/// differences, parameter by parameter, and reports the worst relative error
/// per parameter class. Differences at or below the absolute floor pass
/// outright; the floor absorbs roundoff in the finite differences themselves.
pub fn check_gradients(scene: &GradCheckScene, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    assert!(
        scene.cam.width <= 64 && scene.cam.height <= 64 && scene.set.len() <= 100,
        "gradient checks are desk-scale: <= 64x64 and <= 100 splats"
    );
    let start = std::time::Instant::now();
    let (w, h) = (scene.cam.width as usize, scene.cam.height as usize);

    let mut work = scene.set.clone();
    let mask = OcclusionMask::none(work.len());
    let forward = crate::render::render(&mut work, &mask, &scene.cam);
    let mut store = GradStore::zeros(&scene.set);
    let d_image = backward_losses(
        &scene.set,
        &scene.mesh,
        &scene.weights,
        &forward.rgb,
        &scene.target,
        w,
        h,
        &mut store,
    )?;
    backward_render(&scene.set, &mask, &scene.cam, &forward, &d_image, &mut store)?;

    if let Some(class) = &opts.corrupt_class {
        corrupt_store(&mut store, class);
    }

    let stride = scene.set.sh_stride();
    let classes: [(&str, Vec<ParamRef>); 5] = [
        ("position", params_of(&scene.set, |i, c| ParamRef::Position(i, c), 3)),
        ("raw_scale", params_of(&scene.set, |i, c| ParamRef::RawScale(i, c), 3)),
        ("raw_opacity", params_of(&scene.set, |i, _| ParamRef::RawOpacity(i), 1)),
        ("rotation", params_of(&scene.set, |i, c| ParamRef::Rotation(i, c), 4)),
        ("sh", params_of(&scene.set, |i, k| ParamRef::Sh(i, k), stride)),
    ];

    let mut fd_set = scene.set.clone();
    let mut reports = Vec::new();
    let mut all_passed = true;
    for (name, params) in classes {
        let mut worst = ClassReport {
            class: name.to_string(),
            checked: params.len(),
            max_rel_error: 0.0,
            worst_param: "-".to_string(),
            worst_analytic: 0.0,
            worst_fd: 0.0,
            passed: true,
        };
        for p in params {
            let base = p.get(&fd_set);
            p.set(&mut fd_set, base + opts.fd_step);
            let hi = scene_loss(scene, &fd_set);
            p.set(&mut fd_set, base - opts.fd_step);
            let lo = scene_loss(scene, &fd_set);
            p.set(&mut fd_set, base);
            let fd = (hi - lo) / (2.0 * opts.fd_step);
            let a = p.analytic(&store, stride);
            let diff = (a - fd).abs();
            let rel = if diff <= opts.abs_floor { 0.0 } else { diff / a.abs().max(fd.abs()) };
            if rel > worst.max_rel_error {
                worst.max_rel_error = rel;
                worst.worst_param = p.label();
                worst.worst_analytic = a;
                worst.worst_fd = fd;
            }
        }
        worst.passed = worst.max_rel_error < opts.rel_tol;
        all_passed &= worst.passed;
        reports.push(worst);
    }

    Ok(GradCheckReport {
        rel_tol: opts.rel_tol,
        abs_floor: opts.abs_floor,
        fd_step: opts.fd_step,
        passed: all_passed,
        wall_seconds: start.elapsed().as_secs_f64(),
        classes: reports,
    })
}

fn params_of(
    set: &SplatSet,
    make: impl Fn(usize, usize) -> ParamRef,
    per_splat: usize,
) -> Vec<ParamRef> {
    let mut out = Vec::with_capacity(set.len() * per_splat);
    for i in 0..set.len() {
        for c in 0..per_splat {
            out.push(make(i, c));
        }
    }
    out
}

fn corrupt_store(store: &mut GradStore, class: &str) {
    const OFFSET: f64 = 0.5;
    match class {
        "position" => store.positions.iter_mut().for_each(|v| *v += Vec3::splat(OFFSET)),
        "raw_scale" => store.raw_scales.iter_mut().for_each(|v| *v += Vec3::splat(OFFSET)),
        "raw_opacity" => store.raw_opacities.iter_mut().for_each(|v| *v += OFFSET),
        "rotation" => store
            .rotations
            .iter_mut()
            .for_each(|q| q.iter_mut().for_each(|c| *c += OFFSET)),
        "sh" => store.sh.iter_mut().for_each(|v| *v += OFFSET),
        other => panic!("unknown parameter class {other:?}"),
    }
}

/// Deterministic verification scene: splats half on the cube surface, half
/// floating, moderate opacities, non-unit quaternions, and a target rendered
/// from a jittered copy so the L1 sign field is stable under perturbation.
pub fn standard_fixture(
    splats: usize,
    width: u32,
    height: u32,
    sh_degree: usize,
    seed: u64,
) -> GradCheckScene {
    use crate::math::logit;
    use crate::mesh::{shapes, MeshBvh};
    use crate::splat::classify_splats;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mesh, _) = shapes::cube(1.6);
    let fx = width as f64 * 1.15;
    let cam = Camera::look_at(
        Vec3::new(0.0, 0.0, -4.5),
        Vec3::ZERO,
        fx,
        fx,
        width,
        height,
    );

    let mut set = SplatSet::new(sh_degree);
    let stride = 3 * basis_count(sh_degree);
    for k in 0..splats {
        let position = if k % 2 == 0 {
            // On a face, offset a little along its normal.
            let f = k % mesh.faces.len();
            let [a, b, c] = mesh.face_vertices(f);
            let s1: f64 = rng.gen_range(0.0..1.0);
            let s2: f64 = rng.gen_range(0.0..1.0);
            let sq = s1.sqrt();
            let p = a * (1.0 - sq) + b * (sq * (1.0 - s2)) + c * (sq * s2);
            p + mesh.face_normals[f] * rng.gen_range(0.003..0.04)
        } else {
            Vec3::new(
                rng.gen_range(-1.1..1.1),
                rng.gen_range(-1.1..1.1),
                rng.gen_range(-1.1..1.1),
            )
        };
        let raw_scale = Vec3::new(
            rng.gen_range(-3.4..-2.2),
            rng.gen_range(-3.4..-2.2),
            rng.gen_range(-3.4..-2.2),
        );
        let raw_opacity = rng.gen_range(logit(0.15)..logit(0.32));
        let rotation = Quat::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let rotation = if rotation.norm() < 0.3 { Quat::IDENTITY } else { rotation };
        let sh: Vec<f64> = (0..stride)
            .map(|j| {
                if j % basis_count(sh_degree) == 0 {
                    rng.gen_range(-0.4..0.4)
                } else {
                    rng.gen_range(-0.15..0.15)
                }
            })
            .collect();
        set.push(position, raw_scale, raw_opacity, rotation, &sh, None, SplatClass::Loose);
    }
    let bvh = MeshBvh::build(&mesh);
    classify_splats(&mut set, &mesh, &bvh, 0.08);

    // Target: render of a jittered copy, so rendered-minus-target stays away
    // from zero on covered pixels.
    let mut jittered = set.clone();
    for i in 0..jittered.len() {
        jittered.positions[i] += Vec3::new(
            rng.gen_range(-0.03..0.03),
            rng.gen_range(-0.03..0.03),
            rng.gen_range(-0.03..0.03),
        );
        for v in jittered.sh_coeffs_mut(i) {
            *v += rng.gen_range(-0.08..0.08);
        }
    }
    let mask = OcclusionMask::none(jittered.len());
    let target = crate::render::render(&mut jittered, &mask, &cam).rgb;

    // Keep every pixel well above the transmittance cutoff; truncation there
    // would put a kink under the finite differences.
    let mut probe = set.clone();
    let probe_mask = OcclusionMask::none(probe.len());
    let forward = crate::render::render(&mut probe, &probe_mask, &cam);
    let min_t = forward.transmittance.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min_t > 1e-2, "fixture too dense: min transmittance {min_t}");

    GradCheckScene { set, mesh, cam, target, weights: LossWeights::default() }
}
