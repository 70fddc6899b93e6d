//! Training objectives: L1 + D-SSIM image loss and the three mesh-alignment
//! regularizers over tightly-bound splats, composed into the total loss.

pub mod ssim;

use crate::error::{Error, Result};
use crate::mesh::{closest_point_on_triangle, TriMesh};
use crate::splat::{SplatClass, SplatSet};
use serde::{Deserialize, Serialize};

/// Loss weights; the scale term carries its own internal weights and gets no
/// outer factor in the total.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_img: f64,
    pub lambda_nc: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_proj: f64,
    /// Scale cap, scene units.
    pub rho: f64,
    /// Tight/loose distance threshold, scene units.
    pub d_th: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_img: 0.001,
            lambda_nc: 0.1,
            lambda_min: 0.1,
            lambda_max: 10.0,
            lambda_proj: 50.0,
            rho: 0.1,
            d_th: 0.01,
        }
    }
}

/// Unweighted per-term values plus the weighted total; `scale` is already
/// internally weighted by lambda_min/lambda_max.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub image: f64,
    pub normal: f64,
    pub scale: f64,
    pub projection: f64,
    pub total: f64,
}

/// (1 - lambda) L1 + lambda (1 - SSIM), both means over pixels and channels.
pub fn image_loss(
    rendered: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    lambda_img: f64,
) -> Result<f64> {
    if rendered.len() != 3 * width * height || target.len() != rendered.len() {
        return Err(Error::Invalid(format!(
            "image loss dimension mismatch: {} vs {} for {width}x{height}",
            rendered.len(),
            target.len()
        )));
    }
    let l1 = rendered
        .iter()
        .zip(target)
        .map(|(r, t)| (r - t).abs())
        .sum::<f64>()
        / rendered.len() as f64;
    let dssim = 1.0 - ssim::ssim_mean(rendered, target, width, height);
    Ok((1.0 - lambda_img) * l1 + lambda_img * dssim)
}

/// Gradient of `image_loss` with respect to the rendered image. The L1
/// subgradient at zero is zero.
pub fn image_loss_backward(
    rendered: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    lambda_img: f64,
) -> Vec<f64> {
    let n = rendered.len() as f64;
    let mut grad = ssim::ssim_mean_backward(rendered, target, width, height, -lambda_img);
    for (g, (r, t)) in grad.iter_mut().zip(rendered.iter().zip(target)) {
        *g += (1.0 - lambda_img) * (r - t).signum_or_zero() / n;
    }
    grad
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Sum over tight splats of 1 - |n_i . n_f|; the absolute value makes the
/// sign-ambiguous splat normal axis count as aligned in both directions.
pub fn normal_consistency_loss(set: &SplatSet, mesh: &TriMesh) -> f64 {
    let mut total = 0.0;
    for i in 0..set.len() {
        if set.classes[i] != SplatClass::Tight {
            continue;
        }
        let f = set.bound_faces[i].expect("tight splat has a bound face") as usize;
        total += 1.0 - set.normal(i).dot(mesh.face_normals[f]).abs();
    }
    total
}

/// Sum over tight splats of lambda_min s_min + lambda_max |s_max - rho| on
/// activated scales.
pub fn scale_loss(set: &SplatSet, lambda_min: f64, lambda_max: f64, rho: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..set.len() {
        if set.classes[i] != SplatClass::Tight {
            continue;
        }
        let s = set.scale(i);
        let s_min = s.min_component();
        let s_max = s.max_component();
        total += lambda_min * s_min + lambda_max * (s_max - rho).abs();
    }
    total
}

/// Sum over tight splats of the distance to the closest point on the bound
/// face.
pub fn projection_loss(set: &SplatSet, mesh: &TriMesh) -> f64 {
    let mut total = 0.0;
    for i in 0..set.len() {
        if set.classes[i] != SplatClass::Tight {
            continue;
        }
        let f = set.bound_faces[i].expect("tight splat has a bound face") as usize;
        let [a, b, c] = mesh.face_vertices(f);
        let (_, dist, _) = closest_point_on_triangle(set.positions[i], a, b, c);
        total += dist;
    }
    total
}

/// image + lambda_nc * normal + scale + lambda_proj * projection.
pub fn total_loss(
    rendered: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    set: &SplatSet,
    mesh: &TriMesh,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let image = image_loss(rendered, target, width, height, w.lambda_img)?;
    let normal = normal_consistency_loss(set, mesh);
    let scale = scale_loss(set, w.lambda_min, w.lambda_max, w.rho);
    let projection = projection_loss(set, mesh);
    Ok(LossBreakdown {
        image,
        normal,
        scale,
        projection,
        total: image + w.lambda_nc * normal + scale + w.lambda_proj * projection,
    })
}
