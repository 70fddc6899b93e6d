//! Synthetic desk-scale scenes: a procedurally colored reference splat set on
//! a known mesh, rendered from a camera ring into a full on-disk dataset
//! (PNGs, transforms, mesh, reference checkpoint). The reference set is the
//! recovery oracle: its raw parameters are snapped to f32 so re-rendering the
//! saved checkpoint reproduces the dataset images exactly.

use crate::error::Result;
use crate::io::checkpoint::save_checkpoint;
use crate::io::image::save_png_linear;
use crate::math::sh::ShCoeffs;
use crate::math::{Camera, Quat, Vec3};
use crate::mesh::{render_depth, save_mesh, shapes, MeshBvh, TriMesh};
use crate::render::{occlusion_mask, render};
use crate::splat::{classify_splats, SplatClass, SplatSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Cube,
    Icosphere,
    /// Cube plus a splat cluster floating above it, off the mesh.
    TwoObject,
}

impl SceneKind {
    pub fn parse(s: &str) -> Option<SceneKind> {
        Some(match s {
            "cube" => SceneKind::Cube,
            "icosphere" => SceneKind::Icosphere,
            "two-object" => SceneKind::TwoObject,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub views: u32,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec { kind: SceneKind::Cube, views: 16, width: 64, height: 64, seed: 7 }
    }
}

/// Default classification threshold (scene units).
pub const DEFAULT_D_TH: f64 = 0.01;
/// Default occlusion depth tolerance (scene units).
pub const DEFAULT_OCCLUSION_DELTA: f64 = 0.01;

fn snap(v: f64) -> f64 {
    v as f32 as f64
}

/// Smooth position-keyed palette, kept well inside [0,1].
fn palette(p: Vec3) -> [f64; 3] {
    [
        0.5 + 0.4 * (2.3 * p.x + 0.7 * p.y).sin(),
        0.5 + 0.4 * (2.1 * p.y + 1.9 * p.z).sin(),
        0.5 + 0.4 * (2.7 * p.z + 0.5 * p.x + 4.0).sin(),
    ]
}

fn push_surface_splat(set: &mut SplatSet, p: Vec3, normal: Vec3, tangent_scale: f64) {
    let mut sh = ShCoeffs::constant_rgb(0, palette(p)).data;
    for c in &mut sh {
        *c = snap(*c);
    }
    let q = Quat::from_to(Vec3::new(0.0, 0.0, 1.0), normal);
    set.push(
        Vec3::new(snap(p.x), snap(p.y), snap(p.z)),
        Vec3::new(snap(tangent_scale.ln()), snap(tangent_scale.ln()), snap(0.02f64.ln())),
        snap(crate::math::logit(0.95)),
        Quat::new(snap(q.w), snap(q.x), snap(q.y), snap(q.z)),
        &sh,
        None,
        SplatClass::Loose,
    );
}

/// The mesh and the f32-snapped reference splat set for a scene kind.
pub fn reference_scene(kind: SceneKind, seed: u64) -> (TriMesh, SplatSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mesh, tangent_scale) = match kind {
        SceneKind::Cube | SceneKind::TwoObject => (shapes::cube(2.0).0, 0.32),
        SceneKind::Icosphere => (shapes::icosphere(1.0, 2), 0.11),
    };

    let mut set = SplatSet::new(0);
    // Four spread barycentric sites per face cover it without deep overlap.
    let sites: [[f64; 3]; 4] =
        [[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]];
    let per_face = if mesh.faces.len() > 100 { 1 } else { sites.len() };
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_vertices(f);
        for site in sites.iter().take(per_face) {
            let p = a * site[0] + b * site[1] + c * site[2];
            push_surface_splat(&mut set, p, mesh.face_normals[f], tangent_scale);
        }
    }

    if kind == SceneKind::TwoObject {
        // Floating detail: a bright cluster 0.35 above the top face.
        let anchor = Vec3::new(0.3, 0.0, 1.35);
        for _ in 0..6 {
            let p = anchor
                + Vec3::new(
                    rng.gen_range(-0.09..0.09),
                    rng.gen_range(-0.09..0.09),
                    rng.gen_range(-0.05..0.05),
                );
            let mut sh = ShCoeffs::constant_rgb(0, [0.9, 0.45, 0.15]).data;
            for c in &mut sh {
                *c = snap(*c);
            }
            set.push(
                Vec3::new(snap(p.x), snap(p.y), snap(p.z)),
                Vec3::splat(snap(0.07f64.ln())),
                snap(crate::math::logit(0.97)),
                Quat::IDENTITY,
                &sh,
                None,
                SplatClass::Loose,
            );
        }
    }

    let bvh = MeshBvh::build(&mesh);
    classify_splats(&mut set, &mesh, &bvh, DEFAULT_D_TH);
    (mesh, set)
}

/// Evenly spaced cameras on a tilted ring, all looking at the origin.
pub fn ring_cameras(views: u32, width: u32, height: u32) -> Vec<Camera> {
    let fx = 0.6 * width as f64;
    (0..views)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / views as f64 + 0.1;
            let center = Vec3::new(3.2 * theta.cos(), 3.2 * theta.sin(), 1.6);
            Camera::look_at(center, Vec3::ZERO, fx, fx, width, height)
        })
        .collect()
}

/// Renders one view of a splat set with mesh occlusion, exactly as training
/// and the render command see it.
pub fn render_view(set: &mut SplatSet, mesh: &TriMesh, cam: &Camera) -> Vec<f64> {
    let depth = render_depth(mesh, cam);
    let mask = occlusion_mask(set, &depth, cam, DEFAULT_OCCLUSION_DELTA);
    render(set, &mask, cam).rgb
}

/// Writes a complete dataset directory: images/, transforms.json, mesh.ply,
/// reference.ply.
pub fn make_synthetic_scene(spec: &SceneSpec, dir: &Path) -> Result<()> {
    let (mesh, mut set) = reference_scene(spec.kind, spec.seed);
    let cameras = ring_cameras(spec.views, spec.width, spec.height);

    std::fs::create_dir_all(dir.join("images"))
        .map_err(|e| crate::error::Error::io(&dir.join("images"), e))?;

    let mut frames = Vec::new();
    for (k, cam) in cameras.iter().enumerate() {
        let rgb = render_view(&mut set, &mesh, cam);
        let name = format!("images/{k:04}");
        save_png_linear(&dir.join(format!("{name}.png")), &rgb, spec.width, spec.height)?;

        // Written in the common OpenGL c2w convention: un-flip the native
        // camera-to-world basis.
        let r_c2w = cam.r_cw.transpose();
        let center = cam.center();
        let row = |i: usize| {
            [r_c2w.m[i][0], -r_c2w.m[i][1], -r_c2w.m[i][2], center.get(i)]
        };
        frames.push(json!({
            "file_path": name,
            "transform_matrix": [row(0), row(1), row(2), [0.0, 0.0, 0.0, 1.0]],
        }));
    }

    let cam0 = &cameras[0];
    let transforms = json!({
        "fl_x": cam0.fx,
        "fl_y": cam0.fy,
        "cx": cam0.cx,
        "cy": cam0.cy,
        "w": spec.width,
        "h": spec.height,
        "mesh_path": "mesh.ply",
        "frames": frames,
    });
    let tf_path = dir.join("transforms.json");
    std::fs::write(&tf_path, serde_json::to_string_pretty(&transforms).unwrap())
        .map_err(|e| crate::error::Error::io(&tf_path, e))?;

    save_mesh(&dir.join("mesh.ply"), &mesh)?;
    save_checkpoint(&dir.join("reference.ply"), &set)?;
    Ok(())
}
