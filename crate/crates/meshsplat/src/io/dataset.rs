//! NeRF-style capture loading: transforms JSON with camera-to-world poses,
//! PNG frames, train/test split, and the scene extent used for learning-rate
//! scaling.

use crate::error::{Error, Result};
use crate::io::image::load_png_linear;
use crate::math::{Camera, Mat3, Vec3};
use rayon::prelude::*;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct DatasetView {
    pub camera: Camera,
    pub image_path: PathBuf,
    pub split: Split,
    /// Interleaved linear RGB.
    pub image: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub views: Vec<DatasetView>,
    pub width: u32,
    pub height: u32,
    /// 1.1 x the largest camera distance from the mean camera center.
    pub extent: f64,
    pub mesh_path: Option<PathBuf>,
}

impl Dataset {
    pub fn split_views(&self, split: Split) -> impl Iterator<Item = &DatasetView> {
        self.views.iter().filter(move |v| v.split == split)
    }

    pub fn train_count(&self) -> usize {
        self.split_views(Split::Train).count()
    }
}

#[derive(Deserialize)]
struct TransformsFile {
    #[serde(default)]
    camera_angle_x: Option<f64>,
    #[serde(default)]
    fl_x: Option<f64>,
    #[serde(default)]
    fl_y: Option<f64>,
    #[serde(default)]
    cx: Option<f64>,
    #[serde(default)]
    cy: Option<f64>,
    #[serde(default)]
    w: Option<u32>,
    #[serde(default)]
    h: Option<u32>,
    #[serde(default)]
    mesh_path: Option<String>,
    /// "opengl" (default): x right, y up, z backward, the common NeRF layout.
    /// "opencv": x right, y down, z forward, this engine's native frame.
    #[serde(default)]
    camera_convention: Option<String>,
    frames: Vec<FrameEntry>,
}

#[derive(Deserialize)]
struct FrameEntry {
    file_path: String,
    transform_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    split: Option<String>,
}

/// Camera-to-world pose (already in the native frame) to this engine's
/// world-to-camera rotation and translation.
fn invert_pose(path: &Path, r_c2w: Mat3, center: Vec3) -> Result<(Mat3, Vec3)> {
    if r_c2w.orthonormality_error() > 1e-6 {
        return Err(Error::format(
            path,
            format!(
                "pose rotation is not orthonormal (error {:.2e})",
                r_c2w.orthonormality_error()
            ),
        ));
    }
    let r_cw = r_c2w.transpose();
    Ok((r_cw, -r_cw.mul_vec(center)))
}

fn read_transforms(dir: &Path) -> Result<(PathBuf, TransformsFile, bool)> {
    let tf_path = dir.join("transforms.json");
    let text = std::fs::read_to_string(&tf_path).map_err(|e| Error::io(&tf_path, e))?;
    let mut tf: TransformsFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(&tf_path, format!("transforms: {e}")))?;
    let opengl = match tf.camera_convention.as_deref() {
        None | Some("opengl") => true,
        Some("opencv") => false,
        Some(other) => {
            return Err(Error::format(&tf_path, format!("unknown camera_convention {other:?}")))
        }
    };
    tf.frames.sort_by(|a, b| a.file_path.cmp(&b.file_path));
    Ok((tf_path, tf, opengl))
}

fn frame_image_path(dir: &Path, frame: &FrameEntry) -> PathBuf {
    let mut p = dir.join(&frame.file_path);
    if p.extension().is_none() {
        p.set_extension("png");
    }
    p
}

fn build_camera(
    tf: &TransformsFile,
    tf_path: &Path,
    frame: &FrameEntry,
    opengl: bool,
    w: u32,
    h: u32,
) -> Result<Camera> {
    let m = &frame.transform_matrix;
    if m.len() < 3 || m.iter().take(3).any(|row| row.len() != 4) {
        return Err(Error::format(tf_path, "transform_matrix must be at least 3x4"));
    }
    let mut r = Mat3::zero();
    for i in 0..3 {
        for j in 0..3 {
            r.m[i][j] = m[i][j];
        }
    }
    if opengl {
        // OpenGL camera axes (y up, z backward) to native (y down,
        // z forward): negate the second and third basis columns.
        for i in 0..3 {
            r.m[i][1] = -r.m[i][1];
            r.m[i][2] = -r.m[i][2];
        }
    }
    let center = Vec3::new(m[0][3], m[1][3], m[2][3]);
    let (r_cw, t_cw) = invert_pose(tf_path, r, center)?;

    let (w_f, h_f) = (w as f64, h as f64);
    let fx = match (tf.fl_x, tf.camera_angle_x) {
        (Some(fl), _) => fl,
        (None, Some(angle)) => 0.5 * w_f / (0.5 * angle).tan(),
        (None, None) => {
            return Err(Error::format(tf_path, "neither fl_x nor camera_angle_x present"))
        }
    };
    let camera = Camera {
        fx,
        fy: tf.fl_y.unwrap_or(fx),
        cx: tf.cx.unwrap_or(0.5 * w_f),
        cy: tf.cy.unwrap_or(0.5 * h_f),
        width: w,
        height: h,
        r_cw,
        t_cw,
    };
    camera.validate()?;
    Ok(camera)
}

fn frame_split(
    tf_path: &Path,
    frame: &FrameEntry,
    idx: usize,
    explicit_split: bool,
) -> Result<Split> {
    match &frame.split {
        Some(tag) => match tag.as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::format(tf_path, format!("unknown split tag {other:?}"))),
        },
        // Every eighth frame held out when the file carries no tags.
        None if !explicit_split => {
            Ok(if idx % 8 == 0 { Split::Test } else { Split::Train })
        }
        None => Ok(Split::Train),
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let (tf_path, tf, opengl) = read_transforms(dir)?;
    if tf.frames.is_empty() {
        return Err(Error::format(&tf_path, "no frames"));
    }
    let explicit_split = tf.frames.iter().any(|f| f.split.is_some());

    // Decode every frame up front; dimensions must agree across the set.
    let decoded: Vec<Result<(PathBuf, u32, u32, Vec<f64>)>> = tf
        .frames
        .par_iter()
        .map(|f| {
            let p = frame_image_path(dir, f);
            let (w, h, rgb) = load_png_linear(&p)?;
            Ok((p, w, h, rgb))
        })
        .collect();

    let (mut width, mut height) = (tf.w, tf.h);
    let mut views = Vec::with_capacity(tf.frames.len());
    for (idx, (frame, dec)) in tf.frames.iter().zip(decoded).enumerate() {
        let (image_path, w, h, image) = dec?;
        if *width.get_or_insert(w) != w || *height.get_or_insert(h) != h {
            return Err(Error::format(
                &image_path,
                format!(
                    "inconsistent dimensions: {w}x{h} vs {}x{}",
                    width.unwrap(),
                    height.unwrap()
                ),
            ));
        }
        let camera = build_camera(&tf, &tf_path, frame, opengl, w, h)?;
        let split = frame_split(&tf_path, frame, idx, explicit_split)?;
        views.push(DatasetView { camera, image_path, split, image });
    }

    let centers: Vec<Vec3> = views.iter().map(|v| v.camera.center()).collect();
    let mean = centers.iter().fold(Vec3::ZERO, |a, &c| a + c) * (1.0 / centers.len() as f64);
    let radius = centers.iter().map(|c| (*c - mean).norm()).fold(0.0, f64::max);
    let extent = if radius > 0.0 { 1.1 * radius } else { 1.0 };

    Ok(Dataset {
        views,
        width: width.unwrap(),
        height: height.unwrap(),
        extent,
        mesh_path: tf.mesh_path.map(|p| dir.join(p)),
    })
}

/// One entry of a camera-only manifest; the image file may not exist.
#[derive(Debug, Clone)]
pub struct ManifestView {
    pub image_path: PathBuf,
    pub camera: Camera,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct CameraManifest {
    pub views: Vec<ManifestView>,
    pub mesh_path: Option<PathBuf>,
}

/// Cameras without decoding any frame, for rendering novel or image-less
/// view lists. Dimensions come from the JSON `w`/`h` keys when present,
/// otherwise from each referenced PNG header. An empty frame list is valid.
pub fn load_cameras(dir: &Path) -> Result<CameraManifest> {
    let (tf_path, tf, opengl) = read_transforms(dir)?;
    let explicit_split = tf.frames.iter().any(|f| f.split.is_some());
    let mut views = Vec::with_capacity(tf.frames.len());
    for (idx, frame) in tf.frames.iter().enumerate() {
        let image_path = frame_image_path(dir, frame);
        let (w, h) = match (tf.w, tf.h) {
            (Some(w), Some(h)) => (w, h),
            _ => image::image_dimensions(&image_path).map_err(|e| {
                Error::format(
                    &image_path,
                    format!("dimensions unavailable (no w/h in transforms): {e}"),
                )
            })?,
        };
        let camera = build_camera(&tf, &tf_path, frame, opengl, w, h)?;
        let split = frame_split(&tf_path, frame, idx, explicit_split)?;
        views.push(ManifestView { image_path, camera, split });
    }
    Ok(CameraManifest { views, mesh_path: tf.mesh_path.map(|p| dir.join(p)) })
}
