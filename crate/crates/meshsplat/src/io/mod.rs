//! Disk formats and dataset plumbing: sRGB PNG images, transforms.json
//! datasets, splat checkpoints as 3DGS-compatible PLY, synthetic scene
//! generation, and training metrics.

pub mod checkpoint;
pub mod dataset;
pub mod image;
pub mod metrics;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dataset::{load_cameras, load_dataset, CameraManifest, Dataset, DatasetView, Split};
pub use image::{load_png_linear, save_png_linear};
pub use metrics::{psnr, MetricsWriter};
pub use synthetic::{make_synthetic_scene, SceneKind, SceneSpec};
