//! CPU engine for Gaussian splatting bound to a triangle mesh.
//!
//! Splats live on (or near) a mesh surface. The mesh supplies an occlusion
//! prior through per-view depth maps, a binding target for regularization,
//! and the initial splat layout (one splat per face). Everything runs in
//! double precision so analytic gradients can be validated against central
//! finite differences.

pub mod error;
pub mod grad;
pub mod io;
pub mod loss;
pub mod math;
pub mod mesh;
pub mod ply;
pub mod render;
pub mod splat;
pub mod train;

pub use error::{Error, Result};
