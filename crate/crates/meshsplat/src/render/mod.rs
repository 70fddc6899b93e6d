//! Forward image synthesis: mesh-depth occlusion masking, a global depth
//! sort, and tile-binned front-to-back alpha blending, with a brute-force
//! reference renderer sharing the exact same per-pixel semantics.

use crate::math::{Camera, Z_NEAR};
use crate::mesh::DepthMap;
use crate::splat::{gaussian_weight, project_splat, ProjectedSplat, SplatSet};
use rayon::prelude::*;

pub const TILE_SIZE: u32 = 16;
/// Blending stops before a splat once transmittance drops below this.
pub const T_STOP: f64 = 1e-4;
/// Per-pixel contributions below this alpha are skipped.
pub const ALPHA_SKIP: f64 = 1.0 / 255.0;
pub const ALPHA_CLAMP: f64 = 0.99;

/// Per-splat exclusion flags for one view; true = behind the mesh surface.
#[derive(Debug, Clone)]
pub struct OcclusionMask {
    pub masked: Vec<bool>,
}

impl OcclusionMask {
    /// Mask that excludes nothing.
    pub fn none(len: usize) -> OcclusionMask {
        OcclusionMask { masked: vec![false; len] }
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// Linear-light image plus the per-pixel and per-splat blending byproducts.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    /// Interleaved rgb, row-major, linear; values can slightly exceed 1
    /// because SH colors are clamped only at zero.
    pub rgb: Vec<f64>,
    /// Final transmittance per pixel.
    pub transmittance: Vec<f64>,
    /// Whether each splat passed the alpha threshold at any pixel.
    pub contributed: Vec<bool>,
}

impl RenderOutput {
    fn black(width: u32, height: u32, splats: usize) -> RenderOutput {
        let px = (width * height) as usize;
        RenderOutput {
            width,
            height,
            rgb: vec![0.0; 3 * px],
            transmittance: vec![1.0; px],
            contributed: vec![false; splats],
        }
    }

    pub fn pixel(&self, px: u32, py: u32) -> [f64; 3] {
        let i = 3 * (py * self.width + px) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

/// Masks splats whose center projects inside the image onto a surface pixel
/// strictly deeper than the mesh by more than `delta`.
pub fn occlusion_mask(
    set: &SplatSet,
    depth: &DepthMap,
    cam: &Camera,
    delta: f64,
) -> OcclusionMask {
    let mut masked = vec![false; set.len()];
    for (i, m) in masked.iter_mut().enumerate() {
        let pc = cam.world_to_camera(set.positions[i]);
        if pc.z <= Z_NEAR {
            continue;
        }
        let Some((u, v, z)) = cam.project_point(pc) else {
            continue;
        };
        if u < 0.0 || u >= cam.width as f64 || v < 0.0 || v >= cam.height as f64 {
            continue;
        }
        let surface = depth.at(u.floor() as u32, v.floor() as u32);
        if surface.is_finite() && z > surface + delta {
            *m = true;
        }
    }
    OcclusionMask { masked }
}

/// Projects the unmasked splats and sorts them front to back by center
/// depth, ties broken by splat index. Both renderers and the backward pass
/// consume exactly this ordering.
pub fn visible_sorted(set: &SplatSet, mask: &OcclusionMask, cam: &Camera) -> Vec<ProjectedSplat> {
    assert_eq!(mask.masked.len(), set.len(), "mask length");
    let mut out: Vec<ProjectedSplat> = (0..set.len())
        .filter(|&i| !mask.masked[i])
        .filter_map(|i| project_splat(set, i, cam))
        .collect();
    out.sort_unstable_by(|a, b| a.depth.total_cmp(&b.depth).then(a.splat.cmp(&b.splat)));
    out
}

/// Front-to-back blending of one pixel. The identical routine backs the
/// tiled and the reference renderer: transmittance is checked before each
/// splat, the screen bounding box and the alpha threshold skip a splat at
/// this pixel only.
fn blend_pixel<'a>(
    ordered: impl Iterator<Item = &'a ProjectedSplat>,
    px: u32,
    py: u32,
    mut on_contribution: impl FnMut(u32),
) -> ([f64; 3], f64) {
    let mut color = [0.0f64; 3];
    let mut t = 1.0f64;
    for g in ordered {
        if t < T_STOP {
            break;
        }
        if !g.covers(px, py) {
            continue;
        }
        let alpha = (g.opacity * gaussian_weight(g, px, py)).min(ALPHA_CLAMP);
        if alpha < ALPHA_SKIP {
            continue;
        }
        let w = alpha * t;
        for (c, rgb) in color.iter_mut().zip(g.rgb) {
            *c += rgb * w;
        }
        t *= 1.0 - alpha;
        on_contribution(g.splat);
    }
    (color, t)
}

/// Tile-binned forward render; updates `ever_visible` from the contributed
/// flags afterwards.
pub fn render(set: &mut SplatSet, mask: &OcclusionMask, cam: &Camera) -> RenderOutput {
    let projected = visible_sorted(set, mask, cam);
    let out = render_projected_tiled(&projected, cam, set.len());
    mark_visible(set, &out);
    out
}

/// Per-pixel loop over every sorted splat with no tiling; the oracle the
/// tiled renderer is tested against.
pub fn render_reference(set: &mut SplatSet, mask: &OcclusionMask, cam: &Camera) -> RenderOutput {
    let projected = visible_sorted(set, mask, cam);
    let mut out = RenderOutput::black(cam.width, cam.height, set.len());
    for py in 0..cam.height {
        for px in 0..cam.width {
            let (color, t) = blend_pixel(projected.iter(), px, py, |s| {
                out.contributed[s as usize] = true;
            });
            let i = 3 * (py * cam.width + px) as usize;
            out.rgb[i..i + 3].copy_from_slice(&color);
            out.transmittance[(py * cam.width + px) as usize] = t;
        }
    }
    mark_visible(set, &out);
    out
}

fn mark_visible(set: &mut SplatSet, out: &RenderOutput) {
    for (v, c) in set.ever_visible.iter_mut().zip(&out.contributed) {
        *v |= c;
    }
}

/// One tile's pixel rectangle, half-open.
pub(crate) fn tile_rect(tile: u32, tiles_x: u32, width: u32, height: u32) -> (u32, u32, u32, u32) {
    let tx = tile % tiles_x;
    let ty = tile / tiles_x;
    let x0 = tx * TILE_SIZE;
    let y0 = ty * TILE_SIZE;
    (x0, y0, (x0 + TILE_SIZE).min(width), (y0 + TILE_SIZE).min(height))
}

/// Bins splat indices per tile in sorted order so each tile sees its splats
/// front to back. Forward and backward use this same binning.
pub(crate) fn tile_bins(
    projected: &[ProjectedSplat],
    width: u32,
    height: u32,
) -> (u32, u32, Vec<Vec<u32>>) {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (k, g) in projected.iter().enumerate() {
        for ty in g.py_lo / TILE_SIZE..=g.py_hi / TILE_SIZE {
            for tx in g.px_lo / TILE_SIZE..=g.px_hi / TILE_SIZE {
                bins[(ty * tiles_x + tx) as usize].push(k as u32);
            }
        }
    }
    (tiles_x, tiles_y, bins)
}

fn render_projected_tiled(
    projected: &[ProjectedSplat],
    cam: &Camera,
    splat_count: usize,
) -> RenderOutput {
    let (w, h) = (cam.width, cam.height);
    let (tiles_x, tiles_y, bins) = tile_bins(projected, w, h);
    let tiles = (tiles_x * tiles_y) as usize;

    struct TileResult {
        rgb: Vec<f64>,
        t: Vec<f64>,
        contributed: Vec<u32>,
    }

    let results: Vec<TileResult> = (0..tiles as u32)
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = tile_rect(tile, tiles_x, w, h);
            let bin = &bins[tile as usize];
            let mut rgb = vec![0.0; 3 * ((x1 - x0) * (y1 - y0)) as usize];
            let mut t = vec![1.0; ((x1 - x0) * (y1 - y0)) as usize];
            let mut contributed = Vec::new();
            for py in y0..y1 {
                for px in x0..x1 {
                    let ordered = bin.iter().map(|&k| &projected[k as usize]);
                    let (color, trans) =
                        blend_pixel(ordered, px, py, |s| contributed.push(s));
                    let local = ((py - y0) * (x1 - x0) + (px - x0)) as usize;
                    rgb[3 * local..3 * local + 3].copy_from_slice(&color);
                    t[local] = trans;
                }
            }
            contributed.sort_unstable();
            contributed.dedup();
            TileResult { rgb, t, contributed }
        })
        .collect();

    let mut out = RenderOutput::black(w, h, splat_count);
    for (tile, res) in results.iter().enumerate() {
        let (x0, y0, x1, y1) = tile_rect(tile as u32, tiles_x, w, h);
        for py in y0..y1 {
            for px in x0..x1 {
                let local = ((py - y0) * (x1 - x0) + (px - x0)) as usize;
                let i = 3 * (py * w + px) as usize;
                out.rgb[i..i + 3].copy_from_slice(&res.rgb[3 * local..3 * local + 3]);
                out.transmittance[(py * w + px) as usize] = res.t[local];
            }
        }
        for &s in &res.contributed {
            out.contributed[s as usize] = true;
        }
    }
    out
}
