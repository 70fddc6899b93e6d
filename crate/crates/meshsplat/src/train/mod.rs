//! The optimization loop: per-view gradient steps with an adaptive
//! per-parameter update, class-aware densification (on-face resampling for
//! tight splats, clone/split for loose ones), behind-mesh pruning against
//! all training views, and periodic classification refresh.

use crate::error::{Error, Result};
use crate::grad::{backward_losses, backward_render, GradStore};
use crate::io::dataset::{Dataset, DatasetView, Split};
use crate::io::metrics::{psnr, MetricsWriter};
use crate::io::{load_checkpoint, save_checkpoint};
use crate::loss::ssim::ssim_mean;
use crate::loss::{total_loss, LossBreakdown, LossWeights};
use crate::math::{Camera, Quat, Vec3};
use crate::mesh::{render_depth, DepthMap, MeshBvh, TriMesh};
use crate::render::{occlusion_mask, render};
use crate::splat::{classify_splats, init_from_mesh, SplatSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-15;
/// Higher spherical-harmonic bands learn slower than the base color.
const SH_REST_LR_DIV: f64 = 20.0;
/// Activated-scale divisor applied to both halves of a split.
const SPLIT_SCALE_DIV: f64 = 1.6;

fn default_total_iters() -> usize {
    30_000
}
fn default_checkpoint_period() -> usize {
    10_000
}
fn default_eval_period() -> usize {
    1_000
}
fn default_prune_period() -> usize {
    500
}
fn default_densify_interval() -> usize {
    100
}
fn default_densify_start() -> usize {
    500
}
fn default_densify_end() -> usize {
    15_000
}
fn default_densify_grad_threshold() -> f64 {
    2e-4
}
fn default_opacity_prune_threshold() -> f64 {
    0.005
}
fn default_max_splats() -> usize {
    1_000_000
}
fn default_lr_position() -> f64 {
    1.6e-4
}
fn default_lr_position_final() -> f64 {
    1.6e-6
}
fn default_lr_sh() -> f64 {
    2.5e-3
}
fn default_lr_opacity() -> f64 {
    5e-2
}
fn default_lr_scale() -> f64 {
    5e-3
}
fn default_lr_rotation() -> f64 {
    1e-3
}
fn default_depth_delta() -> f64 {
    0.01
}
fn default_sh_degree() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_total_iters")]
    pub total_iters: usize,
    /// Checkpoint PLY every this many iterations (0 disables periodic saves).
    #[serde(default = "default_checkpoint_period")]
    pub checkpoint_period: usize,
    /// Held-out PSNR every this many iterations (0 disables).
    #[serde(default = "default_eval_period")]
    pub eval_period: usize,
    #[serde(default = "default_prune_period")]
    pub prune_period: usize,
    #[serde(default = "default_densify_interval")]
    pub densify_interval: usize,
    #[serde(default = "default_densify_start")]
    pub densify_start: usize,
    #[serde(default = "default_densify_end")]
    pub densify_end: usize,
    /// Mean screen-space positional gradient norm that triggers densification.
    #[serde(default = "default_densify_grad_threshold")]
    pub densify_grad_threshold: f64,
    #[serde(default = "default_opacity_prune_threshold")]
    pub opacity_prune_threshold: f64,
    #[serde(default = "default_max_splats")]
    pub max_splats: usize,
    /// Position rate, multiplied by scene extent and decayed exponentially
    /// to `lr_position_final` (also extent-scaled) over `total_iters`.
    #[serde(default = "default_lr_position")]
    pub lr_position: f64,
    #[serde(default = "default_lr_position_final")]
    pub lr_position_final: f64,
    #[serde(default = "default_lr_sh")]
    pub lr_sh: f64,
    #[serde(default = "default_lr_opacity")]
    pub lr_opacity: f64,
    #[serde(default = "default_lr_scale")]
    pub lr_scale: f64,
    #[serde(default = "default_lr_rotation")]
    pub lr_rotation: f64,
    #[serde(default)]
    pub weights: LossWeights,
    /// Depth tolerance for the behind-mesh occlusion test, scene units.
    #[serde(default = "default_depth_delta")]
    pub depth_delta: f64,
    #[serde(default = "default_sh_degree")]
    pub sh_degree: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // An empty window (start == end) disables densification entirely.
        if self.densify_start > self.densify_end || self.densify_end > self.total_iters {
            return Err(Error::Config(format!(
                "densify window {}..{} must be increasing and end within total_iters {}",
                self.densify_start, self.densify_end, self.total_iters
            )));
        }
        let rates = [
            ("lr_position", self.lr_position),
            ("lr_position_final", self.lr_position_final),
            ("lr_sh", self.lr_sh),
            ("lr_opacity", self.lr_opacity),
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
        ];
        for (name, r) in rates {
            if !(r > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {r}")));
            }
        }
        for (name, p) in [
            ("prune_period", self.prune_period),
            ("densify_interval", self.densify_interval),
            ("max_splats", self.max_splats),
        ] {
            if p == 0 {
                return Err(Error::Config(format!("{name} must be nonzero")));
            }
        }
        if self.sh_degree > 3 {
            return Err(Error::Config(format!("sh_degree {} > 3", self.sh_degree)));
        }
        Ok(())
    }
}

/// First/second-moment state per scalar parameter, with a per-splat step
/// counter for bias correction (fresh splats start their own schedule).
struct Adam {
    pos: Moments,
    scale: Moments,
    opacity: Moments,
    rot: Moments,
    sh: Moments,
    steps: Vec<u32>,
}

struct Moments {
    stride: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize, stride: usize) -> Moments {
        Moments { stride, m: vec![0.0; n * stride], v: vec![0.0; n * stride] }
    }

    /// One update for scalar `k` of splat `i`; returns the position delta.
    fn step(&mut self, i: usize, k: usize, grad: f64, lr: f64, bc1: f64, bc2: f64) -> f64 {
        let j = i * self.stride + k;
        self.m[j] = BETA1 * self.m[j] + (1.0 - BETA1) * grad;
        self.v[j] = BETA2 * self.v[j] + (1.0 - BETA2) * grad * grad;
        lr * (self.m[j] / bc1) / ((self.v[j] / bc2).sqrt() + EPS)
    }

    fn retain(&mut self, keep: &[bool]) {
        let mut w = 0;
        for (r, &k) in keep.iter().enumerate() {
            if k {
                self.m.copy_within(r * self.stride..(r + 1) * self.stride, w * self.stride);
                self.v.copy_within(r * self.stride..(r + 1) * self.stride, w * self.stride);
                w += 1;
            }
        }
        self.m.truncate(w * self.stride);
        self.v.truncate(w * self.stride);
    }

    fn grow(&mut self, n_new: usize) {
        self.m.resize(self.m.len() + n_new * self.stride, 0.0);
        self.v.resize(self.v.len() + n_new * self.stride, 0.0);
    }
}

impl Adam {
    fn zeros(set: &SplatSet) -> Adam {
        let n = set.len();
        Adam {
            pos: Moments::zeros(n, 3),
            scale: Moments::zeros(n, 3),
            opacity: Moments::zeros(n, 1),
            rot: Moments::zeros(n, 4),
            sh: Moments::zeros(n, set.sh_stride()),
            steps: vec![0; n],
        }
    }

    fn retain(&mut self, keep: &[bool]) {
        self.pos.retain(keep);
        self.scale.retain(keep);
        self.opacity.retain(keep);
        self.rot.retain(keep);
        self.sh.retain(keep);
        let mut w = 0;
        for (r, &k) in keep.iter().enumerate() {
            if k {
                self.steps[w] = self.steps[r];
                w += 1;
            }
        }
        self.steps.truncate(w);
    }

    fn grow(&mut self, n_new: usize) {
        self.pos.grow(n_new);
        self.scale.grow(n_new);
        self.opacity.grow(n_new);
        self.rot.grow(n_new);
        self.sh.grow(n_new);
        self.steps.resize(self.steps.len() + n_new, 0);
    }
}

/// Running densification statistics, reset after each densify pass.
#[derive(Debug, Default)]
pub struct DensifyStats {
    grad_sum: Vec<f64>,
    obs: Vec<u64>,
}

impl DensifyStats {
    fn zeros(n: usize) -> DensifyStats {
        DensifyStats { grad_sum: vec![0.0; n], obs: vec![0; n] }
    }

    fn mean(&self, i: usize) -> f64 {
        if self.obs[i] == 0 {
            0.0
        } else {
            self.grad_sum[i] / self.obs[i] as f64
        }
    }
}

pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub set: SplatSet,
    pub iter: usize,
    mesh: &'a TriMesh,
    bvh: MeshBvh,
    extent: f64,
    adam: Adam,
    stats: DensifyStats,
    rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    /// `initial` resumes from a checkpointed set; otherwise one splat per
    /// mesh face. Either way the set is (re)classified before the first step.
    pub fn new(
        cfg: TrainConfig,
        mesh: &'a TriMesh,
        extent: f64,
        initial: Option<SplatSet>,
    ) -> Result<Trainer<'a>> {
        cfg.validate()?;
        let mut set = initial.unwrap_or_else(|| init_from_mesh(mesh, cfg.sh_degree));
        let bvh = MeshBvh::build(mesh);
        classify_splats(&mut set, mesh, &bvh, cfg.weights.d_th);
        let adam = Adam::zeros(&set);
        let stats = DensifyStats::zeros(set.len());
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer { cfg, set, iter: 0, mesh, bvh, extent, adam, stats, rng })
    }

    fn position_lr(&self) -> f64 {
        let t = self.iter as f64 / self.cfg.total_iters.max(1) as f64;
        let init = self.cfg.lr_position * self.extent;
        let fin = self.cfg.lr_position_final * self.extent;
        init * (fin / init).powf(t)
    }

    /// One forward/backward/update pass on a single view.
    pub fn train_step(&mut self, view: &DatasetView, depth: &DepthMap) -> Result<LossBreakdown> {
        let cam = &view.camera;
        let mask = occlusion_mask(&self.set, depth, cam, self.cfg.depth_delta);
        let out = render(&mut self.set, &mask, cam);

        let (w, h) = (cam.width as usize, cam.height as usize);
        let loss =
            total_loss(&out.rgb, &view.image, w, h, &self.set, self.mesh, &self.cfg.weights)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter: self.iter,
                detail: format!(
                    "image {} normal {} scale {} projection {}",
                    loss.image, loss.normal, loss.scale, loss.projection
                ),
            });
        }

        let mut store = GradStore::zeros(&self.set);
        let d_image = backward_losses(
            &self.set,
            self.mesh,
            &self.cfg.weights,
            &out.rgb,
            &view.image,
            w,
            h,
            &mut store,
        )?;
        backward_render(&self.set, &mask, cam, &out, &d_image, &mut store)?;

        for i in 0..self.set.len() {
            self.stats.grad_sum[i] += store.screen_norm[i];
            self.stats.obs[i] += store.observations[i] as u64;
        }
        self.apply_update(&store);
        self.iter += 1;
        Ok(loss)
    }

    fn apply_update(&mut self, store: &GradStore) {
        let lr_pos = self.position_lr();
        let c = &self.cfg;
        let (lr_sh, lr_op, lr_sc, lr_rot) = (c.lr_sh, c.lr_opacity, c.lr_scale, c.lr_rotation);
        let stride = self.set.sh_stride();
        let nb = stride / 3;
        for i in 0..self.set.len() {
            self.adam.steps[i] += 1;
            let t = self.adam.steps[i] as i32;
            let bc1 = 1.0 - BETA1.powi(t);
            let bc2 = 1.0 - BETA2.powi(t);

            let p = &mut self.set.positions[i];
            let g = store.positions[i];
            p.x -= self.adam.pos.step(i, 0, g.x, lr_pos, bc1, bc2);
            p.y -= self.adam.pos.step(i, 1, g.y, lr_pos, bc1, bc2);
            p.z -= self.adam.pos.step(i, 2, g.z, lr_pos, bc1, bc2);

            let s = &mut self.set.raw_scales[i];
            let g = store.raw_scales[i];
            s.x -= self.adam.scale.step(i, 0, g.x, lr_sc, bc1, bc2);
            s.y -= self.adam.scale.step(i, 1, g.y, lr_sc, bc1, bc2);
            s.z -= self.adam.scale.step(i, 2, g.z, lr_sc, bc1, bc2);

            self.set.raw_opacities[i] -=
                self.adam.opacity.step(i, 0, store.raw_opacities[i], lr_op, bc1, bc2);

            let q = &mut self.set.rotations[i];
            let g = store.rotations[i];
            q.w -= self.adam.rot.step(i, 0, g[0], lr_rot, bc1, bc2);
            q.x -= self.adam.rot.step(i, 1, g[1], lr_rot, bc1, bc2);
            q.y -= self.adam.rot.step(i, 2, g[2], lr_rot, bc1, bc2);
            q.z -= self.adam.rot.step(i, 3, g[3], lr_rot, bc1, bc2);
            *q = if q.norm() > 1e-12 { q.normalized() } else { Quat::IDENTITY };

            for k in 0..stride {
                let lr = if k % nb == 0 { lr_sh } else { lr_sh / SH_REST_LR_DIV };
                let d = self.adam.sh.step(i, k, store.sh[i * stride + k], lr, bc1, bc2);
                self.set.sh[i * stride + k] -= d;
            }
        }
    }

    /// Uniform point on a triangle via the sqrt barycentric map.
    fn sample_on_face(&mut self, face: u32) -> Vec3 {
        let [a, b, c] = self.mesh.face_vertices(face as usize);
        let (r1, r2): (f64, f64) = (self.rng.gen(), self.rng.gen());
        let s = r1.sqrt();
        a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
    }

    /// Offset drawn from the splat's own covariance.
    fn sample_from_gaussian(&mut self, i: usize) -> Vec3 {
        let r = self.set.rotation_matrix(i);
        let s = self.set.scale(i);
        let z = Vec3::new(
            self.rng.sample(rand_distr::StandardNormal),
            self.rng.sample(rand_distr::StandardNormal),
            self.rng.sample(rand_distr::StandardNormal),
        );
        self.set.positions[i] + r.mul_vec(Vec3::new(s.x * z.x, s.y * z.y, s.z * z.z))
    }

    /// Clone/split splats whose mean positional gradient reached the
    /// threshold: tight splats resample on their bound face, loose splats
    /// follow the usual clone/split rule. Refreshes classification.
    pub fn densify(&mut self) {
        let n = self.set.len();
        let ln_div = SPLIT_SCALE_DIV.ln();
        let mut keep = vec![true; n];
        // (source splat, new position, raw scale shift)
        let mut additions: Vec<(usize, Vec3, f64)> = Vec::new();
        let mut budget = self.cfg.max_splats.saturating_sub(n);

        for i in 0..n {
            if self.stats.mean(i) < self.cfg.densify_grad_threshold || budget == 0 {
                continue;
            }
            let split = self.set.scale(i).max_component() > 0.01 * self.extent;
            match (self.set.bound_faces[i], split) {
                (Some(f), false) => {
                    let p = self.sample_on_face(f);
                    additions.push((i, p, 0.0));
                    budget -= 1;
                }
                (Some(f), true) => {
                    let (p1, p2) = (self.sample_on_face(f), self.sample_on_face(f));
                    keep[i] = false;
                    additions.push((i, p1, -ln_div));
                    additions.push((i, p2, -ln_div));
                    budget -= 1;
                }
                (None, false) => {
                    let p = self.sample_from_gaussian(i);
                    additions.push((i, p, 0.0));
                    budget -= 1;
                }
                (None, true) => {
                    let (p1, p2) = (self.sample_from_gaussian(i), self.sample_from_gaussian(i));
                    keep[i] = false;
                    additions.push((i, p1, -ln_div));
                    additions.push((i, p2, -ln_div));
                    budget -= 1;
                }
            }
        }

        if !additions.is_empty() {
            for (src, pos, dscale) in &additions {
                let i = *src;
                let sh: Vec<f64> = self.set.sh_coeffs(i).to_vec();
                self.set.push(
                    *pos,
                    self.set.raw_scales[i] + Vec3::splat(*dscale),
                    self.set.raw_opacities[i],
                    self.set.rotations[i],
                    &sh,
                    self.set.bound_faces[i],
                    self.set.classes[i],
                );
            }
            self.adam.grow(additions.len());
            keep.resize(self.set.len(), true);
            self.set.retain(&keep);
            self.adam.retain(&keep);
        }

        classify_splats(&mut self.set, self.mesh, &self.bvh, self.cfg.weights.d_th);
        self.stats = DensifyStats::zeros(self.set.len());
    }

    /// Removes splats occluded in every supplied view that never contributed
    /// to a render since the last prune, plus near-transparent splats.
    /// Refreshes classification and resets visibility.
    pub fn prune(&mut self, views: &[(&Camera, &DepthMap)]) {
        let n = self.set.len();
        let mut unmasked_somewhere = vec![false; n];
        for (cam, depth) in views {
            let mask = occlusion_mask(&self.set, depth, cam, self.cfg.depth_delta);
            for i in 0..n {
                unmasked_somewhere[i] |= !mask.masked[i];
            }
        }
        let keep: Vec<bool> = (0..n)
            .map(|i| {
                let behind = !unmasked_somewhere[i] && !self.set.ever_visible[i];
                let transparent = self.set.opacity(i) < self.cfg.opacity_prune_threshold;
                !behind && !transparent
            })
            .collect();
        self.set.retain(&keep);
        self.adam.retain(&keep);
        let mut w = 0;
        for (r, &k) in keep.iter().enumerate() {
            if k {
                self.stats.grad_sum[w] = self.stats.grad_sum[r];
                self.stats.obs[w] = self.stats.obs[r];
                w += 1;
            }
        }
        self.stats.grad_sum.truncate(w);
        self.stats.obs.truncate(w);
        classify_splats(&mut self.set, self.mesh, &self.bvh, self.cfg.weights.d_th);
        self.set.ever_visible.iter_mut().for_each(|v| *v = false);
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub set: SplatSet,
    pub iters_run: usize,
    /// Mean PSNR / SSIM over held-out views, if the dataset has any.
    pub test_psnr: Option<f64>,
    pub test_ssim: Option<f64>,
}

fn eval_holdout(
    set: &mut SplatSet,
    views: &[(&DatasetView, &DepthMap)],
    delta: f64,
) -> Option<(f64, f64)> {
    if views.is_empty() {
        return None;
    }
    let (mut p_sum, mut s_sum) = (0.0, 0.0);
    for (view, depth) in views {
        let cam = &view.camera;
        let mask = occlusion_mask(set, depth, cam, delta);
        let out = render(set, &mask, cam);
        p_sum += psnr(&out.rgb, &view.image);
        s_sum += ssim_mean(&out.rgb, &view.image, cam.width as usize, cam.height as usize);
    }
    Some((p_sum / views.len() as f64, s_sum / views.len() as f64))
}

/// Full training run: initialize (or resume), iterate shuffled train views,
/// densify/prune on schedule, write metrics, eval rows, and checkpoints
/// under `out_dir`. A non-finite loss dumps the state to crash.ply and
/// propagates the error.
pub fn train(
    cfg: &TrainConfig,
    dataset: &Dataset,
    mesh: &TriMesh,
    initial: Option<SplatSet>,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let train_views: Vec<&DatasetView> = dataset.split_views(Split::Train).collect();
    let test_views: Vec<&DatasetView> = dataset.split_views(Split::Test).collect();
    if train_views.is_empty() {
        return Err(Error::Invalid("dataset has no training views".into()));
    }

    // The mesh is static, so each camera's depth map is rendered exactly once.
    let train_depths: Vec<DepthMap> =
        train_views.iter().map(|v| render_depth(mesh, &v.camera)).collect();
    let test_depths: Vec<DepthMap> =
        test_views.iter().map(|v| render_depth(mesh, &v.camera)).collect();
    let holdout: Vec<(&DatasetView, &DepthMap)> =
        test_views.iter().copied().zip(test_depths.iter()).collect();

    let mut trainer = Trainer::new(cfg.clone(), mesh, dataset.extent, initial)?;
    let mut metrics = MetricsWriter::create(&out_dir.join("metrics.csv"))?;
    let eval_path = out_dir.join("eval.csv");
    let mut eval_rows = vec!["iter,psnr_test,ssim_test".to_string()];

    let mut order: Vec<usize> = Vec::new();
    for it in 0..cfg.total_iters {
        if order.is_empty() {
            order = (0..train_views.len()).collect();
            order.shuffle(&mut trainer.rng);
        }
        let v = order.pop().expect("nonempty epoch");

        let loss = match trainer.train_step(train_views[v], &train_depths[v]) {
            Ok(l) => l,
            Err(e) => {
                let _ = save_checkpoint(&out_dir.join("crash.ply"), &trainer.set);
                return Err(e);
            }
        };
        metrics.append(it, &loss).map_err(|e| Error::io(out_dir.join("metrics.csv"), e))?;

        let done = it + 1;
        if done % cfg.densify_interval == 0
            && done >= cfg.densify_start
            && done <= cfg.densify_end
        {
            trainer.densify();
        }
        if done % cfg.prune_period == 0 {
            let views: Vec<(&Camera, &DepthMap)> = train_views
                .iter()
                .map(|v| &v.camera)
                .zip(train_depths.iter())
                .collect();
            trainer.prune(&views);
        }
        if cfg.eval_period > 0 && done % cfg.eval_period == 0 {
            if let Some((p, s)) =
                eval_holdout(&mut trainer.set, &holdout, cfg.depth_delta)
            {
                eval_rows.push(format!("{done},{p},{s}"));
            }
        }
        if cfg.checkpoint_period > 0 && done % cfg.checkpoint_period == 0 && done != cfg.total_iters
        {
            save_checkpoint(&out_dir.join(format!("checkpoint_{done:06}.ply")), &trainer.set)?;
        }
    }

    metrics.flush().map_err(|e| Error::io(out_dir.join("metrics.csv"), e))?;
    let finals = eval_holdout(&mut trainer.set, &holdout, cfg.depth_delta);
    if let Some((p, s)) = finals {
        eval_rows.push(format!("{},{p},{s}", cfg.total_iters));
    }
    std::fs::write(&eval_path, eval_rows.join("\n") + "\n")
        .map_err(|e| Error::io(&eval_path, e))?;
    save_checkpoint(&out_dir.join("final.ply"), &trainer.set)?;

    Ok(TrainOutcome {
        set: trainer.set,
        iters_run: cfg.total_iters,
        test_psnr: finals.map(|f| f.0),
        test_ssim: finals.map(|f| f.1),
    })
}

/// Convenience for the CLI resume flag.
pub fn load_initial(path: Option<&Path>) -> Result<Option<SplatSet>> {
    path.map(load_checkpoint).transpose()
}
