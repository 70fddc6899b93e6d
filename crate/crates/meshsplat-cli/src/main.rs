//! Command-line frontend: train, render, stats, check-grad, make-scene.
//!
//! Exit codes: 0 success, 1 verification failure (gradient check mismatch,
//! non-finite training state), 2 usage or IO error.

mod run_config;

use clap::{Parser, Subcommand};
use meshsplat::grad::{check_gradients, standard_fixture, GradCheckOptions};
use meshsplat::io::dataset::ManifestView;
use meshsplat::io::image::{load_png_linear, save_png_linear};
use meshsplat::io::synthetic::{make_synthetic_scene, SceneKind, SceneSpec};
use meshsplat::io::{load_cameras, load_checkpoint, load_dataset, psnr};
use meshsplat::mesh::{load_mesh, render_depth, MeshBvh, TriMesh};
use meshsplat::render::{occlusion_mask, render, OcclusionMask};
use meshsplat::splat::{classify_splats, SplatClass, SplatSet};
use meshsplat::train::train;
use meshsplat::{Error, Result};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "meshsplat", version, about = "Mesh-bound Gaussian splatting")]
struct Cli {
    /// Cap the worker thread count (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimize a splat set against a dataset.
    Train(TrainArgs),
    /// Render a checkpoint from a camera manifest.
    Render(RenderArgs),
    /// Report splat counts and mesh-distance distribution of a checkpoint.
    Stats(StatsArgs),
    /// Validate analytic gradients against finite differences.
    CheckGrad(CheckGradArgs),
    /// Generate a synthetic dataset with a known reference splat set.
    MakeScene(MakeSceneArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset directory containing transforms.json.
    #[arg(long)]
    dataset: PathBuf,
    /// Mesh PLY; defaults to the dataset's mesh_path.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Output directory for checkpoints, metrics, and the config echo.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file; flags and --set override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. --set weights.lambda_nc=0.2 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Resume from an existing checkpoint instead of mesh initialization.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory with a transforms.json listing the cameras to render.
    #[arg(long)]
    cameras: PathBuf,
    /// Mesh PLY for occlusion; defaults to the manifest's mesh_path.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Skip depth-map occlusion masking (ablation).
    #[arg(long)]
    no_mesh_occlusion: bool,
}

#[derive(clap::Args)]
struct StatsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Mesh PLY; enables the distance histogram and --classify.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Re-run tight/loose classification before reporting.
    #[arg(long)]
    classify: bool,
    /// Distance threshold for --classify, scene units.
    #[arg(long, default_value_t = 0.01)]
    d_th: f64,
}

#[derive(clap::Args)]
struct CheckGradArgs {
    #[arg(long, default_value_t = 10)]
    splats: usize,
    #[arg(long, default_value_t = 32)]
    width: u32,
    #[arg(long, default_value_t = 32)]
    height: u32,
    #[arg(long, default_value_t = 3)]
    sh_degree: usize,
    #[arg(long, default_value_t = 90)]
    seed: u64,
    /// Intentionally offset one class's analytic gradients (self-test).
    #[arg(long, value_name = "CLASS")]
    corrupt: Option<String>,
    /// Also write the full report as JSON.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct MakeSceneArgs {
    /// cube, icosphere, or two-object.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    views: u32,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            std::process::exit(2);
        }
    }
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Render(a) => cmd_render(a),
        Cmd::Stats(a) => cmd_stats(a),
        Cmd::CheckGrad(a) => cmd_check_grad(a),
        Cmd::MakeScene(a) => cmd_make_scene(a),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(match e {
                Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_) => 1,
                _ => 2,
            });
        }
    }
}

/// Infinite PSNR (bit-identical images) serializes as the string "inf".
fn json_db(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

fn class_counts(set: &SplatSet) -> (usize, usize) {
    let tight = set.classes.iter().filter(|c| **c == SplatClass::Tight).count();
    (tight, set.len() - tight)
}

fn load_mesh_reporting(path: &Path) -> Result<TriMesh> {
    let (mesh, dropped) = load_mesh(path)?;
    if dropped > 0 {
        eprintln!("note: dropped {dropped} degenerate faces from {}", path.display());
    }
    Ok(mesh)
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let mut cfg = run_config::assemble(args.config.as_deref(), &args.set)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(iters) = args.iters {
        cfg.total_iters = iters;
        // Keep the densify window inside the shortened run.
        cfg.densify_end = cfg.densify_end.min(iters);
        cfg.densify_start = cfg.densify_start.min(cfg.densify_end);
    }
    cfg.validate()?;

    let dataset = load_dataset(&args.dataset)?;
    let mesh_path = args
        .mesh
        .clone()
        .or_else(|| dataset.mesh_path.clone())
        .ok_or_else(|| Error::Config("no mesh: pass --mesh or set mesh_path in transforms".into()))?;
    let mesh = load_mesh_reporting(&mesh_path)?;
    let initial = args.resume.as_deref().map(load_checkpoint).transpose()?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    run_config::echo(&cfg, &args.out)?;

    let outcome = train(&cfg, &dataset, &mesh, initial, &args.out)?;
    let (tight, loose) = class_counts(&outcome.set);
    let summary = json!({
        "iters": outcome.iters_run,
        "splats": outcome.set.len(),
        "tight": tight,
        "loose": loose,
        "psnr": outcome.test_psnr.map(json_db),
        "ssim": outcome.test_ssim,
    });
    let path = args.out.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).unwrap() + "\n")
        .map_err(|e| Error::io(&path, e))?;
    println!(
        "trained {} iters: {} splats ({tight} tight, {loose} loose), held-out psnr {}",
        outcome.iters_run,
        outcome.set.len(),
        outcome.test_psnr.map_or("n/a".into(), |p| format!("{p:.2} dB")),
    );
    Ok(0)
}

fn cmd_render(args: RenderArgs) -> Result<i32> {
    let manifest = load_cameras(&args.cameras)?;
    let mut set = load_checkpoint(&args.checkpoint)?;
    let mesh = if args.no_mesh_occlusion {
        None
    } else {
        let path = args.mesh.clone().or_else(|| manifest.mesh_path.clone()).ok_or_else(|| {
            Error::Config(
                "occlusion masking needs a mesh: pass --mesh or --no-mesh-occlusion".into(),
            )
        })?;
        Some(load_mesh_reporting(&path)?)
    };

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut images = Vec::new();
    for ManifestView { image_path, camera, .. } in &manifest.views {
        let out = match &mesh {
            Some(m) => {
                let depth = render_depth(m, camera);
                let mask = occlusion_mask(&set, &depth, camera, 0.01);
                render(&mut set, &mask, camera)
            }
            None => {
                let mask = OcclusionMask::none(set.len());
                render(&mut set, &mask, camera)
            }
        };
        let name = image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("view_{}", images.len()));
        let png = args.out.join(format!("{name}.png"));
        save_png_linear(&png, &out.rgb, camera.width, camera.height)?;

        // Side-by-side quality when the manifest's source image exists.
        let mut entry = json!({ "name": name });
        if image_path.is_file() {
            let (w, h, reference) = load_png_linear(image_path)?;
            if (w, h) == (camera.width, camera.height) {
                entry["psnr"] = json_db(psnr(&out.rgb, &reference));
            }
        }
        images.push(entry);
    }

    let report = json!({ "count": images.len(), "images": images });
    let path = args.out.join("render_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap() + "\n")
        .map_err(|e| Error::io(&path, e))?;
    println!("rendered {} views to {}", manifest.views.len(), args.out.display());
    Ok(0)
}

fn cmd_stats(args: StatsArgs) -> Result<i32> {
    let mut set = load_checkpoint(&args.checkpoint)?;
    let mesh = args.mesh.as_deref().map(load_mesh_reporting).transpose()?;

    let distances = match (&mesh, args.classify) {
        (Some(mesh), true) => {
            let bvh = MeshBvh::build(mesh);
            Some(classify_splats(&mut set, mesh, &bvh, args.d_th))
        }
        (Some(mesh), false) => {
            let bvh = MeshBvh::build(mesh);
            Some(
                (0..set.len())
                    .map(|i| bvh.nearest_face(mesh, set.positions[i]).dist)
                    .collect(),
            )
        }
        (None, true) => {
            return Err(Error::Config("--classify needs --mesh".into()));
        }
        (None, false) => None,
    };

    let (tight, loose) = class_counts(&set);
    println!("splats: {} total, {tight} tight, {loose} loose", set.len());

    if let Some(d) = distances {
        // Decade buckets around the classification threshold.
        let edges = [0.001, 0.01, 0.1, 1.0];
        let mut counts = [0usize; 5];
        for &x in &d {
            let b = edges.iter().position(|e| x < *e).unwrap_or(edges.len());
            counts[b] += 1;
        }
        println!("distance to mesh:");
        let labels =
            ["       < 0.001", "0.001 ..  0.01", " 0.01 ..   0.1", "  0.1 ..     1", "      >=     1"];
        for (label, count) in labels.iter().zip(counts) {
            println!("  {label}  {count}");
        }
    }
    Ok(0)
}

const PARAM_CLASSES: [&str; 5] = ["position", "raw_scale", "raw_opacity", "rotation", "sh"];

fn cmd_check_grad(args: CheckGradArgs) -> Result<i32> {
    if let Some(c) = &args.corrupt {
        if !PARAM_CLASSES.contains(&c.as_str()) {
            return Err(Error::Config(format!(
                "unknown parameter class {c:?} (one of {})",
                PARAM_CLASSES.join(", ")
            )));
        }
    }
    let scene = standard_fixture(args.splats, args.width, args.height, args.sh_degree, args.seed);
    let opts = GradCheckOptions { corrupt_class: args.corrupt, ..GradCheckOptions::default() };
    let report = check_gradients(&scene, &opts)?;
    print!("{}", report.text_table());
    if let Some(path) = &args.json {
        std::fs::write(path, report.to_json() + "\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn cmd_make_scene(args: MakeSceneArgs) -> Result<i32> {
    let kind = SceneKind::parse(&args.kind).ok_or_else(|| {
        Error::Config(format!("unknown scene kind {:?} (cube, icosphere, two-object)", args.kind))
    })?;
    let spec = SceneSpec {
        kind,
        views: args.views,
        width: args.width,
        height: args.height,
        seed: args.seed,
    };
    make_synthetic_scene(&spec, &args.out)?;
    println!("wrote {} scene to {}", args.kind, args.out.display());
    Ok(0)
}
