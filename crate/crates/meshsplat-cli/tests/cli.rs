//! End-to-end tests that spawn the compiled binary.

use meshsplat::io::load_checkpoint;
use meshsplat::ply::{write_ply, Element, Format, Ply, Property, ScalarType};
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshsplat")).args(args).output().expect("binary spawns")
}

fn assert_exit(out: &Output, want: i32) {
    let got = out.status.code().unwrap_or(-1);
    assert_eq!(
        got,
        want,
        "exit {got}, want {want}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small cube dataset: 4 ring cameras at 24x24.
fn make_cube_scene(dir: &Path) {
    let out = run(&[
        "make-scene",
        "--kind",
        "cube",
        "--out",
        dir.to_str().unwrap(),
        "--views",
        "4",
        "--width",
        "24",
        "--height",
        "24",
    ]);
    assert_exit(&out, 0);
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn png_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.ends_with(".png").then_some(name)
        })
        .collect();
    names.sort();
    names
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--dataset",
        "/nonexistent/dataset",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("error"), "stderr names the failure: {}", stderr(&out));
}

#[test]
fn unknown_override_key_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--dataset",
        "/nonexistent/dataset",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "not_a_field=3",
    ]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("not_a_field"), "stderr: {}", stderr(&out));
}

#[test]
fn zero_iteration_train_writes_initial_checkpoint_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let out_dir = dir.path().join("run");
    make_cube_scene(&scene);

    let out = run(&[
        "train",
        "--dataset",
        scene.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--iters",
        "0",
        "--set",
        "weights.lambda_nc=0.25",
    ]);
    assert_exit(&out, 0);

    let set = load_checkpoint(&out_dir.join("final.ply")).unwrap();
    assert_eq!(set.len(), 12, "initialization places one splat per cube face");

    let echo = read_json(&out_dir.join("run_config.json"));
    assert_eq!(echo["total_iters"], 0, "echo holds the effective value");
    assert_eq!(echo["weights"]["lambda_nc"], 0.25);
    assert_eq!(echo["densify_end"], 0, "densify window is clamped into the run");

    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["iters"], 0);
    assert_eq!(summary["splats"], 12);
    assert_eq!(summary["tight"], 12);
}

#[test]
fn short_train_run_writes_metrics_eval_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let out_dir = dir.path().join("run");
    make_cube_scene(&scene);

    let out = run(&[
        "train",
        "--dataset",
        scene.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--iters",
        "5",
        "--seed",
        "3",
    ]);
    assert_exit(&out, 0);

    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 6, "header plus one row per iteration");
    assert!(lines[0].starts_with("iter,loss_image"));

    let eval = std::fs::read_to_string(out_dir.join("eval.csv")).unwrap();
    assert!(eval.lines().count() >= 2, "final holdout row is always written");

    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["iters"], 5);
    assert!(summary["psnr"].is_number() || summary["psnr"] == "inf");
    assert!(out_dir.join("final.ply").is_file());
}

#[test]
fn reference_render_reproduces_dataset_images() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let render_dir = dir.path().join("render");
    make_cube_scene(&scene);

    let out = run(&[
        "render",
        "--checkpoint",
        scene.join("reference.ply").to_str().unwrap(),
        "--cameras",
        scene.to_str().unwrap(),
        "--mesh",
        scene.join("mesh.ply").to_str().unwrap(),
        "--out",
        render_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    assert_eq!(png_names(&render_dir), ["0000.png", "0001.png", "0002.png", "0003.png"]);
    for name in png_names(&render_dir) {
        let ours = std::fs::read(render_dir.join(&name)).unwrap();
        let theirs = std::fs::read(scene.join("images").join(&name)).unwrap();
        assert_eq!(ours, theirs, "{name} is byte-identical to the dataset image");
    }

    // In-memory render vs the quantized file only differs by the sRGB
    // rounding, which sits far above 60 dB.
    let report = read_json(&render_dir.join("render_report.json"));
    assert_eq!(report["count"], 4);
    for entry in report["images"].as_array().unwrap() {
        let good = entry["psnr"] == "inf" || entry["psnr"].as_f64().unwrap() > 60.0;
        assert!(good, "camera-accurate render scores high psnr: {entry}");
    }
}

#[test]
fn disabling_mesh_occlusion_changes_the_images() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    make_cube_scene(&scene);
    let masked = dir.path().join("masked");
    let unmasked = dir.path().join("unmasked");
    let checkpoint = scene.join("reference.ply");
    let mesh = scene.join("mesh.ply");

    let common = [
        "render",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--cameras",
        scene.to_str().unwrap(),
        "--mesh",
        mesh.to_str().unwrap(),
        "--out",
    ];
    let mut with = common.to_vec();
    with.push(masked.to_str().unwrap());
    assert_exit(&run(&with), 0);
    let mut without = common.to_vec();
    without.push(unmasked.to_str().unwrap());
    without.push("--no-mesh-occlusion");
    assert_exit(&run(&without), 0);

    let differing = png_names(&masked)
        .iter()
        .filter(|name| {
            std::fs::read(masked.join(name.as_str())).unwrap()
                != std::fs::read(unmasked.join(name.as_str())).unwrap()
        })
        .count();
    assert!(differing > 0, "back-face splats bleed through without the depth mask");
}

#[test]
fn empty_camera_manifest_renders_nothing_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    make_cube_scene(&scene);
    let cams = dir.path().join("cams");
    std::fs::create_dir(&cams).unwrap();
    std::fs::write(cams.join("transforms.json"), "{\"frames\": []}\n").unwrap();
    let render_dir = dir.path().join("render");

    let out = run(&[
        "render",
        "--checkpoint",
        scene.join("reference.ply").to_str().unwrap(),
        "--cameras",
        cams.to_str().unwrap(),
        "--mesh",
        scene.join("mesh.ply").to_str().unwrap(),
        "--out",
        render_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert!(png_names(&render_dir).is_empty());
    assert_eq!(read_json(&render_dir.join("render_report.json"))["count"], 0);
}

#[test]
fn renders_are_deterministic_for_a_fixed_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    make_cube_scene(&scene);

    let render = |out_dir: &Path| {
        let out = run(&[
            "--threads",
            "1",
            "render",
            "--checkpoint",
            scene.join("reference.ply").to_str().unwrap(),
            "--cameras",
            scene.to_str().unwrap(),
            "--mesh",
            scene.join("mesh.ply").to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_exit(&out, 0);
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    render(&a);
    render(&b);
    for name in png_names(&a) {
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name} repeats bit-for-bit"
        );
    }
}

#[test]
fn stats_reports_class_counts_and_distance_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let out = run(&[
        "make-scene",
        "--kind",
        "two-object",
        "--out",
        scene.to_str().unwrap(),
        "--views",
        "4",
        "--width",
        "24",
        "--height",
        "24",
    ]);
    assert_exit(&out, 0);

    let out = run(&[
        "stats",
        "--checkpoint",
        scene.join("reference.ply").to_str().unwrap(),
        "--mesh",
        scene.join("mesh.ply").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let text = stdout(&out);
    assert!(
        text.contains("54 total, 48 tight, 6 loose"),
        "surface splats tight, floaters loose: {text}"
    );
    assert!(text.contains("distance to mesh:"), "histogram present with a mesh: {text}");
}

#[test]
fn vanilla_import_stays_loose_until_classified() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    make_cube_scene(&scene);

    // A plain export: no binding or class columns, positions on the +z face.
    let n = 4;
    let col = |name: &str, v: f64| Property::scalar(name, ScalarType::Float, vec![v; n]);
    let mut props = vec![col("x", 0.25), col("y", 0.25), col("z", 1.0)];
    for name in ["nx", "ny", "nz"] {
        props.push(col(name, 0.0));
    }
    for ch in 0..3 {
        props.push(col(&format!("f_dc_{ch}"), 0.5));
    }
    props.push(col("opacity", 1.0));
    for a in 0..3 {
        props.push(col(&format!("scale_{a}"), -2.0));
    }
    for k in 0..4 {
        props.push(col(&format!("rot_{k}"), if k == 0 { 1.0 } else { 0.0 }));
    }
    let ply = Ply {
        format: Format::BinaryLittleEndian,
        elements: vec![Element { name: "vertex".into(), count: n, properties: props }],
    };
    let vanilla = dir.path().join("vanilla.ply");
    write_ply(&vanilla, &ply).unwrap();

    let mesh_path = scene.join("mesh.ply");
    let base = ["stats", "--checkpoint", vanilla.to_str().unwrap()];
    let mesh = ["--mesh", mesh_path.to_str().unwrap()];

    let before = run(&[&base[..], &mesh[..]].concat());
    assert_exit(&before, 0);
    assert!(
        stdout(&before).contains("4 total, 0 tight, 4 loose"),
        "import never classifies: {}",
        stdout(&before)
    );

    let after = run(&[&base[..], &mesh[..], &["--classify"]].concat());
    assert_exit(&after, 0);
    assert!(
        stdout(&after).contains("4 total, 4 tight, 0 loose"),
        "on-surface splats classify tight: {}",
        stdout(&after)
    );

    let no_mesh = run(&[&base[..], &["--classify"]].concat());
    assert_exit(&no_mesh, 2);
}

#[test]
fn grad_check_passes_clean_and_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();

    let clean = run(&["check-grad"]);
    assert_exit(&clean, 0);
    let table = stdout(&clean);
    assert!(table.contains("position") && table.contains("total: PASS"), "table: {table}");

    let json_path = dir.path().join("report.json");
    let bad = run(&["check-grad", "--corrupt", "raw_scale", "--json", json_path.to_str().unwrap()]);
    assert_exit(&bad, 1);
    let report = read_json(&json_path);
    assert_eq!(report["passed"], false);
    let classes = report["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 5);
    let scale = classes.iter().find(|c| c["class"] == "raw_scale").unwrap();
    assert_eq!(scale["passed"], false, "the corrupted class is the one that fails");

    let bogus = run(&["check-grad", "--corrupt", "bogus"]);
    assert_exit(&bogus, 2);
}
