//! End-to-end runs of the `mvprop` binary on small synthetic scenes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvprop_cli::manifest::Manifest;
use mvprop_core::annotate::BoxesFile;
use mvprop_core::eval::RecallReport;
use mvprop_core::synth::scenes::{orbit, tabletop_scene};
use mvprop_core::Intrinsics;
use sha2::{Digest, Sha256};

fn mvprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvprop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read<T: serde::de::DeserializeOwned>(p: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Four low-resolution frames around the tabletop, rendered through `synth --spec`.
fn small_scene(dir: &Path) -> PathBuf {
    let mut spec = tabletop_scene();
    spec.intrinsics = Intrinsics::new(131.25, 131.25, 79.5, 59.5, 160, 120).unwrap();
    spec.camera_path = orbit([0.4, 0.0, 0.35], 2.8, 1.7, 4, 0.0, std::f64::consts::TAU);
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let scene = dir.join("scene");
    let out = mvprop(&[
        "synth",
        "--spec",
        s(&spec_path),
        "--seed",
        "5",
        "-o",
        s(&scene),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    scene
}

const FAST: [&str; 4] = [
    "--set",
    "proposals.radii=[0.3]",
    "--set",
    "hough.inlier_threshold=0.02",
];

fn run(flow: &str, scene: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![flow, "--scene", s(scene), "-o", s(out)];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    mvprop(&args)
}

#[test]
fn multiview_run_is_complete_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = small_scene(tmp.path()).join("scene.json");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "threads=1"), (&b, "threads=2")] {
        let out = run("run-multiview", &scene, dir, &["--set", threads]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(!dir.join(".partial").exists());
    }

    let ma: Manifest = read(&a.join("manifest.json"));
    let mb: Manifest = read(&b.join("manifest.json"));
    assert_eq!(ma.artifacts, mb.artifacts);
    assert_eq!(ma.config_hash, mb.config_hash);
    let stages: Vec<&str> = ma.stages.iter().map(|t| t.stage.as_str()).collect();
    assert_eq!(stages, ["fuse", "planes", "propose", "project", "eval"]);

    // Every listed artifact exists with the recorded hash, and nothing is unlisted.
    for art in &ma.artifacts {
        let bytes = std::fs::read(a.join(&art.path)).unwrap();
        assert_eq!(
            hex::encode(Sha256::digest(&bytes)),
            art.sha256,
            "{}",
            art.path
        );
        assert_eq!(bytes.len() as u64, art.bytes);
    }
    for name in [
        "fused.ply",
        "fuse_report.json",
        "planes.json",
        "proposals.json",
        "boxes.json",
        "recall.json",
        "config.json",
    ] {
        assert!(
            ma.artifacts.iter().any(|x| x.path == name),
            "{name} missing"
        );
    }

    let recall: RecallReport = read(&a.join("recall.json"));
    assert!(recall.is_monotone());
    assert!(recall.mean_recall(0.5).unwrap() > 0.5);
}

#[test]
fn stage_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = small_scene(tmp.path());
    let scene = scene_dir.join("scene.json");
    let o = |n: &str| tmp.path().join(n);
    let ok = |out: Output| assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    ok(mvprop(&["fuse", "--scene", s(&scene), "-o", s(&o("fuse"))]));
    let cloud = o("fuse").join("fused.ply");
    ok(mvprop(&[
        "planes",
        "--cloud",
        s(&cloud),
        "-o",
        s(&o("planes")),
        "--filtered",
        "--set",
        FAST[3],
    ]));
    assert!(std::fs::read_dir(o("planes")).unwrap().any(|e| e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with("filtered_")));
    let planes = o("planes").join("planes.json");
    let propose_dir = o("propose");
    let mut args = vec![
        "propose",
        "--cloud",
        s(&cloud),
        "--planes",
        s(&planes),
        "-o",
        s(&propose_dir),
    ];
    args.extend_from_slice(&FAST);
    ok(mvprop(&args));
    let proposals = o("propose").join("proposals.json");
    let report = o("fuse").join("fuse_report.json");
    ok(mvprop(&[
        "project",
        "--scene",
        s(&scene),
        "--cloud",
        s(&cloud),
        "--proposals",
        s(&proposals),
        "--fuse-report",
        s(&report),
        "-o",
        s(&o("project")),
    ]));
    let boxes = o("project").join("boxes.json");
    let gt = scene_dir.join("gt_boxes.json");
    ok(mvprop(&[
        "eval",
        "--proposals",
        s(&boxes),
        "--ground-truth",
        s(&gt),
        "-o",
        s(&o("eval")),
    ]));

    let boxes: BoxesFile = read(&boxes);
    assert_eq!(boxes.frames.len(), 4);
    let recall: RecallReport = read(&o("eval").join("recall.json"));
    assert!(recall.is_monotone());
    assert!(o("eval").join("labels.json").exists());
}

#[test]
fn singleview_run_writes_per_frame_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = small_scene(tmp.path()).join("scene.json");
    let out_dir = tmp.path().join("single");
    let out = run("run-singleview", &scene, &out_dir, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let boxes: BoxesFile = read(&out_dir.join("boxes.json"));
    assert_eq!(boxes.frames.len(), 4);
    for f in &boxes.frames {
        assert!(out_dir
            .join("frames")
            .join(&f.id)
            .join("proposals.json")
            .exists());
    }
    let m: Manifest = read(&out_dir.join("manifest.json"));
    assert_eq!(m.flow, "singleview");
}

#[test]
fn zero_frame_scene_succeeds_with_empty_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.json");
    let intr = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
    std::fs::write(
        &scene,
        serde_json::json!({ "intrinsics": intr, "frames": [] }).to_string(),
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = run("run-multiview", &scene, &out_dir, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let recall: RecallReport = read(&out_dir.join("recall.json"));
    assert!(recall.classes.is_empty());
    let boxes: BoxesFile = read(&out_dir.join("boxes.json"));
    assert!(boxes.frames.is_empty());
}

#[test]
fn invalid_configuration_exits_2_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.json");
    std::fs::write(&scene, "{}").unwrap();
    let out_dir = tmp.path().join("out");
    let cases: [&[&str]; 3] = [
        &["--set", "proposals.radii=[]"],
        &["--set", "hough.no_such_key=1"],
        &["--set", "alpha=-1"],
    ];
    for extra in cases {
        let mut args = vec!["run-multiview", "--scene", s(&scene), "-o", s(&out_dir)];
        args.extend_from_slice(extra);
        let out = mvprop(&args);
        assert_eq!(code(&out), 2, "{extra:?}");
        assert!(!out_dir.exists(), "{extra:?} created output");
    }
    let missing = tmp.path().join("nope.json");
    let out = mvprop(&["run-multiview", "--scene", s(&missing), "-o", s(&out_dir)]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&mvprop(&["run-multiview", "--bogus"])), 2);
}

#[test]
fn stage_failure_exits_1_and_keeps_partial_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = small_scene(tmp.path());
    std::fs::write(
        scene_dir.join("depth").join("frame_0001.pgm"),
        b"P5\n160 120\n65535\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(
        "run-multiview",
        &scene_dir.join("scene.json"),
        &out_dir,
        &[],
    );
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let marker = std::fs::read_to_string(out_dir.join(".partial")).unwrap();
    assert!(marker.contains("failed"));
    assert!(!out_dir.join("manifest.json").exists());
}

#[test]
fn config_file_layers_and_set_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"defaults": {"seed": 3, "hough": {"max_planes": 4}}, "hough": {"max_planes": 6}}"#,
    )
    .unwrap();
    let cloud = tmp.path().join("c.ply");
    let pts: Vec<_> = (0..400)
        .map(|i| mvprop_core::Point3::new((i % 20) as f64 * 0.05, (i / 20) as f64 * 0.05, 0.0))
        .collect();
    std::fs::write(
        &cloud,
        mvprop_core::ply::to_ply_string(&mvprop_core::PointCloud::new(pts).unwrap()),
    )
    .unwrap();
    let out_dir = tmp.path().join("p");
    let out = mvprop(&[
        "planes",
        "--cloud",
        s(&cloud),
        "-o",
        s(&out_dir),
        "--config",
        s(&cfg),
        "--set",
        "hough.max_planes=1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let planes: Vec<serde_json::Value> = read(&out_dir.join("planes.json"));
    assert_eq!(planes.len(), 1);
}
