use mvprop_core::annotate::{BoxesFile, FrameBox, FrameBoxes};
use mvprop_core::geometry::Point3;
use mvprop_core::ply::{load_cloud, parse_ply, save_cloud};
use mvprop_core::scene::{load_scene, SceneFile};
use mvprop_core::{BoundingBox2D, CameraFrame, DepthMap, Intrinsics, PointCloud, Pose, Vec3};

#[test]
fn ply_round_trip_with_colors() {
    let dir = tempfile::tempdir().unwrap();
    let pts = vec![
        Point3::new(0.1, -2.5, 3.0),
        Point3::new(1e-7, 4.25, -0.333_333_333_333),
    ];
    let cloud = PointCloud::with_colors(pts.clone(), vec![[1, 2, 3], [250, 0, 9]]).unwrap();
    let path = dir.path().join("c.ply");
    save_cloud(&cloud, &path).unwrap();
    let back = load_cloud(&path).unwrap();
    assert_eq!(back.colors(), cloud.colors());
    for (a, b) in back.points().iter().zip(&pts) {
        assert!((a - b).norm() < 1e-9);
    }
}

#[test]
fn ply_parse_errors_are_reported() {
    let bad = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
    assert!(parse_ply(bad).is_err());
    assert!(parse_ply("not a ply").is_err());
}

#[test]
fn scene_with_depth_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let intr = Intrinsics::new(100.0, 100.0, 31.5, 23.5, 64, 48).unwrap();
    let mut depth = DepthMap::zeros(64, 48);
    depth.set(3, 4, 1234);
    depth.set(63, 47, 65535);
    let pose = Pose::from_translation(Vec3::new(1.0, 2.0, 3.0));
    let frame = CameraFrame::new("f0", intr, pose, depth.clone()).unwrap();
    std::fs::create_dir(dir.path().join("depth")).unwrap();
    depth.save_pgm(dir.path().join("depth/f0.pgm")).unwrap();
    SceneFile {
        intrinsics: intr,
        frames: vec![SceneFile::entry_from_frame(&frame, "depth/f0.pgm")],
    }
    .save(dir.path().join("scene.json"))
    .unwrap();
    let (_, frames) = load_scene(dir.path().join("scene.json")).unwrap();
    assert_eq!(frames, vec![frame]);
}

#[test]
fn boxes_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = BoxesFile {
        frames: vec![FrameBoxes {
            id: "a".into(),
            boxes: vec![
                FrameBox {
                    bbox: BoundingBox2D::new(1.0, 2.0, 30.0, 40.0)
                        .unwrap()
                        .with_label("mug"),
                    proposal_index: None,
                },
                FrameBox {
                    bbox: BoundingBox2D::new(0.0, 0.0, 5.0, 5.0).unwrap(),
                    proposal_index: Some(3),
                },
            ],
        }],
    };
    let path = dir.path().join("b.json");
    file.save(&path).unwrap();
    assert_eq!(BoxesFile::load(&path).unwrap(), file);
    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(raw["frames"][0]["boxes"][0]["label"], "mug");
    assert_eq!(raw["frames"][0]["boxes"][1]["proposal_index"], 3);
}
