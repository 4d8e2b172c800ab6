use mvprop_core::camera::backproject_pixel;
use mvprop_core::geometry::Point3;
use mvprop_core::scale::{estimate_scale, DepthCorrespondence, FusionParams};
use mvprop_core::{project_point, Intrinsics, Pose, Vec3};
use proptest::prelude::*;

fn intrinsics() -> Intrinsics {
    Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap()
}

proptest! {
    #[test]
    fn pixel_depth_round_trip(
        u in 0.0..640.0f64,
        v in 0.0..480.0f64,
        z in 0.2..8.0f64,
        eye in prop::array::uniform3(-3.0..3.0f64),
    ) {
        let intr = intrinsics();
        let pose = Pose::look_at(Point3::from(eye), Point3::new(0.1, 0.2, 0.3), Vec3::z())
            .unwrap_or_else(|_| Pose::from_translation(Vec3::from(eye)));
        let world = pose.apply(&backproject_pixel(&intr, u, v, z));
        let p = project_point(&intr, &pose, &world).unwrap();
        prop_assert!((p.u - u).abs() < 1e-6 && (p.v - v).abs() < 1e-6 && (p.depth - z).abs() < 1e-6);
    }

    #[test]
    fn scale_is_exact_without_noise(alpha in 0.01..100.0f64, depths in prop::collection::vec(0.1..50.0f64, 1..200)) {
        let pairs: Vec<DepthCorrespondence> = depths
            .iter()
            .map(|&z| DepthCorrespondence::new(z, z * alpha).unwrap())
            .collect();
        let est = estimate_scale(&pairs, &FusionParams::default()).unwrap();
        prop_assert!((est.alpha - alpha).abs() <= 1e-12 * alpha);
    }
}
