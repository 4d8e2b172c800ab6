use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvprop_bench::{blobs, cluster, plane_scene};
use mvprop_core::cuboid::CuboidSearchParams;
use mvprop_core::{detect_planes, fit_cuboid, mean_shift, HoughParams, MeanShiftParams};

fn cuboid(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_cuboid");
    for n in [50, 200, 1000] {
        let pts = cluster(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &pts, |b, pts| {
            b.iter(|| fit_cuboid(pts, 0.9, &CuboidSearchParams::default()))
        });
    }
    g.finish();
}

fn meanshift(c: &mut Criterion) {
    let pts = blobs(2000, 0.3);
    c.bench_function("mean_shift/2000", |b| {
        b.iter(|| mean_shift(&pts, 0.3, &MeanShiftParams::default()).unwrap())
    });
}

fn hough(c: &mut Criterion) {
    let cloud = plane_scene();
    let mut g = c.benchmark_group("detect_planes");
    g.sample_size(10);
    g.bench_function("planted", |b| {
        b.iter(|| detect_planes(&cloud, &HoughParams::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, cuboid, meanshift, hough);
criterion_main!(benches);
