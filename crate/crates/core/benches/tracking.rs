use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ofnav_core::flow::{estimate_flow_with, GrayImage, LkParams};
use ofnav_core::{
    invert_linear, AngularRates, CameraIntrinsics, Execution, LinearOptions, PlanarFixedModel,
};
use std::hint::black_box;

fn texture(w: u32, h: u32, dx: f64) -> GrayImage {
    GrayImage::from_fn(w, h, |c, r| {
        let (x, y) = (c as f64 - dx, r as f64);
        let v = 128.0
            + 40.0 * (0.11 * x + 0.03 * y).sin()
            + 30.0 * (0.07 * y - 0.05 * x).cos()
            + 20.0 * (0.31 * x).sin() * (0.23 * y).cos()
            + 15.0 * (0.53 * x + 0.47 * y).sin();
        v.round().clamp(0.0, 255.0) as u8
    })
}

fn pair_throughput(c: &mut Criterion) {
    let mut g = c.benchmark_group("frame_pair");
    g.sample_size(10);
    for size in [512u32, 1024] {
        let a = texture(size, size, 0.0);
        let b = texture(size, size, 2.5);
        let k = CameraIntrinsics::from_fov(size, size, 60f64.to_radians()).unwrap();
        let p = LkParams::default();
        let model = PlanarFixedModel::nadir(1000.0).unwrap();
        for (name, exec) in [
            ("parallel", Execution::Parallel),
            ("sequential", Execution::Sequential),
        ] {
            g.bench_with_input(BenchmarkId::new(name, size), &size, |bench, _| {
                bench.iter(|| {
                    let f = estimate_flow_with(&a, &b, 0.25, &p, &k, exec).unwrap();
                    let e = invert_linear(
                        &f.observations,
                        &AngularRates::default(),
                        &model,
                        &k,
                        &LinearOptions::default(),
                    );
                    black_box(e)
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, pair_throughput);
criterion_main!(benches);
