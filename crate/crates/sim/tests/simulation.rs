use nalgebra::Vector3;
use ofnav_core::flow::{estimate_flow_with, LkParams};
use ofnav_core::{AngularRates, Attitude, CameraIntrinsics, CameraVelocity, Execution, PixelPoint};
use ofnav_sim::{
    add_camera_noise_with, add_state_noise, camera_velocity, ground_truth_flow, NoiseConfig, Pose,
    ScenarioKind, ScenarioSpec, Simulation, Terrain, TerrainSpec, TrajectorySample,
};
use proptest::prelude::*;

fn grid(k: &CameraIntrinsics, n: u32) -> Vec<PixelPoint> {
    let (w, h) = (k.width as f64, k.height as f64);
    (0..n * n)
        .map(|i| {
            k.raster_to_pixel(
                (i % n) as f64 * w / n as f64 + 3.0,
                (i / n) as f64 * h / n as f64 + 3.0,
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Rotation about the boresight moves every pixel tangentially, at a
    // rate that does not depend on the scene.
    #[test]
    fn boresight_rotation_is_tangential(r in -0.5f64..0.5, h1 in 50.0f64..5e3, h2 in 50.0f64..5e3) {
        let t = Terrain::new(TerrainSpec::flat_plane(0.0), 3).unwrap();
        let k = CameraIntrinsics::from_fov(256, 256, 1.0).unwrap();
        let w = AngularRates { p: 0.0, q: 0.0, r };
        let v = CameraVelocity::new(0.0, 0.0, 0.0);
        let pts = grid(&k, 6);
        let a = Attitude::new(0.05, -0.02, 0.3);
        let f1 = ground_truth_flow(&t, &Pose::from_attitude(&t, Vector3::new(0.0, 0.0, h1), &a), &v, &w, &pts, &k);
        let f2 = ground_truth_flow(&t, &Pose::from_attitude(&t, Vector3::new(0.0, 0.0, h2), &a), &v, &w, &pts, &k);
        for ((p, o1), o2) in pts.iter().zip(f1).zip(f2) {
            let (o1, o2) = (o1.unwrap().flow, o2.unwrap().flow);
            let speed = r.abs() * (p.x.hypot(p.y));
            prop_assert!((o1.u * p.x + o1.v * p.y).abs() <= 1e-9 * (1.0 + speed * p.x.hypot(p.y)));
            prop_assert!((o1.u.hypot(o1.v) - speed).abs() <= 1e-9 * (1.0 + speed));
            prop_assert!((o1.u - o2.u).abs() < 1e-9 && (o1.v - o2.v).abs() < 1e-9);
        }
    }
}

#[test]
fn tracked_shift_matches_ground_truth() {
    let spec = ScenarioSpec::preset(ScenarioKind::Flat);
    let k = CameraIntrinsics::from_fov(512, 512, 60f64.to_radians()).unwrap();
    let sim = Simulation::new(spec, k, 11).unwrap();
    let att = Attitude::new(0.0, 0.0, 0.0);
    let p0 = Vector3::new(20.0, -10.0, 500.0);
    let dv = Vector3::new(4.0, -2.5, 0.0);
    let a = Pose::from_attitude(&sim.terrain, p0, &att);
    let b = Pose::from_attitude(&sim.terrain, p0 + dv, &att);
    let img = |pose: &Pose| {
        ofnav_sim::render_frame_with(
            &sim.terrain,
            pose,
            &sim.spec.sun,
            &k,
            &sim.spec.render,
            Execution::Sequential,
        )
    };
    let f = estimate_flow_with(
        &img(&a),
        &img(&b),
        1.0,
        &LkParams::default(),
        &k,
        Execution::Sequential,
    )
    .unwrap();
    assert!(f.observations.len() > 20, "{} tracks", f.observations.len());
    // Translation parallel to a level plane shifts the image uniformly.
    let v = camera_velocity(&a, &dv);
    let pts: Vec<_> = f.observations.iter().map(|o| o.point).collect();
    let gt = ground_truth_flow(&sim.terrain, &a, &v, &AngularRates::default(), &pts, &k);
    let mut err: Vec<f64> = f
        .observations
        .iter()
        .zip(gt)
        .map(|(o, g)| {
            let g = g.unwrap().flow;
            (o.flow.u - g.u).hypot(o.flow.v - g.v)
        })
        .collect();
    err.sort_by(f64::total_cmp);
    let median = err[err.len() / 2];
    assert!(median < 0.05, "median error {median} px");
}

#[test]
fn frames_are_identical_for_any_execution() {
    for kind in [ScenarioKind::Crater, ScenarioKind::Hohmann] {
        let k = CameraIntrinsics::from_fov(128, 128, 60f64.to_radians()).unwrap();
        let sim = Simulation::new(ScenarioSpec::preset(kind), k, 5).unwrap();
        let s = sim.samples(0.5).unwrap()[3];
        let par = sim.render(&s, Execution::Parallel);
        let seq = sim.render(&s, Execution::Sequential);
        assert_eq!(par, seq, "{kind}");
        let noise = NoiseConfig {
            camera_sigma: 12.0,
            ..NoiseConfig::default()
        };
        assert_eq!(
            add_camera_noise_with(&par, &noise, 7, Execution::Parallel),
            add_camera_noise_with(&seq, &noise, 7, Execution::Sequential)
        );
    }
}

#[test]
fn state_noise_statistics() {
    let noise = NoiseConfig {
        attitude_sigma: 2e-3,
        rate_sigma: 5e-4,
        seed: 99,
        ..NoiseConfig::default()
    };
    let clean = TrajectorySample {
        t: 0.0,
        position: Vector3::new(0.0, 0.0, 1000.0),
        velocity: Vector3::zeros(),
        attitude: Attitude::new(0.1, -0.2, 0.3),
        rates: AngularRates {
            p: 0.01,
            q: 0.0,
            r: -0.02,
        },
    };
    let n = 5000;
    let mut att = [Vec::new(), Vec::new(), Vec::new()];
    let mut rate = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..n {
        let s = add_state_noise(&clean, &noise, i);
        assert_eq!(
            (s.position, s.velocity, s.t),
            (clean.position, clean.velocity, clean.t)
        );
        att[0].push(s.attitude.roll - clean.attitude.roll);
        att[1].push(s.attitude.pitch - clean.attitude.pitch);
        att[2].push(s.attitude.yaw - clean.attitude.yaw);
        rate[0].push(s.rates.p - clean.rates.p);
        rate[1].push(s.rates.q - clean.rates.q);
        rate[2].push(s.rates.r - clean.rates.r);
        assert_eq!(s, add_state_noise(&clean, &noise, i));
    }
    let check = |xs: &[f64], sigma: f64| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        // 4 standard errors on the mean, about 5% on the deviation.
        assert!(m.abs() < 4.0 * sigma / (xs.len() as f64).sqrt(), "mean {m}");
        assert!((sd / sigma - 1.0).abs() < 0.05, "std {sd} vs {sigma}");
    };
    for xs in &att {
        check(xs, noise.attitude_sigma);
    }
    for xs in &rate {
        check(xs, noise.rate_sigma);
    }
}
