use ofnav_core::flow::{
    build_pyramid, detection_margin, estimate_flow, lk_track, min_eigen_map, shi_tomasi_detect,
    FeaturePoint, GrayImage, LkParams, TrackStatus,
};
use ofnav_core::{CameraIntrinsics, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multi-scale random texture, evaluated continuously so shifted frames are
/// exact.
struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..40)
            .map(|_| {
                let lambda: f64 = 2f64.powf(rng.random_range(3.0..7.0));
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / lambda;
                (
                    k * th.cos(),
                    k * th.sin(),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    1.2 * lambda.sqrt(),
                )
            })
            .collect();
        Self { waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        118.0
            + self
                .waves
                .iter()
                .map(|(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin())
                .sum::<f64>()
    }

    fn render(&self, w: u32, h: u32, dx: f64, dy: f64, offset: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |c, r| {
            (self.at(c as f64 - dx, r as f64 - dy) + offset)
                .round()
                .clamp(0.0, 255.0) as u8
        })
    }
}

fn params() -> LkParams {
    LkParams {
        min_distance: 30.0,
        ..LkParams::default()
    }
}

#[test]
fn identical_frames_give_zero_displacement() {
    let img = Texture::new(1).render(320, 240, 0.0, 0.0, 0.0);
    let p = params();
    let f = shi_tomasi_detect(&img, &p).unwrap();
    let pyr = build_pyramid(&img, p.pyramid_levels).unwrap();
    let t = lk_track(&pyr, &pyr, &f, &p).unwrap();
    assert!(!t.is_empty());
    for r in &t {
        assert_eq!(r.status, TrackStatus::Tracked);
        let (dx, dy) = r.displacement();
        assert!(dx.abs() < 1e-3 && dy.abs() < 1e-3);
    }
}

#[test]
fn subpixel_shifts_within_tolerance() {
    let tex = Texture::new(2);
    let p = params();
    let a = tex.render(320, 320, 0.0, 0.0, 0.0);
    let feats = shi_tomasi_detect(&a, &p).unwrap();
    let pa = build_pyramid(&a, p.pyramid_levels).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut se, mut n) = (0.0, 0);
    for _ in 0..20 {
        let (sx, sy) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let b = tex.render(320, 320, sx, sy, 0.0);
        let pb = build_pyramid(&b, p.pyramid_levels).unwrap();
        for r in lk_track(&pa, &pb, &feats, &p).unwrap() {
            if r.is_tracked() {
                let (dx, dy) = r.displacement();
                se += (dx - sx).powi(2) + (dy - sy).powi(2);
                n += 1;
            }
        }
    }
    let rms = (se / n as f64).sqrt();
    assert!(n > 100 && rms < 0.2, "n={n} rms={rms}");
}

#[test]
fn integer_shift_and_translation_equivariance() {
    let tex = Texture::new(4);
    let p = LkParams {
        min_distance: 0.0,
        max_corners: usize::MAX,
        ..params()
    };
    let (w, h) = (704u32, 576u32);
    let a = tex.render(w, h, 0.0, 0.0, 0.0);
    let b = tex.render(w, h, 7.0, 3.0, 0.0);
    let (pa, pb) = (build_pyramid(&a, 4).unwrap(), build_pyramid(&b, 4).unwrap());
    let fa = shi_tomasi_detect(&a, &p).unwrap();
    let ta = lk_track(&pa, &pb, &fa, &p).unwrap();
    for r in ta.iter().filter(|r| r.is_tracked()) {
        let (dx, dy) = r.displacement();
        assert!(
            (dx - 7.0).abs() < 0.05 && (dy - 3.0).abs() < 0.05,
            "{dx} {dy}"
        );
    }

    // Shift both frames by a multiple of the coarsest pyramid step, so every
    // level sees exactly shifted content.
    let (ox, oy) = (16.0, 8.0);
    let a2 = tex.render(w, h, ox, oy, 0.0);
    let b2 = tex.render(w, h, 7.0 + ox, 3.0 + oy, 0.0);
    let wu = w as usize;
    let m1 = min_eigen_map(&a, p.block_size, Execution::Sequential);
    let m2 = min_eigen_map(&a2, p.block_size, Execution::Sequential);
    for r in 20..500usize {
        for c in 20..600usize {
            assert_eq!(m1[r * wu + c], m2[(r + 8) * wu + c + 16]);
        }
    }
    let fa2 = shi_tomasi_detect(&a2, &p).unwrap();
    let thresh = fa.iter().map(|f| f.score).fold(0.0, f64::max) * p.quality_level;
    let margin = detection_margin(&p) as f64 + 12.0;
    let inside = |f: &FeaturePoint, m: f64| {
        f.col > m && f.row > m && f.col < w as f64 - m - ox && f.row < h as f64 - m - oy
    };
    let interior: Vec<FeaturePoint> = fa
        .iter()
        .copied()
        .filter(|f| f.score > 2.0 * thresh && inside(f, margin))
        .collect();
    assert!(!interior.is_empty());
    for f in &interior {
        assert!(
            fa2.iter()
                .any(|g| g.col == f.col + ox && g.row == f.row + oy),
            "feature {f:?} not shifted"
        );
    }

    // Away from the borders at every pyramid level, tracking is unchanged.
    let coarse = 8.0 * (p.window as f64 / 2.0 + 2.0);
    let deep: Vec<_> = interior
        .iter()
        .copied()
        .filter(|f| inside(f, coarse))
        .collect();
    assert!(!deep.is_empty());
    let (pa2, pb2) = (
        build_pyramid(&a2, 4).unwrap(),
        build_pyramid(&b2, 4).unwrap(),
    );
    let shifted: Vec<_> = deep
        .iter()
        .map(|f| FeaturePoint {
            col: f.col + ox,
            row: f.row + oy,
            ..*f
        })
        .collect();
    let t1 = lk_track(&pa, &pb, &deep, &p).unwrap();
    let t2 = lk_track(&pa2, &pb2, &shifted, &p).unwrap();
    for (r1, r2) in t1.iter().zip(&t2) {
        let (d1, d2) = (r1.displacement(), r2.displacement());
        assert!(
            (d1.0 - d2.0).abs() < 1e-3 && (d1.1 - d2.1).abs() < 1e-3,
            "{d1:?} {d2:?}"
        );
    }
}

#[test]
fn pyramid_extends_capture_range() {
    let tex = Texture::new(5);
    let a = tex.render(512, 512, 0.0, 0.0, 0.0);
    let b = tex.render(512, 512, 40.0, 0.0, 0.0);
    let feats: Vec<_> = [
        (150.0, 200.0),
        (200.0, 300.0),
        (330.0, 250.0),
        (260.0, 140.0),
    ]
    .iter()
    .map(|&(col, row)| FeaturePoint {
        col,
        row,
        score: 1.0,
    })
    .collect();
    let four = LkParams {
        pyramid_levels: 4,
        ..params()
    };
    let one = LkParams {
        pyramid_levels: 1,
        ..params()
    };
    let r4 = lk_track(
        &build_pyramid(&a, 4).unwrap(),
        &build_pyramid(&b, 4).unwrap(),
        &feats,
        &four,
    )
    .unwrap();
    let r1 = lk_track(
        &build_pyramid(&a, 1).unwrap(),
        &build_pyramid(&b, 1).unwrap(),
        &feats,
        &one,
    )
    .unwrap();
    for (t4, t1) in r4.iter().zip(&r1) {
        let (dx, dy) = t4.displacement();
        assert!(
            t4.is_tracked() && ((dx - 40.0).powi(2) + dy * dy).sqrt() <= 0.5,
            "{t4:?}"
        );
        let (ex, ey) = t1.displacement();
        assert!(
            !t1.is_tracked() || ((ex - 40.0).powi(2) + ey * ey).sqrt() > 5.0,
            "{t1:?}"
        );
    }
}

#[test]
fn brightness_offset_invariance() {
    let tex = Texture::new(6);
    let p = params();
    let a = tex.render(320, 320, 0.0, 0.0, 0.0);
    let b = tex.render(320, 320, 2.3, -1.6, 0.0);
    let b_off = tex.render(320, 320, 2.3, -1.6, 20.0);
    let feats = shi_tomasi_detect(&a, &p).unwrap();
    let pa = build_pyramid(&a, 4).unwrap();
    let t = lk_track(&pa, &build_pyramid(&b, 4).unwrap(), &feats, &p).unwrap();
    let to = lk_track(&pa, &build_pyramid(&b_off, 4).unwrap(), &feats, &p).unwrap();
    for (x, y) in t
        .iter()
        .zip(&to)
        .filter(|(x, y)| x.is_tracked() && y.is_tracked())
    {
        let (d1, d2) = (x.displacement(), y.displacement());
        assert!(((d1.0 - d2.0).powi(2) + (d1.1 - d2.1).powi(2)).sqrt() < 0.05);
    }
}

#[test]
fn flow_scales_with_inverse_dt() {
    let tex = Texture::new(7);
    let k = CameraIntrinsics::from_fov(320, 240, 1.0).unwrap();
    let a = tex.render(320, 240, 0.0, 0.0, 0.0);
    let b = tex.render(320, 240, 1.5, 0.5, 0.0);
    let p = params();
    let f1 = estimate_flow(&a, &b, 0.5, &p, &k).unwrap();
    let f2 = estimate_flow(&a, &b, 0.25, &p, &k).unwrap();
    assert_eq!(f1.len(), f2.len());
    for (o1, o2) in f1.iter().zip(&f2) {
        assert_eq!(o1.point, o2.point);
        assert_eq!(2.0 * o1.flow.u, o2.flow.u);
        assert_eq!(2.0 * o1.flow.v, o2.flow.v);
    }
    let zero = estimate_flow(&a, &a, 0.5, &p, &k).unwrap();
    assert!(zero
        .iter()
        .all(|o| o.flow.u.abs() < 2e-3 && o.flow.v.abs() < 2e-3));
}
