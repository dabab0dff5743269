//! Seeded noise streams and sensor noise injection.

use crate::trajectory::TrajectorySample;
use ofnav_core::{AngularRates, Attitude, Execution, GrayImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Noise magnitudes. All sigmas are standard deviations of zero-mean
/// Gaussians; `range_sigma` is relative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Pixel intensity standard deviation, in 8-bit levels.
    pub camera_sigma: f64,
    pub attitude_sigma: f64,
    pub rate_sigma: f64,
    pub range_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            camera_sigma: 0.0,
            attitude_sigma: 0.0,
            rate_sigma: 0.0,
            range_sigma: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn is_valid(&self) -> bool {
        [
            self.camera_sigma,
            self.attitude_sigma,
            self.rate_sigma,
            self.range_sigma,
        ]
        .iter()
        .all(|s| s.is_finite() && *s >= 0.0)
    }
}

/// Independent random streams used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Camera = 1,
    State = 2,
    Range = 3,
    Terrain = 4,
    Albedo = 5,
    Trajectory = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit key for `(seed, stream, index)`.
pub fn stream_key(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64((stream as u64) ^ splitmix64(index)))
}

/// Generator for one `(seed, stream, index)` triple. Draws do not depend on
/// how many other streams were used before.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, stream, index))
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Adds i.i.d. Gaussian noise to every pixel of frame `index` and clamps
/// to `[0, 255]`. Each row draws from its own ChaCha stream, so the result
/// does not depend on the execution policy.
pub fn add_camera_noise(img: &GrayImage, noise: &NoiseConfig, index: u64) -> GrayImage {
    add_camera_noise_with(img, noise, index, Execution::default())
}

pub fn add_camera_noise_with(
    img: &GrayImage,
    noise: &NoiseConfig,
    index: u64,
    exec: Execution,
) -> GrayImage {
    let sigma = noise.camera_sigma;
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    let w = img.width() as usize;
    let src = img.pixels();
    exec.for_each_chunk(out.pixels_mut(), w, |row, dst| {
        let mut rng = stream_rng(noise.seed, Stream::Camera, index);
        rng.set_stream(row as u64);
        for (d, &s) in dst.iter_mut().zip(&src[row * w..(row + 1) * w]) {
            *d = (s as f64 + sigma * gauss(&mut rng))
                .round()
                .clamp(0.0, 255.0) as u8;
        }
    });
    out
}

/// Perturbs attitude angles and body rates of telemetry sample `index`.
/// Position and velocity are left untouched.
pub fn add_state_noise(s: &TrajectorySample, noise: &NoiseConfig, index: u64) -> TrajectorySample {
    if noise.attitude_sigma <= 0.0 && noise.rate_sigma <= 0.0 {
        return *s;
    }
    let mut rng = stream_rng(noise.seed, Stream::State, index);
    let (sa, sr) = (noise.attitude_sigma, noise.rate_sigma);
    let a = s.attitude;
    let attitude = Attitude::new(
        a.roll + sa * gauss(&mut rng),
        a.pitch + sa * gauss(&mut rng),
        a.yaw + sa * gauss(&mut rng),
    );
    let r = s.rates;
    let rates = AngularRates {
        p: r.p + sr * gauss(&mut rng),
        q: r.q + sr * gauss(&mut rng),
        r: r.r + sr * gauss(&mut rng),
    };
    TrajectorySample {
        attitude,
        rates,
        ..*s
    }
}

/// Relative range error `eps ~ N(0, range_sigma)` for reading `index`.
pub fn range_factor(noise: &NoiseConfig, index: u64) -> f64 {
    if noise.range_sigma <= 0.0 {
        return 1.0;
    }
    let mut rng = stream_rng(noise.seed, Stream::Range, index);
    1.0 + noise.range_sigma * gauss(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        let a: u64 = stream_rng(1, Stream::Camera, 0).random();
        let b: u64 = stream_rng(1, Stream::Camera, 0).random();
        let c: u64 = stream_rng(1, Stream::Camera, 1).random();
        let d: u64 = stream_rng(1, Stream::State, 0).random();
        let e: u64 = stream_rng(2, Stream::Camera, 0).random();
        assert_eq!(a, b);
        assert!(a != c && a != d && a != e && c != d);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = GrayImage::from_fn(17, 9, |c, r| (c * 13 + r) as u8);
        let n = NoiseConfig::default();
        assert_eq!(add_camera_noise(&img, &n, 3), img);
        assert_eq!(range_factor(&n, 5), 1.0);
    }

    #[test]
    fn camera_noise_statistics_and_determinism() {
        let img = GrayImage::filled(256, 256, 128);
        let n = NoiseConfig {
            camera_sigma: 32.0,
            seed: 11,
            ..Default::default()
        };
        let a = add_camera_noise_with(&img, &n, 0, Execution::Parallel);
        let b = add_camera_noise_with(&img, &n, 0, Execution::Sequential);
        assert_eq!(a, b);
        assert_ne!(a, add_camera_noise(&img, &n, 1));
        let d: Vec<f64> = a.pixels().iter().map(|&p| p as f64 - 128.0).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!((sd - 32.0).abs() < 0.05 * 32.0, "sd {sd}");
        assert!(mean.abs() < 0.5);
    }

    #[test]
    fn range_noise_statistics() {
        let n = NoiseConfig {
            range_sigma: 0.01,
            seed: 4,
            ..Default::default()
        };
        let r: Vec<f64> = (0..10_000).map(|i| 1000.0 * range_factor(&n, i)).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        assert!((sd - 10.0).abs() < 0.5, "sd {sd}");
        assert_eq!(range_factor(&n, 17), range_factor(&n, 17));
    }
}
