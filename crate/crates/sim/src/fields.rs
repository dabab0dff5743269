//! Band-limited procedural fields: lattice value noise summed over octaves.

use crate::noise::{stream_rng, Stream};
use rand::Rng;

/// Bound on `|grad|` of one unit-amplitude, unit-wavelength octave. A
/// quintic-faded value noise has per-axis slope at most `2 * 15/8`.
const OCTAVE_LIPSCHITZ: f64 = 3.75 * std::f64::consts::SQRT_2;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform lattice value in `[-1, 1)`.
#[inline]
fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let h = mix64(
        seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F),
    );
    (h >> 11) as f64 * (2.0 / (1u64 << 53) as f64) - 1.0
}

#[inline]
fn fade(t: f64) -> (f64, f64) {
    let t2 = t * t;
    (
        t2 * t * (t * (t * 6.0 - 15.0) + 10.0),
        30.0 * t2 * (t - 1.0) * (t - 1.0),
    )
}

/// Cubic smoothstep on `[0, 1]`, clamped outside.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[inline]
pub fn smoothstep_derivative(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    6.0 * t * (1.0 - t)
}

/// Weight of an octave of wavelength `lambda` when one pixel covers
/// `footprint` metres: 1 when the octave spans at least 4 pixels, 0 below 2.
#[inline]
pub fn lod_weight(lambda: f64, footprint: f64) -> f64 {
    smoothstep(0.5 * (lambda / footprint - 2.0))
}

/// One rotated, offset octave of value noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Octave {
    pub seed: u64,
    pub wavelength: f64,
    pub amplitude: f64,
    cos: f64,
    sin: f64,
    offset: (f64, f64),
}

impl Octave {
    /// Value and gradient `(h, dh/du, dh/dv)`.
    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> (f64, f64, f64) {
        let inv = 1.0 / self.wavelength;
        let a = (self.cos * u - self.sin * v) * inv + self.offset.0;
        let b = (self.sin * u + self.cos * v) * inv + self.offset.1;
        let (ia, ib) = (a.floor(), b.floor());
        let (fa, fb) = (a - ia, b - ib);
        let (i, j) = (ia as i64, ib as i64);
        let v00 = lattice(self.seed, i, j);
        let v10 = lattice(self.seed, i + 1, j);
        let v01 = lattice(self.seed, i, j + 1);
        let v11 = lattice(self.seed, i + 1, j + 1);
        let (sa, da) = fade(fa);
        let (sb, db) = fade(fb);
        let x0 = v00 + sa * (v10 - v00);
        let x1 = v01 + sa * (v11 - v01);
        let h = x0 + sb * (x1 - x0);
        let ga = da * ((v10 - v00) + sb * (v11 - v01 - v10 + v00));
        let gb = db * (x1 - x0);
        let s = self.amplitude * inv;
        (
            self.amplitude * h,
            s * (self.cos * ga + self.sin * gb),
            s * (-self.sin * ga + self.cos * gb),
        )
    }
}

/// Fractional Brownian surface: octaves from `lambda_max` halving down to
/// `lambda_min`, with amplitude scaling as `lambda^hurst`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fbm {
    octaves: Vec<Octave>,
}

impl Fbm {
    pub fn new(
        seed: u64,
        stream: Stream,
        lambda_max: f64,
        lambda_min: f64,
        amplitude: f64,
        hurst: f64,
    ) -> Self {
        let mut octaves = Vec::new();
        let mut lambda = lambda_max;
        let mut k = 0u64;
        while lambda >= lambda_min * (1.0 - 1e-12) && lambda > 0.0 {
            let mut rng = stream_rng(seed, stream, k);
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            octaves.push(Octave {
                seed: rng.random(),
                wavelength: lambda,
                amplitude: amplitude * (lambda / lambda_max).powf(hurst),
                cos: th.cos(),
                sin: th.sin(),
                offset: (rng.random_range(0.0..1024.0), rng.random_range(0.0..1024.0)),
            });
            lambda *= 0.5;
            k += 1;
        }
        Self { octaves }
    }

    pub fn empty() -> Self {
        Self {
            octaves: Vec::new(),
        }
    }

    pub fn octaves(&self) -> &[Octave] {
        &self.octaves
    }

    pub fn is_empty(&self) -> bool {
        self.octaves.iter().all(|o| o.amplitude == 0.0)
    }

    /// Full-detail value and gradient.
    pub fn eval(&self, u: f64, v: f64) -> (f64, f64, f64) {
        self.octaves.iter().fold((0.0, 0.0, 0.0), |acc, o| {
            let (h, gu, gv) = o.eval(u, v);
            (acc.0 + h, acc.1 + gu, acc.2 + gv)
        })
    }

    /// Value and gradient with octaves finer than the pixel footprint faded
    /// out. Octaves are ordered coarse to fine, so evaluation stops at the
    /// first fully faded one.
    pub fn eval_lod(&self, u: f64, v: f64, footprint: f64) -> (f64, f64, f64) {
        let mut acc = (0.0, 0.0, 0.0);
        for o in &self.octaves {
            let w = lod_weight(o.wavelength, footprint);
            if w == 0.0 {
                break;
            }
            let (h, gu, gv) = o.eval(u, v);
            acc = (acc.0 + w * h, acc.1 + w * gu, acc.2 + w * gv);
        }
        acc
    }

    /// `sup |h|`.
    pub fn bound(&self) -> f64 {
        self.octaves.iter().map(|o| o.amplitude.abs()).sum()
    }

    /// `sup |grad h|`.
    pub fn lipschitz(&self) -> f64 {
        self.octaves
            .iter()
            .map(|o| OCTAVE_LIPSCHITZ * o.amplitude.abs() / o.wavelength)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field() -> Fbm {
        Fbm::new(9, Stream::Terrain, 256.0, 2.0, 10.0, 1.0)
    }

    #[test]
    fn octave_layout() {
        let f = field();
        assert_eq!(f.octaves().len(), 8);
        assert_eq!(f.octaves()[7].wavelength, 2.0);
        assert!((f.bound() - 10.0 * (2.0 - 1.0 / 128.0)).abs() < 1e-9);
        assert_eq!(f, field());
    }

    #[test]
    fn lod_weights() {
        assert_eq!(lod_weight(8.0, 1.0), 1.0);
        assert_eq!(lod_weight(4.0, 1.0), 1.0);
        assert_eq!(lod_weight(2.0, 1.0), 0.0);
        assert!((lod_weight(3.0, 1.0) - 0.5).abs() < 1e-12);
        let f = field();
        assert_eq!(f.eval_lod(3.0, 4.0, 1e-3), f.eval(3.0, 4.0));
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_difference(u in -5e3..5e3f64, v in -5e3..5e3f64) {
            let f = field();
            let h = 1e-4;
            let (_, gu, gv) = f.eval(u, v);
            let du = (f.eval(u + h, v).0 - f.eval(u - h, v).0) / (2.0 * h);
            let dv = (f.eval(u, v + h).0 - f.eval(u, v - h).0) / (2.0 * h);
            prop_assert!((gu - du).abs() < 1e-5 * (1.0 + gu.abs()));
            prop_assert!((gv - dv).abs() < 1e-5 * (1.0 + gv.abs()));
        }

        #[test]
        fn bounds_hold(u in -1e4..1e4f64, v in -1e4..1e4f64) {
            let f = field();
            let (h, gu, gv) = f.eval(u, v);
            prop_assert!(h.abs() <= f.bound());
            prop_assert!(gu.hypot(gv) <= f.lipschitz());
        }
    }
}
