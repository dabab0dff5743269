//! Lambertian frame rendering by per-pixel ray casting.

use crate::raycast::{raycast, Pose};
use crate::terrain::{BaseSurface, Terrain};
use nalgebra::Vector3;
use ofnav_core::{CameraIntrinsics, Execution, GrayImage};
use serde::{Deserialize, Serialize};

/// Sun direction in the local horizon frame of each surface point:
/// azimuth clockwise from north, elevation above the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SunConfig {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Default for SunConfig {
    fn default() -> Self {
        Self {
            azimuth: 135f64.to_radians(),
            elevation: 1.35f64.to_radians(),
        }
    }
}

impl SunConfig {
    pub fn is_valid(&self) -> bool {
        self.azimuth.is_finite() && self.elevation.abs() <= std::f64::consts::FRAC_PI_2
    }

    fn local(&self, east: &Vector3<f64>, north: &Vector3<f64>, up: &Vector3<f64>) -> Vector3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        up * se + (east * sa + north * ca) * ce
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    /// Cast shadow rays towards the sun.
    pub shadows: bool,
    /// Radiance scale; `None` maps level, mean-albedo ground to mid-gray.
    pub exposure: Option<f64>,
}

// Shading incidence is floored here when sizing the texture footprint.
const MIN_FOOTPRINT_COS: f64 = 0.1;

/// Renders one 8-bit frame. Pixels whose ray misses the terrain are black.
pub fn render_frame(
    terrain: &Terrain,
    pose: &Pose,
    sun: &SunConfig,
    k: &CameraIntrinsics,
) -> GrayImage {
    render_frame_with(
        terrain,
        pose,
        sun,
        k,
        &RenderOptions::default(),
        Execution::default(),
    )
}

pub fn render_frame_with(
    terrain: &Terrain,
    pose: &Pose,
    sun: &SunConfig,
    k: &CameraIntrinsics,
    opts: &RenderOptions,
    exec: Execution,
) -> GrayImage {
    let w = k.width as usize;
    let plane_sun = match terrain.base() {
        BaseSurface::Plane { .. } => Some(sun.local(&Vector3::x(), &Vector3::y(), &Vector3::z())),
        BaseSurface::Sphere { .. } => None,
    };
    let sun_at = |p: &Vector3<f64>| {
        plane_sun.unwrap_or_else(|| {
            let (east, north, up) = terrain.local_frame(p);
            sun.local(&east, &north, &up)
        })
    };
    // Auto exposure puts mean-albedo base surface under the boresight at
    // mid-gray.
    let exposure = opts.exposure.unwrap_or_else(|| {
        let incidence = raycast(terrain, &pose.position, &pose.ray_world(0.0, 0.0))
            .map(|h| base_normal(terrain, &h.point).dot(&sun_at(&h.point)))
            .unwrap_or_else(|| sun.elevation.sin());
        0.5 / incidence.max(1e-3)
    });
    let mut img = GrayImage::filled(k.width, k.height, 0);
    exec.for_each_chunk(img.pixels_mut(), w, |row, out| {
        for (col, px) in out.iter_mut().enumerate() {
            let p = k.raster_to_pixel(col as f64, row as f64);
            let dir = pose.ray_world(p.x / k.fx, p.y / k.fy);
            let Some(hit) = raycast(terrain, &pose.position, &dir) else {
                continue;
            };
            let s = sun_at(&hit.point);
            let range = hit.t * dir.norm();
            let base_up = base_normal(terrain, &hit.point);
            let cos_inc = (base_up.dot(&dir) / dir.norm())
                .abs()
                .max(MIN_FOOTPRINT_COS);
            let footprint = range / k.fx / cos_inc;
            let surf = terrain.surface_sample(&hit.point, footprint);
            let mut shade = surf.normal.dot(&s).max(0.0);
            if shade > 0.0 && opts.shadows {
                let origin = hit.point + base_up * (1e-3 * (1.0 + range * 1e-6));
                if raycast(terrain, &origin, &s).is_some() {
                    shade = 0.0;
                }
            }
            let v = (exposure * surf.albedo * shade).clamp(0.0, 1.0) * 255.0;
            *px = v.round() as u8;
        }
    });
    img
}

/// Unit normal of the base surface (plane or sphere, without relief) at `p`.
fn base_normal(terrain: &Terrain, p: &Vector3<f64>) -> Vector3<f64> {
    match terrain.base() {
        BaseSurface::Plane { .. } => {
            let (_, gx, gy) = terrain.base_plane(p.x, p.y);
            Vector3::new(-gx, -gy, 1.0).normalize()
        }
        BaseSurface::Sphere { .. } => p.normalize(),
    }
}
