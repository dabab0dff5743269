//! Ray casting against [`Terrain`].

use crate::terrain::{BaseSurface, Terrain};
use crate::SimError;
use nalgebra::{Matrix3, Vector3};
use ofnav_core::{
    rotation_body_to_camera, Attitude, CameraIntrinsics, DepthError, DepthMap, InverseDepth,
    NormalizedPoint, PixelPoint,
};

/// Camera pose: position in the world frame and the world-to-camera rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub r_cw: Matrix3<f64>,
}

impl Pose {
    /// Pose of a camera with body-relative `attitude` on a vehicle whose
    /// body frame is the terrain's nadir frame at `position`.
    pub fn from_attitude(terrain: &Terrain, position: Vector3<f64>, attitude: &Attitude) -> Self {
        Self {
            position,
            r_cw: rotation_body_to_camera(attitude) * terrain.body_frame(&position),
        }
    }

    /// World-frame direction of the camera ray through normalized point
    /// `(x, y)`, scaled so its camera z component is 1.
    pub fn ray_world(&self, x: f64, y: f64) -> Vector3<f64> {
        self.r_cw.transpose() * Vector3::new(x, y, 1.0)
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r_cw * (p - self.position)
    }
}

/// Ray hit: parameter `t` along the (unnormalized) direction and the world
/// point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
}

const NEWTON_ITERS: usize = 30;
const MAX_MARCH: usize = 20_000;

/// First intersection of `origin + t dir`, `t > 0`, with the terrain.
pub fn raycast(terrain: &Terrain, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    let t = match terrain.base() {
        BaseSurface::Plane { .. } => cast_plane(terrain, origin, dir),
        BaseSurface::Sphere { radius } => cast_sphere(terrain, radius, origin, dir),
    }?;
    Some(Hit {
        t,
        point: origin + dir * t,
    })
}

/// Depth (camera z) of the terrain point seen at pixel `p`.
pub fn raycast_depth(
    terrain: &Terrain,
    pose: &Pose,
    p: PixelPoint,
    k: &CameraIntrinsics,
) -> Result<f64, SimError> {
    let dir = pose.ray_world(p.x / k.fx, p.y / k.fy);
    raycast(terrain, &pose.position, &dir)
        .map(|h| h.t)
        .ok_or(SimError::NoIntersection)
}

/// Exact terrain depth exposed as a depth model, for oracle runs.
pub struct RaycastDepth<'a> {
    pub terrain: &'a Terrain,
    pub pose: Pose,
}

impl DepthMap for RaycastDepth<'_> {
    fn inverse_depth(&self, n: NormalizedPoint) -> Result<InverseDepth, DepthError> {
        let dir = self.pose.ray_world(n.x, n.y);
        raycast(self.terrain, &self.pose.position, &dir)
            .map(|h| InverseDepth(1.0 / h.t))
            .ok_or(DepthError::NoIntersection)
    }
}

fn cast_plane(terrain: &Terrain, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    // Vertical gap above the base plane is a0 + a1 t.
    let (zb, gx, gy) = terrain.base_plane(o.x, o.y);
    let a0 = o.z - zb;
    let a1 = d.z - gx * d.x - gy * d.y;
    if terrain.is_unperturbed() {
        if a0 <= 0.0 || a1 >= 0.0 {
            return None;
        }
        return Some(-a0 / a1);
    }
    let (lo, hi) = terrain.height_bounds();
    let t_enter = if a0 > hi {
        if a1 >= 0.0 {
            return None;
        }
        (a0 - hi) / -a1
    } else {
        0.0
    };
    let t_exit = if a1 < 0.0 {
        (a0 - lo) / -a1
    } else if a1 > 0.0 {
        (hi - a0) / a1
    } else {
        f64::INFINITY
    };
    let dh = d.x.hypot(d.y);
    let gap = |t: f64| {
        let (h, gu, gv) = terrain.perturbation(o.x + t * d.x, o.y + t * d.y);
        (a0 + a1 * t - h, a1 - gu * d.x - gv * d.y)
    };
    let rate = a1.abs() + terrain.lipschitz() * dh;
    march(gap, t_enter, t_exit, rate)
}

fn cast_sphere(terrain: &Terrain, radius: f64, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let (lo, hi) = terrain.height_bounds();
    let dd = d.norm_squared();
    let od = o.dot(d);
    let oo = o.norm_squared();
    // Parameters where the ray crosses a sphere of radius r, nearest first.
    let cross = |r: f64| -> Option<(f64, f64)> {
        let c = oo - r * r;
        let disc = od * od - dd * c;
        if disc < 0.0 {
            return None;
        }
        let q = -(od + od.signum() * disc.sqrt());
        let (t1, t2) = if q == 0.0 {
            (0.0, 0.0)
        } else {
            (q / dd, c / q)
        };
        Some((t1.min(t2), t1.max(t2)))
    };
    if oo <= radius * radius {
        return None;
    }
    if terrain.is_unperturbed() {
        let (t1, t2) = cross(radius)?;
        return [t1, t2].into_iter().find(|&t| t > 0.0);
    }
    let (e1, e2) = cross(radius + hi)?;
    if e2 <= 0.0 {
        return None;
    }
    let t_enter = e1.max(0.0);
    let t_exit = match cross(radius + lo) {
        Some((i1, _)) if i1 > 0.0 => i1,
        _ => e2,
    };
    let lip = terrain.lipschitz();
    let dn = dd.sqrt();
    let gap = |t: f64| {
        let g = |t: f64| {
            let p = o + d * t;
            let (u, v) = terrain.surface_coords(&p);
            p.norm() - radius - terrain.perturbation(u, v).0
        };
        let e = 1e-6 * (1.0 + t);
        (g(t), (g(t + e) - g(t - e)) / (2.0 * e))
    };
    // Horizontal distances shrink towards the centre by R / |p|.
    let rate = dn * (1.0 + lip * radius / (radius + lo).max(1.0));
    march(gap, t_enter, t_exit, rate)
}

/// Sphere-tracing march on a gap function with slope bound `rate`, then
/// Newton polish. `gap(t)` returns the vertical clearance and its derivative.
fn march(gap: impl Fn(f64) -> (f64, f64), t0: f64, t1: f64, rate: f64) -> Option<f64> {
    if !(rate > 0.0) {
        return None;
    }
    let mut t = t0;
    let mut g = gap(t).0;
    if g < 0.0 {
        return None;
    }
    let mut n = 0;
    let mut eps = 1e-3;
    loop {
        while g > eps {
            t += g / rate;
            if t > t1 || n > MAX_MARCH {
                return None;
            }
            g = gap(t).0;
            n += 1;
        }
        if let Some(r) = newton(&gap, t) {
            return Some(r);
        }
        // Newton left the basin; creep closer and retry.
        if eps < 1e-10 {
            return Some(t);
        }
        eps *= 1e-3;
    }
}

// Newton from just above the surface. Accepts only a converged root that is
// not behind the start point.
fn newton(gap: &impl Fn(f64) -> (f64, f64), start: f64) -> Option<f64> {
    let mut t = start;
    let floor = start - 1e-6 * (1.0 + start.abs());
    for _ in 0..NEWTON_ITERS {
        let (g, dg) = gap(t);
        if !(dg < 0.0) && g != 0.0 {
            return None;
        }
        if g == 0.0 {
            return Some(t);
        }
        let next = t - g / dg;
        if !(next >= floor) {
            return None;
        }
        if (next - t).abs() <= 1e-13 * next.abs().max(1.0) {
            return Some(next);
        }
        t = next;
    }
    None
}
