//! Parametric descent and orbital trajectories.

use crate::noise::{stream_rng, Stream};
use crate::terrain::{nadir_body_frame, BaseSurface};
use crate::SimError;
use nalgebra::{Matrix3, Vector3};
use ofnav_core::{rotation_body_to_camera, AngularRates, Attitude};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Lunar gravitational parameter (m^3/s^2).
pub const MOON_MU: f64 = 4.9028e12;

/// One telemetry sample. `rates` are expressed in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Attitude,
    pub rates: AngularRates,
}

/// Altitude and speeds at one instant of an orbital profile. Vertical
/// speed is positive upwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knot {
    pub t: f64,
    pub altitude: f64,
    pub vertical_speed: f64,
    pub horizontal_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// Descent over a plane: cubic altitude between the endpoint heights
    /// and descent rates, plus a horizontal traverse from `start_xy` to the
    /// origin that is at rest at both ends.
    Landing {
        duration: f64,
        start_altitude: f64,
        end_altitude: f64,
        start_descent_rate: f64,
        end_descent_rate: f64,
        start_xy: [f64; 2],
    },
    /// Motion in the x-z plane of a sphere through the knots: altitude is a
    /// piecewise cubic Hermite, angular rate a piecewise smoothstep between
    /// `horizontal_speed / (R + altitude)`. The profile ends over the +z
    /// pole.
    Orbital { radius: f64, knots: Vec<Knot> },
}

/// Small sinusoidal attitude excursions about nadir pointing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Wobble {
    /// Amplitude of each Euler angle (rad).
    pub amplitude: f64,
    /// Periods of roll, pitch and yaw (s).
    pub periods: [f64; 3],
}

impl Default for Wobble {
    fn default() -> Self {
        Self {
            amplitude: 0.5f64.to_radians(),
            periods: [23.0, 17.0, 29.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub profile: Profile,
    #[serde(default)]
    pub wobble: Wobble,
}

impl TrajectorySpec {
    pub fn duration(&self) -> f64 {
        match &self.profile {
            Profile::Landing { duration, .. } => *duration,
            Profile::Orbital { knots, .. } => knots.last().map_or(0.0, |k| k.t - knots[0].t),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        match &self.profile {
            Profile::Landing {
                duration,
                start_altitude,
                end_altitude,
                start_descent_rate,
                end_descent_rate,
                start_xy,
            } => {
                if !(*duration > 0.0 && duration.is_finite()) {
                    return bad(format!("duration must be positive, got {duration}"));
                }
                if !(start_altitude > end_altitude) {
                    return bad(format!(
                        "landing must descend: {start_altitude} -> {end_altitude}"
                    ));
                }
                let all = [
                    *start_descent_rate,
                    *end_descent_rate,
                    start_xy[0],
                    start_xy[1],
                ];
                if !all.iter().all(|x| x.is_finite()) {
                    return bad("non-finite landing parameter".into());
                }
            }
            Profile::Orbital { radius, knots } => {
                if !(*radius > 0.0) {
                    return bad(format!("radius must be positive, got {radius}"));
                }
                if knots.len() < 2 {
                    return bad("orbital profile needs at least two knots".into());
                }
                if knots.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return bad("knot times must increase".into());
                }
                if knots.iter().any(|k| {
                    !(k.altitude >= 0.0
                        && k.horizontal_speed.is_finite()
                        && k.vertical_speed.is_finite())
                }) {
                    return bad("knot altitudes must be non-negative".into());
                }
            }
        }
        let w = &self.wobble;
        if !(w.amplitude >= 0.0 && w.periods.iter().all(|p| *p > 0.0)) {
            return bad(format!("invalid wobble {w:?}"));
        }
        Ok(())
    }
}

fn hermite(t: f64, t0: f64, t1: f64, h0: f64, d0: f64, h1: f64, d1: f64) -> (f64, f64) {
    let dt = t1 - t0;
    let s = (t - t0) / dt;
    let (s2, s3) = (s * s, s * s * s);
    let h = (2.0 * s3 - 3.0 * s2 + 1.0) * h0
        + (s3 - 2.0 * s2 + s) * dt * d0
        + (-2.0 * s3 + 3.0 * s2) * h1
        + (s3 - s2) * dt * d1;
    let dh = ((6.0 * s2 - 6.0 * s) * h0 + (-6.0 * s2 + 6.0 * s) * h1) / dt
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (3.0 * s2 - 2.0 * s) * d1;
    (h, dh)
}

/// Polynomial smoothstep and its integral, unclamped so the profile
/// extends smoothly past its ends.
fn smooth_poly(s: f64) -> (f64, f64) {
    (s * s * (3.0 - 2.0 * s), s * s * s - 0.5 * s * s * s * s)
}

/// Evaluable trajectory built from a [`TrajectorySpec`] and a seed (which
/// sets the wobble phases).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    spec: TrajectorySpec,
    base: BaseSurface,
    phases: [f64; 3],
    // Orbital: angular rate and accumulated angle at each knot.
    omega: Vec<f64>,
    theta: Vec<f64>,
}

const RATE_STEP: f64 = 1e-2;

impl Trajectory {
    pub fn new(spec: TrajectorySpec, seed: u64) -> Result<Self, SimError> {
        spec.validate()?;
        let mut rng = stream_rng(seed, Stream::Trajectory, 0);
        let phases = [
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        ];
        let (base, omega, theta) = match &spec.profile {
            Profile::Landing { .. } => (
                BaseSurface::Plane {
                    elevation: 0.0,
                    slope: 0.0,
                    azimuth: 0.0,
                },
                Vec::new(),
                Vec::new(),
            ),
            Profile::Orbital { radius, knots } => {
                let omega: Vec<f64> = knots
                    .iter()
                    .map(|k| k.horizontal_speed / (radius + k.altitude))
                    .collect();
                let mut theta = vec![0.0; knots.len()];
                for i in 1..knots.len() {
                    let dt = knots[i].t - knots[i - 1].t;
                    theta[i] = theta[i - 1] + dt * 0.5 * (omega[i - 1] + omega[i]);
                }
                let end = *theta.last().unwrap();
                theta.iter_mut().for_each(|x| *x -= end);
                (BaseSurface::Sphere { radius: *radius }, omega, theta)
            }
        };
        Ok(Self {
            spec,
            base,
            phases,
            omega,
            theta,
        })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    pub fn start_time(&self) -> f64 {
        match &self.spec.profile {
            Profile::Landing { .. } => 0.0,
            Profile::Orbital { knots, .. } => knots[0].t,
        }
    }

    pub fn end_time(&self) -> f64 {
        self.start_time() + self.spec.duration()
    }

    /// World position and velocity.
    pub fn state(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        match &self.spec.profile {
            Profile::Landing {
                duration,
                start_altitude,
                end_altitude,
                start_descent_rate,
                end_descent_rate,
                start_xy,
            } => {
                let (z, vz) = hermite(
                    t,
                    0.0,
                    *duration,
                    *start_altitude,
                    -start_descent_rate,
                    *end_altitude,
                    -end_descent_rate,
                );
                let s = t / duration;
                let (w, _) = smooth_poly(s);
                let dw = 6.0 * s * (1.0 - s) / duration;
                let pos = Vector3::new(start_xy[0] * (1.0 - w), start_xy[1] * (1.0 - w), z);
                let vel = Vector3::new(-start_xy[0] * dw, -start_xy[1] * dw, vz);
                (pos, vel)
            }
            Profile::Orbital { radius, knots } => {
                let i = knots
                    .windows(2)
                    .position(|w| t < w[1].t)
                    .unwrap_or(knots.len() - 2);
                let (a, b) = (&knots[i], &knots[i + 1]);
                let (h, dh) = hermite(
                    t,
                    a.t,
                    b.t,
                    a.altitude,
                    a.vertical_speed,
                    b.altitude,
                    b.vertical_speed,
                );
                let dt = b.t - a.t;
                let s = (t - a.t) / dt;
                let (sm, int) = smooth_poly(s);
                let dw = self.omega[i + 1] - self.omega[i];
                let rate = self.omega[i] + dw * sm;
                let th = self.theta[i] + dt * (self.omega[i] * s + dw * int);
                let r = radius + h;
                let up = Vector3::new(th.sin(), 0.0, th.cos());
                let east = Vector3::new(th.cos(), 0.0, -th.sin());
                (up * r, up * dh + east * (r * rate))
            }
        }
    }

    pub fn attitude(&self, t: f64) -> Attitude {
        let w = &self.spec.wobble;
        let a = |k: usize| {
            w.amplitude * (std::f64::consts::TAU * t / w.periods[k] + self.phases[k]).sin()
        };
        Attitude::new(a(0), a(1), a(2))
    }

    /// World-to-camera rotation.
    pub fn r_cw(&self, t: f64) -> Matrix3<f64> {
        let (p, _) = self.state(t);
        rotation_body_to_camera(&self.attitude(t)) * nadir_body_frame(&self.base, &p)
    }

    /// Camera angular velocity in the camera frame, from
    /// `[w]x = -dR/dt R^T` with a fourth-order central difference.
    pub fn rates(&self, t: f64) -> AngularRates {
        let h = RATE_STEP;
        let d = (self.r_cw(t - 2.0 * h) - self.r_cw(t + 2.0 * h)
            + (self.r_cw(t + h) - self.r_cw(t - h)) * 8.0)
            / (12.0 * h);
        let m = -d * self.r_cw(t).transpose();
        AngularRates::new(
            0.5 * (m[(2, 1)] - m[(1, 2)]),
            0.5 * (m[(0, 2)] - m[(2, 0)]),
            0.5 * (m[(1, 0)] - m[(0, 1)]),
        )
    }

    pub fn sample(&self, t: f64) -> TrajectorySample {
        let (position, velocity) = self.state(t);
        TrajectorySample {
            t,
            position,
            velocity,
            attitude: self.attitude(t),
            rates: self.rates(t),
        }
    }

    /// Samples at `start + k / frame_rate` covering the whole profile.
    pub fn generate(&self, frame_rate: f64) -> Result<Vec<TrajectorySample>, SimError> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(SimError::InvalidScenario(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        let n = (self.spec.duration() * frame_rate + 1e-9).floor() as usize + 1;
        let t0 = self.start_time();
        Ok((0..n)
            .map(|k| self.sample(t0 + k as f64 / frame_rate))
            .collect())
    }
}

/// Samples `spec` at `frame_rate`; see [`Trajectory::generate`].
pub fn generate_trajectory(
    spec: &TrajectorySpec,
    seed: u64,
    frame_rate: f64,
) -> Result<Vec<TrajectorySample>, SimError> {
    Trajectory::new(spec.clone(), seed)?.generate(frame_rate)
}

/// Linear interpolation of telemetry at time `t`. Angles are interpolated
/// along the shortest arc.
pub fn interpolate(a: &TrajectorySample, b: &TrajectorySample, t: f64) -> TrajectorySample {
    let w = if b.t == a.t {
        0.0
    } else {
        (t - a.t) / (b.t - a.t)
    };
    let lerp = |x: f64, y: f64| x + w * (y - x);
    let ang = |x: f64, y: f64| x + w * ofnav_core::geometry::wrap_angle(y - x);
    TrajectorySample {
        t,
        position: a.position.lerp(&b.position, w),
        velocity: a.velocity.lerp(&b.velocity, w),
        attitude: Attitude::new(
            ang(a.attitude.roll, b.attitude.roll),
            ang(a.attitude.pitch, b.attitude.pitch),
            ang(a.attitude.yaw, b.attitude.yaw),
        ),
        rates: AngularRates::new(
            lerp(a.rates.p, b.rates.p),
            lerp(a.rates.q, b.rates.q),
            lerp(a.rates.r, b.rates.r),
        ),
    }
}
