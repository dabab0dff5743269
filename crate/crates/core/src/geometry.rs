//! Pinhole camera model, coordinate conventions and attitude geometry.
//!
//! Pixel coordinates ([`PixelPoint`]) are signed offsets from the principal
//! point, x to the right and y down; raster (column, row) coordinates are only
//! used at image I/O boundaries. Normalized coordinates ([`NormalizedPoint`])
//! are the ray slopes X/Z and Y/Z in the camera frame, whose z axis is the
//! boresight.
//!
//! The body frame has +z pointing at the centre of the body, x along the
//! reference horizontal direction and y completing a right-handed triad.
//! Attitude angles rotate body vectors into the camera frame with
//! `R = Rz(psi) * Ry(theta) * Rx(phi)`.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("boresight does not intersect the body")]
    NoIntersection,
}

/// Pinhole intrinsics. Focal lengths and principal point are in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics("empty image".into()));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} sensor"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square-pixel camera with the given horizontal field of view (radians)
    /// and the principal point at `(width/2, height/2)`.
    pub fn from_fov(width: u32, height: u32, hfov: f64) -> Result<Self, GeometryError> {
        if !(hfov > 0.0 && hfov < PI) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "field of view {hfov} rad out of range"
            )));
        }
        let f = width as f64 / (2.0 * (hfov / 2.0).tan());
        Self::new(f, f, (width / 2) as f64, (height / 2) as f64, width, height)
    }

    /// Raster position (column, row) to principal-point-relative pixels.
    pub fn raster_to_pixel(&self, col: f64, row: f64) -> PixelPoint {
        PixelPoint::new(col - self.cx, row - self.cy)
    }

    pub fn pixel_to_raster(&self, p: PixelPoint) -> (f64, f64) {
        (p.x + self.cx, p.y + self.cy)
    }

    /// True when the point lies on the sensor area.
    pub fn contains(&self, p: PixelPoint) -> bool {
        let (c, r) = self.pixel_to_raster(p);
        (0.0..=(self.width - 1) as f64).contains(&c)
            && (0.0..=(self.height - 1) as f64).contains(&r)
    }

    /// Camera-frame ray direction (not normalized) through a pixel.
    pub fn ray(&self, p: PixelPoint) -> Vector3<f64> {
        let n = pixel_to_normalized(p, self);
        Vector3::new(n.x, n.y, 1.0)
    }
}

/// Image position relative to the principal point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Ray slopes `X/Z`, `Y/Z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

pub fn pixel_to_normalized(p: PixelPoint, k: &CameraIntrinsics) -> NormalizedPoint {
    NormalizedPoint::new(p.x / k.fx, p.y / k.fy)
}

pub fn normalized_to_pixel(n: NormalizedPoint, k: &CameraIntrinsics) -> PixelPoint {
    PixelPoint::new(n.x * k.fx, n.y * k.fy)
}

/// Body-to-camera rotation angles about X (`roll`), Y (`pitch`) and Z (`yaw`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    /// Builds an attitude with every angle wrapped into (-pi, pi].
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            roll: wrap_angle(roll),
            pitch: wrap_angle(pitch),
            yaw: wrap_angle(yaw),
        }
    }

    pub const fn identity() -> Self {
        Self {
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = a.rem_euclid(two_pi);
    if w > PI {
        w -= two_pi;
    }
    w
}

/// Camera-frame angular velocity `[p, q, r]` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngularRates {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl AngularRates {
    pub const fn new(p: f64, q: f64, r: f64) -> Self {
        Self { p, q, r }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.p, self.q, self.r)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Unit surface normal `(alpha, beta, gamma)` in the camera frame, oriented
/// from the camera towards the surface so that `gamma = +1` for a nadir view
/// of level ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitNormal {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl UnitNormal {
    pub const NADIR: UnitNormal = UnitNormal {
        alpha: 0.0,
        beta: 0.0,
        gamma: 1.0,
    };

    /// Normalizes an arbitrary non-zero direction.
    pub fn from_vector(v: &Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(GeometryError::InvalidInput(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Ok(Self {
            alpha: v.x / n,
            beta: v.y / n,
            gamma: v.z / n,
        })
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.beta, self.gamma)
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `R^C_B = Rz(yaw) * Ry(pitch) * Rx(roll)`; maps body-frame vectors to the
/// camera frame.
pub fn rotation_body_to_camera(a: &Attitude) -> Matrix3<f64> {
    rot_z(a.yaw) * rot_y(a.pitch) * rot_x(a.roll)
}

/// Surface normal of level ground (perpendicular to the local vertical) seen
/// from the camera: `R^C_B * z_B`.
pub fn attitude_to_plane_normal(a: &Attitude) -> UnitNormal {
    let k = rotation_body_to_camera(a) * Vector3::z();
    // Rotations preserve the norm; renormalize only to shed rounding.
    let n = k.norm();
    UnitNormal {
        alpha: k.x / n,
        beta: k.y / n,
        gamma: k.z / n,
    }
}

/// Boresight geometry over a spherical body of radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereGeometry {
    /// Inward surface normal at the boresight intersection, camera frame.
    pub normal: UnitNormal,
    /// Altitude of the camera above the sphere (m).
    pub altitude: f64,
    /// Off-nadir angle of the boresight (rad).
    pub off_nadir: f64,
}

/// Solves the camera / surface point / body centre triangle for the altitude
/// and the surface normal at the boresight, given the measured boresight range.
pub fn attitude_to_sphere_geometry(
    a: &Attitude,
    range: f64,
    radius: f64,
) -> Result<SphereGeometry, GeometryError> {
    if !(range > 0.0 && range.is_finite()) || !(radius > 0.0 && radius.is_finite()) {
        return Err(GeometryError::InvalidInput(format!(
            "range and radius must be positive, got range={range}, radius={radius}"
        )));
    }
    let nadir_cam = rotation_body_to_camera(a) * Vector3::z();
    let cos_nu = nadir_cam.z.clamp(-1.0, 1.0);
    if cos_nu <= 0.0 {
        return Err(GeometryError::NoIntersection);
    }
    // sin from the transverse components keeps precision for small angles.
    let sin_nu = (nadir_cam.x * nadir_cam.x + nadir_cam.y * nadir_cam.y)
        .sqrt()
        .min(1.0);
    let nu = sin_nu.atan2(cos_nu);

    let altitude = if sin_nu == 0.0 {
        range
    } else {
        let sin_mu = range / radius * sin_nu;
        if sin_mu > 1.0 {
            return Err(GeometryError::NoIntersection);
        }
        let mu = sin_mu.asin();
        // H = R sin(mu + nu) / sin(nu) - R, rewritten without cancellation.
        radius * 2.0 * (nu + 0.5 * mu).cos() * (0.5 * mu).sin() / sin_nu
    };
    if !(altitude > 0.0) {
        return Err(GeometryError::NoIntersection);
    }

    let centre = nadir_cam * (altitude + radius);
    let surface = Vector3::new(0.0, 0.0, range);
    let normal = UnitNormal::from_vector(&(centre - surface))?;
    Ok(SphereGeometry {
        normal,
        altitude,
        off_nadir: nu,
    })
}
