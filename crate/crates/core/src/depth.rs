//! Inverse-depth maps `d(x, y) = 1/Z` of the surface seen by the camera,
//! anchored by the rangefinder reading `rho` along the boresight.
//!
//! All models use one normal convention: `(alpha, beta, gamma)` is expressed in
//! the camera frame and points from the camera towards the surface, so a
//! nadir-looking camera over level ground has normal `(0, 0, 1)`.

use crate::geometry::{
    attitude_to_plane_normal, attitude_to_sphere_geometry, Attitude, CameraIntrinsics,
    GeometryError, NormalizedPoint, PixelPoint, UnitNormal,
};
use thiserror::Error;

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DepthError {
    #[error("invalid depth model: {0}")]
    InvalidModel(String),
    #[error("slope parameters outside the unit disc: alpha^2 + beta^2 = {0}")]
    DomainError(f64),
    #[error("ray meets the plane behind the camera (d = {0})")]
    NonPositiveDepth(f64),
    #[error("ray does not intersect the surface")]
    NoIntersection,
}

impl From<GeometryError> for DepthError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::NoIntersection => DepthError::NoIntersection,
            other => DepthError::InvalidModel(other.to_string()),
        }
    }
}

/// Inverse depth `1/Z` in 1/m.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct InverseDepth(pub f64);

impl InverseDepth {
    pub fn value(self) -> f64 {
        self.0
    }

    /// Depth along the boresight axis, `Z`.
    pub fn depth(self) -> f64 {
        1.0 / self.0
    }
}

/// Anything that can evaluate an inverse depth for a ray.
pub trait DepthMap {
    fn inverse_depth(&self, n: NormalizedPoint) -> Result<InverseDepth, DepthError>;
}

fn check_range(rho: f64) -> Result<(), DepthError> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(DepthError::InvalidModel(format!(
            "range must be positive and finite, got {rho}"
        )))
    }
}

fn check_unit(n: &UnitNormal) -> Result<(), DepthError> {
    let norm = n.as_vector().norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
        return Err(DepthError::InvalidModel(format!(
            "surface normal must be unit length, got |n| = {norm}"
        )));
    }
    Ok(())
}

// Shared by the fixed and slope-estimated paths so both produce identical bits
// for identical parameters.
#[inline]
fn plane_inverse_depth(x: f64, y: f64, alpha: f64, beta: f64, gamma: f64, rho: f64) -> f64 {
    let h = rho * gamma;
    (alpha * x + beta * y) / h + 1.0 / rho
}

/// Plane with a known normal (usually derived from attitude).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarFixedModel {
    pub normal: UnitNormal,
    pub rho: f64,
}

impl PlanarFixedModel {
    pub fn new(normal: UnitNormal, rho: f64) -> Result<Self, DepthError> {
        check_range(rho)?;
        check_unit(&normal)?;
        if !(normal.gamma > 0.0) {
            return Err(DepthError::InvalidModel(format!(
                "plane not visible: gamma = {}",
                normal.gamma
            )));
        }
        Ok(Self { normal, rho })
    }

    pub fn nadir(rho: f64) -> Result<Self, DepthError> {
        Self::new(UnitNormal::NADIR, rho)
    }

    /// Level ground with the normal taken from the camera attitude.
    pub fn from_attitude(a: &Attitude, rho: f64) -> Result<Self, DepthError> {
        Self::new(attitude_to_plane_normal(a), rho)
    }
}

/// Plane whose tilt `(alpha, beta)` is a free parameter; `gamma` follows from
/// the unit-norm constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarSlopeModel {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
}

impl PlanarSlopeModel {
    pub fn new(alpha: f64, beta: f64, rho: f64) -> Result<Self, DepthError> {
        check_range(rho)?;
        let s = alpha * alpha + beta * beta;
        if !(s < 1.0) {
            return Err(DepthError::DomainError(s));
        }
        Ok(Self { alpha, beta, rho })
    }

    pub fn gamma(&self) -> f64 {
        (1.0 - self.alpha * self.alpha - self.beta * self.beta).sqrt()
    }
}

/// Sphere of radius `radius` touched by the boresight at range `rho`, where its
/// inward normal is `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalModel {
    pub normal: UnitNormal,
    pub rho: f64,
    pub radius: f64,
}

impl SphericalModel {
    pub fn new(normal: UnitNormal, rho: f64, radius: f64) -> Result<Self, DepthError> {
        check_range(rho)?;
        check_unit(&normal)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(DepthError::InvalidModel(format!(
                "radius must be positive, got {radius}"
            )));
        }
        if !(normal.gamma > 0.0) {
            return Err(DepthError::InvalidModel(format!(
                "boresight leaves the sphere: gamma = {}",
                normal.gamma
            )));
        }
        Ok(Self {
            normal,
            rho,
            radius,
        })
    }

    pub fn from_attitude(a: &Attitude, rho: f64, radius: f64) -> Result<Self, DepthError> {
        let g = attitude_to_sphere_geometry(a, rho, radius)?;
        Self::new(g.normal, rho, radius)
    }
}

pub fn planar_inverse_depth(
    n: NormalizedPoint,
    m: &PlanarFixedModel,
) -> Result<InverseDepth, DepthError> {
    let k = &m.normal;
    let d = plane_inverse_depth(n.x, n.y, k.alpha, k.beta, k.gamma, m.rho);
    if d > 0.0 {
        Ok(InverseDepth(d))
    } else {
        Err(DepthError::NonPositiveDepth(d))
    }
}

pub fn slope_inverse_depth(
    n: NormalizedPoint,
    m: &PlanarSlopeModel,
) -> Result<InverseDepth, DepthError> {
    let s = m.alpha * m.alpha + m.beta * m.beta;
    if !(s < 1.0) {
        return Err(DepthError::DomainError(s));
    }
    let d = plane_inverse_depth(n.x, n.y, m.alpha, m.beta, m.gamma(), m.rho);
    if d > 0.0 {
        Ok(InverseDepth(d))
    } else {
        Err(DepthError::NonPositiveDepth(d))
    }
}

pub fn spherical_inverse_depth(
    n: NormalizedPoint,
    m: &SphericalModel,
) -> Result<InverseDepth, DepthError> {
    let UnitNormal { alpha, beta, gamma } = m.normal;
    let (r, rho) = (m.radius, m.rho);
    // |Z (x, y, 1) - c|^2 = R^2 with centre c = (0, 0, rho) + R * normal.
    let a = n.x * n.x + n.y * n.y + 1.0;
    let b = -2.0 * (n.x * r * alpha + n.y * r * beta + rho + r * gamma);
    let c = rho * rho + 2.0 * rho * r * gamma;
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) {
        return Err(DepthError::NoIntersection);
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return Err(DepthError::NoIntersection);
    }
    let z = [q / a, c / q]
        .into_iter()
        .filter(|z| *z > 0.0 && z.is_finite())
        .fold(f64::INFINITY, f64::min);
    if z.is_finite() {
        Ok(InverseDepth(1.0 / z))
    } else {
        Err(DepthError::NoIntersection)
    }
}

impl DepthMap for PlanarFixedModel {
    fn inverse_depth(&self, n: NormalizedPoint) -> Result<InverseDepth, DepthError> {
        planar_inverse_depth(n, self)
    }
}

impl DepthMap for PlanarSlopeModel {
    fn inverse_depth(&self, n: NormalizedPoint) -> Result<InverseDepth, DepthError> {
        slope_inverse_depth(n, self)
    }
}

impl DepthMap for SphericalModel {
    fn inverse_depth(&self, n: NormalizedPoint) -> Result<InverseDepth, DepthError> {
        spherical_inverse_depth(n, self)
    }
}

/// Any of the supported surface approximations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthModel {
    PlanarFixed(PlanarFixedModel),
    PlanarSlope(PlanarSlopeModel),
    Spherical(SphericalModel),
}

impl DepthModel {
    pub fn rho(&self) -> f64 {
        match self {
            DepthModel::PlanarFixed(m) => m.rho,
            DepthModel::PlanarSlope(m) => m.rho,
            DepthModel::Spherical(m) => m.rho,
        }
    }
}

impl DepthMap for DepthModel {
    fn inverse_depth(&self, n: NormalizedPoint) -> Result<InverseDepth, DepthError> {
        match self {
            DepthModel::PlanarFixed(m) => planar_inverse_depth(n, m),
            DepthModel::PlanarSlope(m) => slope_inverse_depth(n, m),
            DepthModel::Spherical(m) => spherical_inverse_depth(n, m),
        }
    }
}

impl From<PlanarFixedModel> for DepthModel {
    fn from(m: PlanarFixedModel) -> Self {
        DepthModel::PlanarFixed(m)
    }
}

impl From<PlanarSlopeModel> for DepthModel {
    fn from(m: PlanarSlopeModel) -> Self {
        DepthModel::PlanarSlope(m)
    }
}

impl From<SphericalModel> for DepthModel {
    fn from(m: SphericalModel) -> Self {
        DepthModel::Spherical(m)
    }
}

/// Inverse depth sampled on a pixel lattice through the principal point.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    pub cols: usize,
    pub rows: usize,
    pub stride: u32,
    /// Raster coordinates of the first sample.
    pub origin: (u32, u32),
    /// Row-major samples; `None` where the ray misses the surface.
    pub values: Vec<Option<f64>>,
}

impl DepthGrid {
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.values[row * self.cols + col]
    }

    /// Raster coordinates of sample `(col, row)`.
    pub fn raster(&self, col: usize, row: usize) -> (u32, u32) {
        (
            self.origin.0 + col as u32 * self.stride,
            self.origin.1 + row as u32 * self.stride,
        )
    }
}

/// Evaluates `model` every `stride` pixels on a lattice aligned with the
/// principal point, so the boresight is always sampled.
pub fn inverse_depth_grid<M: DepthMap + ?Sized>(
    model: &M,
    k: &CameraIntrinsics,
    stride: u32,
) -> DepthGrid {
    let stride = stride.max(1);
    let axis = |c: f64, len: u32| {
        let c = c.floor() as u32;
        let first = c % stride;
        let count = (len - 1 - first) / stride + 1;
        (first, count as usize)
    };
    let (x0, cols) = axis(k.cx, k.width);
    let (y0, rows) = axis(k.cy, k.height);
    let mut values = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let p = k.raster_to_pixel(
                (x0 + c as u32 * stride) as f64,
                (y0 + r as u32 * stride) as f64,
            );
            let n = crate::geometry::pixel_to_normalized(p, k);
            values.push(model.inverse_depth(n).ok().map(InverseDepth::value));
        }
    }
    DepthGrid {
        cols,
        rows,
        stride,
        origin: (x0, y0),
        values,
    }
}

/// Inverse depth at a pixel, for callers that work in pixel coordinates.
pub fn inverse_depth_at<M: DepthMap + ?Sized>(
    model: &M,
    p: PixelPoint,
    k: &CameraIntrinsics,
) -> Result<InverseDepth, DepthError> {
    model.inverse_depth(crate::geometry::pixel_to_normalized(p, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn unit(a: f64, b: f64, c: f64) -> UnitNormal {
        UnitNormal::from_vector(&Vector3::new(a, b, c)).unwrap()
    }

    #[test]
    fn nadir_plane_is_fronto_parallel() {
        let m = PlanarFixedModel::nadir(1000.0).unwrap();
        assert_eq!(
            planar_inverse_depth(NormalizedPoint::new(0.0, 0.0), &m)
                .unwrap()
                .0,
            1e-3
        );
        assert_eq!(
            planar_inverse_depth(NormalizedPoint::new(0.3, -0.2), &m)
                .unwrap()
                .0,
            1e-3
        );
    }

    #[test]
    fn tilted_plane_value() {
        let m = PlanarFixedModel::new(unit(0.6, 0.0, 0.8), 100.0).unwrap();
        let d = planar_inverse_depth(NormalizedPoint::new(0.5, 0.0), &m)
            .unwrap()
            .0;
        assert_relative_eq!(d, 0.01375, max_relative = 1e-14);
        // Ray/plane oracle: the plane holds points r with r . k = H.
        let h = 100.0 * 0.8;
        let z = h / (0.5 * 0.6 + 0.8);
        assert_relative_eq!(1.0 / d, z, max_relative = 1e-14);
    }

    #[test]
    fn slope_model_cases() {
        let fixed = PlanarFixedModel::new(unit(0.6, 0.0, 0.8), 100.0).unwrap();
        let slope = PlanarSlopeModel::new(0.6, 0.0, 100.0).unwrap();
        let p = NormalizedPoint::new(0.5, 0.0);
        assert_relative_eq!(
            slope_inverse_depth(p, &slope).unwrap().0,
            planar_inverse_depth(p, &fixed).unwrap().0,
            max_relative = 1e-15
        );
        assert!(matches!(
            PlanarSlopeModel::new(0.8, 0.7, 100.0),
            Err(DepthError::DomainError(_))
        ));
        let s = PlanarSlopeModel {
            alpha: 0.8,
            beta: 0.7,
            rho: 100.0,
        };
        assert!(matches!(
            slope_inverse_depth(p, &s),
            Err(DepthError::DomainError(_))
        ));
    }

    #[test]
    fn plane_behind_camera() {
        let m = PlanarFixedModel::new(unit(0.9, 0.0, 0.2), 100.0).unwrap();
        assert!(matches!(
            planar_inverse_depth(NormalizedPoint::new(-1.0, 0.0), &m),
            Err(DepthError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn sphere_boresight_equals_range() {
        for (rho, r) in [(300e3, 1737.4e3), (100.0, 60.0), (1.0, 1e9)] {
            let m = SphericalModel::new(unit(0.1, -0.2, 0.9), rho, r).unwrap();
            let d = spherical_inverse_depth(NormalizedPoint::new(0.0, 0.0), &m).unwrap();
            assert_relative_eq!(d.depth(), rho, max_relative = 1e-12);
        }
    }

    #[test]
    fn sphere_limb_misses() {
        let m = SphericalModel::new(UnitNormal::NADIR, 300e3, 1737.4e3).unwrap();
        assert_eq!(
            spherical_inverse_depth(NormalizedPoint::new(2.0, 0.0), &m),
            Err(DepthError::NoIntersection)
        );
    }

    #[test]
    fn sphere_to_plane_limit_full_fov() {
        let rho = 1000.0;
        let k = unit(0.2, 0.1, 0.95);
        let plane = PlanarFixedModel::new(k, rho).unwrap();
        let sphere = SphericalModel::new(k, rho, 1e9 * rho).unwrap();
        let mut worst: f64 = 0.0;
        for i in -10..=10 {
            for j in -10..=10 {
                let p = NormalizedPoint::new(i as f64 * 0.05, j as f64 * 0.05);
                let ds = spherical_inverse_depth(p, &sphere).unwrap().0;
                let dp = planar_inverse_depth(p, &plane).unwrap().0;
                worst = worst.max(((ds - dp) / dp).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn grid_shapes() {
        let k = CameraIntrinsics::from_fov(64, 48, 1.0).unwrap();
        let m = PlanarFixedModel::nadir(50.0).unwrap();
        let g = inverse_depth_grid(&m, &k, 1);
        assert_eq!((g.cols, g.rows), (64, 48));
        assert!(g.values.iter().all(|v| *v == Some(0.02)));

        let g = inverse_depth_grid(&m, &k, 64);
        assert_eq!((g.cols, g.rows), (1, 1));
        assert_eq!(g.raster(0, 0), (32, 24));

        let s = SphericalModel::new(UnitNormal::NADIR, 100.0, 200.0).unwrap();
        let g = inverse_depth_grid(&s, &k, 4);
        let centre = g.values[(24 / 4) * g.cols + 32 / 4].unwrap();
        assert_relative_eq!(centre, 0.01, max_relative = 1e-14);
        // Inverse depth falls off away from the boresight along the centre row.
        let row = 24 / 4;
        for c in 32 / 4..g.cols - 1 {
            assert!(g.get(c, row).unwrap() > g.get(c + 1, row).unwrap());
        }
    }

    /// Independent ray/sphere intersection: march along the unit ray using the
    /// textbook half-b form.
    fn sphere_oracle(n: NormalizedPoint, k: &UnitNormal, rho: f64, r: f64) -> Option<f64> {
        let dir = Vector3::new(n.x, n.y, 1.0);
        let len = dir.norm();
        let u = dir / len;
        let c = Vector3::new(0.0, 0.0, rho) + k.as_vector() * r;
        let hb = u.dot(&c);
        let cc = c.norm_squared() - r * r;
        let disc = hb * hb - cc;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        let t = if hb - s > 0.0 {
            cc / (hb + s)
        } else if hb + s > 0.0 {
            hb + s
        } else {
            return None;
        };
        Some(t / len)
    }

    fn normal_strategy(max_tilt: f64) -> impl Strategy<Value = UnitNormal> {
        (0.0..max_tilt, -3.2..3.2f64).prop_map(|(t, az): (f64, f64)| UnitNormal {
            alpha: t.sin() * az.cos(),
            beta: t.sin() * az.sin(),
            gamma: t.cos(),
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn plane_matches_ray_oracle(
            k in normal_strategy(1.2), rho in 1.0..1e6f64,
            x in -0.6..0.6f64, y in -0.6..0.6f64,
        ) {
            let m = PlanarFixedModel::new(k, rho).unwrap();
            let h = rho * k.gamma;
            let denom = x * k.alpha + y * k.beta + k.gamma;
            prop_assume!(denom > 1e-3);
            let z = h / denom;
            let d = planar_inverse_depth(NormalizedPoint::new(x, y), &m).unwrap().0;
            prop_assert!((d * z - 1.0).abs() < 1e-10);
        }

        #[test]
        fn zero_slope_is_bitwise_nadir(rho in 0.1..1e7f64, x in -2.0..2.0f64, y in -2.0..2.0f64) {
            let p = NormalizedPoint::new(x, y);
            let a = slope_inverse_depth(p, &PlanarSlopeModel::new(0.0, 0.0, rho).unwrap()).unwrap();
            let b = planar_inverse_depth(p, &PlanarFixedModel::nadir(rho).unwrap()).unwrap();
            prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn sphere_matches_ray_oracle(
            k in normal_strategy(1.0), rho in 10.0..4e5f64, r in 100.0..2e6f64,
            x in -0.6..0.6f64, y in -0.6..0.6f64,
        ) {
            let m = SphericalModel::new(k, rho, r).unwrap();
            let p = NormalizedPoint::new(x, y);
            match (spherical_inverse_depth(p, &m), sphere_oracle(p, &k, rho, r)) {
                (Ok(d), Some(z)) => {
                    prop_assert!(d.0 > 0.0);
                    prop_assert!((d.0 * z - 1.0).abs() < 1e-10, "{} vs {}", d.depth(), z);
                }
                (Err(DepthError::NoIntersection), None) => {}
                (a, b) => prop_assert!(false, "disagree: {:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn sphere_tends_to_plane(
            k in normal_strategy(0.5), rho in 10.0..4e5f64,
            x in -0.5..0.5f64, y in -0.5..0.5f64,
        ) {
            let p = NormalizedPoint::new(x, y);
            let ds = spherical_inverse_depth(p, &SphericalModel::new(k, rho, 1e6 * rho).unwrap());
            let dp = planar_inverse_depth(p, &PlanarFixedModel::new(k, rho).unwrap());
            if let (Ok(ds), Ok(dp)) = (ds, dp) {
                prop_assert!(((ds.0 - dp.0) / dp.0).abs() < 1e-5);
            }
        }
    }
}
