//! Procedural terrain: a base plane or sphere plus a bounded height
//! perturbation (fractal relief, crater bowls, a crater field, broad peaks),
//! and a band-limited surface texture used only for shading.

use crate::fields::{lod_weight, smoothstep, smoothstep_derivative, Fbm};
use crate::noise::{stream_key, Stream};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Mean lunar radius (m).
pub const MOON_RADIUS: f64 = 1_737_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSurface {
    /// `z = elevation + tan(slope) * (x sin(azimuth) + y cos(azimuth))`;
    /// azimuth is the uphill direction, clockwise from +y.
    Plane {
        elevation: f64,
        slope: f64,
        azimuth: f64,
    },
    /// Sphere of `radius` centred at the world origin.
    Sphere { radius: f64 },
}

/// Local east, north and up unit vectors at `p`. On the sphere east is the
/// direction of increasing `atan2(x, z)`.
pub fn local_frame(
    base: &BaseSurface,
    p: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    match base {
        BaseSurface::Plane { .. } => (Vector3::x(), Vector3::y(), Vector3::z()),
        BaseSurface::Sphere { .. } => {
            let up = p.normalize();
            let lon = p.x.atan2(p.z);
            let east = Vector3::new(lon.cos(), 0.0, -lon.sin());
            let north = up.cross(&east);
            (east, north, up)
        }
    }
}

/// World-to-body rotation of a nadir-pointing vehicle at `p`: body x east,
/// body z down, body y completing the right-handed frame.
pub fn nadir_body_frame(base: &BaseSurface, p: &Vector3<f64>) -> Matrix3<f64> {
    let (east, _, up) = local_frame(base, p);
    let z = -up;
    let y = z.cross(&east);
    Matrix3::from_rows(&[east.transpose(), y.transpose(), z.transpose()])
}

/// Seeded fractal relief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliefSpec {
    /// Amplitude of the coarsest octave (m).
    pub amplitude: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub hurst: f64,
}

/// Bowl with a flat floor, a smooth wall up to a raised rim, and an outer
/// flank that decays to zero at 1.5 rim radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crater {
    pub center: [f64; 2],
    pub floor_radius: f64,
    pub rim_radius: f64,
    pub depth: f64,
    pub rim_height: f64,
}

impl Crater {
    pub fn influence_radius(&self) -> f64 {
        1.5 * self.rim_radius
    }

    fn flank(&self) -> f64 {
        0.5 * self.rim_radius
    }

    /// Height and gradient at surface coordinates `(u, v)`.
    pub fn eval(&self, u: f64, v: f64) -> (f64, f64, f64) {
        let (du, dv) = (u - self.center[0], v - self.center[1]);
        let r = du.hypot(dv);
        let (h, dh) = self.profile(r);
        if r == 0.0 || dh == 0.0 {
            return (h, 0.0, 0.0);
        }
        (h, dh * du / r, dh * dv / r)
    }

    fn profile(&self, r: f64) -> (f64, f64) {
        let (rf, rr) = (self.floor_radius, self.rim_radius);
        if r <= rf {
            (-self.depth, 0.0)
        } else if r < rr {
            let span = rr - rf;
            let t = (r - rf) / span;
            let rise = self.depth + self.rim_height;
            (
                -self.depth + rise * smoothstep(t),
                rise * smoothstep_derivative(t) / span,
            )
        } else if r < rr + self.flank() {
            let t = (r - rr) / self.flank();
            (
                self.rim_height * (1.0 - smoothstep(t)),
                -self.rim_height * smoothstep_derivative(t) / self.flank(),
            )
        } else {
            (0.0, 0.0)
        }
    }

    pub fn lipschitz(&self) -> f64 {
        let wall = 1.5 * (self.depth + self.rim_height) / (self.rim_radius - self.floor_radius);
        wall.max(1.5 * self.rim_height / self.flank())
    }

    fn is_valid(&self) -> bool {
        self.floor_radius >= 0.0
            && self.rim_radius > self.floor_radius
            && self.depth >= 0.0
            && self.rim_height >= 0.0
    }
}

/// Smooth dome `height * (1 - smoothstep(r / radius))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

impl Peak {
    pub fn eval(&self, u: f64, v: f64) -> (f64, f64, f64) {
        let (du, dv) = (u - self.center[0], v - self.center[1]);
        let r = du.hypot(dv);
        let t = r / self.radius;
        if t >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let h = self.height * (1.0 - smoothstep(t));
        if r == 0.0 {
            return (h, 0.0, 0.0);
        }
        let dh = -self.height * smoothstep_derivative(t) / self.radius;
        (h, dh * du / r, dh * dv / r)
    }

    pub fn lipschitz(&self) -> f64 {
        1.5 * self.height.abs() / self.radius
    }
}

/// Random simple craters on a square grid, at most one per cell and never
/// crossing a cell boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraterFieldSpec {
    pub cell: f64,
    /// Probability that a cell holds a crater.
    pub density: f64,
    pub min_radius: f64,
    pub max_radius: f64,
}

// Simple-crater proportions relative to the rim radius.
const FIELD_DEPTH: f64 = 0.4;
const FIELD_FLOOR: f64 = 0.25;
const FIELD_RIM: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq)]
struct CraterField {
    spec: CraterFieldSpec,
    seed: u64,
}

impl CraterField {
    fn unit(key: u64, k: u64) -> f64 {
        (stream_key(key, Stream::Terrain, k) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn crater_in(&self, i: i64, j: i64) -> Option<Crater> {
        let s = &self.spec;
        let key = stream_key(
            self.seed,
            Stream::Terrain,
            (i as u64) ^ (j as u64).rotate_left(32),
        );
        if Self::unit(key, 0) >= s.density {
            return None;
        }
        let rim = s.min_radius * (s.max_radius / s.min_radius).powf(Self::unit(key, 1));
        let free = s.cell - 2.0 * 1.5 * rim;
        let c0 = i as f64 * s.cell + 1.5 * rim + free * Self::unit(key, 2);
        let c1 = j as f64 * s.cell + 1.5 * rim + free * Self::unit(key, 3);
        Some(Crater {
            center: [c0, c1],
            floor_radius: FIELD_FLOOR * rim,
            rim_radius: rim,
            depth: FIELD_DEPTH * rim,
            rim_height: FIELD_RIM * rim,
        })
    }

    /// Height and gradient; the gradient of craters smaller than the pixel
    /// footprint is faded out when `footprint` is given.
    fn eval(&self, u: f64, v: f64, footprint: Option<f64>) -> (f64, f64, f64) {
        let i = (u / self.spec.cell).floor() as i64;
        let j = (v / self.spec.cell).floor() as i64;
        match self.crater_in(i, j) {
            None => (0.0, 0.0, 0.0),
            Some(c) => {
                let (h, gu, gv) = c.eval(u, v);
                let w = footprint.map_or(1.0, |f| lod_weight(c.rim_radius, f));
                (h, w * gu, w * gv)
            }
        }
    }

    fn lipschitz(&self) -> f64 {
        let c = Crater {
            center: [0.0, 0.0],
            floor_radius: FIELD_FLOOR,
            rim_radius: 1.0,
            depth: FIELD_DEPTH,
            rim_height: FIELD_RIM,
        };
        c.lipschitz()
    }
}

/// Band-limited texture octaves shared by the albedo and the shading-only
/// bump field. Octaves are faded in by pixel footprint (fine cut-off) and
/// out again when much wider than the image (coarse cut-off).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Albedo deviation per unit of summed octave value.
    pub albedo_contrast: f64,
    /// Bump slope per octave (dimensionless).
    pub bump_slope: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            lambda_max: 131_072.0,
            lambda_min: 0.05,
            albedo_contrast: 0.08,
            bump_slope: 0.004,
        }
    }
}

/// Coarse cut-off, in pixels per wavelength.
const COARSE_CUT: f64 = 4096.0;
const MIN_ALBEDO: f64 = 0.05;

/// Full terrain description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSpec {
    pub base: BaseSurface,
    #[serde(default)]
    pub relief: Option<ReliefSpec>,
    #[serde(default)]
    pub craters: Vec<Crater>,
    #[serde(default)]
    pub crater_field: Option<CraterFieldSpec>,
    #[serde(default)]
    pub peaks: Vec<Peak>,
    #[serde(default)]
    pub texture: TextureSpec,
}

impl TerrainSpec {
    pub fn flat_plane(elevation: f64) -> Self {
        Self {
            base: BaseSurface::Plane {
                elevation,
                slope: 0.0,
                azimuth: 0.0,
            },
            relief: None,
            craters: Vec::new(),
            crater_field: None,
            peaks: Vec::new(),
            texture: TextureSpec::default(),
        }
    }

    pub fn sphere(radius: f64) -> Self {
        Self {
            base: BaseSurface::Sphere { radius },
            ..Self::flat_plane(0.0)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.base {
            BaseSurface::Plane {
                slope,
                elevation,
                azimuth,
            } => {
                if !(slope.abs() < std::f64::consts::FRAC_PI_2)
                    || !elevation.is_finite()
                    || !azimuth.is_finite()
                {
                    return Err(format!("invalid plane base {:?}", self.base));
                }
            }
            BaseSurface::Sphere { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(format!("invalid sphere radius {radius}"));
                }
            }
        }
        if let Some(r) = &self.relief {
            if !(r.lambda_max >= r.lambda_min && r.lambda_min > 0.0 && r.amplitude >= 0.0) {
                return Err(format!("invalid relief {r:?}"));
            }
        }
        if let Some(c) = self.craters.iter().find(|c| !c.is_valid()) {
            return Err(format!("invalid crater {c:?}"));
        }
        if let Some(p) = self.peaks.iter().find(|p| !(p.radius > 0.0)) {
            return Err(format!("invalid peak {p:?}"));
        }
        if let Some(f) = &self.crater_field {
            let ok = f.cell > 0.0
                && (0.0..=1.0).contains(&f.density)
                && f.min_radius > 0.0
                && f.max_radius >= f.min_radius
                && 3.0 * f.max_radius < f.cell;
            if !ok {
                return Err(format!("invalid crater field {f:?}"));
            }
        }
        let t = &self.texture;
        if !(t.lambda_max >= t.lambda_min
            && t.lambda_min > 0.0
            && t.albedo_contrast >= 0.0
            && t.bump_slope >= 0.0)
        {
            return Err(format!("invalid texture {t:?}"));
        }
        Ok(())
    }
}

/// Terrain instantiated from a [`TerrainSpec`] and a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    spec: TerrainSpec,
    relief: Fbm,
    field: Option<CraterField>,
    texture: Fbm,
    bounds: (f64, f64),
    lipschitz: f64,
}

/// Local surface quantities used for shading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub normal: Vector3<f64>,
    pub albedo: f64,
}

impl Terrain {
    pub fn new(spec: TerrainSpec, seed: u64) -> Result<Self, String> {
        spec.validate()?;
        let relief = match &spec.relief {
            Some(r) if r.amplitude > 0.0 => Fbm::new(
                seed,
                Stream::Terrain,
                r.lambda_max,
                r.lambda_min,
                r.amplitude,
                r.hurst,
            ),
            _ => Fbm::empty(),
        };
        let t = &spec.texture;
        let texture = Fbm::new(seed, Stream::Albedo, t.lambda_max, t.lambda_min, 1.0, 0.0);
        let field = spec.crater_field.map(|s| CraterField {
            spec: s,
            seed: stream_key(seed, Stream::Terrain, u64::MAX),
        });

        let rb = relief.bound();
        let (mut lo, mut hi) = (-rb, rb);
        let mut lip = relief.lipschitz();
        for c in &spec.craters {
            lo -= c.depth;
            hi += c.rim_height;
            lip += c.lipschitz();
        }
        for p in &spec.peaks {
            lo += p.height.min(0.0);
            hi += p.height.max(0.0);
            lip += p.lipschitz();
        }
        if let Some(f) = &field {
            lo -= FIELD_DEPTH * f.spec.max_radius;
            hi += FIELD_RIM * f.spec.max_radius;
            lip += f.lipschitz();
        }
        Ok(Self {
            spec,
            relief,
            field,
            texture,
            bounds: (lo, hi),
            lipschitz: lip,
        })
    }

    pub fn spec(&self) -> &TerrainSpec {
        &self.spec
    }

    pub fn base(&self) -> BaseSurface {
        self.spec.base
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.spec.base, BaseSurface::Sphere { .. })
    }

    /// Radius of the base sphere, if any.
    pub fn radius(&self) -> Option<f64> {
        match self.spec.base {
            BaseSurface::Sphere { radius } => Some(radius),
            BaseSurface::Plane { .. } => None,
        }
    }

    /// True when the surface is exactly the base plane or sphere.
    pub fn is_unperturbed(&self) -> bool {
        self.bounds == (0.0, 0.0)
    }

    /// `(min, max)` of the height perturbation.
    pub fn height_bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Bound on the gradient norm of the height perturbation.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Height perturbation and its gradient at surface coordinates.
    pub fn perturbation(&self, u: f64, v: f64) -> (f64, f64, f64) {
        self.perturbation_impl(u, v, None)
    }

    fn perturbation_impl(&self, u: f64, v: f64, footprint: Option<f64>) -> (f64, f64, f64) {
        let mut acc = match footprint {
            Some(f) => {
                // Heights stay exact; only the gradient is band-limited.
                let (h, _, _) = self.relief.eval(u, v);
                let (_, gu, gv) = self.relief.eval_lod(u, v, f);
                (h, gu, gv)
            }
            None => self.relief.eval(u, v),
        };
        let mut add = |(h, gu, gv): (f64, f64, f64)| {
            acc = (acc.0 + h, acc.1 + gu, acc.2 + gv);
        };
        for c in &self.spec.craters {
            add(c.eval(u, v));
        }
        for p in &self.spec.peaks {
            add(p.eval(u, v));
        }
        if let Some(f) = &self.field {
            add(f.eval(u, v, footprint));
        }
        acc
    }

    /// Base-plane height and gradient. Zero for the sphere.
    pub fn base_plane(&self, x: f64, y: f64) -> (f64, f64, f64) {
        match self.spec.base {
            BaseSurface::Plane {
                elevation,
                slope,
                azimuth,
            } => {
                let t = slope.tan();
                let (gx, gy) = (t * azimuth.sin(), t * azimuth.cos());
                (elevation + gx * x + gy * y, gx, gy)
            }
            BaseSurface::Sphere { .. } => (0.0, 0.0, 0.0),
        }
    }

    /// Surface height (plane) or altitude above the sphere including the
    /// perturbation, at the surface point under `p`.
    pub fn surface_height_under(&self, p: &Vector3<f64>) -> f64 {
        let (u, v) = self.surface_coords(p);
        let h = self.perturbation(u, v).0;
        match self.spec.base {
            BaseSurface::Plane { .. } => self.base_plane(p.x, p.y).0 + h,
            BaseSurface::Sphere { radius } => radius + h,
        }
    }

    /// Surface coordinates: `(x, y)` on the plane, `(R lon, R lat)` on the
    /// sphere with `lon = atan2(x, z)`, `lat = asin(y / |p|)`.
    pub fn surface_coords(&self, p: &Vector3<f64>) -> (f64, f64) {
        match self.spec.base {
            BaseSurface::Plane { .. } => (p.x, p.y),
            BaseSurface::Sphere { radius } => {
                let lon = p.x.atan2(p.z);
                let lat = (p.y / p.norm()).clamp(-1.0, 1.0).asin();
                (radius * lon, radius * lat)
            }
        }
    }

    /// Local east, north and up unit vectors at `p`.
    pub fn local_frame(&self, p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        local_frame(&self.spec.base, p)
    }

    pub fn body_frame(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        nadir_body_frame(&self.spec.base, p)
    }

    /// Shading normal and albedo at surface point `p`, where one pixel spans
    /// `footprint` metres.
    pub fn surface_sample(&self, p: &Vector3<f64>, footprint: f64) -> SurfaceSample {
        let (u, v) = self.surface_coords(p);
        let (_, mut gu, mut gv) = self.perturbation_impl(u, v, Some(footprint));
        let (a, bu, bv) = self.texture_at(u, v, footprint);
        gu += bu;
        gv += bv;
        let normal = match self.spec.base {
            BaseSurface::Plane { .. } => {
                let (_, bx, by) = self.base_plane(p.x, p.y);
                Vector3::new(-(bx + gu), -(by + gv), 1.0).normalize()
            }
            BaseSurface::Sphere { .. } => {
                let (east, north, up) = self.local_frame(p);
                (up - east * gu - north * gv).normalize()
            }
        };
        SurfaceSample { normal, albedo: a }
    }

    /// Albedo and bump gradient.
    pub fn texture_at(&self, u: f64, v: f64, footprint: f64) -> (f64, f64, f64) {
        let t = &self.spec.texture;
        let (mut sum, mut bu, mut bv) = (0.0, 0.0, 0.0);
        for o in self.texture.octaves() {
            let px = o.wavelength / footprint;
            if px > 2.0 * COARSE_CUT {
                continue;
            }
            let w = lod_weight(o.wavelength, footprint) * (1.0 - smoothstep(px / COARSE_CUT - 1.0));
            if w == 0.0 {
                if px < 2.0 {
                    break;
                }
                continue;
            }
            let (h, gu, gv) = o.eval(u, v);
            sum += w * h;
            let s = w * t.bump_slope * o.wavelength;
            bu += s * gu;
            bv += s * gv;
        }
        ((1.0 + t.albedo_contrast * sum).max(MIN_ALBEDO), bu, bv)
    }
}
