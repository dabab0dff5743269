//! Run configuration, read from TOML.
//!
//! ```toml
//! scenario = "flat"        # flat | crater | incline | peak | hohmann | transfer
//! seed = 1
//! frame_rate = 4.0         # Hz
//! resolution = 1024        # px, square frames
//! hfov = 1.0471975511965976  # rad
//! depth_model = "auto"     # auto | planar | slope | sphere
//! switch_altitude = 4000.0 # m, auto: sphere above, plane below
//!
//! [noise]                  # all optional, default 0
//! camera_sigma = 0.0
//! attitude_sigma = 0.0
//! rate_sigma = 0.0
//! range_sigma = 0.0
//!
//! [lk]                     # tracker settings, defaults shown by `ofnav config`
//! [sun]                    # azimuth, elevation (rad)
//! [render]                 # shadows, exposure
//! [terrain]                # full terrain override
//! [trajectory]             # full trajectory override
//! ```

use crate::HarnessError;
use ofnav_core::{CameraIntrinsics, LkParams};
use ofnav_sim::render::RenderOptions;
use ofnav_sim::terrain::TerrainSpec;
use ofnav_sim::trajectory::TrajectorySpec;
use ofnav_sim::{NoiseConfig, ScenarioKind, ScenarioSpec, SunConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DepthChoice {
    /// Spherical above the switch altitude on a spherical body, else planar.
    Auto,
    Planar,
    Slope,
    Sphere,
}

/// Depth used by oracle runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OracleDepth {
    /// Ray-cast terrain depth: isolates the inversion arithmetic.
    Exact,
    /// The configured surface model.
    Model,
}

/// Mirror of [`LkParams`] with serde support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LkConfig {
    pub max_corners: usize,
    pub quality_level: f64,
    pub min_distance: f64,
    pub block_size: usize,
    pub window: usize,
    pub pyramid_levels: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub min_eigen_threshold: f64,
    pub max_residual_ratio: f64,
}

impl Default for LkConfig {
    fn default() -> Self {
        Self::from(LkParams::default())
    }
}

impl From<LkParams> for LkConfig {
    fn from(p: LkParams) -> Self {
        Self {
            max_corners: p.max_corners,
            quality_level: p.quality_level,
            min_distance: p.min_distance,
            block_size: p.block_size,
            window: p.window,
            pyramid_levels: p.pyramid_levels,
            epsilon: p.epsilon,
            max_iters: p.max_iters,
            min_eigen_threshold: p.min_eigen_threshold,
            max_residual_ratio: p.max_residual_ratio,
        }
    }
}

impl From<LkConfig> for LkParams {
    fn from(c: LkConfig) -> Self {
        Self {
            max_corners: c.max_corners,
            quality_level: c.quality_level,
            min_distance: c.min_distance,
            block_size: c.block_size,
            window: c.window,
            pyramid_levels: c.pyramid_levels,
            epsilon: c.epsilon,
            max_iters: c.max_iters,
            min_eigen_threshold: c.min_eigen_threshold,
            max_residual_ratio: c.max_residual_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub frame_rate: f64,
    pub resolution: u32,
    pub hfov: f64,
    pub depth_model: DepthChoice,
    pub switch_altitude: f64,
    pub noise: NoiseConfig,
    pub lk: LkConfig,
    pub sun: Option<SunConfig>,
    pub render: Option<RenderOptions>,
    pub terrain: Option<TerrainSpec>,
    pub trajectory: Option<TrajectorySpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Flat,
            seed: 1,
            frame_rate: 4.0,
            resolution: 1024,
            hfov: 60f64.to_radians(),
            depth_model: DepthChoice::Auto,
            switch_altitude: 4000.0,
            noise: NoiseConfig::default(),
            lk: LkConfig::default(),
            sun: None,
            render: None,
            terrain: None,
            trajectory: None,
        }
    }
}

impl ScenarioConfig {
    pub fn preset(kind: ScenarioKind) -> Self {
        Self {
            scenario: kind,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad(format!(
                "frame_rate must be positive, got {}",
                self.frame_rate
            ));
        }
        if self.resolution < 128 || !self.resolution.is_power_of_two() {
            return bad(format!(
                "resolution must be a power of two >= 128, got {}",
                self.resolution
            ));
        }
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return bad(format!("hfov must be in (0, pi), got {}", self.hfov));
        }
        if !self.noise.is_valid() {
            return bad(format!("noise sigmas must be >= 0: {:?}", self.noise));
        }
        if !(self.switch_altitude >= 0.0) {
            return bad(format!(
                "switch_altitude must be >= 0, got {}",
                self.switch_altitude
            ));
        }
        LkParams::from(self.lk)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn lk_params(&self) -> LkParams {
        self.lk.into()
    }

    pub fn camera(&self) -> Result<CameraIntrinsics, HarnessError> {
        CameraIntrinsics::from_fov(self.resolution, self.resolution, self.hfov)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Scenario preset with any overrides applied.
    pub fn scenario_spec(&self) -> ScenarioSpec {
        let mut s = ScenarioSpec::preset(self.scenario);
        if let Some(t) = &self.terrain {
            s.terrain = t.clone();
        }
        if let Some(t) = &self.trajectory {
            s.trajectory = t.clone();
        }
        if let Some(sun) = self.sun {
            s.sun = sun;
        }
        if let Some(r) = self.render {
            s.render = r;
        }
        s
    }
}
