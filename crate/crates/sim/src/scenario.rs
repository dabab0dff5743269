//! Named scenarios with their terrain, trajectory and lighting.

use crate::raycast::Pose;
use crate::render::{render_frame_with, RenderOptions, SunConfig};
use crate::terrain::{
    BaseSurface, Crater, CraterFieldSpec, Peak, ReliefSpec, Terrain, TerrainSpec, MOON_RADIUS,
};
use crate::trajectory::{
    Knot, Profile, Trajectory, TrajectorySample, TrajectorySpec, Wobble, MOON_MU,
};
use crate::SimError;
use ofnav_core::{CameraIntrinsics, Execution, GrayImage};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Flat,
    Crater,
    Incline,
    Peak,
    Hohmann,
    Transfer,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Flat,
        ScenarioKind::Crater,
        ScenarioKind::Incline,
        ScenarioKind::Peak,
        ScenarioKind::Hohmann,
        ScenarioKind::Transfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Flat => "flat",
            ScenarioKind::Crater => "crater",
            ScenarioKind::Incline => "incline",
            ScenarioKind::Peak => "peak",
            ScenarioKind::Hohmann => "hohmann",
            ScenarioKind::Transfer => "transfer",
        }
    }

    pub fn is_orbital(self) -> bool {
        matches!(self, ScenarioKind::Hohmann | ScenarioKind::Transfer)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::InvalidScenario(format!("unknown scenario {s:?}")))
    }
}

/// Altitude above the landing site at the end of every landing profile.
pub const LANDING_HOVER: f64 = 100.0;
/// Landing descent duration (s).
pub const LANDING_DURATION: f64 = 60.0;

/// Half the period of the ellipse between two circular-orbit altitudes.
pub fn hohmann_duration(h_high: f64, h_low: f64) -> f64 {
    let a = MOON_RADIUS + 0.5 * (h_high + h_low);
    std::f64::consts::PI * (a * a * a / MOON_MU).sqrt()
}

fn landing(start: f64, end: f64) -> Profile {
    Profile::Landing {
        duration: LANDING_DURATION,
        start_altitude: start,
        end_altitude: end,
        start_descent_rate: 100.0,
        end_descent_rate: 0.0,
        start_xy: [-160.0, -120.0],
    }
}

fn relief(amplitude: f64) -> Option<ReliefSpec> {
    Some(ReliefSpec {
        amplitude,
        lambda_max: 1024.0,
        lambda_min: 2.0,
        hurst: 1.0,
    })
}

/// Terrain of a scenario.
pub fn default_terrain(kind: ScenarioKind) -> TerrainSpec {
    match kind {
        ScenarioKind::Flat => TerrainSpec::flat_plane(0.0),
        ScenarioKind::Incline => TerrainSpec {
            base: BaseSurface::Plane {
                elevation: 4661.4,
                slope: 15f64.to_radians(),
                azimuth: 30f64.to_radians(),
            },
            ..TerrainSpec::flat_plane(0.0)
        },
        ScenarioKind::Crater => TerrainSpec {
            relief: relief(4.0),
            craters: vec![Crater {
                center: [0.0, 0.0],
                floor_radius: 1500.0,
                rim_radius: 3000.0,
                depth: 400.0,
                rim_height: 100.0,
            }],
            crater_field: Some(CraterFieldSpec {
                cell: 120.0,
                density: 0.5,
                min_radius: 3.0,
                max_radius: 30.0,
            }),
            ..TerrainSpec::flat_plane(400.0)
        },
        ScenarioKind::Peak => TerrainSpec {
            relief: relief(4.0),
            peaks: vec![Peak {
                center: [0.0, 0.0],
                radius: 30_000.0,
                height: 7250.8,
            }],
            ..TerrainSpec::flat_plane(0.0)
        },
        ScenarioKind::Hohmann | ScenarioKind::Transfer => TerrainSpec::sphere(MOON_RADIUS),
    }
}

/// Trajectory of a scenario: endpoint altitudes and speeds of the reference
/// descent profiles.
pub fn default_trajectory(kind: ScenarioKind) -> TrajectorySpec {
    let profile = match kind {
        ScenarioKind::Flat | ScenarioKind::Crater => landing(4000.0, 100.0),
        ScenarioKind::Peak => landing(11_250.8, 7350.8),
        ScenarioKind::Incline => landing(8661.4, 4761.4),
        ScenarioKind::Hohmann => Profile::Orbital {
            radius: MOON_RADIUS,
            knots: vec![
                Knot {
                    t: 0.0,
                    altitude: 300e3,
                    vertical_speed: -0.18,
                    horizontal_speed: 1489.26,
                },
                Knot {
                    t: hohmann_duration(300e3, 4e3),
                    altitude: 4e3,
                    vertical_speed: -0.25,
                    horizontal_speed: 1742.40,
                },
            ],
        },
        ScenarioKind::Transfer => Profile::Orbital {
            radius: MOON_RADIUS,
            knots: vec![
                Knot {
                    t: 0.0,
                    altitude: 102_013.0,
                    vertical_speed: -0.217,
                    horizontal_speed: 1633.50,
                },
                Knot {
                    t: 720.0,
                    altitude: 4000.0,
                    vertical_speed: -100.0,
                    horizontal_speed: 20.0,
                },
                Knot {
                    t: 720.0 + LANDING_DURATION,
                    altitude: 0.0,
                    vertical_speed: -0.01,
                    horizontal_speed: 0.45,
                },
            ],
        },
    };
    TrajectorySpec {
        profile,
        wobble: Wobble::default(),
    }
}

/// Complete scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub terrain: TerrainSpec,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub sun: SunConfig,
    #[serde(default)]
    pub render: RenderOptions,
}

impl ScenarioSpec {
    pub fn preset(kind: ScenarioKind) -> Self {
        Self {
            kind,
            terrain: default_terrain(kind),
            trajectory: default_trajectory(kind),
            sun: SunConfig::default(),
            render: RenderOptions::default(),
        }
    }
}

/// A scenario instantiated for one seed and camera.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub spec: ScenarioSpec,
    pub terrain: Terrain,
    pub trajectory: Trajectory,
    pub camera: CameraIntrinsics,
    pub seed: u64,
}

impl Simulation {
    pub fn new(spec: ScenarioSpec, camera: CameraIntrinsics, seed: u64) -> Result<Self, SimError> {
        if !spec.sun.is_valid() {
            return Err(SimError::InvalidScenario(format!(
                "invalid sun {:?}",
                spec.sun
            )));
        }
        let terrain =
            Terrain::new(spec.terrain.clone(), seed).map_err(SimError::InvalidScenario)?;
        let trajectory = Trajectory::new(spec.trajectory.clone(), seed)?;
        let world_ok = matches!(
            (terrain.base(), &spec.trajectory.profile),
            (BaseSurface::Plane { .. }, Profile::Landing { .. })
                | (BaseSurface::Sphere { .. }, Profile::Orbital { .. })
        );
        if !world_ok {
            return Err(SimError::InvalidScenario(
                "landing profiles need a plane base, orbital profiles a sphere".into(),
            ));
        }
        if let (BaseSurface::Sphere { radius }, Profile::Orbital { radius: r, .. }) =
            (terrain.base(), &spec.trajectory.profile)
        {
            if radius != *r {
                return Err(SimError::InvalidScenario(format!(
                    "trajectory radius {r} differs from terrain radius {radius}"
                )));
            }
        }
        Ok(Self {
            spec,
            terrain,
            trajectory,
            camera,
            seed,
        })
    }

    pub fn samples(&self, frame_rate: f64) -> Result<Vec<TrajectorySample>, SimError> {
        self.trajectory.generate(frame_rate)
    }

    pub fn pose(&self, s: &TrajectorySample) -> Pose {
        Pose::from_attitude(&self.terrain, s.position, &s.attitude)
    }

    pub fn render(&self, s: &TrajectorySample, exec: Execution) -> GrayImage {
        render_frame_with(
            &self.terrain,
            &self.pose(s),
            &self.spec.sun,
            &self.camera,
            &self.spec.render,
            exec,
        )
    }
}
