//! Desk-scale lunar descent simulator: procedural terrain, ray-cast depth,
//! low-sun rendering, descent trajectories and sensor emulation.
//!
//! Every output is a pure function of its configuration and seed. Random
//! draws come from ChaCha streams keyed by `(seed, stream, index)`, so
//! results are identical for any thread count.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fields;
pub mod noise;
pub mod raycast;
pub mod render;
pub mod scenario;
pub mod sensors;
pub mod telemetry;
pub mod terrain;
pub mod trajectory;

pub use noise::{add_camera_noise, add_camera_noise_with, add_state_noise, NoiseConfig};
pub use raycast::{raycast, raycast_depth, Hit, Pose, RaycastDepth};
pub use render::{render_frame, render_frame_with, RenderOptions, SunConfig};
pub use scenario::{ScenarioKind, ScenarioSpec, Simulation};
pub use sensors::{camera_velocity, ground_truth_flow, rangefinder_reading};
pub use telemetry::{
    load_telemetry, read_telemetry, save_telemetry, write_telemetry, TelemetryRow,
};
pub use terrain::{BaseSurface, Terrain, TerrainSpec, MOON_RADIUS};
pub use trajectory::{
    generate_trajectory, interpolate, Trajectory, TrajectorySample, TrajectorySpec,
};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("ray does not intersect the terrain")]
    NoIntersection,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io {
            path: String::new(),
            source: e,
        }
    }
}
