//! Experiment harness: runs simulated descents through the velocimetry
//! pipeline, sweeps one factor at a time and writes CSV/SVG reports.
//!
//! ```no_run
//! use ofnav_harness::{run_pipeline, export_report, ScenarioConfig};
//! use ofnav_sim::ScenarioKind;
//!
//! let mut cfg = ScenarioConfig::preset(ScenarioKind::Flat);
//! cfg.resolution = 512;
//! let report = run_pipeline(&cfg).unwrap();
//! println!("mean relative error {:?}", report.aggregates.rel_mean);
//! export_report(&report, "out/flat").unwrap();
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use config::{DepthChoice, LkConfig, OracleDepth, ScenarioConfig};
pub use pipeline::{
    estimate_dir, run_oracle, run_pipeline, run_pipeline_with, simulate_to_dir, subsample,
    DirectoryFrames, Estimator, FrameSequence, FrameSource, SimulatedFrames,
};
pub use report::{export_report, Aggregates, FrameRecord, FrameStatus, ReportFiles, RunReport};
pub use sweep::{export_sweep, run_sweep, SweepAxis, SweepConfig, SweepPoint};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] ofnav_sim::SimError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io {
            path: String::new(),
            source: e,
        }
    }
}
