//! One-factor sensitivity sweeps.

use crate::config::ScenarioConfig;
use crate::pipeline::run_pipeline_with;
use crate::report::{export_report, Aggregates, RunReport, AGGREGATE_COLUMNS};
use crate::HarnessError;
use ofnav_core::Execution;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Resolution,
    FrameRate,
    CameraSigma,
    /// Sets both the attitude and the angular-rate sigma.
    StateSigma,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Resolution => "resolution",
            SweepAxis::FrameRate => "frame_rate",
            SweepAxis::CameraSigma => "camera_sigma",
            SweepAxis::StateSigma => "state_sigma",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, HarnessError> {
        let mut c = base.clone();
        match self {
            SweepAxis::Resolution => {
                if !(value > 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(HarnessError::Config(format!(
                        "resolution must be a positive integer, got {value}"
                    )));
                }
                c.resolution = value as u32;
            }
            SweepAxis::FrameRate => c.frame_rate = value,
            SweepAxis::CameraSigma => c.noise.camera_sigma = value,
            SweepAxis::StateSigma => {
                c.noise.attitude_sigma = value;
                c.noise.rate_sigma = value;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SweepConfig {
    /// One configuration per value; everything else, seeds included, is
    /// shared with the base.
    pub fn points(&self) -> Result<Vec<ScenarioConfig>, HarnessError> {
        if self.values.is_empty() {
            return Err(HarnessError::Config(
                "sweep needs at least one value".into(),
            ));
        }
        self.values
            .iter()
            .map(|&v| self.axis.apply(&self.base, v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub report: RunReport,
}

/// Runs every sweep point; points run concurrently under
/// [`Execution::Parallel`] and come back in value order.
pub fn run_sweep(sw: &SweepConfig, exec: Execution) -> Result<Vec<SweepPoint>, HarnessError> {
    let cfgs = sw.points()?;
    exec.map_indexed(cfgs.len(), |i| run_pipeline_with(&cfgs[i], exec))
        .into_iter()
        .zip(&sw.values)
        .map(|(r, &value)| r.map(|report| SweepPoint { value, report }))
        .collect()
}

/// Writes one report directory per point plus `sweep.csv` with the axis
/// value followed by the aggregate columns.
pub fn export_sweep(
    axis: SweepAxis,
    points: &[SweepPoint],
    dir: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for p in points {
        export_report(&p.report, dir.join(format!("{}_{}", axis.name(), p.value)))?;
    }
    let path = dir.join("sweep.csv");
    let f = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
    let mut header = vec![axis.name()];
    header.extend(AGGREGATE_COLUMNS);
    w.write_record(&header)?;
    for p in points {
        let Aggregates {
            mean_abs_error,
            rel_mean,
            rel_max,
            rel_min,
            rel_std,
            rel_max_all,
            n_frames,
            n_excluded,
            n_failed,
        } = p.report.aggregates;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            p.value.to_string(),
            opt(mean_abs_error),
            opt(rel_mean),
            opt(rel_max),
            opt(rel_min),
            opt(rel_std),
            opt(rel_max_all),
            n_frames.to_string(),
            n_excluded.to_string(),
            n_failed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_touch_one_field() {
        let base = ScenarioConfig::default();
        let c = SweepAxis::StateSigma.apply(&base, 1e-3).unwrap();
        assert_eq!((c.noise.attitude_sigma, c.noise.rate_sigma), (1e-3, 1e-3));
        assert_eq!(c.noise.camera_sigma, base.noise.camera_sigma);
        assert_eq!(
            SweepAxis::Resolution
                .apply(&base, 512.0)
                .unwrap()
                .resolution,
            512
        );
        assert!(SweepAxis::Resolution.apply(&base, 512.5).is_err());
        assert!(SweepAxis::Resolution.apply(&base, 300.0).is_err());
        assert!(SweepAxis::FrameRate.apply(&base, -1.0).is_err());
        let sw = SweepConfig {
            base,
            axis: SweepAxis::CameraSigma,
            values: vec![],
        };
        assert!(sw.points().is_err());
    }
}
