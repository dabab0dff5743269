//! Sparse optical flow: Shi-Tomasi corners tracked with coarse-to-fine
//! iterative Lucas-Kanade.

mod image;
mod lk;
mod pyramid;
mod shi_tomasi;

pub use image::{FloatImage, GrayImage};
pub use lk::{lk_track, lk_track_with, TrackResult, TrackStatus};
pub use pyramid::{build_pyramid, build_pyramid_with, Pyramid};
pub use shi_tomasi::{
    detection_margin, min_eigen_map, shi_tomasi_detect, shi_tomasi_detect_with, FeaturePoint,
};

use crate::exec::Execution;
use crate::geometry::CameraIntrinsics;
use crate::motion::{FlowObservation, FlowVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("no trackable features")]
    NoFeatures,
    #[error("{width}x{height} image too small (need at least {required} px per side)")]
    ImageTooSmall {
        width: u32,
        height: u32,
        required: u32,
    },
    #[error("frames or pyramids differ in size")]
    SizeMismatch,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}

/// Detector and tracker settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    pub max_corners: usize,
    /// Fraction of the strongest corner response a corner must reach.
    pub quality_level: f64,
    /// Minimum spacing between corners (px).
    pub min_distance: f64,
    /// Side of the structure-tensor block (px).
    pub block_size: usize,
    /// Side of the square tracking window (px).
    pub window: usize,
    pub pyramid_levels: usize,
    /// Per-level termination threshold on the update norm (px).
    pub epsilon: f64,
    /// Per-level iteration cap.
    pub max_iters: usize,
    /// Features whose window-averaged structure tensor has a smaller minimum
    /// eigenvalue (intensity^2 / px^2) are not refined.
    pub min_eigen_threshold: f64,
    /// Tracks whose final residual exceeds this multiple of the median
    /// residual of the batch are dropped. Infinity disables the check.
    pub max_residual_ratio: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            max_corners: 1000,
            quality_level: 0.1,
            min_distance: 50.0,
            block_size: 10,
            window: 50,
            pyramid_levels: 4,
            epsilon: 0.03,
            max_iters: 10,
            min_eigen_threshold: 1e-4 * 255.0 * 255.0,
            max_residual_ratio: 2.0,
        }
    }
}

impl LkParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidParams(m.into()));
        if self.max_corners == 0 {
            return bad("max_corners must be positive");
        }
        if !(self.quality_level > 0.0 && self.quality_level <= 1.0) {
            return bad("quality_level must lie in (0, 1]");
        }
        if !(self.min_distance >= 0.0 && self.min_distance.is_finite()) {
            return bad("min_distance must be non-negative");
        }
        if self.block_size == 0 || self.window < 2 || self.pyramid_levels == 0 {
            return bad("block_size, window and pyramid_levels must be positive");
        }
        if !(self.epsilon > 0.0) || self.max_iters == 0 {
            return bad("epsilon and max_iters must be positive");
        }
        if !(self.min_eigen_threshold >= 0.0) {
            return bad("min_eigen_threshold must be non-negative");
        }
        if !(self.max_residual_ratio >= 1.0) {
            return bad("max_residual_ratio must be at least 1");
        }
        Ok(())
    }
}

/// Flow observations of one frame pair with bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEstimate {
    pub observations: Vec<FlowObservation>,
    pub n_detected: usize,
    pub n_lost: usize,
}

/// Detects corners in `prev`, tracks them into `next` and returns one
/// observation per surviving feature. Each observation sits at the midpoint of
/// its track, relative to the principal point, with flow
/// `displacement / dt`.
pub fn estimate_flow(
    prev: &GrayImage,
    next: &GrayImage,
    dt: f64,
    p: &LkParams,
    k: &CameraIntrinsics,
) -> Result<Vec<FlowObservation>, FlowError> {
    estimate_flow_with(prev, next, dt, p, k, Execution::default()).map(|e| e.observations)
}

pub fn estimate_flow_with(
    prev: &GrayImage,
    next: &GrayImage,
    dt: f64,
    p: &LkParams,
    k: &CameraIntrinsics,
    exec: Execution,
) -> Result<FlowEstimate, FlowError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FlowError::InvalidParams(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if (prev.width(), prev.height()) != (next.width(), next.height()) {
        return Err(FlowError::SizeMismatch);
    }
    let feats = shi_tomasi_detect_with(prev, p, exec)?;
    let pa = build_pyramid_with(prev, p.pyramid_levels, exec)?;
    let pb = build_pyramid_with(next, p.pyramid_levels, exec)?;
    let tracks = lk_track_with(&pa, &pb, &feats, p, exec)?;
    Ok(flow_from_tracks(&tracks, feats.len(), dt, k))
}

/// Converts tracks to observations (see [`estimate_flow`]).
pub fn flow_from_tracks(
    tracks: &[TrackResult],
    n_detected: usize,
    dt: f64,
    k: &CameraIntrinsics,
) -> FlowEstimate {
    let observations: Vec<_> = tracks
        .iter()
        .filter(|t| t.is_tracked())
        .map(|t| {
            let (dx, dy) = t.displacement();
            let mid = k.raster_to_pixel(0.5 * (t.start.0 + t.end.0), 0.5 * (t.start.1 + t.end.1));
            FlowObservation {
                point: mid,
                flow: FlowVector::new(dx / dt, dy / dt),
            }
        })
        .collect();
    FlowEstimate {
        n_lost: tracks.len() - observations.len(),
        observations,
        n_detected,
    }
}
