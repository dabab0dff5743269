//! Optical-flow velocimetry for descending spacecraft.
//!
//! The crate turns a pair of monocular frames, a single rangefinder reading and
//! IMU-provided attitude and angular rates into a camera-frame translational
//! velocity estimate:
//!
//! 1. [`flow`] detects Shi-Tomasi corners and tracks them with pyramidal
//!    Lucas-Kanade to obtain a sparse optical flow field.
//! 2. [`depth`] approximates the inverse depth of every tracked pixel with a
//!    planar or spherical surface anchored by the rangefinder.
//! 3. [`motion`] stacks the motion-field equations of all features and solves
//!    them for the velocity in the least-squares sense (linear for fixed
//!    surfaces, nonlinear when the surface slope is estimated as well).
//!
//! [`geometry`] holds the camera model and the attitude constructions shared by
//! the depth models. Data-parallel loops go through [`exec`], which falls back
//! to sequential iteration when the `parallel` feature is disabled.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth;
pub mod exec;
pub mod flow;
pub mod geometry;
pub mod motion;

pub use depth::{
    inverse_depth_at, inverse_depth_grid, planar_inverse_depth, slope_inverse_depth,
    spherical_inverse_depth, DepthError, DepthGrid, DepthMap, DepthModel, InverseDepth,
    PlanarFixedModel, PlanarSlopeModel, SphericalModel,
};
pub use exec::Execution;
pub use flow::{
    build_pyramid, estimate_flow, estimate_flow_with, lk_track, shi_tomasi_detect, FeaturePoint,
    FlowError, FlowEstimate, GrayImage, LkParams, Pyramid, TrackResult, TrackStatus,
};
pub use geometry::{
    attitude_to_plane_normal, attitude_to_sphere_geometry, normalized_to_pixel,
    pixel_to_normalized, rotation_body_to_camera, AngularRates, Attitude, CameraIntrinsics,
    GeometryError, NormalizedPoint, PixelPoint, SphereGeometry, UnitNormal,
};
pub use motion::{
    absolute_velocity_error, interaction_matrices, invert_linear, invert_slope, predict_flow,
    relative_velocity_error, slope_residuals_and_jacobian, CameraVelocity, EgomotionEstimate,
    FlowObservation, FlowVector, InteractionMatrices, InversionError, LinearOptions, SlopeInit,
    SlopeOptions,
};
