//! Frame-pair processing: flow, depth model, inversion and scoring.

use crate::config::{DepthChoice, OracleDepth, ScenarioConfig};
use crate::report::{FrameRecord, FrameStatus, RunReport};
use crate::HarnessError;
use ofnav_core::{
    attitude_to_plane_normal, estimate_flow_with, invert_linear, invert_slope, CameraIntrinsics,
    CameraVelocity, DepthError, DepthMap, EgomotionEstimate, Execution, FlowObservation, GrayImage,
    InversionError, LinearOptions, LkParams, PixelPoint, PlanarFixedModel, SlopeInit, SlopeOptions,
    SphericalModel,
};
use ofnav_sim::noise::range_factor;
use ofnav_sim::{
    add_camera_noise_with, add_state_noise, camera_velocity, ground_truth_flow, interpolate,
    load_telemetry, rangefinder_reading, save_telemetry, NoiseConfig, Pose, RaycastDepth,
    Simulation, TelemetryRow, Terrain, Trajectory, TrajectorySample, MOON_RADIUS,
};
use std::borrow::Cow;
use std::path::{Path, PathBuf};

/// Frames with their clean telemetry.
pub trait FrameSource {
    fn rows(&self) -> &[TelemetryRow];
    fn image(&self, index: usize) -> Result<Cow<'_, GrayImage>, HarnessError>;

    fn len(&self) -> usize {
        self.rows().len()
    }

    fn is_empty(&self) -> bool {
        self.rows().is_empty()
    }
}

/// Clean telemetry rows for trajectory samples. The rangefinder column is
/// NaN where the boresight misses the terrain.
pub fn telemetry_rows(sim: &Simulation, samples: &[TrajectorySample]) -> Vec<TelemetryRow> {
    let clean = NoiseConfig::default();
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rho =
                rangefinder_reading(&sim.terrain, &sim.pose(s), &sim.camera, &clean, i as u64)
                    .unwrap_or(f64::NAN);
            TelemetryRow::new(s, rho)
        })
        .collect()
}

/// Frames rendered on demand.
pub struct SimulatedFrames<'a> {
    sim: &'a Simulation,
    samples: Vec<TrajectorySample>,
    rows: Vec<TelemetryRow>,
    exec: Execution,
}

impl<'a> SimulatedFrames<'a> {
    pub fn new(
        sim: &'a Simulation,
        frame_rate: f64,
        exec: Execution,
    ) -> Result<Self, HarnessError> {
        let samples = sim.samples(frame_rate)?;
        let rows = telemetry_rows(sim, &samples);
        Ok(Self {
            sim,
            samples,
            rows,
            exec,
        })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }
}

impl FrameSource for SimulatedFrames<'_> {
    fn rows(&self) -> &[TelemetryRow] {
        &self.rows
    }

    fn image(&self, index: usize) -> Result<Cow<'_, GrayImage>, HarnessError> {
        Ok(Cow::Owned(self.sim.render(&self.samples[index], self.exec)))
    }
}

/// Frames held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub rows: Vec<TelemetryRow>,
    pub images: Vec<GrayImage>,
}

fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:05}.pgm"))
}

pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const CONFIG_FILE: &str = "config.toml";

impl FrameSequence {
    /// Renders every frame of `src`.
    pub fn render(src: &SimulatedFrames<'_>) -> Self {
        let images = src
            .samples
            .iter()
            .map(|s| src.sim.render(s, src.exec))
            .collect();
        Self {
            rows: src.rows.clone(),
            images,
        }
    }

    /// Writes `frame_NNNNN.pgm` files and `telemetry.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        for (i, img) in self.images.iter().enumerate() {
            let p = frame_path(dir, i);
            img.save_pgm(&p)
                .map_err(|e| HarnessError::Invalid(format!("{}: {e}", p.display())))?;
        }
        save_telemetry(dir.join(TELEMETRY_FILE), &self.rows)?;
        Ok(())
    }
}

impl FrameSource for FrameSequence {
    fn rows(&self) -> &[TelemetryRow] {
        &self.rows
    }

    fn image(&self, index: usize) -> Result<Cow<'_, GrayImage>, HarnessError> {
        Ok(Cow::Borrowed(&self.images[index]))
    }
}

/// Frames stored as `frame_NNNNN.pgm` next to `telemetry.csv`, loaded lazily.
#[derive(Debug, Clone)]
pub struct DirectoryFrames {
    dir: PathBuf,
    rows: Vec<TelemetryRow>,
}

impl DirectoryFrames {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let dir = dir.as_ref().to_path_buf();
        let rows = load_telemetry(dir.join(TELEMETRY_FILE))?;
        Ok(Self { dir, rows })
    }

    pub fn load(self) -> Result<FrameSequence, HarnessError> {
        let images = (0..self.rows.len())
            .map(|i| self.image(i).map(Cow::into_owned))
            .collect::<Result<_, _>>()?;
        Ok(FrameSequence {
            rows: self.rows,
            images,
        })
    }
}

impl FrameSource for DirectoryFrames {
    fn rows(&self) -> &[TelemetryRow] {
        &self.rows
    }

    fn image(&self, index: usize) -> Result<Cow<'_, GrayImage>, HarnessError> {
        let p = frame_path(&self.dir, index);
        GrayImage::load_pgm(&p)
            .map(Cow::Owned)
            .map_err(|e| HarnessError::Invalid(format!("{}: {e}", p.display())))
    }
}

/// Every `step`-th index of `0..n`, used to lower the effective frame rate.
pub fn subsample(n: usize, step: usize) -> Vec<usize> {
    (0..n).step_by(step.max(1)).collect()
}

/// One noisy frame ready for pairing.
struct Prepared<'a> {
    t: f64,
    image: Cow<'a, GrayImage>,
    clean: TrajectorySample,
    measured: TrajectorySample,
    rho: f64,
}

/// Depth model actually used for one frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Resolved {
    Planar,
    Slope,
    Sphere,
}

/// Everything a run needs besides the frames.
pub struct Estimator<'a> {
    pub terrain: &'a Terrain,
    /// Exact truth source; telemetry is interpolated when absent.
    pub trajectory: Option<&'a Trajectory>,
    pub camera: CameraIntrinsics,
    pub lk: LkParams,
    pub depth: DepthChoice,
    pub switch_altitude: f64,
    pub noise: NoiseConfig,
    pub linear: LinearOptions,
    pub slope: SlopeOptions,
    pub exec: Execution,
}

fn inversion_status(e: &InversionError) -> FrameStatus {
    match e {
        InversionError::InsufficientFeatures { .. } => FrameStatus::NoFeatures,
        InversionError::RankDeficient { .. } => FrameStatus::RankDeficient,
        InversionError::NonConvergence { .. } => FrameStatus::NonConvergence,
        InversionError::InvalidInput(_) | InversionError::ZeroTruthVelocity => {
            FrameStatus::InvalidInput
        }
    }
}

fn depth_status(e: &DepthError) -> FrameStatus {
    match e {
        DepthError::NoIntersection => FrameStatus::NoIntersection,
        _ => FrameStatus::DepthModel,
    }
}

impl<'a> Estimator<'a> {
    pub fn new(
        cfg: &ScenarioConfig,
        terrain: &'a Terrain,
        trajectory: Option<&'a Trajectory>,
    ) -> Result<Self, HarnessError> {
        Ok(Self {
            terrain,
            trajectory,
            camera: cfg.camera()?,
            lk: cfg.lk_params(),
            depth: cfg.depth_model,
            switch_altitude: cfg.switch_altitude,
            noise: cfg.noise,
            linear: LinearOptions::default(),
            slope: SlopeOptions::default(),
            exec: Execution::default(),
        })
    }

    pub fn for_simulation(cfg: &ScenarioConfig, sim: &'a Simulation) -> Result<Self, HarnessError> {
        let mut e = Self::new(cfg, &sim.terrain, Some(&sim.trajectory))?;
        e.camera = sim.camera;
        Ok(e)
    }

    fn radius(&self) -> f64 {
        self.terrain.radius().unwrap_or(MOON_RADIUS)
    }

    fn resolve(&self, rho: f64) -> Resolved {
        match self.depth {
            DepthChoice::Planar => Resolved::Planar,
            DepthChoice::Slope => Resolved::Slope,
            DepthChoice::Sphere => Resolved::Sphere,
            DepthChoice::Auto if self.terrain.is_sphere() && rho > self.switch_altitude => {
                Resolved::Sphere
            }
            DepthChoice::Auto => Resolved::Planar,
        }
    }

    /// Camera-frame velocity of `s`.
    pub fn truth_velocity(&self, s: &TrajectorySample) -> CameraVelocity {
        camera_velocity(
            &Pose::from_attitude(self.terrain, s.position, &s.attitude),
            &s.velocity,
        )
    }

    fn truth_at(&self, a: &TrajectorySample, b: &TrajectorySample, t: f64) -> CameraVelocity {
        let s = match self.trajectory {
            Some(tr) => tr.sample(t),
            None => interpolate(a, b, t),
        };
        self.truth_velocity(&s)
    }

    fn prepare<'s>(
        &self,
        src: &'s dyn FrameSource,
        index: usize,
    ) -> Result<Prepared<'s>, HarnessError> {
        let row = src.rows()[index];
        let clean = row.sample();
        let mut image = src.image(index)?;
        if self.noise.camera_sigma > 0.0 {
            image = Cow::Owned(add_camera_noise_with(
                &image,
                &self.noise,
                index as u64,
                self.exec,
            ));
        }
        Ok(Prepared {
            t: row.t,
            image,
            clean,
            measured: add_state_noise(&clean, &self.noise, index as u64),
            rho: row.rho * range_factor(&self.noise, index as u64),
        })
    }

    /// Velocity from one set of flow observations and midpoint telemetry.
    /// `warm` seeds the slope solver.
    pub fn invert(
        &self,
        obs: &[FlowObservation],
        m: &TrajectorySample,
        rho: f64,
        warm: Option<&EgomotionEstimate>,
    ) -> Result<EgomotionEstimate, (FrameStatus, Option<EgomotionEstimate>)> {
        let linear = |model: &dyn DepthMap| {
            invert_linear(obs, &m.rates, model, &self.camera, &self.linear)
                .map_err(|e| (inversion_status(&e), None))
        };
        match self.resolve(rho) {
            Resolved::Planar => {
                let model = PlanarFixedModel::from_attitude(&m.attitude, rho)
                    .map_err(|e| (depth_status(&e), None))?;
                linear(&model)
            }
            Resolved::Sphere => {
                let model = SphericalModel::from_attitude(&m.attitude, rho, self.radius())
                    .map_err(|e| (depth_status(&e), None))?;
                linear(&model)
            }
            Resolved::Slope => {
                let init = match warm {
                    Some(e) if e.slope.is_some() => SlopeInit::from_estimate(e),
                    _ => {
                        let n = attitude_to_plane_normal(&m.attitude);
                        let velocity = PlanarFixedModel::from_attitude(&m.attitude, rho)
                            .ok()
                            .and_then(|model| {
                                invert_linear(obs, &m.rates, &model, &self.camera, &self.linear)
                                    .ok()
                            })
                            .map(|e| e.velocity)
                            .unwrap_or(CameraVelocity::new(0.0, 0.0, 0.0));
                        SlopeInit {
                            velocity,
                            alpha: n.alpha,
                            beta: n.beta,
                        }
                    }
                };
                invert_slope(obs, &m.rates, rho, &self.camera, &init, &self.slope).map_err(|e| {
                    match e {
                        InversionError::NonConvergence { estimate } => {
                            (FrameStatus::NonConvergence, Some(*estimate))
                        }
                        e => (inversion_status(&e), None),
                    }
                })
            }
        }
    }

    fn estimate_pair(
        &self,
        a: &Prepared,
        b: &Prepared,
        warm: Option<&EgomotionEstimate>,
    ) -> (FrameRecord, Option<EgomotionEstimate>) {
        let t = 0.5 * (a.t + b.t);
        let truth = self.truth_at(&a.clean, &b.clean, t);
        let flow = match estimate_flow_with(
            &a.image,
            &b.image,
            b.t - a.t,
            &self.lk,
            &self.camera,
            self.exec,
        ) {
            Ok(f) => f,
            Err(_) => {
                return (
                    FrameRecord::failed(t, truth, 0, FrameStatus::FlowFailed),
                    None,
                )
            }
        };
        let n = flow.observations.len();
        let m = interpolate(&a.measured, &b.measured, t);
        let rho = 0.5 * (a.rho + b.rho);
        let (est, status) = match self.invert(&flow.observations, &m, rho, warm) {
            Ok(e) => (e, FrameStatus::Ok),
            Err((status, Some(e))) => (e, status),
            Err((status, None)) => return (FrameRecord::failed(t, truth, n, status), None),
        };
        let rec = FrameRecord {
            t,
            estimate: Some(est.velocity),
            truth,
            n_features: est.n_features,
            residual_rms: Some(est.residual_rms),
            condition_ok: Some(est.condition_ok),
            slope: est.slope,
            status,
        };
        (rec, (status == FrameStatus::Ok).then_some(est))
    }

    /// Processes consecutive pairs of the selected frames in order. Failures
    /// are recorded per pair; only I/O problems abort the run.
    pub fn run(
        &self,
        label: &str,
        src: &dyn FrameSource,
        indices: &[usize],
    ) -> Result<RunReport, HarnessError> {
        let mut frames = Vec::with_capacity(indices.len().saturating_sub(1));
        let mut prev: Option<Prepared> = None;
        let mut warm: Option<EgomotionEstimate> = None;
        for &i in indices {
            if i >= src.len() {
                return Err(HarnessError::Invalid(format!(
                    "frame index {i} out of range ({} frames)",
                    src.len()
                )));
            }
            let cur = self.prepare(src, i)?;
            if let Some(p) = &prev {
                let (rec, est) = self.estimate_pair(p, &cur, warm.as_ref());
                if est.is_some() {
                    warm = est;
                }
                frames.push(rec);
            }
            prev = Some(cur);
        }
        Ok(RunReport::new(label, frames))
    }
}

fn run_label(cfg: &ScenarioConfig) -> String {
    format!(
        "{} seed {} | {} px | {} Hz | depth {:?}",
        cfg.scenario, cfg.seed, cfg.resolution, cfg.frame_rate, cfg.depth_model
    )
}

/// Renders the configured scenario and processes every frame pair.
pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<RunReport, HarnessError> {
    run_pipeline_with(cfg, Execution::default())
}

pub fn run_pipeline_with(cfg: &ScenarioConfig, exec: Execution) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let sim = Simulation::new(cfg.scenario_spec(), cfg.camera()?, cfg.seed)?;
    let src = SimulatedFrames::new(&sim, cfg.frame_rate, exec)?;
    let mut est = Estimator::for_simulation(cfg, &sim)?;
    est.exec = exec;
    est.run(&run_label(cfg), &src, &(0..src.len()).collect::<Vec<_>>())
}

/// Writes the rendered frames, telemetry and the configuration into `dir`.
pub fn simulate_to_dir(
    cfg: &ScenarioConfig,
    dir: impl AsRef<Path>,
    exec: Execution,
) -> Result<usize, HarnessError> {
    cfg.validate()?;
    let dir = dir.as_ref();
    let sim = Simulation::new(cfg.scenario_spec(), cfg.camera()?, cfg.seed)?;
    let src = SimulatedFrames::new(&sim, cfg.frame_rate, exec)?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (i, s) in src.samples().iter().enumerate() {
        let p = frame_path(dir, i);
        sim.render(s, exec)
            .save_pgm(&p)
            .map_err(|e| HarnessError::Invalid(format!("{}: {e}", p.display())))?;
    }
    save_telemetry(dir.join(TELEMETRY_FILE), src.rows())?;
    let cfg_path = dir.join(CONFIG_FILE);
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| HarnessError::io(&cfg_path, e))?;
    Ok(src.len())
}

/// Processes a directory written by [`simulate_to_dir`]. Truth comes from the
/// telemetry, interpolated to each pair midpoint.
pub fn estimate_dir(
    cfg: &ScenarioConfig,
    dir: impl AsRef<Path>,
    exec: Execution,
) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let dir = dir.as_ref();
    let src = DirectoryFrames::open(dir)?;
    let terrain =
        Terrain::new(cfg.scenario_spec().terrain, cfg.seed).map_err(HarnessError::Config)?;
    let mut est = Estimator::new(cfg, &terrain, None)?;
    est.exec = exec;
    let label = format!("{} | depth {:?}", dir.display(), cfg.depth_model);
    est.run(&label, &src, &(0..src.len()).collect::<Vec<_>>())
}

/// Pixel grid used for injected flow: `n x n` cell centres over the frame.
pub fn oracle_grid(k: &CameraIntrinsics, n: usize) -> Vec<PixelPoint> {
    let (w, h) = (k.width as f64, k.height as f64);
    (0..n * n)
        .map(|i| {
            let (c, r) = ((i % n) as f64, (i / n) as f64);
            k.raster_to_pixel((c + 0.5) / n as f64 * w, (r + 0.5) / n as f64 * h)
        })
        .collect()
}

pub const ORACLE_GRID: usize = 16;

/// Replaces rendering and tracking with exact motion-field flow on a pixel
/// grid, evaluated at each pair midpoint with clean telemetry. With
/// [`OracleDepth::Exact`] the inversion sees the true terrain depth, so the
/// remaining error is arithmetic.
pub fn run_oracle(
    cfg: &ScenarioConfig,
    depth: OracleDepth,
    exec: Execution,
) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let sim = Simulation::new(cfg.scenario_spec(), cfg.camera()?, cfg.seed)?;
    let samples = sim.samples(cfg.frame_rate)?;
    let est = Estimator::for_simulation(cfg, &sim)?;
    let grid = oracle_grid(&sim.camera, ORACLE_GRID);
    let k = sim.camera;
    let clean = NoiseConfig::default();
    let n_pairs = samples.len().saturating_sub(1);
    let frames = exec.map_indexed(n_pairs, |i| {
        let t = 0.5 * (samples[i].t + samples[i + 1].t);
        let s = sim.trajectory.sample(t);
        let pose = sim.pose(&s);
        let truth = camera_velocity(&pose, &s.velocity);
        let obs: Vec<FlowObservation> =
            ground_truth_flow(&sim.terrain, &pose, &truth, &s.rates, &grid, &k)
                .into_iter()
                .filter_map(Result::ok)
                .collect();
        let n = obs.len();
        let result = match depth {
            OracleDepth::Exact => {
                let model = RaycastDepth {
                    terrain: &sim.terrain,
                    pose,
                };
                invert_linear(&obs, &s.rates, &model, &k, &est.linear)
                    .map_err(|e| (inversion_status(&e), None))
            }
            OracleDepth::Model => match rangefinder_reading(&sim.terrain, &pose, &k, &clean, 0) {
                Ok(rho) => est.invert(&obs, &s, rho, None),
                Err(_) => Err((FrameStatus::NoIntersection, None)),
            },
        };
        match result {
            Ok(e) => FrameRecord {
                t,
                estimate: Some(e.velocity),
                truth,
                n_features: e.n_features,
                residual_rms: Some(e.residual_rms),
                condition_ok: Some(e.condition_ok),
                slope: e.slope,
                status: FrameStatus::Ok,
            },
            Err((status, Some(e))) => FrameRecord {
                estimate: Some(e.velocity),
                residual_rms: Some(e.residual_rms),
                condition_ok: Some(e.condition_ok),
                slope: e.slope,
                ..FrameRecord::failed(t, truth, e.n_features, status)
            },
            Err((status, None)) => FrameRecord::failed(t, truth, n, status),
        }
    });
    Ok(RunReport::new(
        format!("oracle {:?} | {}", depth, run_label(cfg)),
        frames,
    ))
}
