//! Per-frame records, summary statistics and report files.

use crate::HarnessError;
use ofnav_core::{absolute_velocity_error, relative_velocity_error, CameraVelocity};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Frames whose true speed is below this (m/s) are left out of the
/// relative-error statistics.
pub const MIN_TRUTH_SPEED: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    Ok,
    /// Solver stopped at its iteration limit; the estimate is still reported.
    NonConvergence,
    FlowFailed,
    NoFeatures,
    RankDeficient,
    DepthModel,
    NoIntersection,
    InvalidInput,
}

impl FrameStatus {
    pub fn name(self) -> &'static str {
        match self {
            FrameStatus::Ok => "ok",
            FrameStatus::NonConvergence => "nonconvergence",
            FrameStatus::FlowFailed => "flow_failed",
            FrameStatus::NoFeatures => "no_features",
            FrameStatus::RankDeficient => "rank_deficient",
            FrameStatus::DepthModel => "depth_model",
            FrameStatus::NoIntersection => "no_intersection",
            FrameStatus::InvalidInput => "invalid_input",
        }
    }
}

/// Outcome of one frame pair, stamped at the pair midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub t: f64,
    pub estimate: Option<CameraVelocity>,
    pub truth: CameraVelocity,
    pub n_features: usize,
    pub residual_rms: Option<f64>,
    pub condition_ok: Option<bool>,
    pub slope: Option<(f64, f64)>,
    pub status: FrameStatus,
}

impl FrameRecord {
    pub fn failed(t: f64, truth: CameraVelocity, n_features: usize, status: FrameStatus) -> Self {
        Self {
            t,
            estimate: None,
            truth,
            n_features,
            residual_rms: None,
            condition_ok: None,
            slope: None,
            status,
        }
    }

    pub fn rel_error(&self) -> Option<f64> {
        relative_velocity_error(self.estimate.as_ref()?, &self.truth).ok()
    }

    pub fn abs_error(&self) -> Option<f64> {
        Some(absolute_velocity_error(
            self.estimate.as_ref()?,
            &self.truth,
        ))
    }
}

/// Summary statistics. Relative-error figures cover frames with an estimate
/// and true speed of at least [`MIN_TRUTH_SPEED`]; `rel_max_all` drops that
/// cut. `mean_abs_error` covers every frame with an estimate. The standard
/// deviation is the population one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_abs_error: Option<f64>,
    pub rel_mean: Option<f64>,
    pub rel_max: Option<f64>,
    pub rel_min: Option<f64>,
    pub rel_std: Option<f64>,
    pub rel_max_all: Option<f64>,
    pub n_frames: usize,
    pub n_excluded: usize,
    pub n_failed: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn fold_opt(xs: &[f64], f: fn(f64, f64) -> f64) -> Option<f64> {
    xs.iter().copied().reduce(f)
}

impl Aggregates {
    pub fn from_frames(frames: &[FrameRecord]) -> Self {
        let mut rel = Vec::new();
        let mut rel_all = Vec::new();
        let mut abs = Vec::new();
        let mut n_excluded = 0;
        let mut n_failed = 0;
        for f in frames {
            let Some(a) = f.abs_error() else {
                n_failed += 1;
                continue;
            };
            abs.push(a);
            if let Some(r) = f.rel_error() {
                rel_all.push(r);
            }
            match f.rel_error() {
                Some(r) if f.truth.norm() >= MIN_TRUTH_SPEED => rel.push(r),
                _ => n_excluded += 1,
            }
        }
        let rel_mean = mean(&rel);
        let rel_std = rel_mean.map(|m| {
            (rel.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / rel.len() as f64).sqrt()
        });
        Self {
            mean_abs_error: mean(&abs),
            rel_mean,
            rel_max: fold_opt(&rel, f64::max),
            rel_min: fold_opt(&rel, f64::min),
            rel_std,
            rel_max_all: fold_opt(&rel_all, f64::max),
            n_frames: frames.len(),
            n_excluded,
            n_failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub label: String,
    pub frames: Vec<FrameRecord>,
    pub aggregates: Aggregates,
}

impl RunReport {
    pub fn new(label: impl Into<String>, frames: Vec<FrameRecord>) -> Self {
        let aggregates = Aggregates::from_frames(&frames);
        Self {
            label: label.into(),
            frames,
            aggregates,
        }
    }

    /// Mean absolute error of one velocity component over frames with an
    /// estimate and true speed of at least [`MIN_TRUTH_SPEED`].
    pub fn mean_component_error(&self, axis: usize) -> Option<f64> {
        let errs: Vec<f64> = self
            .frames
            .iter()
            .filter(|f| f.truth.norm() >= MIN_TRUTH_SPEED)
            .filter_map(|f| {
                let e = f.estimate?.as_vector() - f.truth.as_vector();
                Some(e[axis].abs())
            })
            .collect();
        mean(&errs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    est_vx: Option<f64>,
    est_vy: Option<f64>,
    est_vz: Option<f64>,
    true_vx: f64,
    true_vy: f64,
    true_vz: f64,
    rel_error: Option<f64>,
    abs_error: Option<f64>,
    n_features: usize,
    residual_rms: Option<f64>,
    condition_ok: Option<bool>,
    alpha: Option<f64>,
    beta: Option<f64>,
    status: FrameStatus,
}

pub const FRAME_COLUMNS: [&str; 15] = [
    "t",
    "est_vx",
    "est_vy",
    "est_vz",
    "true_vx",
    "true_vy",
    "true_vz",
    "rel_error",
    "abs_error",
    "n_features",
    "residual_rms",
    "condition_ok",
    "alpha",
    "beta",
    "status",
];

pub const AGGREGATE_COLUMNS: [&str; 9] = [
    "mean_abs_error",
    "rel_mean",
    "rel_max",
    "rel_min",
    "rel_std",
    "rel_max_all",
    "n_frames",
    "n_excluded",
    "n_failed",
];

impl From<&FrameRecord> for CsvRow {
    fn from(f: &FrameRecord) -> Self {
        Self {
            t: f.t,
            est_vx: f.estimate.map(|v| v.vx),
            est_vy: f.estimate.map(|v| v.vy),
            est_vz: f.estimate.map(|v| v.vz),
            true_vx: f.truth.vx,
            true_vy: f.truth.vy,
            true_vz: f.truth.vz,
            rel_error: f.rel_error(),
            abs_error: f.abs_error(),
            n_features: f.n_features,
            residual_rms: f.residual_rms,
            condition_ok: f.condition_ok,
            alpha: f.slope.map(|s| s.0),
            beta: f.slope.map(|s| s.1),
            status: f.status,
        }
    }
}

impl From<CsvRow> for FrameRecord {
    fn from(r: CsvRow) -> Self {
        let estimate = match (r.est_vx, r.est_vy, r.est_vz) {
            (Some(x), Some(y), Some(z)) => Some(CameraVelocity::new(x, y, z)),
            _ => None,
        };
        Self {
            t: r.t,
            estimate,
            truth: CameraVelocity::new(r.true_vx, r.true_vy, r.true_vz),
            n_features: r.n_features,
            residual_rms: r.residual_rms,
            condition_ok: r.condition_ok,
            slope: r.alpha.zip(r.beta),
            status: r.status,
        }
    }
}

pub fn write_frames_csv<W: Write>(w: W, frames: &[FrameRecord]) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(FRAME_COLUMNS)?;
    for f in frames {
        out.serialize(CsvRow::from(f))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_frames_csv<R: Read>(r: R) -> Result<Vec<FrameRecord>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr.deserialize::<CsvRow>().collect::<Result<Vec<_>, _>>()?;
    Ok(rows.into_iter().map(FrameRecord::from).collect())
}

pub fn write_aggregate_csv<W: Write>(w: W, a: &Aggregates) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(AGGREGATE_COLUMNS)?;
    out.serialize(a)?;
    out.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: Read>(r: R) -> Result<Aggregates, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .next()
        .ok_or_else(|| HarnessError::Invalid("aggregate CSV has no data row".into()))?
        .map_err(HarnessError::from)
}

const SVG_W: f64 = 900.0;
const PANEL_H: f64 = 170.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 30.0;

/// Label, stroke colour and points (gaps as `None`).
type Series<'a> = (&'a str, &'a str, Vec<Option<(f64, f64)>>);

struct Panel<'a> {
    title: &'a str,
    unit: &'a str,
    series: Vec<Series<'a>>,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range_of(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn draw_panel(svg: &mut String, p: &Panel, top: f64, t_range: (f64, f64)) {
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let (t0, t1) = t_range;
    let (y0, y1) = range_of(
        p.series
            .iter()
            .flat_map(|s| s.2.iter().flatten().map(|q| q.1)),
    );
    let sx = |t: f64| MARGIN_L + (t - t0) / (t1 - t0) * plot_w;
    let sy = |y: f64| top + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;

    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN_L}" y="{:.1}" font-size="13">{} [{}]</text>"#,
        top - 6.0,
        xml_escape(p.title),
        xml_escape(p.unit)
    );
    for i in 0..=4 {
        let v = y0 + (y1 - y0) * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.1}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"##,
            MARGIN_L + plot_w,
            MARGIN_L - 4.0,
            y + 3.0,
            fmt_tick(v)
        );
    }
    for (li, (name, color, pts)) in p.series.iter().enumerate() {
        for run in pts.split(|q| q.is_none_or(|(t, y)| !(t.is_finite() && y.is_finite()))) {
            if run.is_empty() {
                continue;
            }
            let coords: Vec<String> = run
                .iter()
                .flatten()
                .map(|&(t, y)| format!("{:.2},{:.2}", sx(t), sy(y)))
                .collect();
            if coords.len() == 1 {
                let (x, y) = coords[0].split_once(',').unwrap();
                let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="1.5" fill="{color}"/>"#);
            } else {
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                    coords.join(" ")
                );
            }
        }
        let lx = MARGIN_L + plot_w - 150.0 + 75.0 * li as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            top + 12.0,
            lx + 16.0,
            top + 12.0,
            lx + 20.0,
            top + 16.0,
            xml_escape(name)
        );
    }
}

/// Estimated and true camera-frame velocity components against time, with
/// the relative error in a fourth panel.
pub fn render_svg(r: &RunReport) -> String {
    let ts = r.frames.iter().map(|f| f.t);
    let t_range = range_of(ts);
    let comp = |i: usize| -> [Vec<Option<(f64, f64)>>; 2] {
        [
            r.frames
                .iter()
                .map(|f| f.estimate.map(|e| (f.t, e.as_vector()[i])))
                .collect(),
            r.frames
                .iter()
                .map(|f| Some((f.t, f.truth.as_vector()[i])))
                .collect(),
        ]
    };
    let mut panels = Vec::new();
    for (i, title) in ["v_x", "v_y", "v_z"].into_iter().enumerate() {
        let [est, truth] = comp(i);
        panels.push(Panel {
            title,
            unit: "m/s",
            series: vec![("true", "#1f77b4", truth), ("estimate", "#d62728", est)],
        });
    }
    let rel: Vec<Option<(f64, f64)>> = r
        .frames
        .iter()
        .map(|f| {
            f.rel_error()
                .filter(|_| f.truth.norm() >= MIN_TRUTH_SPEED)
                .map(|e| (f.t, e))
        })
        .collect();
    panels.push(Panel {
        title: "relative error",
        unit: "-",
        series: vec![("error", "#2ca02c", rel)],
    });

    let height = MARGIN_T + panels.len() as f64 * (PANEL_H + GAP) + 20.0;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{height}" viewBox="0 0 {SVG_W} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN_L}" y="20" font-size="15">{}</text>"#,
        xml_escape(&r.label)
    );
    for (i, p) in panels.iter().enumerate() {
        draw_panel(
            &mut svg,
            p,
            MARGIN_T + 10.0 + i as f64 * (PANEL_H + GAP),
            t_range,
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">t [s]</text>"#,
        MARGIN_L + (SVG_W - MARGIN_L - MARGIN_R) / 2.0,
        height - 6.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Paths written by [`export_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub frames: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Writes `frames.csv`, `summary.csv` and `velocity.svg` into `dir`,
/// creating it if needed.
pub fn export_report(r: &RunReport, dir: impl AsRef<Path>) -> Result<ReportFiles, HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let files = ReportFiles {
        frames: dir.join("frames.csv"),
        summary: dir.join("summary.csv"),
        plot: dir.join("velocity.svg"),
    };
    let with_path = |p: &Path, e: HarnessError| match e {
        HarnessError::Csv(c) => HarnessError::Invalid(format!("{}: {c}", p.display())),
        other => other,
    };
    write_frames_csv(create(&files.frames)?, &r.frames).map_err(|e| with_path(&files.frames, e))?;
    write_aggregate_csv(create(&files.summary)?, &r.aggregates)
        .map_err(|e| with_path(&files.summary, e))?;
    std::fs::write(&files.plot, render_svg(r)).map_err(|e| HarnessError::io(&files.plot, e))?;
    Ok(files)
}
