use super::pyramid::Pyramid;
use super::shi_tomasi::FeaturePoint;
use super::{FlowError, LkParams};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracked,
    /// The level-0 window left the image at the start or end position.
    OutOfBounds,
    /// The window has too little texture to constrain both directions.
    Degenerate,
    /// The per-level update exceeded half the window.
    Diverged,
    /// The final residual is far above the batch median.
    HighResidual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackResult {
    /// Raster position in the first frame.
    pub start: (f64, f64),
    /// Raster position in the second frame.
    pub end: (f64, f64),
    pub status: TrackStatus,
    /// Mean absolute intensity difference over the final window.
    pub residual: f64,
}

impl TrackResult {
    pub fn is_tracked(&self) -> bool {
        self.status == TrackStatus::Tracked
    }

    pub fn displacement(&self) -> (f64, f64) {
        (self.end.0 - self.start.0, self.end.1 - self.start.1)
    }
}

pub fn lk_track(
    prev: &Pyramid,
    next: &Pyramid,
    features: &[FeaturePoint],
    p: &LkParams,
) -> Result<Vec<TrackResult>, FlowError> {
    lk_track_with(prev, next, features, p, Execution::default())
}

pub fn lk_track_with(
    prev: &Pyramid,
    next: &Pyramid,
    features: &[FeaturePoint],
    p: &LkParams,
    exec: Execution,
) -> Result<Vec<TrackResult>, FlowError> {
    p.validate()?;
    if prev.len() != next.len()
        || prev
            .levels
            .iter()
            .zip(&next.levels)
            .any(|(a, b)| (a.width, a.height) != (b.width, b.height))
    {
        return Err(FlowError::SizeMismatch);
    }
    let levels = prev.len().min(p.pyramid_levels);
    if levels == 0 {
        return Err(FlowError::InvalidParams("empty pyramid".into()));
    }
    let mut tracks = exec.map_indexed(features.len(), |i| {
        let mut ws = Workspace::new(p.window);
        track_one(
            prev,
            next,
            levels,
            (features[i].col, features[i].row),
            p,
            &mut ws,
        )
    });
    reject_high_residuals(&mut tracks, p.max_residual_ratio);
    Ok(tracks)
}

/// Residuals (grey levels) at or below this are never rejected, so exact
/// synthetic matches with a near-zero median keep their tracks.
const RESIDUAL_FLOOR: f64 = 1.0;

/// Marks tracks whose residual exceeds `ratio` times the median residual of
/// the tracked features. Converged-but-wrong matches under strong image
/// deformation show up this way.
fn reject_high_residuals(tracks: &mut [TrackResult], ratio: f64) {
    if !ratio.is_finite() {
        return;
    }
    let mut res: Vec<f64> = tracks
        .iter()
        .filter(|t| t.is_tracked())
        .map(|t| t.residual)
        .collect();
    if res.is_empty() {
        return;
    }
    let mid = res.len() / 2;
    let median = *res.select_nth_unstable_by(mid, f64::total_cmp).1;
    let limit = (ratio * median).max(RESIDUAL_FLOOR);
    for t in tracks.iter_mut().filter(|t| t.is_tracked()) {
        if !(t.residual <= limit) {
            t.status = TrackStatus::HighResidual;
        }
    }
}

struct Workspace {
    n: usize,
    ext: Vec<f64>,
    tmpl: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    warped: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            n,
            ext: vec![0.0; (n + 2) * (n + 2)],
            tmpl: vec![0.0; n * n],
            gx: vec![0.0; n * n],
            gy: vec![0.0; n * n],
            warped: vec![0.0; n * n],
        }
    }
}

fn window_inside(x: f64, y: f64, half: f64, w: usize, h: usize) -> bool {
    x - half - 1.0 >= 0.0
        && y - half - 1.0 >= 0.0
        && x + half + 1.0 <= (w - 1) as f64
        && y + half + 1.0 <= (h - 1) as f64
}

fn track_one(
    prev: &Pyramid,
    next: &Pyramid,
    levels: usize,
    start: (f64, f64),
    p: &LkParams,
    ws: &mut Workspace,
) -> TrackResult {
    let n = ws.n;
    let half = (n as f64 - 1.0) / 2.0;
    let area = (n * n) as f64;
    let l0 = prev.level(0);
    let lost = |status, end| TrackResult {
        start,
        end,
        status,
        residual: f64::NAN,
    };
    if !window_inside(start.0, start.1, half, l0.width, l0.height) {
        return lost(TrackStatus::OutOfBounds, start);
    }

    let mut guess = (0.0f64, 0.0f64);
    let mut residual = f64::NAN;
    for level in (0..levels).rev() {
        let scale = (1u64 << level) as f64;
        let (ux, uy) = (start.0 / scale, start.1 / scale);
        let pi = prev.level(level);
        let ni = next.level(level);

        // Template with a one-pixel apron for central-difference gradients.
        pi.sample_patch(ux - half - 1.0, uy - half - 1.0, n + 2, &mut ws.ext);
        let m = n + 2;
        let (mut mgx, mut mgy) = (0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                let e = (j + 1) * m + i + 1;
                let k = j * n + i;
                ws.tmpl[k] = ws.ext[e];
                ws.gx[k] = 0.5 * (ws.ext[e + 1] - ws.ext[e - 1]);
                ws.gy[k] = 0.5 * (ws.ext[e + m] - ws.ext[e - m]);
                mgx += ws.gx[k];
                mgy += ws.gy[k];
            }
        }
        // Centred gradients make the update blind to a brightness offset
        // between the frames.
        mgx /= area;
        mgy /= area;
        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for k in 0..n * n {
            ws.gx[k] -= mgx;
            ws.gy[k] -= mgy;
            gxx += ws.gx[k] * ws.gx[k];
            gxy += ws.gx[k] * ws.gy[k];
            gyy += ws.gy[k] * ws.gy[k];
        }
        let half_tr = 0.5 * (gxx - gyy);
        let min_eig = (0.5 * (gxx + gyy) - (half_tr * half_tr + gxy * gxy).sqrt()) / area;
        let det = gxx * gyy - gxy * gxy;

        let mut nu = (0.0f64, 0.0f64);
        if min_eig >= p.min_eigen_threshold && det > 0.0 {
            for _ in 0..p.max_iters {
                let (qx, qy) = (ux + guess.0 + nu.0, uy + guess.1 + nu.1);
                ni.sample_patch(qx - half, qy - half, n, &mut ws.warped);
                let (mut bx, mut by) = (0.0, 0.0);
                for k in 0..n * n {
                    let diff = ws.tmpl[k] - ws.warped[k];
                    bx += diff * ws.gx[k];
                    by += diff * ws.gy[k];
                }
                let dx = (gyy * bx - gxy * by) / det;
                let dy = (gxx * by - gxy * bx) / det;
                nu.0 += dx;
                nu.1 += dy;
                if (nu.0 * nu.0 + nu.1 * nu.1).sqrt() > n as f64 / 2.0 {
                    let end = (
                        start.0 + scale * (guess.0 + nu.0),
                        start.1 + scale * (guess.1 + nu.1),
                    );
                    return lost(TrackStatus::Diverged, end);
                }
                if dx * dx + dy * dy < p.epsilon * p.epsilon {
                    break;
                }
            }
        } else if level == 0 {
            return lost(
                TrackStatus::Degenerate,
                (start.0 + guess.0, start.1 + guess.1),
            );
        }

        if level == 0 {
            guess = (guess.0 + nu.0, guess.1 + nu.1);
            ni.sample_patch(ux + guess.0 - half, uy + guess.1 - half, n, &mut ws.warped);
            residual = ws
                .tmpl
                .iter()
                .zip(&ws.warped)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / area;
        } else {
            guess = (2.0 * (guess.0 + nu.0), 2.0 * (guess.1 + nu.1));
        }
    }

    let end = (start.0 + guess.0, start.1 + guess.1);
    if !window_inside(end.0, end.1, half, l0.width, l0.height) {
        return lost(TrackStatus::OutOfBounds, end);
    }
    TrackResult {
        start,
        end,
        status: TrackStatus::Tracked,
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::image::GrayImage;
    use crate::flow::pyramid::build_pyramid;

    fn texture(c: f64, r: f64) -> f64 {
        128.0
            + 50.0 * (0.21 * c + 0.05 * r).sin()
            + 40.0 * (0.13 * r - 0.07 * c).cos()
            + 25.0 * (0.37 * c).sin() * (0.29 * r).cos()
    }

    fn image(w: u32, h: u32, dx: f64, dy: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |c, r| {
            texture(c as f64 - dx, r as f64 - dy)
                .round()
                .clamp(0.0, 255.0) as u8
        })
    }

    fn feat(c: f64, r: f64) -> FeaturePoint {
        FeaturePoint {
            col: c,
            row: r,
            score: 1.0,
        }
    }

    #[test]
    fn identical_frames() {
        let img = image(256, 256, 0.0, 0.0);
        let pyr = build_pyramid(&img, 4).unwrap();
        let res = lk_track(
            &pyr,
            &pyr,
            &[feat(100.0, 120.0), feat(60.0, 200.0)],
            &LkParams::default(),
        )
        .unwrap();
        for r in res {
            assert!(r.is_tracked());
            let (dx, dy) = r.displacement();
            assert!(dx.abs() < 1e-3 && dy.abs() < 1e-3);
        }
    }

    #[test]
    fn integer_shift() {
        let a = image(256, 256, 0.0, 0.0);
        let b = image(256, 256, 7.0, 3.0);
        let (pa, pb) = (build_pyramid(&a, 4).unwrap(), build_pyramid(&b, 4).unwrap());
        let res = lk_track(
            &pa,
            &pb,
            &[feat(100.0, 100.0), feat(150.0, 130.0)],
            &LkParams::default(),
        )
        .unwrap();
        for r in res {
            assert!(r.is_tracked(), "{r:?}");
            let (dx, dy) = r.displacement();
            assert!(
                (dx - 7.0).abs() < 0.05 && (dy - 3.0).abs() < 0.05,
                "{dx} {dy}"
            );
        }
    }

    #[test]
    fn out_of_bounds_and_degenerate() {
        let a = image(256, 256, 0.0, 0.0);
        let pa = build_pyramid(&a, 4).unwrap();
        let res = lk_track(&pa, &pa, &[feat(10.0, 100.0)], &LkParams::default()).unwrap();
        assert_eq!(res[0].status, TrackStatus::OutOfBounds);

        let flat = build_pyramid(&GrayImage::filled(256, 256, 40), 4).unwrap();
        let res = lk_track(&flat, &flat, &[feat(128.0, 128.0)], &LkParams::default()).unwrap();
        assert_eq!(res[0].status, TrackStatus::Degenerate);
    }

    #[test]
    fn pyramid_mismatch() {
        let a = build_pyramid(&image(256, 256, 0.0, 0.0), 4).unwrap();
        let b = build_pyramid(&image(128, 256, 0.0, 0.0), 4).unwrap();
        assert_eq!(
            lk_track(&a, &b, &[], &LkParams::default()),
            Err(FlowError::SizeMismatch)
        );
    }

    #[test]
    fn residual_outliers_are_dropped() {
        let t = |residual| TrackResult {
            start: (0.0, 0.0),
            end: (1.0, 1.0),
            status: TrackStatus::Tracked,
            residual,
        };
        let mut tracks = vec![t(10.0), t(12.0), t(11.0), t(30.0), t(0.5)];
        tracks[4].status = TrackStatus::OutOfBounds;
        reject_high_residuals(&mut tracks, 2.0);
        let st: Vec<_> = tracks.iter().map(|t| t.status).collect();
        assert_eq!(
            st[..4],
            [
                TrackStatus::Tracked,
                TrackStatus::Tracked,
                TrackStatus::Tracked,
                TrackStatus::HighResidual
            ]
        );
        assert_eq!(st[4], TrackStatus::OutOfBounds);

        // Near-exact matches fall under the floor.
        let mut exact = vec![t(0.0), t(0.0), t(0.3)];
        reject_high_residuals(&mut exact, 2.0);
        assert!(exact.iter().all(|t| t.is_tracked()));
        let mut off = vec![t(1.0), t(100.0)];
        reject_high_residuals(&mut off, f64::INFINITY);
        assert!(off.iter().all(|t| t.is_tracked()));
    }
}
