//! Motion field of a rigidly moving pinhole camera and its inversion.
//!
//! For a feature at pixel `(x, y)` (relative to the principal point) with
//! inverse depth `d`, the image velocity is
//!
//! ```text
//! u = d * L_t * v + L_w * w
//! ```
//!
//! with camera-frame translational velocity `v`, angular velocity `w` and the
//! interaction matrices from [`interaction_matrices`]. With `w` and `d` known,
//! every tracked feature adds two linear equations in `v`; [`invert_linear`]
//! solves the stacked system. [`invert_slope`] additionally estimates the tilt
//! of a planar surface, which makes the problem nonlinear.

use crate::depth::{DepthError, DepthMap};
use crate::geometry::{pixel_to_normalized, AngularRates, CameraIntrinsics, PixelPoint};
use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix5, SMatrix, SVector, Vector3};
use thiserror::Error;

/// Image-plane velocity in px/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowVector {
    pub u: f64,
    pub v: f64,
}

impl FlowVector {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// A tracked feature: where it is and how fast it moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowObservation {
    pub point: PixelPoint,
    pub flow: FlowVector,
}

/// Translational velocity in the camera frame (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CameraVelocity {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl CameraVelocity {
    pub const fn new(vx: f64, vy: f64, vz: f64) -> Self {
        Self { vx, vy, vz }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.vz)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgomotionEstimate {
    pub velocity: CameraVelocity,
    /// Estimated `(alpha, beta)` when the surface tilt was a free parameter.
    pub slope: Option<(f64, f64)>,
    /// `||A v - C|| / sqrt(2N)` in px/s.
    pub residual_rms: f64,
    /// Features used in the solve.
    pub n_features: usize,
    /// Features dropped because their ray missed the depth model.
    pub n_dropped: usize,
    pub condition_ok: bool,
    pub condition_number: f64,
    /// Solver iterations (zero for the linear path).
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InversionError {
    #[error("{available} usable features, at least {required} required")]
    InsufficientFeatures { available: usize, required: usize },
    #[error("motion-field system is rank deficient (singular values {singular_values:?})")]
    RankDeficient { singular_values: [f64; 3] },
    #[error("slope solver did not converge after {} iterations (residual {} px/s)", .estimate.iterations, .estimate.residual_rms)]
    NonConvergence { estimate: Box<EgomotionEstimate> },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("relative error undefined for zero true velocity")]
    ZeroTruthVelocity,
}

/// Translational (`lt`) and rotational (`lw`) interaction matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionMatrices {
    pub lt: Matrix2x3<f64>,
    pub lw: Matrix2x3<f64>,
}

pub fn interaction_matrices(p: PixelPoint, k: &CameraIntrinsics) -> InteractionMatrices {
    let (x, y, fx, fy) = (p.x, p.y, k.fx, k.fy);
    InteractionMatrices {
        lt: Matrix2x3::new(-fx, 0.0, x, 0.0, -fy, y),
        lw: Matrix2x3::new(
            x * y / fy,
            -(fx + x * x / fx),
            y,
            fy + y * y / fy,
            -x * y / fx,
            -x,
        ),
    }
}

/// Rotational part of the flow, `L_w * w`, written out.
#[inline]
fn rotational_flow(x: f64, y: f64, w: &AngularRates, k: &CameraIntrinsics) -> (f64, f64) {
    let (fx, fy) = (k.fx, k.fy);
    let u = -fx * w.q + w.r * y + w.p * x * y / fy - w.q * x * x / fx;
    let v = fy * w.p - w.r * x - w.q * x * y / fx + w.p * y * y / fy;
    (u, v)
}

/// Optical flow of a static surface point with inverse depth `d`.
pub fn predict_flow(
    p: PixelPoint,
    d: f64,
    v: &CameraVelocity,
    w: &AngularRates,
    k: &CameraIntrinsics,
) -> FlowVector {
    let (ru, rv) = rotational_flow(p.x, p.y, w, k);
    FlowVector {
        u: (p.x * v.vz - k.fx * v.vx) * d + ru,
        v: (p.y * v.vz - k.fy * v.vy) * d + rv,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    /// Estimates whose system condition number exceeds this are flagged.
    pub condition_threshold: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self {
            condition_threshold: 1e8,
        }
    }
}

/// Least-squares velocity from the stacked motion-field equations of all
/// observations whose rays hit `model`.
pub fn invert_linear<M: DepthMap + ?Sized>(
    obs: &[FlowObservation],
    w: &AngularRates,
    model: &M,
    k: &CameraIntrinsics,
    opts: &LinearOptions,
) -> Result<EgomotionEstimate, InversionError> {
    let mut rows: Vec<(f64, f64, f64, f64, f64)> = Vec::with_capacity(obs.len());
    let mut dropped = 0;
    for o in obs {
        match model.inverse_depth(pixel_to_normalized(o.point, k)) {
            Ok(d) => {
                let (ru, rv) = rotational_flow(o.point.x, o.point.y, w, k);
                rows.push((o.point.x, o.point.y, d.0, o.flow.u - ru, o.flow.v - rv));
            }
            Err(DepthError::InvalidModel(m)) => return Err(InversionError::InvalidInput(m)),
            Err(_) => dropped += 1,
        }
    }
    if rows.len() < 2 {
        return Err(InversionError::InsufficientFeatures {
            available: rows.len(),
            required: 2,
        });
    }

    let n = rows.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 3);
    let mut c = DVector::<f64>::zeros(2 * n);
    for (i, &(x, y, d, cu, cv)) in rows.iter().enumerate() {
        a[(2 * i, 0)] = -k.fx * d;
        a[(2 * i, 2)] = x * d;
        a[(2 * i + 1, 1)] = -k.fy * d;
        a[(2 * i + 1, 2)] = y * d;
        c[2 * i] = cu;
        c[2 * i + 1] = cv;
    }
    if a.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(InversionError::InvalidInput(
            "non-finite observation".into(),
        ));
    }

    // Householder QR reduces the problem to the 3x3 factor R, whose SVD has
    // the singular values of A and gives a rank-revealing solve.
    let qr = a.clone().qr();
    let mut qtc = c.clone();
    qr.q_tr_mul(&mut qtc);
    let r: Matrix3<f64> = qr.r().fixed_view::<3, 3>(0, 0).into_owned();
    let svd = r.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let singular_values = [s[0], s[1], s[2]];
    let tol = smax * (2 * n).max(3) as f64 * f64::EPSILON;
    if !(smax > 0.0) || smin <= tol {
        return Err(InversionError::RankDeficient { singular_values });
    }
    let sol = svd
        .solve(&qtc.fixed_rows::<3>(0).into_owned(), 0.0)
        .map_err(|e| InversionError::InvalidInput(e.to_string()))?;
    let velocity = CameraVelocity::new(sol[0], sol[1], sol[2]);
    let resid = &a * sol - c;
    let condition_number = smax / smin;
    Ok(EgomotionEstimate {
        velocity,
        slope: None,
        residual_rms: resid.norm() / ((2 * n) as f64).sqrt(),
        n_features: n,
        n_dropped: dropped,
        condition_ok: condition_number <= opts.condition_threshold,
        condition_number,
        iterations: 0,
    })
}

/// Starting point for [`invert_slope`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlopeInit {
    pub velocity: CameraVelocity,
    pub alpha: f64,
    pub beta: f64,
}

impl SlopeInit {
    /// Warm start from a previous estimate (zero tilt if it had none).
    pub fn from_estimate(e: &EgomotionEstimate) -> Self {
        let (alpha, beta) = e.slope.unwrap_or((0.0, 0.0));
        Self {
            velocity: e.velocity,
            alpha,
            beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeOptions {
    /// Radius `s` of the admissible tilt disc `alpha^2 + beta^2 <= s^2`.
    /// Zero pins the surface to a nadir-facing plane.
    pub slope_bound: f64,
    pub max_iterations: usize,
    /// Relative step-norm tolerance.
    pub step_tolerance: f64,
    /// Relative cost-decrease tolerance.
    pub cost_tolerance: f64,
    /// Residual RMS (px/s) below which running out of iterations is accepted.
    pub residual_tolerance: f64,
    pub condition_threshold: f64,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        Self {
            slope_bound: (1.0f64 - 1e-3).sqrt(),
            max_iterations: 200,
            step_tolerance: 1e-10,
            cost_tolerance: 1e-12,
            residual_tolerance: 1.0,
            condition_threshold: 1e8,
        }
    }
}

struct SlopeProblem<'a> {
    /// (x_px, y_px, x_norm, y_norm, target_u, target_v)
    feats: Vec<[f64; 6]>,
    rho: f64,
    k: &'a CameraIntrinsics,
}

impl SlopeProblem<'_> {
    fn new<'k>(
        obs: &[FlowObservation],
        w: &AngularRates,
        rho: f64,
        k: &'k CameraIntrinsics,
    ) -> SlopeProblem<'k> {
        let feats = obs
            .iter()
            .map(|o| {
                let (ru, rv) = rotational_flow(o.point.x, o.point.y, w, k);
                let n = pixel_to_normalized(o.point, k);
                [o.point.x, o.point.y, n.x, n.y, o.flow.u - ru, o.flow.v - rv]
            })
            .collect();
        SlopeProblem { feats, rho, k }
    }

    /// Residuals and Jacobian with respect to `(vx, vy, vz, alpha, beta)`.
    fn eval(&self, p: &[f64; 5], want_jac: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
        let [vx, vy, vz, al, be] = *p;
        let (fx, fy, rho) = (self.k.fx, self.k.fy, self.rho);
        let g = (1.0 - al * al - be * be).max(0.0).sqrt();
        let m = self.feats.len();
        let mut r = DVector::zeros(2 * m);
        let mut jac = want_jac.then(|| DMatrix::zeros(2 * m, 5));
        for (i, f) in self.feats.iter().enumerate() {
            let [xp, yp, x, y, tu, tv] = *f;
            let lin = al * x + be * y;
            let d = lin / (rho * g) + 1.0 / rho;
            let eu = xp * vz - fx * vx;
            let ev = yp * vz - fy * vy;
            r[2 * i] = eu * d - tu;
            r[2 * i + 1] = ev * d - tv;
            if let Some(j) = jac.as_mut() {
                let g3 = rho * g * g * g;
                let dda = x / (rho * g) + lin * al / g3;
                let ddb = y / (rho * g) + lin * be / g3;
                j[(2 * i, 0)] = -fx * d;
                j[(2 * i, 2)] = xp * d;
                j[(2 * i, 3)] = eu * dda;
                j[(2 * i, 4)] = eu * ddb;
                j[(2 * i + 1, 1)] = -fy * d;
                j[(2 * i + 1, 2)] = yp * d;
                j[(2 * i + 1, 3)] = ev * dda;
                j[(2 * i + 1, 4)] = ev * ddb;
            }
        }
        (r, jac)
    }
}

/// Residual vector (predicted minus observed flow, `u` and `v` interleaved)
/// and its analytic Jacobian with respect to `[vx, vy, vz, alpha, beta]`.
pub fn slope_residuals_and_jacobian(
    obs: &[FlowObservation],
    w: &AngularRates,
    rho: f64,
    k: &CameraIntrinsics,
    params: &[f64; 5],
) -> (DVector<f64>, DMatrix<f64>) {
    let (r, j) = SlopeProblem::new(obs, w, rho, k).eval(params, true);
    (r, j.expect("jacobian requested"))
}

// The tilt is optimized through unconstrained (a, b) with
// (alpha, beta) = s * (a, b) / sqrt(1 + a^2 + b^2), which keeps every iterate
// strictly inside the admissible disc.
fn to_tilt(a: f64, b: f64, s: f64) -> (f64, f64) {
    let n = (1.0 + a * a + b * b).sqrt();
    (s * a / n, s * b / n)
}

fn from_tilt(alpha: f64, beta: f64, s: f64) -> (f64, f64) {
    if s == 0.0 {
        return (0.0, 0.0);
    }
    let (mut ua, mut ub) = (alpha / s, beta / s);
    let r2 = ua * ua + ub * ub;
    const MAX_R2: f64 = 0.999;
    if r2 > MAX_R2 {
        let k = (MAX_R2 / r2).sqrt();
        ua *= k;
        ub *= k;
    }
    let n = (1.0 - ua * ua - ub * ub).sqrt();
    (ua / n, ub / n)
}

/// Velocity and planar tilt by damped least squares (Levenberg-Marquardt with
/// trust-region step control) on the full nonlinear motion field.
pub fn invert_slope(
    obs: &[FlowObservation],
    w: &AngularRates,
    rho: f64,
    k: &CameraIntrinsics,
    init: &SlopeInit,
    opts: &SlopeOptions,
) -> Result<EgomotionEstimate, InversionError> {
    if obs.len() < 3 {
        return Err(InversionError::InsufficientFeatures {
            available: obs.len(),
            required: 3,
        });
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(InversionError::InvalidInput(format!("range {rho}")));
    }
    let s = opts.slope_bound;
    if !(0.0..1.0).contains(&s) {
        return Err(InversionError::InvalidInput(format!("slope bound {s}")));
    }
    if init.alpha * init.alpha + init.beta * init.beta >= 1.0 {
        return Err(InversionError::InvalidInput(
            "initial tilt outside the unit disc".into(),
        ));
    }
    let prob = SlopeProblem::new(obs, w, rho, k);
    let n_active = if s == 0.0 { 3 } else { 5 };

    let (a0, b0) = from_tilt(init.alpha, init.beta, s);
    let mut z =
        SVector::<f64, 5>::new(init.velocity.vx, init.velocity.vy, init.velocity.vz, a0, b0);

    // Physical parameters and chain-ruled Jacobian for the internal vector.
    let eval = |z: &SVector<f64, 5>, want_jac: bool| {
        let (al, be) = to_tilt(z[3], z[4], s);
        let (r, j) = prob.eval(&[z[0], z[1], z[2], al, be], want_jac);
        let j = j.map(|mut j| {
            let n2 = 1.0 + z[3] * z[3] + z[4] * z[4];
            let n3 = n2 * n2.sqrt();
            let daa = s * (1.0 + z[4] * z[4]) / n3;
            let dab = -s * z[3] * z[4] / n3;
            let dbb = s * (1.0 + z[3] * z[3]) / n3;
            for i in 0..j.nrows() {
                let (ja, jb) = (j[(i, 3)], j[(i, 4)]);
                j[(i, 3)] = ja * daa + jb * dab;
                j[(i, 4)] = ja * dab + jb * dbb;
            }
            j
        });
        (r, j)
    };

    let (mut r, j0) = eval(&z, true);
    let mut jac = j0.expect("jacobian requested");
    let mut cost = 0.5 * r.norm_squared();
    if !cost.is_finite() {
        return Err(InversionError::InvalidInput(
            "non-finite observation".into(),
        ));
    }

    let normal_eq = |jac: &DMatrix<f64>, r: &DVector<f64>| {
        let mut jtj = Matrix5::<f64>::zeros();
        let mut g = SVector::<f64, 5>::zeros();
        let jt = jac.columns(0, n_active).transpose();
        let h = &jt * jac.columns(0, n_active);
        let gr = &jt * r;
        for a in 0..n_active {
            g[a] = gr[a];
            for b in 0..n_active {
                jtj[(a, b)] = h[(a, b)];
            }
        }
        (jtj, g)
    };

    let (mut jtj, mut g) = normal_eq(&jac, &r);
    let mut scale = SVector::<f64, 5>::from_fn(|i, _| if i < n_active { jtj[(i, i)] } else { 0.0 });
    let mut mu = 1e-3 * scale.max();
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = cost == 0.0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let floor = 1e-12 * scale.max().max(f64::MIN_POSITIVE);
        for i in 0..n_active {
            scale[i] = scale[i].max(jtj[(i, i)]).max(floor);
        }
        let mut lhs = jtj;
        for i in 0..n_active {
            lhs[(i, i)] += mu * scale[i];
        }
        let step = solve_active(&lhs, &(-g), n_active);
        let Some(step) = step else {
            mu = (mu * nu).max(f64::MIN_POSITIVE);
            nu *= 2.0;
            continue;
        };
        let z_new = z + step;
        let (r_new, _) = eval(&z_new, false);
        let cost_new = 0.5 * r_new.norm_squared();
        let mut mu_scaled_step = step;
        for i in 0..n_active {
            mu_scaled_step[i] *= mu * scale[i];
        }
        let predicted = 0.5 * step.dot(&(mu_scaled_step - g));
        let gain = (cost - cost_new) / predicted;
        let small_step = step.norm() < opts.step_tolerance * (z.norm() + opts.step_tolerance);

        if cost_new.is_finite() && gain > 0.0 {
            let decrease = cost - cost_new;
            z = z_new;
            r = r_new;
            cost = cost_new;
            jac = eval(&z, true).1.expect("jacobian requested");
            (jtj, g) = normal_eq(&jac, &r);
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * gain - 1.0).powi(3));
            nu = 2.0;
            converged =
                small_step || decrease <= opts.cost_tolerance * (cost + decrease) || cost == 0.0;
        } else {
            mu *= nu;
            nu *= 2.0;
            converged = small_step || !mu.is_finite();
        }
    }

    let (alpha, beta) = to_tilt(z[3], z[4], s);
    let m = obs.len();
    let residual_rms = (2.0 * cost / (2 * m) as f64).sqrt();
    let condition_number = {
        let phys = prob
            .eval(&[z[0], z[1], z[2], alpha, beta], true)
            .1
            .expect("jacobian requested");
        let sv = phys.columns(0, n_active).into_owned().singular_values();
        let smin = sv.min();
        if smin > 0.0 {
            sv.max() / smin
        } else {
            f64::INFINITY
        }
    };
    let estimate = EgomotionEstimate {
        velocity: CameraVelocity::new(z[0], z[1], z[2]),
        slope: Some((alpha, beta)),
        residual_rms,
        n_features: m,
        n_dropped: 0,
        condition_ok: condition_number <= opts.condition_threshold,
        condition_number,
        iterations,
    };
    if !converged && residual_rms > opts.residual_tolerance {
        return Err(InversionError::NonConvergence {
            estimate: Box::new(estimate),
        });
    }
    Ok(estimate)
}

fn solve_active(
    lhs: &Matrix5<f64>,
    rhs: &SVector<f64, 5>,
    n_active: usize,
) -> Option<SVector<f64, 5>> {
    let mut out = SVector::<f64, 5>::zeros();
    if n_active == 5 {
        out = lhs.cholesky()?.solve(rhs);
    } else {
        let sub: SMatrix<f64, 3, 3> = lhs.fixed_view::<3, 3>(0, 0).into_owned();
        let x = sub.cholesky()?.solve(&rhs.fixed_rows::<3>(0).into_owned());
        out.fixed_rows_mut::<3>(0).copy_from(&x);
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// `||est - truth|| / ||truth||`.
pub fn relative_velocity_error(
    est: &CameraVelocity,
    truth: &CameraVelocity,
) -> Result<f64, InversionError> {
    let t = truth.norm();
    if t == 0.0 {
        return Err(InversionError::ZeroTruthVelocity);
    }
    Ok(absolute_velocity_error(est, truth) / t)
}

/// `||est - truth||` in m/s.
pub fn absolute_velocity_error(est: &CameraVelocity, truth: &CameraVelocity) -> f64 {
    (est.as_vector() - truth.as_vector()).norm()
}
