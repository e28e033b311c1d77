//! Bi-level pose/shape correction.
//!
//! The corrector objective for one view is
//! `F(Z | a) = sum_i f(R_hat x_i + t_hat | a)^2` where `(R_hat, t_hat)` is
//! the closed-form rigid fit of the depth points `X` onto the current
//! coordinates `Z`. Rather than descending on `Z` directly (which routes the
//! gradient through the inner fit), the pose block descends on SE(3) via
//! twist increments and reconstructs `Z_hat = R_hat X + t_hat 1^T`; the two
//! attain the same optimum, which the equivalence tests pin down.
//!
//! Two solvers share the pose block:
//! * block coordinate descent ([`correct_bcd`]) alternates the pose step
//!   with projected gradient descent on the code;
//! * the active-shape solver ([`correct_lsq`]) replaces the code step with
//!   one simplex-constrained linear least-squares solve.

mod lsq;

pub use lsq::{kkt_residual, simplex_lsq};

use std::collections::VecDeque;

use nalgebra::{DMatrix, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, PointCloud, Pose, Twist};
use crate::sdf::bounding_box_diameter;
use crate::shape::{
    shape_matrix, ActiveShapeCoeffs, Decoder, LatentCode, SdfScale, ShapeBasis,
};

/// Step sizes and iteration budgets for both solvers.
///
/// The step sizes are initial values for a doubling/halving line search:
/// accepted steps may grow (bounded), rejected steps halve until the
/// objective decreases, so descent is monotone by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorConfig {
    /// Initial step for the pose (Z) update.
    pub z_step: f64,
    /// Maximum pose-update iterations per view per round.
    pub z_iters: usize,
    /// Initial step for the shape-code update.
    pub h_step: f64,
    /// Maximum code-update iterations per round.
    pub h_iters: usize,
    /// Outer block-coordinate sweeps.
    pub outer_rounds: usize,
    /// Relative objective decrease below which a solver stops early.
    pub convergence_tol: f64,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        CorrectorConfig {
            z_step: 1e-3,
            z_iters: 50,
            h_step: 1e-2,
            h_iters: 25,
            outer_rounds: 3,
            convergence_tol: 1e-6,
        }
    }
}

impl CorrectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_step > 0.0 && self.h_step > 0.0 && self.convergence_tol >= 0.0) {
            return Err(Error::invalid("corrector steps must be positive"));
        }
        if self.z_iters < 1 || self.h_iters < 1 || self.outer_rounds < 1 {
            return Err(Error::invalid("corrector iteration counts must be at least 1"));
        }
        Ok(())
    }
}

/// Default capacity of a multi-view buffer.
pub const DEFAULT_BUFFER_CAPACITY: usize = 50;

/// One view's observation: depth points and their current coordinates in the
/// pose-normalized frame.
#[derive(Clone, Debug)]
pub struct ViewObservation {
    pub x: PointCloud,
    pub z: PointCloud,
}

/// Bounded buffer of observations of a single object across views.
#[derive(Clone, Debug)]
pub struct MultiViewBuffer {
    pub object_id: u64,
    frames: VecDeque<ViewObservation>,
    capacity: usize,
}

impl MultiViewBuffer {
    pub fn new(object_id: u64) -> Self {
        Self::with_capacity(object_id, DEFAULT_BUFFER_CAPACITY)
    }

    pub fn with_capacity(object_id: u64, capacity: usize) -> Self {
        assert!(capacity >= 1);
        MultiViewBuffer { object_id, frames: VecDeque::new(), capacity }
    }

    /// Append a view, evicting the oldest one at capacity.
    pub fn push(&mut self, view: ViewObservation) {
        assert_eq!(view.x.len(), view.z.len(), "paired clouds must match");
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(view);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn views(&self) -> impl Iterator<Item = &ViewObservation> {
        self.frames.iter()
    }

    pub fn single(object_id: u64, x: PointCloud, z: PointCloud) -> Self {
        let mut buf = Self::new(object_id);
        buf.push(ViewObservation { x, z });
        buf
    }
}

/// Iteration counters accumulated by a correction run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Iterations {
    pub outer_rounds: usize,
    pub pose_steps: usize,
    pub code_steps: usize,
}

/// The corrected code: a simplex code (BCD) or active-shape coefficients
/// with their recombined code (LSQ).
#[derive(Clone, Debug)]
pub enum CodeEstimate {
    Simplex(LatentCode),
    Active { coeffs: ActiveShapeCoeffs, code: LatentCode },
}

impl CodeEstimate {
    /// The simplex code either way.
    pub fn code(&self) -> &LatentCode {
        match self {
            CodeEstimate::Simplex(c) => c,
            CodeEstimate::Active { code, .. } => code,
        }
    }
}

/// One corrected view: the fitted pose and `Z_hat = R_hat X + t_hat 1^T`.
#[derive(Clone, Debug)]
pub struct ViewCorrection {
    pub pose: Pose,
    pub z_hat: PointCloud,
}

/// Output of a correction run.
#[derive(Clone, Debug)]
pub struct CorrectionResult {
    /// Corrected coordinates, concatenated across views.
    pub z_hat: PointCloud,
    /// Per-view poses and corrected coordinates, in buffer order.
    pub views: Vec<ViewCorrection>,
    pub code: CodeEstimate,
    /// Pose of the first view.
    pub pose: Pose,
    /// Objective after the initial fit and after each outer round;
    /// non-increasing by construction. The LSQ trace is in the
    /// diagonally-normalized active objective so all three entries share
    /// one scale.
    pub objective_trace: Vec<f64>,
    pub iterations: Iterations,
    /// Filled by the certification stage.
    pub certified: Option<bool>,
}

/// The corrector objective `F(Z | a)`: fit the pose of `x` onto `z` in
/// closed form, then sum squared decoded SDF values at the transformed
/// depth points.
pub fn objective(
    z: &PointCloud,
    alpha: &LatentCode,
    x: &PointCloud,
    decoder: &Decoder,
) -> Result<f64> {
    let pose = fit_rigid(x, z)?;
    Ok(pose_objective(&pose, x, alpha, decoder))
}

/// `G(R, t) = sum_i f(R x_i + t | a)^2` for a fixed pose.
pub fn pose_objective(pose: &Pose, x: &PointCloud, alpha: &LatentCode, decoder: &Decoder) -> f64 {
    x.iter().map(|p| decoder.eval(alpha, pose.apply(*p)).powi(2)).sum()
}

/// Gradient of [`pose_objective`] with respect to a left-multiplied twist
/// increment, stacked as `[omega, v]`.
pub fn pose_objective_twist_gradient(
    pose: &Pose,
    x: &PointCloud,
    alpha: &LatentCode,
    decoder: &Decoder,
) -> Vector6<f64> {
    let mut g_omega = Vector3::zeros();
    let mut g_v = Vector3::zeros();
    for p in x.iter() {
        let y = pose.apply(*p);
        let f = decoder.eval(alpha, y);
        let grad = decoder.point_gradient(alpha, y);
        g_v += 2.0 * f * grad;
        g_omega += 2.0 * f * y.cross(&grad);
    }
    Vector6::new(g_omega.x, g_omega.y, g_omega.z, g_v.x, g_v.y, g_v.z)
}

/// Pose block of both solvers.
///
/// Initializes the pose from the closed-form fit of `x` onto `z_init`, then
/// descends `G(R, t)` over SE(3) with twist increments and a
/// doubling/halving line search. Returns the final pose, the reconstructed
/// coordinates `Z_hat = R_hat X + t_hat 1^T`, and the step count. The final
/// objective never exceeds the initial one.
pub fn refine_pose(
    x: &PointCloud,
    z_init: &PointCloud,
    alpha: &LatentCode,
    decoder: &Decoder,
    cfg: &CorrectorConfig,
) -> Result<(Pose, PointCloud, usize)> {
    let mut pose = fit_rigid(x, z_init)?;
    let mut value = pose_objective(&pose, x, alpha, decoder);
    let mut step = cfg.z_step;
    let mut steps = 0;
    let mut previous: Option<(Vector6<f64>, Vector6<f64>)> = None;

    let try_step = |pose: &Pose, grad: &Vector6<f64>, step: f64| -> (Pose, f64) {
        let delta = Twist::new(
            Vector3::new(-step * grad[0], -step * grad[1], -step * grad[2]),
            Vector3::new(-step * grad[3], -step * grad[4], -step * grad[5]),
        );
        let candidate = delta.exp().compose(pose);
        let cand_value = pose_objective(&candidate, x, alpha, decoder);
        (candidate, cand_value)
    };

    for _ in 0..cfg.z_iters {
        let grad = pose_objective_twist_gradient(&pose, x, alpha, decoder);
        if grad.norm() < 1e-14 {
            break;
        }
        // Spectral (Barzilai-Borwein) step seed from the previous gradient
        // pair, clamped into a monotone doubling/halving line search. Far
        // sharper terminal convergence than a fixed step, while every
        // iterate is still a plain gradient step.
        if let Some((g_prev, d_prev)) = &previous {
            let y = grad - g_prev;
            let dy = d_prev.dot(&y);
            if dy > 1e-300 {
                step = (d_prev.dot(d_prev) / dy).clamp(1e-12, 1e6);
            }
        }
        let mut accepted = None;
        for _ in 0..60 {
            let (candidate, cand_value) = try_step(&pose, &grad, step);
            if cand_value <= value {
                accepted = Some((candidate, cand_value));
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
        let Some((mut best_pose, mut best_value)) = accepted else {
            break;
        };
        if previous.is_none() {
            // First iteration has no spectral estimate; expand greedily.
            for _ in 0..24 {
                let wider = step * 2.0;
                let (candidate, cand_value) = try_step(&pose, &grad, wider);
                if cand_value < best_value {
                    best_pose = candidate;
                    best_value = cand_value;
                    step = wider;
                } else {
                    break;
                }
            }
        }
        let drop = value - best_value;
        pose = best_pose;
        value = best_value;
        steps += 1;
        previous = Some((grad, grad * -step));
        if drop <= cfg.convergence_tol * value.max(1e-300) && grad.norm() * step < 1e-10 {
            break;
        }
    }
    let z_hat = x.transformed(&pose);
    Ok((pose, z_hat, steps))
}

fn code_objective(z_hat: &PointCloud, alpha: &LatentCode, decoder: &Decoder) -> f64 {
    z_hat.iter().map(|p| decoder.eval(alpha, *p).powi(2)).sum()
}

fn code_objective_gradient(z_hat: &PointCloud, alpha: &LatentCode, decoder: &Decoder) -> nalgebra::DVector<f64> {
    let mut g = nalgebra::DVector::zeros(alpha.dim());
    for p in z_hat.iter() {
        let f = decoder.eval(alpha, *p);
        g += decoder.code_gradient(alpha, *p) * (2.0 * f);
    }
    g
}

/// Shape block of the BCD solver: projected gradient descent on the code
/// over the simplex. Every iterate is feasible and the objective is
/// non-increasing.
pub fn refine_code_pgd(
    z_hat: &PointCloud,
    alpha_init: &LatentCode,
    decoder: &Decoder,
    cfg: &CorrectorConfig,
) -> (LatentCode, usize) {
    let mut alpha = alpha_init.projected();
    let mut value = code_objective(z_hat, &alpha, decoder);
    let mut step = cfg.h_step;
    let mut steps = 0;
    let mut previous: Option<(nalgebra::DVector<f64>, nalgebra::DVector<f64>)> = None;

    let try_step = |alpha: &LatentCode, grad: &nalgebra::DVector<f64>, step: f64| -> (LatentCode, f64) {
        let candidate =
            LatentCode::new(crate::shape::project_simplex(&(&alpha.alpha - grad * step)));
        let cand_value = code_objective(z_hat, &candidate, decoder);
        (candidate, cand_value)
    };

    for _ in 0..cfg.h_iters {
        let grad = code_objective_gradient(z_hat, &alpha, decoder);
        if grad.norm() < 1e-14 {
            break;
        }
        // Spectral step seed from the projected displacement, safeguarded
        // by the monotone halving search below.
        if let Some((g_prev, d_prev)) = &previous {
            let y = &grad - g_prev;
            let dy = d_prev.dot(&y);
            if dy > 1e-300 {
                step = (d_prev.dot(d_prev) / dy).clamp(1e-12, 1e6);
            }
        }
        let mut accepted = None;
        for _ in 0..60 {
            let (candidate, cand_value) = try_step(&alpha, &grad, step);
            if candidate.alpha == alpha.alpha {
                // Projected fixed point: stationary over the simplex.
                return (alpha, steps);
            }
            if cand_value <= value {
                accepted = Some((candidate, cand_value));
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
        let Some((best_alpha, best_value)) = accepted else {
            break;
        };
        let displacement = &best_alpha.alpha - &alpha.alpha;
        let drop = value - best_value;
        alpha = best_alpha;
        value = best_value;
        steps += 1;
        let small_move = displacement.norm() < 1e-10;
        previous = Some((grad, displacement));
        if drop <= cfg.convergence_tol * value.max(1e-300) && small_move {
            break;
        }
    }
    (alpha, steps)
}

/// Shape block of the LSQ solver: minimize `|F(Z_hat) D c|^2` over the
/// simplex. The returned coefficients satisfy the projected-gradient
/// fixed-point condition to below 1e-6.
pub fn refine_coeffs_lsq(
    z_hat: &PointCloud,
    basis: &ShapeBasis,
    code_est: &LatentCode,
    decoder: &Decoder,
    scale: &SdfScale,
) -> ActiveShapeCoeffs {
    let f = shape_matrix(z_hat, basis, code_est, decoder);
    let a = scale_columns(&f, scale);
    simplex_lsq(&a)
}

fn scale_columns(f: &DMatrix<f64>, scale: &SdfScale) -> DMatrix<f64> {
    let mut a = f.clone();
    for j in 0..a.ncols() {
        let d = scale.inv_diameters[j];
        for i in 0..a.nrows() {
            a[(i, j)] *= d;
        }
    }
    a
}

fn aggregate_z(views: &[ViewCorrection]) -> PointCloud {
    PointCloud::concat(views.iter().map(|v| &v.z_hat))
}

/// Block coordinate descent over the buffer: per outer round, one pose
/// update per view, then one projected-gradient code update on the
/// concatenated corrected coordinates of all views. Single-view correction
/// is the one-frame case.
pub fn correct_bcd(
    buffer: &MultiViewBuffer,
    alpha_init: &LatentCode,
    decoder: &Decoder,
    cfg: &CorrectorConfig,
) -> Result<CorrectionResult> {
    if buffer.is_empty() {
        return Err(Error::invalid("correction requires a nonempty buffer"));
    }
    cfg.validate()?;
    let mut alpha = alpha_init.projected();
    let mut iterations = Iterations::default();

    // Objective at the network estimates, through the inner fits.
    let mut trace = Vec::with_capacity(cfg.outer_rounds + 1);
    let mut initial = 0.0;
    for view in buffer.views() {
        initial += objective(&view.z, &alpha, &view.x, decoder)?;
    }
    trace.push(initial);

    let mut current: Vec<ViewObservation> = buffer.views().cloned().collect();
    let mut views: Vec<ViewCorrection> = Vec::new();
    let mut previous = initial;

    for _ in 0..cfg.outer_rounds {
        iterations.outer_rounds += 1;
        views.clear();
        for view in &current {
            let (pose, z_hat, steps) = refine_pose(&view.x, &view.z, &alpha, decoder, cfg)?;
            iterations.pose_steps += steps;
            views.push(ViewCorrection { pose, z_hat });
        }
        for (view, corr) in current.iter_mut().zip(&views) {
            view.z = corr.z_hat.clone();
        }

        let aggregated = aggregate_z(&views);
        let (next_alpha, steps) = refine_code_pgd(&aggregated, &alpha, decoder, cfg);
        iterations.code_steps += steps;
        alpha = next_alpha;

        let objective_now = code_objective(&aggregated, &alpha, decoder);
        trace.push(objective_now);
        let converged = (previous - objective_now).abs() <= cfg.convergence_tol * previous.max(1e-18);
        previous = objective_now;
        if converged {
            break;
        }
    }

    let z_hat = aggregate_z(&views);
    let pose = views[0].pose.clone();
    Ok(CorrectionResult {
        z_hat,
        views,
        code: CodeEstimate::Simplex(alpha),
        pose,
        objective_trace: trace,
        iterations,
        certified: None,
    })
}

/// Active-shape solver: one pose update per view with the estimator code,
/// one simplex-constrained least-squares shape solve on the aggregated
/// coordinates, then recombination of the code with the diagonal
/// normalization and renormalization onto the simplex.
///
/// The objective trace is reported in the active objective
/// `|F D c|^2` (entries: at the estimates, after the pose block, after the
/// shape solve) so it is non-increasing on a single scale.
pub fn correct_lsq(
    buffer: &MultiViewBuffer,
    code_est: &LatentCode,
    basis: &ShapeBasis,
    decoder: &Decoder,
    cfg: &CorrectorConfig,
) -> Result<CorrectionResult> {
    if buffer.is_empty() {
        return Err(Error::invalid("correction requires a nonempty buffer"));
    }
    cfg.validate()?;
    assert_eq!(basis.k(), decoder.k(), "basis and decoder must agree");
    let alpha_est = code_est.projected();
    let mut iterations = Iterations { outer_rounds: 1, ..Iterations::default() };

    // d_0 comes from the decoded estimator field, measured at correction
    // time; d_1..d_K are the precomputed basis diameters.
    let estimator_field = decoder.field(&alpha_est);
    let d0 = bounding_box_diameter(&estimator_field)?;
    let scale = SdfScale::new(d0, basis);
    let d0_inv = scale.inv_diameters[0];

    // Trace entry at the network estimates: the active objective of the
    // pure-estimator coefficient vector e_0.
    let mut initial = 0.0;
    for view in buffer.views() {
        initial += objective(&view.z, &alpha_est, &view.x, decoder)?;
    }
    let mut trace = vec![initial * d0_inv * d0_inv];

    let mut views = Vec::new();
    for view in buffer.views() {
        let (pose, z_hat, steps) = refine_pose(&view.x, &view.z, &alpha_est, decoder, cfg)?;
        iterations.pose_steps += steps;
        views.push(ViewCorrection { pose, z_hat });
    }
    let aggregated = aggregate_z(&views);
    trace.push(code_objective(&aggregated, &alpha_est, decoder) * d0_inv * d0_inv);

    let f = shape_matrix(&aggregated, basis, &alpha_est, decoder);
    let a = scale_columns(&f, &scale);
    let coeffs = simplex_lsq(&a);
    iterations.code_steps += 1;
    trace.push((&a * &coeffs.c).norm_squared());

    // Recombine: alpha_hat = c_0 d_0 alpha_est + sum_k c_k d_k e_k, then
    // renormalize the (nonnegative) result onto the simplex.
    let k = basis.k();
    let mut recombined = &alpha_est.alpha * (coeffs.c[0] * scale.inv_diameters[0]);
    for j in 0..k {
        recombined[j] += coeffs.c[j + 1] * scale.inv_diameters[j + 1];
    }
    let total: f64 = recombined.iter().sum();
    debug_assert!(total > 0.0);
    let code = LatentCode::new(crate::shape::project_simplex(&(recombined / total)));

    let z_hat = aggregate_z(&views);
    let pose = views[0].pose.clone();
    Ok(CorrectionResult {
        z_hat,
        views,
        code: CodeEstimate::Active { coeffs, code },
        pose,
        objective_trace: trace,
        iterations,
        certified: None,
    })
}
