//! Simplex-constrained linear least squares: `min |A c|^2` over
//! `{c >= 0, 1^T c = 1}`.
//!
//! Backend: projected gradient with a doubling/halving line search and a
//! projected-gradient fixed-point stopping rule, plus an exact active-set
//! refinement once the face has been identified. A ridge of 1e-10 on the
//! Gram matrix keeps the problem strictly convex so ties on singular
//! `A^T A` break deterministically toward the minimum-norm optimum.

use nalgebra::{DMatrix, DVector};

use crate::shape::{project_simplex, ActiveShapeCoeffs};

const RIDGE: f64 = 1e-10;
const KKT_ETA: f64 = 1e-3;
const KKT_TOL: f64 = 1e-8;
/// Projected-gradient iterations before the first active-set attempt.
const WARM_ITERS: usize = 300;
/// Fallback budget when the active-set refinement declines.
const MAX_ITERS: usize = 50_000;

fn quad(m: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    (c.transpose() * m * c)[(0, 0)]
}

/// Projected-gradient fixed-point residual `|c - P(c - eta grad)|` of the
/// problem `min |A c|^2` over the simplex, at the point `c`.
pub fn kkt_residual(a: &DMatrix<f64>, c: &DVector<f64>, eta: f64) -> f64 {
    let grad = a.transpose() * (a * c) * 2.0;
    let stepped = c - grad * eta;
    (c - project_simplex(&stepped)).norm()
}

/// Minimize `|A c|^2` over the probability simplex.
pub fn simplex_lsq(a: &DMatrix<f64>) -> ActiveShapeCoeffs {
    let dim = a.ncols();
    assert!(dim >= 1, "need at least one column");
    if dim == 1 {
        return ActiveShapeCoeffs::new(DVector::from_element(1, 1.0));
    }

    let mut m = a.transpose() * a;
    for i in 0..dim {
        m[(i, i)] += RIDGE;
    }

    // Gershgorin bound on the largest eigenvalue sizes the initial step.
    let lipschitz = 2.0
        * (0..dim)
            .map(|i| (0..dim).map(|j| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
    let step0 = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut c = DVector::from_element(dim, 1.0 / dim as f64);
    let mut value = quad(&m, &c);
    pgd(&m, &mut c, &mut value, step0, WARM_ITERS);

    if let Some(exact) = active_set_refine(&m, &c) {
        let ev = quad(&m, &exact);
        if ev <= value + 1e-12 * (1.0 + value.abs()) {
            return ActiveShapeCoeffs::new(exact);
        }
    }
    // Active set declined (cycling guard): finish with the monotone
    // projected gradient until the fixed-point residual is met.
    pgd(&m, &mut c, &mut value, step0, MAX_ITERS);
    ActiveShapeCoeffs::new(project_simplex(&c))
}

/// Monotone projected gradient with a doubling/halving line search.
fn pgd(m: &DMatrix<f64>, c: &mut DVector<f64>, value: &mut f64, step0: f64, iters: usize) {
    let mut step = step0;
    let step_cap = step0 * 1e6;
    for _ in 0..iters {
        let grad = m * &*c * 2.0;
        let fixed_point = (&*c - project_simplex(&(&*c - &grad * KKT_ETA))).norm();
        if fixed_point < KKT_TOL {
            return;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = project_simplex(&(&*c - &grad * step));
            if candidate == *c {
                return; // projected fixed point
            }
            let cand_value = quad(m, &candidate);
            if cand_value <= *value {
                *c = candidate;
                *value = cand_value;
                step = (step * 2.0).min(step_cap);
                accepted = true;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return;
            }
        }
        if !accepted {
            return;
        }
    }
}

/// Primal active-set refinement from a warm start: repeatedly solve the
/// equality-constrained problem on the working support, dropping negative
/// coordinates and admitting the most violated multiplier until the full
/// KKT system holds exactly.
fn active_set_refine(m: &DMatrix<f64>, start: &DVector<f64>) -> Option<DVector<f64>> {
    let dim = start.len();
    let mut support: Vec<bool> = (0..dim).map(|i| start[i] > 1e-9).collect();
    if !support.iter().any(|&s| s) {
        support[start.imax()] = true;
    }

    for _ in 0..(4 * dim + 16) {
        let members: Vec<usize> = (0..dim).filter(|&i| support[i]).collect();
        let s = members.len();
        // Stationarity on the face: 2 M c = mu 1 restricted to the support,
        // with the coordinates summing to one.
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        for (ai, &i) in members.iter().enumerate() {
            for (aj, &j) in members.iter().enumerate() {
                kkt[(ai, aj)] = 2.0 * m[(i, j)];
            }
            kkt[(ai, s)] = 1.0;
            kkt[(s, ai)] = 1.0;
        }
        let mut rhs = DVector::zeros(s + 1);
        rhs[s] = 1.0;
        let sol = kkt.lu().solve(&rhs)?;

        // Primal feasibility: drop the most negative coordinate.
        let mut worst: Option<(usize, f64)> = None;
        for (ai, &i) in members.iter().enumerate() {
            if sol[ai] < -1e-12 && worst.is_none_or(|(_, w)| sol[ai] < w) {
                worst = Some((i, sol[ai]));
            }
        }
        if let Some((drop, _)) = worst {
            if s == 1 {
                return None;
            }
            support[drop] = false;
            continue;
        }

        let mut c = DVector::zeros(dim);
        for (ai, &i) in members.iter().enumerate() {
            c[i] = sol[ai].max(0.0);
        }
        // Dual feasibility: clipped coordinates need gradient >= mu.
        let grad = m * &c * 2.0;
        let mu = members.iter().map(|&i| grad[i]).sum::<f64>() / s as f64;
        let scale = 1.0 + grad.amax();
        let mut violated: Option<(usize, f64)> = None;
        for i in 0..dim {
            if !support[i] {
                let slack = grad[i] - mu;
                if slack < -1e-10 * scale && violated.is_none_or(|(_, w)| slack < w) {
                    violated = Some((i, slack));
                }
            }
        }
        match violated {
            Some((add, _)) => support[add] = true,
            None => return Some(project_simplex(&c)),
        }
    }
    None
}
