//! Closed-form point-set alignment: rigid (SVD of the cross-covariance with
//! determinant sign correction) and similarity (scale from the singular
//! spectrum over the source variance).

use nalgebra::Matrix3;

use super::{Pose, PointCloud, SimPose};
use crate::error::{Error, Result};

/// Relative singular-value floor below which the correspondence geometry is
/// considered collinear (cross-covariance rank < 2).
const RANK_TOL: f64 = 1e-12;

fn check_inputs(x: &PointCloud, z: &PointCloud) -> Result<()> {
    if x.len() != z.len() {
        return Err(Error::invalid(format!(
            "correspondence counts differ: {} vs {}",
            x.len(),
            z.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::invalid("alignment needs at least 3 correspondences"));
    }
    Ok(())
}

/// Best rigid transform mapping `x` onto `z`:
/// `argmin_{R,t} sum_i |R x_i + t - z_i|^2`, with `t = z_bar - R x_bar`.
///
/// Fails with [`Error::DegenerateConfiguration`] when the cross-covariance
/// has rank < 2 (collinear or coincident points), where the rotation is not
/// determined. The returned rotation always has `det = +1`, also on planar
/// point sets that would otherwise admit a reflection.
pub fn fit_rigid(x: &PointCloud, z: &PointCloud) -> Result<Pose> {
    check_inputs(x, z)?;
    let xc = x.centroid();
    let zc = z.centroid();
    let mut h = Matrix3::zeros();
    for (p, q) in x.iter().zip(z.iter()) {
        h += (p - xc) * (q - zc).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    if !sv[0].is_finite() || sv[0] <= 0.0 || sv[1] <= RANK_TOL * sv[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "cross-covariance rank < 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let correction = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d.signum()));
    let rotation = v * correction * u.transpose();
    let translation = zc - rotation * xc;
    Ok(Pose::from_parts(rotation, translation))
}

/// Best similarity transform mapping `x` onto `z`:
/// `argmin_{s,R,t} sum_i |s R x_i + t - z_i|^2`.
pub fn fit_similarity(x: &PointCloud, z: &PointCloud) -> Result<SimPose> {
    check_inputs(x, z)?;
    let n = x.len() as f64;
    let xc = x.centroid();
    let zc = z.centroid();
    let mut sigma_zx = Matrix3::zeros();
    let mut var_x = 0.0;
    for (p, q) in x.iter().zip(z.iter()) {
        sigma_zx += (q - zc) * (p - xc).transpose() / n;
        var_x += (p - xc).norm_squared() / n;
    }
    let svd = sigma_zx.svd(true, true);
    let sv = svd.singular_values;
    if !sv[0].is_finite() || sv[0] <= 0.0 || sv[1] <= RANK_TOL * sv[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "cross-covariance rank < 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let flip = (u.determinant() * v_t.determinant()) < 0.0;
    let s_diag = nalgebra::Vector3::new(1.0, 1.0, if flip { -1.0 } else { 1.0 });
    let rotation = u * Matrix3::from_diagonal(&s_diag) * v_t;
    let scale = (sv[0] * s_diag[0] + sv[1] * s_diag[1] + sv[2] * s_diag[2]) / var_x;
    let translation = zc - scale * (rotation * xc);
    Ok(SimPose { scale, rotation, translation })
}

/// Sum of squared residuals of a rigid transform on correspondences.
pub fn rigid_residual(pose: &Pose, x: &PointCloud, z: &PointCloud) -> f64 {
    x.iter()
        .zip(z.iter())
        .map(|(p, q)| (pose.apply(*p) - q).norm_squared())
        .sum()
}

/// Sum of squared residuals of a similarity transform on correspondences.
pub fn similarity_residual(sim: &SimPose, x: &PointCloud, z: &PointCloud) -> f64 {
    x.iter()
        .zip(z.iter())
        .map(|(p, q)| (sim.apply(*p) - q).norm_squared())
        .sum()
}
