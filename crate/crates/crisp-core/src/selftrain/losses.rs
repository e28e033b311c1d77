//! Supervised loss functions: the soft-L1 coordinate loss and the
//! three-term SDF loss with Eikonal regularization. Pure functions plus
//! their input-space gradients for the finite-difference checks.

use nalgebra::Vector3;

use crate::geometry::PointCloud;

/// Threshold switching the coordinate loss between its quadratic and linear
/// branches.
pub const SOFT_L1_ZETA: f64 = 0.1;

/// Soft-L1 coordinate loss: per component, quadratic `d^2 / (2 zeta)` below
/// the threshold and `|d| - zeta/2` above it; components are summed per
/// point and the result is averaged over points.
pub fn soft_l1_loss(z: &PointCloud, z_star: &PointCloud, zeta: f64) -> f64 {
    assert_eq!(z.len(), z_star.len(), "clouds must pair up");
    assert!(!z.is_empty() && zeta > 0.0);
    let mut total = 0.0;
    for (a, b) in z.iter().zip(z_star.iter()) {
        for i in 0..3 {
            let d = (a[i] - b[i]).abs();
            total += if d <= zeta { d * d / (2.0 * zeta) } else { d - zeta / 2.0 };
        }
    }
    total / z.len() as f64
}

/// Gradient of [`soft_l1_loss`] with respect to the points of `z`.
pub fn soft_l1_loss_gradient(z: &PointCloud, z_star: &PointCloud, zeta: f64) -> Vec<Vector3<f64>> {
    assert_eq!(z.len(), z_star.len());
    let n = z.len() as f64;
    z.iter()
        .zip(z_star.iter())
        .map(|(a, b)| {
            let mut g = Vector3::zeros();
            for i in 0..3 {
                let d = a[i] - b[i];
                g[i] = if d.abs() <= zeta { d / zeta } else { d.signum() } / n;
            }
            g
        })
        .collect()
}

/// Weights of the three SDF loss terms and the off-manifold sharpness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfLossWeights {
    /// On-manifold absolute SDF error weight.
    pub gamma1: f64,
    /// Off-manifold penalty weight.
    pub gamma2: f64,
    /// Eikonal term weight.
    pub gamma3: f64,
    /// Sharpness of the off-manifold penalty `exp(-a |f|)`.
    pub a: f64,
}

impl Default for SdfLossWeights {
    fn default() -> Self {
        SdfLossWeights { gamma1: 3e3, gamma2: 2e2, gamma3: 50.0, a: 100.0 }
    }
}

/// Three-term SDF loss:
/// on-manifold absolute value error, off-manifold penalty pushing values
/// away from zero, and the Eikonal term `| |grad f| - 1 |` over all
/// gradient samples.
pub fn sdf_loss(
    on_values: &[f64],
    on_gt: &[f64],
    off_values: &[f64],
    gradients: &[Vector3<f64>],
    weights: &SdfLossWeights,
) -> f64 {
    assert_eq!(on_values.len(), on_gt.len());
    assert!(!on_values.is_empty() && !gradients.is_empty());
    let m1 = on_values.len() as f64;
    let term1 = weights.gamma1 / m1
        * on_values
            .iter()
            .zip(on_gt.iter())
            .map(|(v, g)| (v - g).abs())
            .sum::<f64>();
    let term2 = if off_values.is_empty() {
        0.0
    } else {
        weights.gamma2 / off_values.len() as f64
            * off_values.iter().map(|v| (-weights.a * v.abs()).exp()).sum::<f64>()
    };
    let term3 = weights.gamma3 / gradients.len() as f64
        * gradients.iter().map(|g| (g.norm() - 1.0).abs()).sum::<f64>();
    term1 + term2 + term3
}

/// Gradients of [`sdf_loss`] with respect to each input family, in order:
/// on-manifold values, off-manifold values, gradient samples.
pub fn sdf_loss_gradients(
    on_values: &[f64],
    on_gt: &[f64],
    off_values: &[f64],
    gradients: &[Vector3<f64>],
    weights: &SdfLossWeights,
) -> (Vec<f64>, Vec<f64>, Vec<Vector3<f64>>) {
    let m1 = on_values.len() as f64;
    let d_on: Vec<f64> = on_values
        .iter()
        .zip(on_gt.iter())
        .map(|(v, g)| weights.gamma1 / m1 * (v - g).signum())
        .collect();
    let m2 = off_values.len().max(1) as f64;
    let d_off: Vec<f64> = off_values
        .iter()
        .map(|v| weights.gamma2 / m2 * (-weights.a) * v.signum() * (-weights.a * v.abs()).exp())
        .collect();
    let mg = gradients.len() as f64;
    let d_grad: Vec<Vector3<f64>> = gradients
        .iter()
        .map(|g| {
            let n = g.norm();
            if n < 1e-12 {
                Vector3::zeros()
            } else {
                weights.gamma3 / mg * (n - 1.0).signum() * (g / n)
            }
        })
        .collect();
    (d_on, d_off, d_grad)
}
