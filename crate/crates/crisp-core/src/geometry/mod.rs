//! Rigid and similarity transforms, point-set alignment, and metrics.

mod fit;
mod metrics;

pub use fit::{fit_rigid, fit_similarity, rigid_residual, similarity_residual};
pub use metrics::{adds, chamfer, ChamferNorm};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdf::Point3;

/// Compositions tolerated before a pose re-orthonormalizes its rotation.
const RENORM_INTERVAL: u32 = 100;

/// A rigid transform `(R, t)` acting as `p -> R p + t`.
///
/// The rotation is stored as a matrix (the alignment solvers emit matrices
/// natively) and re-orthonormalized after long composition chains.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    #[serde(skip)]
    compositions: u32,
}

impl PartialEq for Pose {
    fn eq(&self, other: &Self) -> bool {
        self.rotation == other.rotation && self.translation == other.translation
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            compositions: 0,
        }
    }

    /// Construct from parts that are already orthonormal (solver output).
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        debug_assert!(
            (rotation.transpose() * rotation - Matrix3::identity()).norm() < 1e-7,
            "rotation must be orthonormal"
        );
        Pose { rotation, translation, compositions: 0 }
    }

    /// Validating constructor for parsed input: requires near-orthonormality
    /// and positive determinant, then snaps onto SO(3).
    pub fn checked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(rotation.iter().all(|v| v.is_finite()) && translation.iter().all(|v| v.is_finite())) {
            return Err(Error::format("pose entries must be finite"));
        }
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if defect > 1e-6 {
            return Err(Error::format(format!("rotation is not orthonormal (defect {defect:.2e})")));
        }
        if rotation.determinant() < 0.0 {
            return Err(Error::format("rotation has negative determinant"));
        }
        // Rotations already at invariant precision pass through untouched,
        // keeping serialized poses bit-exact across a roundtrip; sloppier
        // (but accepted) inputs get snapped onto SO(3).
        let rotation = if defect <= 1e-9 { rotation } else { orthonormalize(&rotation) };
        Ok(Pose { rotation, translation, compositions: 0 })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
            compositions: self.compositions,
        }
    }

    /// `self` after `other`: `(self * other)(p) = self(other(p))`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut out = Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            compositions: self.compositions.max(other.compositions) + 1,
        };
        if out.compositions > RENORM_INTERVAL {
            out.rotation = orthonormalize(&out.rotation);
            out.compositions = 0;
        }
        out
    }

    /// Logarithmic map onto a twist; the rotational part has `|omega| <= pi`.
    pub fn log(&self) -> Twist {
        let omega = rotation_log(&self.rotation);
        let theta2 = omega.norm_squared();
        let w = skew(&omega);
        // V^-1 = I - w/2 + (1/theta^2)(1 - A/(2B)) w^2, Taylor near zero.
        let coeff = if theta2 < 1e-12 {
            1.0 / 12.0 + theta2 / 720.0
        } else {
            let theta = theta2.sqrt();
            let a = theta.sin() / theta;
            let b = (1.0 - theta.cos()) / theta2;
            (1.0 - a / (2.0 * b)) / theta2
        };
        let v_inv = Matrix3::identity() - w * 0.5 + w * w * coeff;
        Twist { omega, v: v_inv * self.translation }
    }

    /// Relative rotation angle to another pose, in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        rotation_log(&(self.rotation.transpose() * other.rotation)).norm()
    }

    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Flat serialization: row-major rotation followed by translation.
    pub fn to_flat(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.rotation[(r, c)];
            }
        }
        for i in 0..3 {
            out[9 + i] = self.translation[i];
        }
        out
    }

    pub fn from_flat(flat: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(
            flat[0], flat[1], flat[2], flat[3], flat[4], flat[5], flat[6], flat[7], flat[8],
        );
        Self::checked(rotation, Vector3::new(flat[9], flat[10], flat[11]))
    }
}

/// A similarity transform `p -> s R p + t` with `s > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimPose {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimPose {
    pub fn apply(&self, p: Point3) -> Point3 {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// An se(3) tangent element: rotational part `omega` (radians) and
/// translational part `v` (meters). Parameterizes pose descent steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Twist { omega: Vector3::zeros(), v: Vector3::zeros() }
    }

    pub fn new(omega: Vector3<f64>, v: Vector3<f64>) -> Self {
        Twist { omega, v }
    }

    pub fn norm(&self) -> f64 {
        (self.omega.norm_squared() + self.v.norm_squared()).sqrt()
    }

    /// Exponential map: Rodrigues rotation plus the standard V-matrix for
    /// translation; `exp(0)` is the identity.
    pub fn exp(&self) -> Pose {
        let theta2 = self.omega.norm_squared();
        let w = skew(&self.omega);
        let (a, b, c) = if theta2 < 1e-12 {
            // sin t/t, (1-cos t)/t^2, (t-sin t)/t^3 by Taylor expansion
            (
                1.0 - theta2 / 6.0,
                0.5 - theta2 / 24.0,
                1.0 / 6.0 - theta2 / 120.0,
            )
        } else {
            let theta = theta2.sqrt();
            (
                theta.sin() / theta,
                (1.0 - theta.cos()) / theta2,
                (theta - theta.sin()) / (theta2 * theta),
            )
        };
        let rotation = Matrix3::identity() + w * a + w * w * b;
        let v_mat = Matrix3::identity() + w * b + w * w * c;
        Pose::from_parts(rotation, v_mat * self.v)
    }
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Axis-angle vector of a rotation matrix, `|omega| <= pi`.
fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    if theta < 1e-9 {
        return vee(&((r - r.transpose()) * 0.5));
    }
    if theta < std::f64::consts::PI - 1e-5 {
        return vee(&(r - r.transpose())) * (theta / (2.0 * theta.sin()));
    }
    // Near pi: recover the axis from u u^T = I + (R + R^T - 2 I) / (2 (1 - cos)).
    let uut = Matrix3::identity() + (r + r.transpose() - Matrix3::identity() * 2.0) / (2.0 * (1.0 - cos_theta));
    let mut axis_i = 0;
    for i in 1..3 {
        if uut[(i, i)] > uut[(axis_i, axis_i)] {
            axis_i = i;
        }
    }
    let mut u = Vector3::new(
        uut[(axis_i, 0)],
        uut[(axis_i, 1)],
        uut[(axis_i, 2)],
    ) / uut[(axis_i, axis_i)].max(1e-12).sqrt();
    u.normalize_mut();
    // Fix the overall sign using the (possibly tiny) skew part.
    let s = vee(&(r - r.transpose()));
    if s.dot(&u) < 0.0 {
        u = -u;
    }
    u * theta
}

/// Project a near-rotation onto SO(3) via SVD, keeping det = +1.
pub(crate) fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).scale_mut(-1.0);
        r = u2 * v_t;
    }
    r
}

/// An ordered collection of 3D points.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = Point3::zeros();
        for p in &self.points {
            c += p;
        }
        c / self.points.len().max(1) as f64
    }

    /// Cloud with `pose` applied to every point.
    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud::new(self.points.iter().map(|p| pose.apply(*p)).collect())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Concatenate several clouds (multi-view aggregation).
    pub fn concat<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let mut points = Vec::new();
        for c in clouds {
            points.extend_from_slice(&c.points);
        }
        PointCloud::new(points)
    }
}

#[cfg(test)]
mod tests;
