//! Analytic signed-distance primitives and unions of them.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{central_gradient, Aabb, Point3, SdfField, FD_STEP};
use crate::error::{Error, Result};

/// Shape-specific parameters, all lengths in meters.
///
/// Sphere and capsule distances are exact. Box and torus use the standard
/// exact closed forms. The superquadric uses a radial-scaling estimate: it is
/// sign-exact everywhere and zero exactly on the surface, but its magnitude
/// away from the surface is only within a shape-dependent constant factor of
/// the true distance (the factor grows with the semi-axis aspect ratio; for
/// `a = b = c`, `e1 = e2 = 1` the estimate reduces to the exact sphere SDF).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimitiveShape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    Torus { major_radius: f64, minor_radius: f64 },
    /// Capsule along the z axis: segment `z in [-half_length, half_length]`.
    Capsule { half_length: f64, radius: f64 },
    /// Superellipsoid with semi-axes `half_extents` and exponents `e1`
    /// (north-south) and `e2` (east-west), both in `(0, 2]`.
    Superquadric { half_extents: [f64; 3], e1: f64, e2: f64 },
}

/// An analytic primitive translated by `offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticPrimitive {
    pub shape: PrimitiveShape,
    #[serde(default = "zero_offset")]
    pub offset: [f64; 3],
}

fn zero_offset() -> [f64; 3] {
    [0.0; 3]
}

impl AnalyticPrimitive {
    pub fn new(shape: PrimitiveShape) -> Self {
        AnalyticPrimitive { shape, offset: [0.0; 3] }
    }

    pub fn with_offset(shape: PrimitiveShape, offset: Point3) -> Self {
        AnalyticPrimitive { shape, offset: [offset.x, offset.y, offset.z] }
    }

    pub fn sphere(radius: f64) -> Self {
        Self::new(PrimitiveShape::Sphere { radius })
    }

    pub fn cuboid(hx: f64, hy: f64, hz: f64) -> Self {
        Self::new(PrimitiveShape::Box { half_extents: [hx, hy, hz] })
    }

    pub fn torus(major_radius: f64, minor_radius: f64) -> Self {
        Self::new(PrimitiveShape::Torus { major_radius, minor_radius })
    }

    pub fn capsule(half_length: f64, radius: f64) -> Self {
        Self::new(PrimitiveShape::Capsule { half_length, radius })
    }

    fn offset_vec(&self) -> Point3 {
        Point3::new(self.offset[0], self.offset[1], self.offset[2])
    }

    /// Check size positivity and exponent ranges. Parsers call this on
    /// untrusted manifests before the primitive reaches any numerics.
    pub fn validate(&self) -> Result<()> {
        if !self.offset.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("primitive offset must be finite"));
        }
        let positive = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive and finite, got {v}")))
            }
        };
        match &self.shape {
            PrimitiveShape::Sphere { radius } => positive(*radius, "sphere radius"),
            PrimitiveShape::Box { half_extents } => {
                for h in half_extents {
                    positive(*h, "box half extent")?;
                }
                Ok(())
            }
            PrimitiveShape::Torus { major_radius, minor_radius } => {
                positive(*major_radius, "torus major radius")?;
                positive(*minor_radius, "torus minor radius")?;
                if minor_radius >= major_radius {
                    return Err(Error::invalid("torus minor radius must be below major radius"));
                }
                Ok(())
            }
            PrimitiveShape::Capsule { half_length, radius } => {
                positive(*half_length, "capsule half length")?;
                positive(*radius, "capsule radius")
            }
            PrimitiveShape::Superquadric { half_extents, e1, e2 } => {
                for h in half_extents {
                    positive(*h, "superquadric half extent")?;
                }
                for e in [e1, e2] {
                    if !(e.is_finite() && *e > 0.0 && *e <= 2.0) {
                        return Err(Error::invalid(format!(
                            "superquadric exponents must lie in (0, 2], got {e}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

impl SdfField for AnalyticPrimitive {
    fn eval(&self, p: Point3) -> f64 {
        let q = p - self.offset_vec();
        match &self.shape {
            PrimitiveShape::Sphere { radius } => q.norm() - radius,
            PrimitiveShape::Box { half_extents } => {
                let d = Vector3::new(
                    q.x.abs() - half_extents[0],
                    q.y.abs() - half_extents[1],
                    q.z.abs() - half_extents[2],
                );
                let outside = Vector3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0));
                outside.norm() + d.x.max(d.y).max(d.z).min(0.0)
            }
            PrimitiveShape::Torus { major_radius, minor_radius } => {
                let ring = (q.x * q.x + q.y * q.y).sqrt() - major_radius;
                (ring * ring + q.z * q.z).sqrt() - minor_radius
            }
            PrimitiveShape::Capsule { half_length, radius } => {
                let z = q.z - q.z.clamp(-half_length, *half_length);
                Vector3::new(q.x, q.y, z).norm() - radius
            }
            PrimitiveShape::Superquadric { half_extents, e1, e2 } => {
                superquadric_eval(q, half_extents, *e1, *e2)
            }
        }
    }

    fn gradient(&self, p: Point3) -> Vector3<f64> {
        let q = p - self.offset_vec();
        match &self.shape {
            PrimitiveShape::Sphere { .. } => {
                let n = q.norm();
                if n < 1e-12 {
                    Vector3::new(0.0, 0.0, 1.0)
                } else {
                    q / n
                }
            }
            PrimitiveShape::Box { half_extents } => box_gradient(q, half_extents),
            PrimitiveShape::Torus { major_radius, .. } => torus_gradient(q, *major_radius),
            PrimitiveShape::Capsule { half_length, .. } => {
                let z = q.z - q.z.clamp(-half_length, *half_length);
                let v = Vector3::new(q.x, q.y, z);
                let n = v.norm();
                if n < 1e-12 {
                    Vector3::new(0.0, 0.0, 1.0)
                } else {
                    v / n
                }
            }
            PrimitiveShape::Superquadric { half_extents, e1, e2 } => {
                superquadric_gradient(self, q, half_extents, *e1, *e2)
            }
        }
    }

    fn bounds(&self) -> Aabb {
        let half = match &self.shape {
            PrimitiveShape::Sphere { radius } => Vector3::new(*radius, *radius, *radius),
            PrimitiveShape::Box { half_extents } | PrimitiveShape::Superquadric { half_extents, .. } => {
                Vector3::new(half_extents[0], half_extents[1], half_extents[2])
            }
            PrimitiveShape::Torus { major_radius, minor_radius } => {
                let r = major_radius + minor_radius;
                Vector3::new(r, r, *minor_radius)
            }
            PrimitiveShape::Capsule { half_length, radius } => {
                Vector3::new(*radius, *radius, half_length + radius)
            }
        };
        let c = self.offset_vec();
        Aabb::new(c - half, c + half)
    }
}

fn box_gradient(q: Point3, half_extents: &[f64; 3]) -> Vector3<f64> {
    let d = Vector3::new(
        q.x.abs() - half_extents[0],
        q.y.abs() - half_extents[1],
        q.z.abs() - half_extents[2],
    );
    let sign = Vector3::new(
        if q.x >= 0.0 { 1.0 } else { -1.0 },
        if q.y >= 0.0 { 1.0 } else { -1.0 },
        if q.z >= 0.0 { 1.0 } else { -1.0 },
    );
    let outside = Vector3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0));
    let n = outside.norm();
    if n > 1e-12 {
        // Outside: distance grows toward the nearest face/edge/corner.
        Vector3::new(sign.x * outside.x, sign.y * outside.y, sign.z * outside.z) / n
    } else {
        // Inside: nearest face wins.
        let axis = if d.x >= d.y && d.x >= d.z { 0 } else if d.y >= d.z { 1 } else { 2 };
        let mut g = Vector3::zeros();
        g[axis] = sign[axis];
        g
    }
}

fn torus_gradient(q: Point3, major_radius: f64) -> Vector3<f64> {
    let rho = (q.x * q.x + q.y * q.y).sqrt();
    let ring = rho - major_radius;
    let n = (ring * ring + q.z * q.z).sqrt();
    if rho < 1e-12 || n < 1e-12 {
        // Axis or medial circle: any finite unit vector keeps callers sane.
        return Vector3::new(0.0, 0.0, 1.0);
    }
    Vector3::new(q.x / rho * ring / n, q.y / rho * ring / n, q.z / n)
}

/// Homogeneous degree-1 inside-outside function of the superellipsoid:
/// 1 on the surface, <1 inside, >1 outside, scaling linearly along rays.
fn superquadric_radial(q: Point3, half: &[f64; 3], e1: f64, e2: f64) -> f64 {
    let x = (q.x / half[0]).abs();
    let y = (q.y / half[1]).abs();
    let z = (q.z / half[2]).abs();
    let g = x.powf(2.0 / e2) + y.powf(2.0 / e2);
    let f0 = g.powf(e2 / e1) + z.powf(2.0 / e1);
    f0.powf(e1 / 2.0)
}

fn superquadric_eval(q: Point3, half: &[f64; 3], e1: f64, e2: f64) -> f64 {
    let r = q.norm();
    if r < 1e-15 {
        // Center: report the (negative) smallest semi-axis scale.
        return -half.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    let f1 = superquadric_radial(q, half, e1, e2);
    r * (1.0 - 1.0 / f1)
}

fn superquadric_gradient(
    prim: &AnalyticPrimitive,
    q: Point3,
    half: &[f64; 3],
    e1: f64,
    e2: f64,
) -> Vector3<f64> {
    let r = q.norm();
    let x = (q.x / half[0]).abs();
    let y = (q.y / half[1]).abs();
    let g = x.powf(2.0 / e2) + y.powf(2.0 / e2);
    // Near the center or the z axis the chain rule degenerates (negative
    // powers of g when e2 < e1); fall back to finite differences there.
    if r < 1e-9 || g < 1e-12 {
        return central_gradient(prim, q + prim_offset(prim), FD_STEP);
    }
    let f1 = superquadric_radial(q, half, e1, e2);
    let f0 = f1.powf(2.0 / e1);

    // dF0/dq, with F0 = (|x|^(2/e2) + |y|^(2/e2))^(e2/e1) + |z|^(2/e1)
    let sgn = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    let ge = (e2 / e1) * g.powf(e2 / e1 - 1.0);
    let dx = ge * (2.0 / e2) * x.powf(2.0 / e2 - 1.0) * sgn(q.x) / half[0];
    let dy = ge * (2.0 / e2) * y.powf(2.0 / e2 - 1.0) * sgn(q.y) / half[1];
    let z = (q.z / half[2]).abs();
    let dz = (2.0 / e1) * z.powf(2.0 / e1 - 1.0) * sgn(q.z) / half[2];
    let df0 = Vector3::new(dx, dy, dz);
    // f1 = F0^(e1/2)  =>  df1 = (e1/2) F0^(e1/2 - 1) dF0
    let df1 = df0 * ((e1 / 2.0) * f0.powf(e1 / 2.0 - 1.0));
    // f = r (1 - 1/f1)  =>  df = (q/r)(1 - 1/f1) + r df1 / f1^2
    q / r * (1.0 - 1.0 / f1) + df1 * (r / (f1 * f1))
}

fn prim_offset(p: &AnalyticPrimitive) -> Point3 {
    Point3::new(p.offset[0], p.offset[1], p.offset[2])
}

/// Union (pointwise minimum) of analytic primitives.
///
/// Exact outside the union; a bounded-error lower bound of the true distance
/// inside overlapping regions, which is all the corrector machinery needs:
/// the zero level set and the sign structure are exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnionSdf {
    pub parts: Vec<AnalyticPrimitive>,
}

impl UnionSdf {
    pub fn new(parts: Vec<AnalyticPrimitive>) -> Self {
        UnionSdf { parts }
    }

    pub fn single(part: AnalyticPrimitive) -> Self {
        UnionSdf { parts: vec![part] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parts.is_empty() {
            return Err(Error::invalid("union must contain at least one primitive"));
        }
        for p in &self.parts {
            p.validate()?;
        }
        Ok(())
    }

    fn closest_part(&self, p: Point3) -> (&AnalyticPrimitive, f64) {
        let mut best = &self.parts[0];
        let mut best_v = best.eval(p);
        for part in &self.parts[1..] {
            let v = part.eval(p);
            if v < best_v {
                best_v = v;
                best = part;
            }
        }
        (best, best_v)
    }
}

impl SdfField for UnionSdf {
    fn eval(&self, p: Point3) -> f64 {
        self.closest_part(p).1
    }

    fn gradient(&self, p: Point3) -> Vector3<f64> {
        self.closest_part(p).0.gradient(p)
    }

    fn bounds(&self) -> Aabb {
        let mut b = self.parts[0].bounds();
        for part in &self.parts[1..] {
            b = b.union(&part.bounds());
        }
        b
    }
}
