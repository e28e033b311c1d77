//! Signed distance fields: evaluation, gradients, surface sampling, grids.
//!
//! A field is negative inside the shape, positive outside, and zero on the
//! surface. Analytic primitives provide the ground-truth substrate; blends
//! and grid-baked fields layer on top of the same [`SdfField`] trait.

mod grid;
mod primitive;

pub use grid::GridSdf;
pub use primitive::{AnalyticPrimitive, PrimitiveShape, UnionSdf};

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use crate::error::{Error, Result};

/// A point in the pose-normalized frame, in meters.
pub type Point3 = Vector3<f64>;

/// Absolute SDF residual below which a point counts as on-surface.
pub const SURFACE_TOL: f64 = 1e-6;

/// Central finite-difference step for gradients lacking a closed form.
pub const FD_STEP: f64 = 1e-4;

/// Newton projection drives residuals to this target before accepting.
const NEWTON_TARGET: f64 = 1e-13;

/// Axis-aligned bounding box in meters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Aabb { min, max }
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Nearest point inside the box.
    pub fn clamp_point(&self, p: Point3) -> Point3 {
        Point3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    /// Grow symmetrically by a fraction of the per-axis extent.
    pub fn inflate(&self, fraction: f64) -> Aabb {
        let half = (self.max - self.min) * (fraction * 0.5);
        Aabb {
            min: self.min - half,
            max: self.max + half,
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i])
    }
}

/// An evaluable signed distance field with gradient access.
///
/// Implementations must return a finite value for any finite input and a
/// finite gradient wherever they evaluate. Fields are immutable after
/// construction, so evaluation is safe from concurrent callers.
pub trait SdfField: Send + Sync {
    /// Signed distance at `p` (meters): negative inside, positive outside.
    fn eval(&self, p: Point3) -> f64;

    /// Spatial gradient at `p`. The default uses central differences with
    /// step [`FD_STEP`]; primitives override with closed forms.
    fn gradient(&self, p: Point3) -> Vector3<f64> {
        central_gradient(self, p, FD_STEP)
    }

    /// An axis-aligned box containing the zero level set. Used to seed
    /// surface sampling and as the grid baking domain.
    fn bounds(&self) -> Aabb;
}

/// Central finite-difference gradient with step `h`.
pub fn central_gradient<F: SdfField + ?Sized>(field: &F, p: Point3, h: f64) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for i in 0..3 {
        let mut lo = p;
        let mut hi = p;
        lo[i] -= h;
        hi[i] += h;
        g[i] = (field.eval(hi) - field.eval(lo)) / (2.0 * h);
    }
    g
}

/// Draw `n` points on the zero level set of `field`, deterministically for a
/// given `seed`.
///
/// Seeds are drawn uniformly in the (slightly inflated) field bounds and
/// pushed onto the surface by Newton projection
/// `p <- p - f(p) grad f(p) / |grad f(p)|^2`, at most 20 steps per seed.
/// Seeds that do not converge to `|f| < SURFACE_TOL` are rejected; after a
/// bounded number of seed batches the call fails with
/// [`Error::SurfaceNotFound`].
pub fn sample_surface<F: SdfField + ?Sized>(field: &F, n: usize, seed: u64) -> Result<Vec<Point3>> {
    assert!(n >= 1, "sample_surface requires n >= 1");
    let seed_box = field.bounds().inflate(0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let batch = (4 * n).max(256);
    const MAX_BATCHES: usize = 64;

    for _ in 0..MAX_BATCHES {
        for _ in 0..batch {
            let p = Point3::new(
                rng.random_range(seed_box.min.x..=seed_box.max.x),
                rng.random_range(seed_box.min.y..=seed_box.max.y),
                rng.random_range(seed_box.min.z..=seed_box.max.z),
            );
            if let Some(q) = project_to_surface(field, p) {
                points.push(q);
                if points.len() == n {
                    return Ok(points);
                }
            }
        }
    }
    Err(Error::SurfaceNotFound {
        requested: n,
        converged: points.len(),
    })
}

fn project_to_surface<F: SdfField + ?Sized>(field: &F, mut p: Point3) -> Option<Point3> {
    for _ in 0..20 {
        let f = field.eval(p);
        if !f.is_finite() {
            return None;
        }
        if f.abs() < NEWTON_TARGET {
            return Some(p);
        }
        let g = field.gradient(p);
        let g2 = g.norm_squared();
        if !g2.is_finite() || g2 < 1e-18 {
            return None;
        }
        p -= g * (f / g2);
    }
    // Accept late converges that are on-surface but above the Newton target.
    if field.eval(p).abs() < SURFACE_TOL {
        Some(p)
    } else {
        None
    }
}

/// Diagonal length of the tight axis-aligned box of sampled surface points.
///
/// Uses 1024 surface samples (deterministic seed) and propagates
/// [`Error::SurfaceNotFound`] for empty level sets.
pub fn bounding_box_diameter<F: SdfField + ?Sized>(field: &F) -> Result<f64> {
    let pts = sample_surface(field, 1024, 0x0d1a)?;
    let mut min = pts[0];
    let mut max = pts[0];
    for p in &pts[1..] {
        min = min.inf(p);
        max = max.sup(p);
    }
    Ok((max - min).norm())
}
