//! The shape-code space: a K-element SDF basis, blend decoders over
//! barycentric latent codes, simplex geometry, and the active-shape model.
//!
//! Latent codes are stored directly in barycentric coordinates over the
//! basis, so the k-th training shape is the canonical vertex `e_k` and
//! restricting codes to the simplex is literally simplex projection.

mod active;
mod decoder;
mod manifest;

pub use active::{active_eval, basis_matrix, shape_matrix, ActiveShapeCoeffs, SdfScale};
pub use decoder::{BlendKind, DecodedField, Decoder, DEFAULT_KERNEL_TAU};
pub use manifest::{parse_basis_manifest, BasisManifest};

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sdf::{bounding_box_diameter, Aabb, SdfField, UnionSdf};

/// A shape code: barycentric weights over the K basis shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub alpha: DVector<f64>,
}

impl LatentCode {
    pub fn new(alpha: DVector<f64>) -> Self {
        LatentCode { alpha }
    }

    pub fn from_slice(alpha: &[f64]) -> Self {
        LatentCode { alpha: DVector::from_row_slice(alpha) }
    }

    /// The canonical vertex `e_k` of a K-simplex.
    pub fn vertex(k: usize, dim: usize) -> Self {
        let mut alpha = DVector::zeros(dim);
        alpha[k] = 1.0;
        LatentCode { alpha }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Simplex membership to the stated tolerance on the sum; weights must
    /// be exactly nonnegative (projection guarantees that).
    pub fn is_simplex(&self) -> bool {
        self.alpha.iter().all(|&a| a >= 0.0)
            && (self.alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }

    /// Euclidean projection onto the simplex.
    pub fn projected(&self) -> LatentCode {
        LatentCode { alpha: project_simplex(&self.alpha) }
    }

    pub fn l1_distance(&self, other: &LatentCode) -> f64 {
        self.alpha
            .iter()
            .zip(other.alpha.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Euclidean projection onto `{a >= 0, sum a = 1}` via the sorting-based
/// threshold rule, with an exact-sum repair so the output is bitwise stable
/// under re-projection.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    assert!(v.iter().all(|a| a.is_finite()), "projection input must be finite");

    // Already feasible inputs pass through untouched (bitwise idempotence).
    if v.iter().all(|&a| a >= 0.0) && v.iter().sum::<f64>() == 1.0 {
        return v.clone();
    }

    let mut sorted: Vec<f64> = v.iter().cloned().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (1.0 - cumsum) / (j + 1) as f64;
        if u + candidate > 0.0 {
            shift = candidate;
        }
    }
    let mut w = DVector::from_iterator(v.len(), v.iter().map(|&a| (a + shift).max(0.0)));

    // Nudge until the sum is exactly 1.0 so re-projection is the identity.
    // The smallest positive weight absorbs the ulp-scale residual reliably
    // (the largest may be too coarse to represent it).
    for _ in 0..16 {
        let s: f64 = w.iter().sum();
        if s == 1.0 {
            break;
        }
        let mut target = w.imax();
        for i in 0..w.len() {
            if w[i] > 0.0 && w[i] < w[target] {
                target = i;
            }
        }
        let nudged = w[target] + (1.0 - s);
        if nudged > 0.0 {
            w[target] = nudged;
        } else {
            let largest = w.imax();
            w[largest] += 1.0 - s;
        }
    }
    w
}

/// K basis fields with their precomputed bounding-box diameters.
pub struct ShapeBasis {
    fields: Vec<UnionSdf>,
    diameters: Vec<f64>,
}

impl ShapeBasis {
    /// Build a basis, measuring each field's bounding-box diameter by
    /// surface sampling. Fails if any field has an empty level set.
    pub fn new(fields: Vec<UnionSdf>) -> Result<Arc<Self>> {
        if fields.is_empty() {
            return Err(Error::invalid("shape basis needs at least one field"));
        }
        for f in &fields {
            f.validate()?;
        }
        let diameters = fields
            .iter()
            .map(bounding_box_diameter)
            .collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(ShapeBasis { fields, diameters }))
    }

    /// Build from parts with already-known diameters (manifest loading).
    pub fn with_diameters(fields: Vec<UnionSdf>, diameters: Vec<f64>) -> Result<Arc<Self>> {
        if fields.is_empty() {
            return Err(Error::invalid("shape basis needs at least one field"));
        }
        if fields.len() != diameters.len() {
            return Err(Error::invalid("one diameter per basis field required"));
        }
        for f in &fields {
            f.validate()?;
        }
        if !diameters.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(Error::invalid("diameters must be positive and finite"));
        }
        Ok(Arc::new(ShapeBasis { fields, diameters }))
    }

    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, k: usize) -> &UnionSdf {
        &self.fields[k]
    }

    pub fn fields(&self) -> &[UnionSdf] {
        &self.fields
    }

    pub fn diameter(&self, k: usize) -> f64 {
        self.diameters[k]
    }

    pub fn diameters(&self) -> &[f64] {
        &self.diameters
    }

    /// Joint bounding box of all basis fields.
    pub fn bounds(&self) -> Aabb {
        let mut b = self.fields[0].bounds();
        for f in &self.fields[1..] {
            b = b.union(&f.bounds());
        }
        b
    }
}
