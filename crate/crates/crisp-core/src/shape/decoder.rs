//! Blend decoders mapping a latent code to an SDF over the basis.

use std::sync::Arc;

use nalgebra::{DVector, Vector3};

use super::{LatentCode, ShapeBasis};
use crate::sdf::{Aabb, Point3, SdfField};

/// Default kernel temperature: sharp enough to reproduce vertices, smooth
/// enough for nontrivial projected-gradient dynamics.
pub const DEFAULT_KERNEL_TAU: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlendKind {
    /// `f(p | a) = sum_k a_k f_k(p)` — exactly linear in the code.
    Linear,
    /// `f(p | a) = sum_k w_k(a) f_k(p)` with `w = softmax(-|a - e_k|^2 / tau)`,
    /// a deliberately nonlinear stand-in for a learned decoder.
    Kernel { tau: f64 },
}

/// Decodes latent codes into evaluable fields over a shared basis.
#[derive(Clone)]
pub struct Decoder {
    basis: Arc<ShapeBasis>,
    kind: BlendKind,
}

impl Decoder {
    pub fn linear(basis: Arc<ShapeBasis>) -> Self {
        Decoder { basis, kind: BlendKind::Linear }
    }

    pub fn kernel(basis: Arc<ShapeBasis>, tau: f64) -> Self {
        assert!(tau > 0.0, "kernel temperature must be positive");
        Decoder { basis, kind: BlendKind::Kernel { tau } }
    }

    pub fn with_kind(basis: Arc<ShapeBasis>, kind: BlendKind) -> Self {
        Decoder { basis, kind }
    }

    pub fn basis(&self) -> &ShapeBasis {
        &self.basis
    }

    pub fn basis_arc(&self) -> Arc<ShapeBasis> {
        Arc::clone(&self.basis)
    }

    pub fn kind(&self) -> BlendKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    /// Per-field blend weights for a code.
    pub fn weights(&self, alpha: &LatentCode) -> DVector<f64> {
        assert_eq!(alpha.dim(), self.k(), "code dimension must match basis");
        match self.kind {
            BlendKind::Linear => alpha.alpha.clone(),
            BlendKind::Kernel { tau } => {
                let k = self.k();
                let mut logits = DVector::zeros(k);
                for i in 0..k {
                    let mut d2 = 0.0;
                    for j in 0..k {
                        let e = if i == j { 1.0 } else { 0.0 };
                        d2 += (alpha.alpha[j] - e).powi(2);
                    }
                    logits[i] = -d2 / tau;
                }
                softmax(&logits)
            }
        }
    }

    /// Blended field value at `p`.
    pub fn eval(&self, alpha: &LatentCode, p: Point3) -> f64 {
        let w = self.weights(alpha);
        (0..self.k()).map(|k| w[k] * self.basis.field(k).eval(p)).sum()
    }

    /// Spatial gradient of the blended field.
    pub fn point_gradient(&self, alpha: &LatentCode, p: Point3) -> Vector3<f64> {
        let w = self.weights(alpha);
        let mut g = Vector3::zeros();
        for k in 0..self.k() {
            g += w[k] * self.basis.field(k).gradient(p);
        }
        g
    }

    /// Derivative of the field value with respect to the code,
    /// `d f(p | a) / d a`. Exactly the basis values for the linear blend;
    /// analytic softmax differentiation for the kernel blend.
    pub fn code_gradient(&self, alpha: &LatentCode, p: Point3) -> DVector<f64> {
        let k = self.k();
        let values = DVector::from_iterator(k, (0..k).map(|i| self.basis.field(i).eval(p)));
        match self.kind {
            BlendKind::Linear => values,
            BlendKind::Kernel { tau } => {
                let w = self.weights(alpha);
                // s_i = -|a - e_i|^2 / tau, so ds_i/da_j = -2 (a_j - [i==j]) / tau.
                let mut grad = DVector::zeros(k);
                for j in 0..k {
                    let mut mean_ds = 0.0;
                    for l in 0..k {
                        let e = if l == j { 1.0 } else { 0.0 };
                        mean_ds += w[l] * (-2.0 * (alpha.alpha[j] - e) / tau);
                    }
                    let mut g = 0.0;
                    for i in 0..k {
                        let e = if i == j { 1.0 } else { 0.0 };
                        let ds = -2.0 * (alpha.alpha[j] - e) / tau;
                        g += values[i] * w[i] * (ds - mean_ds);
                    }
                    grad[j] = g;
                }
                grad
            }
        }
    }

    /// Materialize the blended field behind the [`SdfField`] trait.
    pub fn field(&self, alpha: &LatentCode) -> DecodedField {
        DecodedField { decoder: self.clone(), alpha: alpha.clone() }
    }
}

fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let m = logits.max();
    let exps = DVector::from_iterator(logits.len(), logits.iter().map(|&l| (l - m).exp()));
    let s: f64 = exps.iter().sum();
    exps / s
}

/// A decoded shape: a fixed code over a shared decoder.
#[derive(Clone)]
pub struct DecodedField {
    decoder: Decoder,
    alpha: LatentCode,
}

impl DecodedField {
    pub fn code(&self) -> &LatentCode {
        &self.alpha
    }
}

impl SdfField for DecodedField {
    fn eval(&self, p: Point3) -> f64 {
        self.decoder.eval(&self.alpha, p)
    }

    fn gradient(&self, p: Point3) -> Vector3<f64> {
        self.decoder.point_gradient(&self.alpha, p)
    }

    fn bounds(&self) -> Aabb {
        self.decoder.basis.bounds()
    }
}
