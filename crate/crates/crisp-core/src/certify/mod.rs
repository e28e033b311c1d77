//! Observable-correctness certification and the spectral shape-degeneracy
//! check.

mod jacobi;

pub use jacobi::jacobi_eigen;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::shape::{Decoder, LatentCode};

/// Thresholds for the observable-correctness check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    /// SDF residual threshold (meters).
    pub epsilon: f64,
    /// Quantile level in (0, 1].
    pub p: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        CertificateConfig { epsilon: 1e-2, p: 0.98 }
    }
}

impl CertificateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("certificate epsilon must be positive"));
        }
        if !(self.p.is_finite() && self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::invalid("certificate quantile must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Nearest-rank quantile: element at 1-based index `ceil(p n)` of the
/// sorted residuals. Exact on small n and monotone in both arguments.
pub fn nearest_rank_quantile(residuals: &[f64], p: f64) -> f64 {
    assert!(!residuals.is_empty(), "quantile of an empty set");
    assert!(p > 0.0 && p <= 1.0);
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Observable-correctness certificate on precomputed residuals: true when
/// the p-quantile of the absolute residuals falls below epsilon.
pub fn oc_from_residuals(residuals: &[f64], cfg: &CertificateConfig) -> bool {
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    nearest_rank_quantile(&abs, cfg.p) < cfg.epsilon
}

/// Observable-correctness certificate of a corrected estimate: geometric
/// consistency of the corrected coordinates with the decoded shape,
/// tolerant to an outlier tail up to the quantile level.
pub fn oc_certificate(
    z_hat: &PointCloud,
    code_hat: &LatentCode,
    decoder: &Decoder,
    cfg: &CertificateConfig,
) -> bool {
    assert!(!z_hat.is_empty(), "certificate requires points");
    let residuals: Vec<f64> = z_hat.iter().map(|p| decoder.eval(code_hat, *p).abs()).collect();
    nearest_rank_quantile(&residuals, cfg.p) < cfg.epsilon
}

/// Spectral summary of the shape matrix `F`: the smallest eigenvalue of the
/// Gram matrix `F^T F` signals whether the shape solve has a unique answer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub lambda_min: f64,
    /// Ratio `lambda_max / lambda_min`; infinite when `lambda_min <= 0`.
    pub gram_condition: f64,
    pub is_degenerate: bool,
    /// The threshold that was actually applied.
    pub threshold: f64,
}

/// Relative factor of the default degeneracy threshold:
/// `1e-6 * mean(diag(F^T F))`.
pub const DEGENERACY_RELATIVE_THRESHOLD: f64 = 1e-6;

/// Build the Gram matrix of `F`, diagonalize it with the Jacobi solver, and
/// flag degeneracy when the smallest eigenvalue falls under `threshold`
/// (default: scale-relative rule above).
pub fn degeneracy_report(f: &DMatrix<f64>, threshold: Option<f64>) -> DegeneracyReport {
    assert!(f.nrows() >= 1, "degeneracy check requires at least one row");
    let gram = f.transpose() * f;
    let (values, _) = jacobi_eigen(&gram);
    let lambda_min = values[0];
    let lambda_max = values[values.len() - 1];
    let threshold = threshold.unwrap_or_else(|| {
        let mean_diag = gram.diagonal().iter().sum::<f64>() / gram.nrows() as f64;
        DEGENERACY_RELATIVE_THRESHOLD * mean_diag
    });
    let gram_condition = if lambda_min > 0.0 {
        lambda_max / lambda_min
    } else {
        f64::INFINITY
    };
    DegeneracyReport {
        lambda_min,
        gram_condition,
        is_degenerate: lambda_min < threshold,
        threshold,
    }
}
