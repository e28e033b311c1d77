//! Active-shape machinery: the per-point value matrix over candidate fields
//! and the diagonally normalized active decoder.

use nalgebra::{DMatrix, DVector};

use super::{LatentCode, ShapeBasis};
use crate::geometry::PointCloud;
use crate::sdf::SdfField;
use crate::shape::Decoder;

/// Coefficients of the active shape decoder: a `(K+1)`-vector on the
/// simplex, with `c_0` weighting the estimator-provided code column.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveShapeCoeffs {
    pub c: DVector<f64>,
}

impl ActiveShapeCoeffs {
    pub fn new(c: DVector<f64>) -> Self {
        ActiveShapeCoeffs { c }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn is_simplex(&self) -> bool {
        self.c.iter().all(|&x| x >= 0.0) && (self.c.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }
}

/// Diagonal normalization `D = diag(d_0 .. d_K)` where each entry is the
/// inverse bounding-box diameter of the corresponding column's field.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfScale {
    pub inv_diameters: DVector<f64>,
}

impl SdfScale {
    /// `d_0` from the decoded estimator field, `d_1 .. d_K` from the basis.
    pub fn new(estimator_diameter: f64, basis: &ShapeBasis) -> Self {
        let mut d = DVector::zeros(basis.k() + 1);
        d[0] = 1.0 / estimator_diameter;
        for k in 0..basis.k() {
            d[k + 1] = 1.0 / basis.diameter(k);
        }
        SdfScale { inv_diameters: d }
    }

    /// The identity scaling (no normalization).
    pub fn identity(dim: usize) -> Self {
        SdfScale { inv_diameters: DVector::from_element(dim, 1.0) }
    }

    pub fn dim(&self) -> usize {
        self.inv_diameters.len()
    }
}

/// Build the `n x (K+1)` matrix of field values at the points of `z`:
/// column 0 evaluates the decoder at the estimator-provided code, columns
/// `1..=K` evaluate the basis fields.
pub fn shape_matrix(
    z: &PointCloud,
    basis: &ShapeBasis,
    code_est: &LatentCode,
    decoder: &Decoder,
) -> DMatrix<f64> {
    assert!(!z.is_empty(), "shape matrix needs at least one point");
    assert_eq!(basis.k(), decoder.k(), "basis and decoder must agree");
    let n = z.len();
    let k = basis.k();
    let mut f = DMatrix::zeros(n, k + 1);
    for (i, p) in z.iter().enumerate() {
        f[(i, 0)] = decoder.eval(code_est, *p);
        for j in 0..k {
            f[(i, j + 1)] = basis.field(j).eval(*p);
        }
    }
    f
}

/// The `n x K` block of basis-field values at the points of `z`.
///
/// For the blend decoders of this crate the estimator column of
/// [`shape_matrix`] is an exact linear combination of the basis columns, so
/// spectral identifiability checks run on this block (a neural decoder's
/// column would carry independent information instead).
pub fn basis_matrix(z: &PointCloud, basis: &ShapeBasis) -> DMatrix<f64> {
    assert!(!z.is_empty(), "basis matrix needs at least one point");
    let n = z.len();
    let k = basis.k();
    let mut f = DMatrix::zeros(n, k);
    for (i, p) in z.iter().enumerate() {
        for j in 0..k {
            f[(i, j)] = basis.field(j).eval(*p);
        }
    }
    f
}

/// Value of the active shape decoder for one matrix row:
/// `sum_k c_k d_k F_k`.
pub fn active_eval(coeffs: &ActiveShapeCoeffs, f_row: &[f64], scale: &SdfScale) -> f64 {
    assert_eq!(coeffs.dim(), f_row.len());
    assert_eq!(coeffs.dim(), scale.dim());
    f_row
        .iter()
        .enumerate()
        .map(|(i, v)| coeffs.c[i] * scale.inv_diameters[i] * v)
        .sum()
}
