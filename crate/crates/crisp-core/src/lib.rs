//! Pose and shape correction over signed-distance-field shape models.
//!
//! The crate provides, bottom up:
//!
//! * [`sdf`] — analytic and grid-sampled signed distance fields with
//!   gradients, surface sampling, and a binary grid format.
//! * [`geometry`] — rigid/similarity point-set alignment, SE(3) exp/log,
//!   and the ADD-S / Chamfer evaluation metrics.
//! * [`shape`] — a K-element SDF basis with barycentric latent codes,
//!   blend decoders, simplex projection, and the active-shape machinery.
//! * [`corrector`] — the bi-level pose/shape corrector with a block
//!   coordinate descent solver and a constrained least-squares solver.
//! * [`certify`] — the observable-correctness certificate and the
//!   spectral shape-degeneracy check.
//! * [`selftrain`] — correct-and-certify pseudo-labeling and estimator
//!   adaptation, plus the supervised loss functions.
//! * [`sim`] — synthetic scene generation with exact ground truth.
//! * [`io`] — file formats: grid SDF binary, point-cloud CSV, basis
//!   manifests, scene directories, result JSON, and CSV reports.

pub mod certify;
pub mod corrector;
pub mod error;
pub mod geometry;
pub mod io;
pub mod sdf;
pub mod selftrain;
pub mod shape;
pub mod sim;

pub use error::{Error, Result};
