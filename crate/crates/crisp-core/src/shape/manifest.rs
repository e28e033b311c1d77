//! JSON manifest for shape bases: primitive kinds, parameters, and
//! precomputed diameters.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ShapeBasis;
use crate::error::Result;
use crate::sdf::UnionSdf;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BasisManifest {
    pub shapes: Vec<UnionSdf>,
    pub diameters: Vec<f64>,
}

impl BasisManifest {
    pub fn from_basis(basis: &ShapeBasis) -> Self {
        BasisManifest {
            shapes: basis.fields().to_vec(),
            diameters: basis.diameters().to_vec(),
        }
    }

    pub fn into_basis(self) -> Result<Arc<ShapeBasis>> {
        ShapeBasis::with_diameters(self.shapes, self.diameters)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Parse and validate a basis manifest from JSON bytes.
pub fn parse_basis_manifest(bytes: &[u8]) -> Result<Arc<ShapeBasis>> {
    let manifest: BasisManifest = serde_json::from_slice(bytes)?;
    manifest.into_basis()
}
