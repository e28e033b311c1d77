//! Experiment configuration: JSON blocks per command. Unknown keys are
//! rejected; missing keys fall back to defaults with a logged notice.

use crisp_core::certify::CertificateConfig;
use crisp_core::corrector::CorrectorConfig;
use crisp_core::io::DecoderKindConfig;
use crisp_core::sdf::UnionSdf;
use crisp_core::selftrain::{CorrectorKind, LearningRates};
use crisp_core::sim::{asymmetric_union, PerturbationModel, PoseSampling, SceneConfig};
use serde::Deserialize;

use crate::logging;

/// FNV-1a hash of the raw config bytes, stamped into every CSV.
pub fn config_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn notice(block: &str, key: &str, value: impl std::fmt::Debug) {
    logging::info(format!("config: {block}.{key} missing, using default {value:?}"));
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: Option<SceneBlock>,
    pub perturbation: Option<PerturbationBlock>,
    pub corrector: Option<CorrectorBlock>,
    pub certificate: Option<CertificateBlock>,
    pub selftrain: Option<SelftrainBlock>,
}

impl ExperimentConfig {
    pub fn parse(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBlock {
    pub n_points: Option<usize>,
    pub n_views: Option<usize>,
    pub n_objects: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub outlier_fraction: Option<f64>,
    pub outlier_radius: Option<f64>,
    pub pose_sampling: Option<PoseSampling>,
    pub hemisphere_culling: Option<bool>,
    pub explicit_view_poses: Option<Vec<[f64; 12]>>,
    pub seed: Option<u64>,
    /// Basis shapes; defaults to the built-in asymmetric family of four.
    pub basis: Option<Vec<UnionSdf>>,
    pub decoder: Option<DecoderKindConfig>,
}

pub struct ResolvedScene {
    pub config: SceneConfig,
    pub basis_shapes: Vec<UnionSdf>,
    pub decoder: DecoderKindConfig,
}

impl SceneBlock {
    pub fn resolve(self, seed_override: Option<u64>) -> ResolvedScene {
        let d = SceneConfig::default();
        let mut cfg = SceneConfig {
            n_points: self.n_points.unwrap_or_else(|| {
                notice("scene", "n_points", d.n_points);
                d.n_points
            }),
            n_views: self.n_views.unwrap_or_else(|| {
                notice("scene", "n_views", d.n_views);
                d.n_views
            }),
            n_objects: self.n_objects.unwrap_or_else(|| {
                notice("scene", "n_objects", d.n_objects);
                d.n_objects
            }),
            noise_sigma: self.noise_sigma.unwrap_or_else(|| {
                notice("scene", "noise_sigma", d.noise_sigma);
                d.noise_sigma
            }),
            outlier_fraction: self.outlier_fraction.unwrap_or_else(|| {
                notice("scene", "outlier_fraction", d.outlier_fraction);
                d.outlier_fraction
            }),
            outlier_radius: self.outlier_radius.unwrap_or_else(|| {
                notice("scene", "outlier_radius", d.outlier_radius);
                d.outlier_radius
            }),
            pose_sampling: self.pose_sampling.unwrap_or_else(|| {
                notice("scene", "pose_sampling", "default bounds");
                d.pose_sampling.clone()
            }),
            hemisphere_culling: self.hemisphere_culling.unwrap_or_else(|| {
                notice("scene", "hemisphere_culling", d.hemisphere_culling);
                d.hemisphere_culling
            }),
            explicit_view_poses: self.explicit_view_poses,
            seed: self.seed.unwrap_or_else(|| {
                notice("scene", "seed", d.seed);
                d.seed
            }),
        };
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        let basis_shapes = self.basis.unwrap_or_else(|| {
            notice("scene", "basis", "asymmetric family of 4");
            (0..4).map(asymmetric_union).collect()
        });
        let decoder = self.decoder.unwrap_or_else(|| {
            notice("scene", "decoder", "linear");
            DecoderKindConfig::Linear
        });
        ResolvedScene { config: cfg, basis_shapes, decoder }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationBlock {
    pub z_noise_sigma: Option<f64>,
    pub pose_rotation_deg: Option<f64>,
    pub pose_translation: Option<f64>,
    pub code_magnitude: Option<f64>,
    pub seed: Option<u64>,
}

impl PerturbationBlock {
    pub fn resolve(self) -> PerturbationModel {
        let d = PerturbationModel::default();
        PerturbationModel {
            z_noise_sigma: self.z_noise_sigma.unwrap_or_else(|| {
                notice("perturbation", "z_noise_sigma", d.z_noise_sigma);
                d.z_noise_sigma
            }),
            pose_rotation_deg: self.pose_rotation_deg.unwrap_or_else(|| {
                notice("perturbation", "pose_rotation_deg", d.pose_rotation_deg);
                d.pose_rotation_deg
            }),
            pose_translation: self.pose_translation.unwrap_or_else(|| {
                notice("perturbation", "pose_translation", d.pose_translation);
                d.pose_translation
            }),
            code_magnitude: self.code_magnitude.unwrap_or_else(|| {
                notice("perturbation", "code_magnitude", d.code_magnitude);
                d.code_magnitude
            }),
            seed: self.seed.unwrap_or_else(|| {
                notice("perturbation", "seed", d.seed);
                d.seed
            }),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorBlock {
    pub z_step: Option<f64>,
    pub z_iters: Option<usize>,
    pub h_step: Option<f64>,
    pub h_iters: Option<usize>,
    pub outer_rounds: Option<usize>,
    pub convergence_tol: Option<f64>,
}

impl CorrectorBlock {
    pub fn resolve(self) -> CorrectorConfig {
        let d = CorrectorConfig::default();
        CorrectorConfig {
            z_step: self.z_step.unwrap_or_else(|| {
                notice("corrector", "z_step", d.z_step);
                d.z_step
            }),
            z_iters: self.z_iters.unwrap_or_else(|| {
                notice("corrector", "z_iters", d.z_iters);
                d.z_iters
            }),
            h_step: self.h_step.unwrap_or_else(|| {
                notice("corrector", "h_step", d.h_step);
                d.h_step
            }),
            h_iters: self.h_iters.unwrap_or_else(|| {
                notice("corrector", "h_iters", d.h_iters);
                d.h_iters
            }),
            outer_rounds: self.outer_rounds.unwrap_or_else(|| {
                notice("corrector", "outer_rounds", d.outer_rounds);
                d.outer_rounds
            }),
            convergence_tol: self.convergence_tol.unwrap_or_else(|| {
                notice("corrector", "convergence_tol", d.convergence_tol);
                d.convergence_tol
            }),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateBlock {
    pub epsilon: Option<f64>,
    pub p: Option<f64>,
}

impl CertificateBlock {
    pub fn resolve(self) -> CertificateConfig {
        let d = CertificateConfig::default();
        CertificateConfig {
            epsilon: self.epsilon.unwrap_or_else(|| {
                notice("certificate", "epsilon", d.epsilon);
                d.epsilon
            }),
            p: self.p.unwrap_or_else(|| {
                notice("certificate", "p", d.p);
                d.p
            }),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftrainBlock {
    /// Rotation magnitude of the estimator's pose bias, degrees.
    pub pose_bias_deg: Option<f64>,
    /// Translation magnitude of the estimator's pose bias, meters.
    pub pose_bias_translation: Option<f64>,
    /// L2 magnitude of the zero-sum code bias.
    pub code_bias: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub lr_code: Option<f64>,
    pub lr_coords: Option<f64>,
    /// Corrector backing label generation: "bcd", "lsq", or "none".
    pub corrector: Option<String>,
    pub estimator_seed: Option<u64>,
}

pub struct ResolvedSelftrain {
    pub pose_bias_deg: f64,
    pub pose_bias_translation: f64,
    pub code_bias: f64,
    pub noise_sigma: f64,
    pub lr: LearningRates,
    pub kind: CorrectorKind,
    pub estimator_seed: u64,
}

impl SelftrainBlock {
    pub fn resolve(self) -> Result<ResolvedSelftrain, String> {
        let lr_default = LearningRates::default();
        let kind = match self.corrector.as_deref() {
            None => {
                notice("selftrain", "corrector", "bcd");
                CorrectorKind::Bcd
            }
            Some("bcd") => CorrectorKind::Bcd,
            Some("lsq") => CorrectorKind::Lsq,
            Some("none") => CorrectorKind::None,
            Some(other) => return Err(format!("unknown corrector kind {other:?}")),
        };
        Ok(ResolvedSelftrain {
            pose_bias_deg: self.pose_bias_deg.unwrap_or_else(|| {
                notice("selftrain", "pose_bias_deg", 5.0);
                5.0
            }),
            pose_bias_translation: self.pose_bias_translation.unwrap_or_else(|| {
                notice("selftrain", "pose_bias_translation", 0.0);
                0.0
            }),
            code_bias: self.code_bias.unwrap_or_else(|| {
                notice("selftrain", "code_bias", 0.15);
                0.15
            }),
            noise_sigma: self.noise_sigma.unwrap_or_else(|| {
                notice("selftrain", "noise_sigma", 0.0);
                0.0
            }),
            lr: LearningRates {
                code: self.lr_code.unwrap_or_else(|| {
                    notice("selftrain", "lr_code", lr_default.code);
                    lr_default.code
                }),
                coords: self.lr_coords.unwrap_or_else(|| {
                    notice("selftrain", "lr_coords", lr_default.coords);
                    lr_default.coords
                }),
            },
            kind,
            estimator_seed: self.estimator_seed.unwrap_or_else(|| {
                notice("selftrain", "estimator_seed", 0);
                0
            }),
        })
    }
}
