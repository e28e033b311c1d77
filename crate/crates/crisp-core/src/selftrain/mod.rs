//! Correct-and-certify self-training: pseudo-label generation through the
//! corrector and the certificate, and estimator adaptation on the certified
//! labels with separate learning-rate channels for the code and coordinate
//! heads. The shape decoder is never touched.

mod losses;

pub use losses::{
    sdf_loss, sdf_loss_gradients, soft_l1_loss, soft_l1_loss_gradient, SdfLossWeights,
    SOFT_L1_ZETA,
};

use nalgebra::{DVector, Vector3};
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use crate::certify::{oc_certificate, CertificateConfig};
use crate::corrector::{
    correct_bcd, correct_lsq, CorrectorConfig, MultiViewBuffer, ViewObservation,
};
use crate::error::Result;
use crate::geometry::{PointCloud, Pose, Twist};
use crate::shape::{project_simplex, Decoder, LatentCode, ShapeBasis};
use crate::sim::{derive_seed, Frame};

/// Which corrector backs pseudo-label generation. `None` certifies the raw
/// estimates directly (the no-corrector baseline).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrectorKind {
    Bcd,
    Lsq,
    None,
}

/// Learning rates of the two stochastic gradient channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub code: f64,
    pub coords: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates { code: 3e-4, coords: 3e-4 }
    }
}

/// A certified correction attached to a frame. Only certified corrections
/// become labels, so `certified` is true by construction.
#[derive(Clone, Debug)]
pub struct PseudoLabel {
    pub frame_index: usize,
    pub z: PointCloud,
    pub code: LatentCode,
    pub certified: bool,
}

/// Summary of one pseudo-label generation pass.
#[derive(Clone, Debug)]
pub struct LabelBatch {
    pub labels: Vec<PseudoLabel>,
    pub objects_total: usize,
    pub objects_certified: usize,
}

impl LabelBatch {
    pub fn certified_fraction(&self) -> f64 {
        if self.objects_total == 0 {
            0.0
        } else {
            self.objects_certified as f64 / self.objects_total as f64
        }
    }
}

/// Mean losses of an estimator update pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    pub mean_code: f64,
    pub mean_coords: f64,
}

/// One row of the self-training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub certified_fraction: f64,
    pub mean_loss_code: f64,
    pub mean_loss_coords: f64,
    pub bias_norm: f64,
}

/// A trainable pose/shape estimator. Predictions must be deterministic
/// given the frame and the current parameters.
pub trait Estimator {
    fn predict(&self, frame: &Frame) -> (PointCloud, LatentCode);

    /// One stochastic pass over the labeled frames; returns the mean losses
    /// measured at the pre-update parameters of each step.
    fn update(&mut self, dataset: &[Frame], labels: &[PseudoLabel], lr: &LearningRates) -> LossStats;

    /// Norm of the trainable parameters' deviation from ground truth; used
    /// by the epoch log. Estimators without an oracle reference return 0.
    fn parameter_norm(&self) -> f64 {
        0.0
    }
}

/// The domain gap as a parametric bias: a twist applied to the ground-truth
/// coordinates and an additive code offset before projection, plus optional
/// observation noise. With zero bias and noise the predictions equal ground
/// truth, which makes the self-training dynamics exactly checkable.
#[derive(Clone, Debug)]
pub struct BiasedOracleEstimator {
    pub pose_bias: Twist,
    pub code_bias: DVector<f64>,
    pub noise_sigma: f64,
    pub train_pose: bool,
    pub train_code: bool,
    pub seed: u64,
}

impl BiasedOracleEstimator {
    pub fn unbiased(k: usize, seed: u64) -> Self {
        BiasedOracleEstimator {
            pose_bias: Twist::zero(),
            code_bias: DVector::zeros(k),
            noise_sigma: 0.0,
            train_pose: true,
            train_code: true,
            seed,
        }
    }

    pub fn with_bias(pose_bias: Twist, code_bias: DVector<f64>, seed: u64) -> Self {
        BiasedOracleEstimator {
            pose_bias,
            code_bias,
            noise_sigma: 0.0,
            train_pose: true,
            train_code: true,
            seed,
        }
    }

    /// Seeded bias of given magnitudes: a rotation of `rotation_deg` about
    /// a random axis, a translation of length `translation`, and a zero-sum
    /// code offset of L2 norm `code_l2` (the all-ones code direction is
    /// unobservable through the simplex parameterization).
    pub fn seeded(
        k: usize,
        rotation_deg: f64,
        translation: f64,
        code_l2: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xb1a5]));
        let mut unit = || loop {
            let v = Vector3::new(
                rng.random_range(-1.0f64..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 1e-3 {
                break v.normalize();
            }
        };
        let axis = unit();
        let direction = unit();
        let mut code_bias =
            DVector::from_iterator(k, (0..k).map(|_| rng.random_range(-1.0f64..1.0)));
        if k > 1 {
            let mean = code_bias.iter().sum::<f64>() / k as f64;
            code_bias.apply(|v| *v -= mean);
        }
        let norm = code_bias.norm();
        if norm > 1e-12 {
            code_bias *= code_l2 / norm;
        }
        BiasedOracleEstimator {
            pose_bias: Twist::new(
                axis * (rotation_deg * std::f64::consts::PI / 180.0),
                direction * translation,
            ),
            code_bias,
            noise_sigma,
            train_pose: true,
            train_code: true,
            seed,
        }
    }

    fn bias_pose(&self) -> Pose {
        self.pose_bias.exp()
    }

    fn noise(&self, frame: &Frame) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
            self.seed,
            frame.object_id,
            frame.view_id as u64,
        ]));
        (0..frame.gt_z.len())
            .map(|_| {
                if self.noise_sigma > 0.0 {
                    Vector3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)) * self.noise_sigma
                } else {
                    Vector3::zeros()
                }
            })
            .collect()
    }

    fn predict_code(&self, frame: &Frame) -> LatentCode {
        LatentCode::new(project_simplex(&(&frame.gt_alpha.alpha + &self.code_bias)))
    }

    /// Loss gradients of one labeled frame at the current parameters:
    /// the coordinate loss gradient with respect to a left twist increment
    /// on the bias pose, and the code loss gradient with respect to the
    /// additive code bias (through the projection Jacobian).
    pub fn loss_gradients(
        &self,
        frame: &Frame,
        label: &PseudoLabel,
    ) -> (nalgebra::Vector6<f64>, DVector<f64>, f64, f64) {
        let bias = self.bias_pose();
        let noise = self.noise(frame);
        let mut loss_z = 0.0;
        let mut g_omega = Vector3::zeros();
        let mut g_v = Vector3::zeros();
        for ((gt, n), target) in frame.gt_z.iter().zip(noise.iter()).zip(label.z.iter()) {
            let rigid = bias.apply(*gt);
            let pred = rigid + n;
            let r = pred - target;
            loss_z += r.norm_squared();
            g_v += 2.0 * r;
            g_omega += 2.0 * rigid.cross(&r);
        }
        let twist_grad = nalgebra::Vector6::new(g_omega.x, g_omega.y, g_omega.z, g_v.x, g_v.y, g_v.z);

        let pred_code = self.predict_code(frame);
        let residual = &pred_code.alpha - &label.code.alpha;
        let loss_h = residual.norm_squared();
        // Jacobian of the simplex projection at the active face:
        // identity minus the uniform average over the support.
        let support: Vec<usize> = (0..pred_code.dim()).filter(|&i| pred_code.alpha[i] > 0.0).collect();
        let mut code_grad = DVector::zeros(self.code_bias.len());
        if !support.is_empty() {
            let mean: f64 = support.iter().map(|&i| 2.0 * residual[i]).sum::<f64>() / support.len() as f64;
            for &i in &support {
                code_grad[i] = 2.0 * residual[i] - mean;
            }
        }
        (twist_grad, code_grad, loss_h, loss_z)
    }

    /// Stacked norm of the pose and code biases.
    pub fn bias_norm(&self) -> f64 {
        (self.pose_bias.norm().powi(2) + self.code_bias.norm_squared()).sqrt()
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl Estimator for BiasedOracleEstimator {
    fn predict(&self, frame: &Frame) -> (PointCloud, LatentCode) {
        let bias = self.bias_pose();
        let noise = self.noise(frame);
        let z = PointCloud::new(
            frame
                .gt_z
                .iter()
                .zip(noise.iter())
                .map(|(p, n)| bias.apply(*p) + n)
                .collect(),
        );
        (z, self.predict_code(frame))
    }

    fn update(&mut self, dataset: &[Frame], labels: &[PseudoLabel], lr: &LearningRates) -> LossStats {
        let mut stats = LossStats::default();
        if labels.is_empty() {
            return stats;
        }
        for label in labels {
            debug_assert!(label.certified, "training consumes certified labels only");
            let frame = &dataset[label.frame_index];
            let (twist_grad, code_grad, loss_h, loss_z) = self.loss_gradients(frame, label);
            stats.mean_code += loss_h;
            stats.mean_coords += loss_z;
            if self.train_pose {
                let step = Twist::new(
                    Vector3::new(twist_grad[0], twist_grad[1], twist_grad[2]) * -lr.coords,
                    Vector3::new(twist_grad[3], twist_grad[4], twist_grad[5]) * -lr.coords,
                );
                self.pose_bias = step.exp().compose(&self.pose_bias.exp()).log();
            }
            if self.train_code {
                self.code_bias -= code_grad * lr.code;
            }
        }
        stats.mean_code /= labels.len() as f64;
        stats.mean_coords /= labels.len() as f64;
        stats
    }

    fn parameter_norm(&self) -> f64 {
        self.bias_norm()
    }
}

/// Predict, correct, certify: group the dataset by object, run the chosen
/// corrector over each object's multi-view buffer, certify the aggregated
/// correction, and emit one label per frame of every certified object.
pub fn generate_pseudo_labels<E: Estimator>(
    dataset: &[Frame],
    estimator: &E,
    kind: CorrectorKind,
    basis: &ShapeBasis,
    decoder: &Decoder,
    corrector_cfg: &CorrectorConfig,
    cert_cfg: &CertificateConfig,
) -> Result<LabelBatch> {
    let mut object_ids: Vec<u64> = dataset.iter().map(|f| f.object_id).collect();
    object_ids.sort_unstable();
    object_ids.dedup();

    let mut labels = Vec::new();
    let mut objects_certified = 0;
    for &object_id in &object_ids {
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset[i].object_id == object_id)
            .collect();

        let mut code_est = None;
        let mut buffer = MultiViewBuffer::new(object_id);
        for &i in &members {
            let (z, code) = estimator.predict(&dataset[i]);
            buffer.push(ViewObservation { x: dataset[i].x.clone(), z });
            code_est.get_or_insert(code);
        }
        let code_est = code_est.expect("nonempty object");

        let (certified, per_frame) = match kind {
            CorrectorKind::None => {
                // Baseline: certify the raw estimates themselves.
                let z_all = PointCloud::concat(buffer.views().map(|v| &v.z));
                let ok = oc_certificate(&z_all, &code_est, decoder, cert_cfg);
                let per: Vec<(PointCloud, LatentCode)> = buffer
                    .views()
                    .map(|v| (v.z.clone(), code_est.clone()))
                    .collect();
                (ok, per)
            }
            CorrectorKind::Bcd | CorrectorKind::Lsq => {
                let mut result = if kind == CorrectorKind::Bcd {
                    correct_bcd(&buffer, &code_est, decoder, corrector_cfg)?
                } else {
                    correct_lsq(&buffer, &code_est, basis, decoder, corrector_cfg)?
                };
                let ok = oc_certificate(&result.z_hat, result.code.code(), decoder, cert_cfg);
                result.certified = Some(ok);
                let code = result.code.code().clone();
                let per: Vec<(PointCloud, LatentCode)> = result
                    .views
                    .iter()
                    .map(|v| (v.z_hat.clone(), code.clone()))
                    .collect();
                (ok, per)
            }
        };

        if certified {
            objects_certified += 1;
            for (&frame_index, (z, code)) in members.iter().zip(per_frame) {
                labels.push(PseudoLabel { frame_index, z, code, certified: true });
            }
        }
    }
    Ok(LabelBatch {
        labels,
        objects_total: object_ids.len(),
        objects_certified,
    })
}

/// One self-training epoch: regenerate pseudo-labels from the current
/// estimator, then run the estimator update on them. Labels are regenerated
/// every epoch rather than accumulated.
#[allow(clippy::too_many_arguments)]
pub fn self_train_epoch<E: Estimator>(
    estimator: &mut E,
    dataset: &[Frame],
    kind: CorrectorKind,
    basis: &ShapeBasis,
    decoder: &Decoder,
    corrector_cfg: &CorrectorConfig,
    cert_cfg: &CertificateConfig,
    lr: &LearningRates,
    epoch: usize,
) -> Result<EpochStats> {
    let batch = generate_pseudo_labels(dataset, estimator, kind, basis, decoder, corrector_cfg, cert_cfg)?;
    let stats = estimator.update(dataset, &batch.labels, lr);
    Ok(EpochStats {
        epoch,
        certified_fraction: batch.certified_fraction(),
        mean_loss_code: stats.mean_code,
        mean_loss_coords: stats.mean_coords,
        bias_norm: estimator.parameter_norm(),
    })
}

#[cfg(test)]
mod tests;
