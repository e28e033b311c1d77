//! Synthetic scenes with exact ground truth: shapes as basis blends, poses,
//! depth sampling with noise and outliers, and perturbed stand-ins for
//! network estimates.

use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::corrector::CorrectionResult;
use crate::error::{Error, Result};
use crate::geometry::{adds, chamfer, ChamferNorm, PointCloud, Pose, Twist};
use crate::sdf::{sample_surface, Point3, SdfField};
use crate::shape::{project_simplex, Decoder, LatentCode};

/// Mix independent stream labels into one RNG seed. Streams derived from
/// (seed, index...) stay deterministic under parallel scene generation.
pub fn derive_seed(parts: &[u64]) -> u64 {
    // FNV-1a over the little-endian words.
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for b in part.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; the pairing keeps draws deterministic per call.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng)) * sigma
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn uniform_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Pose sampling bounds for scene generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSampling {
    pub max_rotation_deg: f64,
    pub translation_min: [f64; 3],
    pub translation_max: [f64; 3],
}

impl Default for PoseSampling {
    fn default() -> Self {
        // The camera center maps to the translation in the normalized
        // frame; keep it outside unit-scale objects so hemisphere culling
        // has a visible side to keep.
        PoseSampling {
            max_rotation_deg: 180.0,
            translation_min: [-1.0, -1.0, 1.5],
            translation_max: [1.0, 1.0, 3.0],
        }
    }
}

/// Scene generation parameters; deterministic under `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub n_points: usize,
    pub n_views: usize,
    pub n_objects: usize,
    /// Depth noise (meters) added in the camera frame.
    pub noise_sigma: f64,
    /// Fraction of points replaced by outliers, in [0, 1).
    pub outlier_fraction: f64,
    /// Outliers are uniform in a ball of this radius around the centroid.
    pub outlier_radius: f64,
    pub pose_sampling: PoseSampling,
    /// Keep only surface points whose outward normal faces the camera.
    pub hemisphere_culling: bool,
    /// Overrides pose sampling per view when present (flat 12-number poses).
    pub explicit_view_poses: Option<Vec<[f64; 12]>>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_points: 200,
            n_views: 1,
            n_objects: 1,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            outlier_radius: 0.5,
            pose_sampling: PoseSampling::default(),
            hemisphere_culling: true,
            explicit_view_poses: None,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_views < 1 || self.n_objects < 1 {
            return Err(Error::invalid("scene needs at least one view and object"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier fraction must lie in [0, 1)"));
        }
        let outliers = (self.outlier_fraction * self.n_points as f64).floor() as usize;
        if self.n_points - outliers < 3 {
            return Err(Error::invalid("need at least 3 inlier points per view"));
        }
        if !(self.noise_sigma >= 0.0 && self.outlier_radius > 0.0) {
            return Err(Error::invalid("noise must be >= 0 and outlier radius > 0"));
        }
        if let Some(poses) = &self.explicit_view_poses {
            if poses.len() != self.n_views {
                return Err(Error::invalid("explicit poses must cover every view"));
            }
        }
        let max_rot = self.pose_sampling.max_rotation_deg;
        if !max_rot.is_finite() || max_rot < 0.0 {
            return Err(Error::invalid("max rotation must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One observation of one object: camera-frame depth points plus exact
/// ground truth. `gt_z_i = R_gt x_i + t_gt` holds exactly by construction,
/// also for noisy and outlier points.
#[derive(Clone, Debug)]
pub struct Frame {
    pub object_id: u64,
    pub view_id: u32,
    /// Depth cloud in the camera frame (noise and outliers included).
    pub x: PointCloud,
    pub gt_pose: Pose,
    pub gt_alpha: LatentCode,
    /// The ground-truth pose applied to `x`.
    pub gt_z: PointCloud,
    pub outlier_indices: Vec<usize>,
}

/// Perturbation magnitudes standing in for network estimation error.
/// Zero perturbation reproduces ground truth exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationModel {
    /// Per-point Gaussian noise on the coordinates (meters).
    pub z_noise_sigma: f64,
    /// Rigid perturbation applied to the coordinates: rotation magnitude.
    pub pose_rotation_deg: f64,
    /// Rigid perturbation: translation magnitude (meters).
    pub pose_translation: f64,
    /// Code offset magnitude (simplex L1 scale) before re-projection.
    pub code_magnitude: f64,
    pub seed: u64,
}

impl Default for PerturbationModel {
    fn default() -> Self {
        PerturbationModel {
            z_noise_sigma: 0.0,
            pose_rotation_deg: 0.0,
            pose_translation: 0.0,
            code_magnitude: 0.0,
            seed: 0,
        }
    }
}

fn sample_pose(rng: &mut ChaCha8Rng, bounds: &PoseSampling) -> Pose {
    let axis = random_unit(rng);
    let angle = rng.random_range(0.0..=(bounds.max_rotation_deg.max(1e-12) * std::f64::consts::PI / 180.0));
    let t = Vector3::new(
        rng.random_range(bounds.translation_min[0]..=bounds.translation_max[0]),
        rng.random_range(bounds.translation_min[1]..=bounds.translation_max[1]),
        rng.random_range(bounds.translation_min[2]..=bounds.translation_max[2]),
    );
    let rot = Twist::new(axis * angle, Vector3::zeros()).exp();
    Pose::from_parts(*rot.rotation(), t)
}

/// Uniform code on the simplex (normalized exponential gaps), snapped to
/// exact feasibility.
fn sample_simplex(rng: &mut ChaCha8Rng, k: usize) -> LatentCode {
    let raw = DVector::from_iterator(k, (0..k).map(|_| {
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        -u.ln()
    }));
    let total: f64 = raw.iter().sum();
    LatentCode::new(project_simplex(&(raw / total)))
}

/// Visible surface points for one view: samples of the zero level set kept
/// when the outward normal faces the camera center (which sits at `t_gt` in
/// the pose-normalized frame).
fn visible_surface_points(
    field: &dyn SdfField,
    pose: &Pose,
    n: usize,
    cull: bool,
    seed: u64,
) -> Result<Vec<Point3>> {
    let camera = pose.translation();
    let mut out = Vec::with_capacity(n);
    for batch in 0..50u64 {
        let pts = sample_surface(field, n.max(64), derive_seed(&[seed, batch]))?;
        for p in pts {
            if !cull || field.gradient(p).dot(&(camera - p)) > 0.0 {
                out.push(p);
                if out.len() == n {
                    return Ok(out);
                }
            }
        }
    }
    Err(Error::SurfaceNotFound { requested: n, converged: out.len() })
}

/// Generate the frames of a single object across `n_views` views.
pub fn make_scene(decoder: &Decoder, cfg: &SceneConfig) -> Result<Vec<Frame>> {
    make_object_frames(decoder, cfg, 0)
}

/// Generate one object's frames with an RNG stream derived from
/// `(seed, object_index)`, so scene sets can be generated in parallel.
pub fn make_object_frames(
    decoder: &Decoder,
    cfg: &SceneConfig,
    object_index: u64,
) -> Result<Vec<Frame>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, object_index]));
    let gt_alpha = sample_simplex(&mut rng, decoder.k());
    let field = decoder.field(&gt_alpha);

    let mut frames = Vec::with_capacity(cfg.n_views);
    for view in 0..cfg.n_views {
        let gt_pose = match &cfg.explicit_view_poses {
            Some(poses) => Pose::from_flat(&poses[view])?,
            None => sample_pose(&mut rng, &cfg.pose_sampling),
        };
        let surface = visible_surface_points(
            &field,
            &gt_pose,
            cfg.n_points,
            cfg.hemisphere_culling,
            derive_seed(&[cfg.seed, object_index, view as u64, 0xfeed]),
        )?;

        // Camera-frame depth: x = R^T (z - t), then noise and outliers.
        let inv = gt_pose.inverse();
        let mut x: Vec<Point3> = surface.iter().map(|z| inv.apply(*z)).collect();
        if cfg.noise_sigma > 0.0 {
            for p in &mut x {
                *p += gaussian_vec(&mut rng, cfg.noise_sigma);
            }
        }
        let n_outliers = (cfg.outlier_fraction * cfg.n_points as f64).floor() as usize;
        let mut outlier_indices = Vec::with_capacity(n_outliers);
        if n_outliers > 0 {
            let centroid = x.iter().fold(Point3::zeros(), |a, p| a + p) / x.len() as f64;
            let mut order: Vec<usize> = (0..x.len()).collect();
            for i in 0..n_outliers {
                let j = rng.random_range(i..order.len());
                order.swap(i, j);
            }
            outlier_indices = order[..n_outliers].to_vec();
            outlier_indices.sort_unstable();
            for &i in &outlier_indices {
                x[i] = centroid + uniform_ball(&mut rng, cfg.outlier_radius);
            }
        }

        let x = PointCloud::new(x);
        let gt_z = x.transformed(&gt_pose);
        frames.push(Frame {
            object_id: object_index,
            view_id: view as u32,
            x,
            gt_pose,
            gt_alpha: gt_alpha.clone(),
            gt_z,
            outlier_indices,
        });
    }
    Ok(frames)
}

/// Perturbed coordinate/code estimates for a frame: a rigid offset plus
/// per-point noise on the coordinates, and a zero-sum code offset followed
/// by simplex projection.
pub fn synthetic_estimates(frame: &Frame, pm: &PerturbationModel) -> (PointCloud, LatentCode) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        pm.seed,
        frame.object_id,
        frame.view_id as u64,
    ]));

    let angle = pm.pose_rotation_deg * std::f64::consts::PI / 180.0;
    let delta = Twist::new(random_unit(&mut rng) * angle, random_unit(&mut rng) * pm.pose_translation).exp();
    let mut z = frame.gt_z.transformed(&delta);
    if pm.z_noise_sigma > 0.0 {
        for p in &mut z.points {
            *p += gaussian_vec(&mut rng, pm.z_noise_sigma);
        }
    }

    let k = frame.gt_alpha.dim();
    let alpha = if pm.code_magnitude > 0.0 && k > 1 {
        // Zero-sum direction: the all-ones component is invisible through
        // the simplex parameterization, so the offset stays observable.
        let mut dir = DVector::from_iterator(k, (0..k).map(|_| rng.random_range(-1.0f64..1.0)));
        let mean = dir.iter().sum::<f64>() / k as f64;
        dir.apply(|v| *v -= mean);
        let l1: f64 = dir.iter().map(|v| v.abs()).sum();
        if l1 > 1e-12 {
            dir *= pm.code_magnitude / l1;
        }
        LatentCode::new(project_simplex(&(&frame.gt_alpha.alpha + dir)))
    } else {
        frame.gt_alpha.clone()
    };
    (z, alpha)
}

/// Per-frame evaluation record, all lengths in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub adds: f64,
    pub chamfer_l1: f64,
    pub chamfer_l2: f64,
    pub code_error: f64,
    pub rotation_error_deg: f64,
    pub translation_error: f64,
}

/// Number of surface samples used for metric evaluation.
const EVAL_SAMPLES: usize = 400;

/// Evaluate a correction against a frame's ground truth: ADD-S on the pose,
/// Chamfer (L1 and L2) between decoded and true surfaces, code error, and
/// raw pose errors. `view_index` selects the view inside the result.
pub fn evaluate_correction(
    result: &CorrectionResult,
    view_index: usize,
    frame: &Frame,
    decoder: &Decoder,
) -> Result<MetricsRecord> {
    let pose_est = &result
        .views
        .get(view_index)
        .ok_or_else(|| Error::invalid("view index out of range"))?
        .pose;
    evaluate_pose_and_code(pose_est, result.code.code(), frame, decoder)
}

/// Evaluation shared by corrected and uncorrected estimates.
pub fn evaluate_pose_and_code(
    pose_est: &Pose,
    code_est: &LatentCode,
    frame: &Frame,
    decoder: &Decoder,
) -> Result<MetricsRecord> {
    // Common random numbers: sampling both surfaces with one seed makes a
    // perfect code score exactly zero and reduces variance otherwise.
    let gt_field = decoder.field(&frame.gt_alpha);
    let gt_surface = PointCloud::new(sample_surface(&gt_field, EVAL_SAMPLES, 0x6e0a)?);

    let est_field = decoder.field(code_est);
    let est_surface = PointCloud::new(sample_surface(&est_field, EVAL_SAMPLES, 0x6e0a)?);

    Ok(MetricsRecord {
        adds: adds(pose_est, &frame.gt_pose, &gt_surface),
        chamfer_l1: chamfer(&est_surface, &gt_surface, ChamferNorm::L1),
        chamfer_l2: chamfer(&est_surface, &gt_surface, ChamferNorm::L2),
        code_error: (&code_est.alpha - &frame.gt_alpha.alpha).norm(),
        rotation_error_deg: pose_est.rotation_angle_to(&frame.gt_pose) * 180.0 / std::f64::consts::PI,
        translation_error: pose_est.translation_distance_to(&frame.gt_pose),
    })
}

/// A small family of asymmetric composite shapes used by experiment
/// configurations and tests; every variant is sphere-free and has no
/// rotational symmetry.
///
/// Each variant's first part covers the origin, so every simplex blend of
/// the family keeps a negative core and a nonempty zero level set (a convex
/// combination of disjoint shapes' SDFs can otherwise be positive
/// everywhere).
pub fn asymmetric_union(variant: usize) -> crate::sdf::UnionSdf {
    use crate::sdf::{AnalyticPrimitive, PrimitiveShape, UnionSdf};
    let v = variant % 4;
    match v {
        0 => UnionSdf::new(vec![
            AnalyticPrimitive::capsule(0.5, 0.2),
            AnalyticPrimitive::with_offset(
                PrimitiveShape::Box { half_extents: [0.3, 0.18, 0.12] },
                Point3::new(0.3, 0.25, -0.4),
            ),
        ]),
        1 => UnionSdf::new(vec![
            AnalyticPrimitive::cuboid(0.45, 0.3, 0.2),
            AnalyticPrimitive::with_offset(
                PrimitiveShape::Capsule { half_length: 0.35, radius: 0.12 },
                Point3::new(-0.3, 0.3, 0.3),
            ),
        ]),
        2 => UnionSdf::new(vec![
            AnalyticPrimitive::with_offset(
                PrimitiveShape::Box { half_extents: [0.25, 0.12, 0.45] },
                Point3::new(0.1, 0.05, 0.1),
            ),
            AnalyticPrimitive::torus(0.5, 0.15),
        ]),
        _ => UnionSdf::new(vec![
            AnalyticPrimitive::capsule(0.4, 0.25),
            AnalyticPrimitive::with_offset(
                PrimitiveShape::Torus { major_radius: 0.35, minor_radius: 0.1 },
                Point3::new(0.35, -0.3, 0.2),
            ),
        ]),
    }
}
