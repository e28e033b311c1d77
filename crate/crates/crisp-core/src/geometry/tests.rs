use super::*;
use crate::error::Error;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use std::f64::consts::PI;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                )
            })
            .collect(),
    )
}

pub(crate) fn random_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Matrix3<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize();
    let angle = rng.random_range(0.0..PI);
    Twist::new(axis * angle, Vector3::zeros()).exp().rotation().clone_owned()
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let r = random_rotation(rng);
    let t = Vector3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    );
    Pose::from_parts(r, t)
}

#[test]
fn rigid_fit_identity_and_translation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_cloud(&mut rng, 20, 1.0);

    let pose = fit_rigid(&x, &x).unwrap();
    assert!((pose.rotation() - nalgebra::Matrix3::identity()).norm() < 1e-12);
    assert!(pose.translation().norm() < 1e-12);

    let t = Vector3::new(1.0, 2.0, 3.0);
    let z = PointCloud::new(x.iter().map(|p| p + t).collect());
    let pose = fit_rigid(&x, &z).unwrap();
    assert!((pose.rotation() - nalgebra::Matrix3::identity()).norm() < 1e-9);
    assert!((pose.translation() - t).norm() < 1e-9);
}

#[test]
fn rigid_fit_recovers_planted_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let x = random_cloud(&mut rng, 50, 1.0);
        let planted = random_pose(&mut rng);
        let z = x.transformed(&planted);
        let fit = fit_rigid(&x, &z).unwrap();
        assert!((fit.rotation() - planted.rotation()).norm() < 1e-9);
        assert!((fit.translation() - planted.translation()).norm() < 1e-9);
    }
}

#[test]
fn rigid_fit_residual_beats_random_challengers() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = random_cloud(&mut rng, 30, 1.0);
        let mut z = x.transformed(&random_pose(&mut rng));
        for p in &mut z.points {
            *p += Vector3::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
            );
        }
        let fit = fit_rigid(&x, &z).unwrap();
        let best = rigid_residual(&fit, &x, &z);
        for _ in 0..100 {
            let challenger = random_pose(&mut rng);
            assert!(rigid_residual(&challenger, &x, &z) >= best - 1e-9);
        }
    }
}

#[test]
fn rigid_fit_never_returns_reflection() {
    // Planar points with mirrored targets push the unconstrained optimum
    // toward a reflection; the solver must stay in SO(3).
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let x = PointCloud::new(
            (0..25)
                .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0))
                .collect(),
        );
        let z = PointCloud::new(x.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect());
        let fit = fit_rigid(&x, &z).unwrap();
        assert!((fit.rotation().determinant() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn rigid_fit_rejects_collinear() {
    let x = PointCloud::new((0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect());
    let z = PointCloud::new(x.iter().map(|p| p + Vector3::new(0.0, 1.0, 0.0)).collect());
    match fit_rigid(&x, &z) {
        Err(Error::DegenerateConfiguration(_)) => {}
        other => panic!("expected DegenerateConfiguration, got {other:?}"),
    }
}

#[test]
fn similarity_fit_trivial_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_cloud(&mut rng, 20, 1.0);

    let z = PointCloud::new(x.iter().map(|p| p * 2.0).collect());
    let sim = fit_similarity(&x, &z).unwrap();
    assert!((sim.scale - 2.0).abs() < 1e-12);
    assert!((sim.rotation - nalgebra::Matrix3::identity()).norm() < 1e-12);
    assert!(sim.translation.norm() < 1e-12);

    let sim = fit_similarity(&x, &x).unwrap();
    assert!((sim.scale - 1.0).abs() < 1e-12);
}

#[test]
fn similarity_fit_recovers_planted_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let x = random_cloud(&mut rng, 40, 1.0);
        let planted = SimPose {
            scale: rng.random_range(0.2..4.0),
            rotation: random_rotation(&mut rng),
            translation: Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ),
        };
        let z = PointCloud::new(x.iter().map(|p| planted.apply(*p)).collect());
        let fit = fit_similarity(&x, &z).unwrap();
        assert!((fit.scale - planted.scale).abs() < 1e-9);
        assert!((fit.rotation - planted.rotation).norm() < 1e-9);
        assert!((fit.translation - planted.translation).norm() < 1e-9);
    }
}

#[test]
fn similarity_scaled_targets_admit_scaled_solution() {
    // Noiseless correspondences: scaling the targets by b is absorbed
    // exactly by (s, t) -> (b s, b t), leaving the residual at zero.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_cloud(&mut rng, 30, 1.0);
    let base = SimPose {
        scale: 1.3,
        rotation: random_rotation(&mut rng),
        translation: Vector3::new(0.2, -0.4, 0.7),
    };
    let z = PointCloud::new(x.iter().map(|p| base.apply(*p)).collect());
    let fit = fit_similarity(&x, &z).unwrap();
    assert!(similarity_residual(&fit, &x, &z) < 1e-9);

    for b in [0.5, 2.0, 10.0] {
        let zb = PointCloud::new(z.iter().map(|p| p * b).collect());
        let constructed = SimPose {
            scale: b * fit.scale,
            rotation: fit.rotation,
            translation: b * fit.translation,
        };
        assert!(similarity_residual(&constructed, &x, &zb) < 1e-9, "b = {b}");
    }
}

#[test]
fn exp_map_basics() {
    let identity = Twist::zero().exp();
    assert!((identity.rotation() - nalgebra::Matrix3::identity()).norm() < 1e-15);
    assert!(identity.translation().norm() < 1e-15);

    let quarter = Twist::new(Vector3::new(0.0, 0.0, PI / 2.0), Vector3::zeros()).exp();
    let p = quarter.apply(Point3::new(1.0, 0.0, 0.0));
    assert!((p - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn exp_log_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(0.0..(PI - 1e-3));
        let twist = Twist::new(
            axis * angle,
            Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ),
        );
        let back = twist.exp().log();
        assert!(
            (back.omega - twist.omega).norm() < 1e-8 && (back.v - twist.v).norm() < 1e-8,
            "roundtrip failed at angle {angle}"
        );
    }
}

#[test]
fn adds_trivial_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = random_cloud(&mut rng, 100, 1.0);
    let pose = random_pose(&mut rng);
    assert_eq!(adds(&pose, &pose, &model), 0.0);

    let single = PointCloud::new(vec![Point3::new(0.3, 0.1, -0.2)]);
    let delta = Vector3::new(0.05, -0.02, 0.01);
    let shifted = Pose::from_parts(*pose.rotation(), pose.translation() + delta);
    assert!((adds(&shifted, &pose, &single) - delta.norm()).abs() < 1e-12);
}

#[test]
fn adds_is_symmetry_aware() {
    // A point set symmetric under a half-turn about z scores zero against
    // its own rotated copy.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut pts = Vec::new();
    for _ in 0..100 {
        let p = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        pts.push(p);
        pts.push(Point3::new(-p.x, -p.y, p.z));
    }
    let model = PointCloud::new(pts);
    let half_turn = Twist::new(Vector3::new(0.0, 0.0, PI), Vector3::zeros()).exp();
    let d = adds(&half_turn, &Pose::identity(), &model);
    assert!(d < 1e-9, "symmetric ADD-S should vanish, got {d}");
}

#[test]
fn chamfer_trivial_and_symmetric() {
    let a = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]);
    let b = PointCloud::new(vec![Point3::new(0.0, 3.0, 4.0)]);
    assert_eq!(chamfer(&a, &a, ChamferNorm::L2), 0.0);
    assert!((chamfer(&a, &b, ChamferNorm::L2) - 5.0).abs() < 1e-15);
    assert!((chamfer(&a, &b, ChamferNorm::L1) - 7.0).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_cloud(&mut rng, 120, 1.0);
    let b = random_cloud(&mut rng, 80, 1.0);
    assert_eq!(chamfer(&a, &b, ChamferNorm::L2), chamfer(&b, &a, ChamferNorm::L2));
    assert_eq!(chamfer(&a, &b, ChamferNorm::L1), chamfer(&b, &a, ChamferNorm::L1));
}

#[test]
fn nearest_neighbor_matches_bruteforce_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // Above the exhaustive limit so the hashed path is exercised.
    let target = random_cloud(&mut rng, 6000, 1.0);
    let queries = random_cloud(&mut rng, 50, 1.5);
    let nn = metrics::NearestNeighbor::build(&target);
    for q in queries.iter() {
        for norm in [ChamferNorm::L1, ChamferNorm::L2] {
            let fast = nn.distance(*q, norm);
            let brute = target
                .iter()
                .map(|p| match norm {
                    ChamferNorm::L1 => {
                        let d = q - p;
                        d.x.abs() + d.y.abs() + d.z.abs()
                    }
                    ChamferNorm::L2 => (q - p).norm(),
                })
                .fold(f64::INFINITY, f64::min);
            assert!((fast - brute).abs() < 1e-12);
        }
    }
}

#[test]
fn chamfer_matches_bruteforce_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_cloud(&mut rng, 60, 1.0);
    let b = random_cloud(&mut rng, 45, 1.0);
    let brute = |a: &PointCloud, b: &PointCloud| -> f64 {
        let fwd: f64 = a
            .iter()
            .map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / a.len() as f64;
        let bwd: f64 = b
            .iter()
            .map(|p| a.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / b.len() as f64;
        0.5 * (fwd + bwd)
    };
    assert!((chamfer(&a, &b, ChamferNorm::L2) - brute(&a, &b)).abs() < 1e-12);
}

#[test]
fn pose_flat_roundtrip_and_checked() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pose = random_pose(&mut rng);
    let flat = pose.to_flat();
    let back = Pose::from_flat(&flat).unwrap();
    assert!((pose.rotation() - back.rotation()).norm() < 1e-12);
    assert!((pose.translation() - back.translation()).norm() < 1e-12);

    let mut bad = flat;
    bad[0] = 5.0;
    assert!(Pose::from_flat(&bad).is_err());
    bad[0] = f64::NAN;
    assert!(Pose::from_flat(&bad).is_err());
}

#[test]
fn long_composition_chains_stay_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let step = random_pose(&mut rng);
    let mut acc = Pose::identity();
    for _ in 0..5000 {
        acc = acc.compose(&step);
    }
    let defect = (acc.rotation().transpose() * acc.rotation() - nalgebra::Matrix3::identity()).norm();
    assert!(defect < 1e-9, "orthonormality defect {defect}");
}
