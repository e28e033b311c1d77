use super::*;
use crate::sdf::Point3;
use crate::shape::{BasisManifest, ShapeBasis};
use crate::sim::{asymmetric_union, make_object_frames, SceneConfig};
use nalgebra::Vector6;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use std::sync::Arc;

fn test_decoder(k: usize) -> (Arc<ShapeBasis>, Decoder) {
    let basis = ShapeBasis::new((0..k).map(asymmetric_union).collect()).unwrap();
    (basis.clone(), Decoder::linear(basis))
}

fn test_dataset(decoder: &Decoder, objects: u64, views: usize, seed: u64) -> Vec<Frame> {
    let mut frames = Vec::new();
    for object in 0..objects {
        let cfg = SceneConfig {
            n_points: 60,
            n_views: views,
            seed,
            ..SceneConfig::default()
        };
        frames.extend(make_object_frames(decoder, &cfg, object).unwrap());
    }
    frames
}

/// Correction config that iterates the block sweeps to their convergence
/// floor; label-quality tests presume converged corrections.
fn deep_cfg(rounds: usize) -> CorrectorConfig {
    CorrectorConfig { outer_rounds: rounds, ..CorrectorConfig::default() }
}

fn zero_sum_bias(k: usize, norm: f64, seed: u64) -> nalgebra::DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = nalgebra::DVector::from_iterator(k, (0..k).map(|_| rng.random_range(-1.0f64..1.0)));
    let mean = v.iter().sum::<f64>() / k as f64;
    v.apply(|x| *x -= mean);
    let n = v.norm();
    if n > 1e-12 {
        v *= norm / n;
    }
    v
}

#[test]
fn soft_l1_loss_closed_forms() {
    let a = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]);
    assert_eq!(soft_l1_loss(&a, &a, SOFT_L1_ZETA), 0.0);

    // Single coordinate error below the threshold: quadratic branch.
    let b = PointCloud::new(vec![Point3::new(0.05, 0.0, 0.0)]);
    assert!((soft_l1_loss(&b, &a, 0.1) - 0.0125).abs() < 1e-15);

    // Above the threshold: linear branch.
    let c = PointCloud::new(vec![Point3::new(0.5, 0.0, 0.0)]);
    assert!((soft_l1_loss(&c, &a, 0.1) - 0.45).abs() < 1e-15);
}

#[test]
fn soft_l1_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(1..6);
        let z = PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    )
                })
                .collect(),
        );
        let z_star = PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    )
                })
                .collect(),
        );
        let grad = soft_l1_loss_gradient(&z, &z_star, SOFT_L1_ZETA);
        let h = 1e-7;
        for i in 0..n {
            for c in 0..3 {
                let mut hi = z.clone();
                let mut lo = z.clone();
                hi.points[i][c] += h;
                lo.points[i][c] -= h;
                let fd = (soft_l1_loss(&hi, &z_star, SOFT_L1_ZETA)
                    - soft_l1_loss(&lo, &z_star, SOFT_L1_ZETA))
                    / (2.0 * h);
                assert!(
                    (grad[i][c] - fd).abs() <= 1e-4 * (1.0 + fd.abs()),
                    "point {i} comp {c}: {} vs {fd}",
                    grad[i][c]
                );
            }
        }
    }
}

#[test]
fn sdf_loss_term_by_term() {
    let w = SdfLossWeights::default();
    // Perfect SDF: values match, gradients unit, off-manifold values large.
    let on = vec![0.3, -0.2, 0.05];
    let off = vec![0.5, 0.8];
    let grads = vec![nalgebra::Vector3::new(1.0, 0.0, 0.0); 5];
    let loss = sdf_loss(&on, &on, &off, &grads, &w);
    // Only the off-manifold tail survives and it is tiny at a = 100.
    assert!(loss < w.gamma2 * (-w.a * 0.5f64).exp() + 1e-12);

    // Gradient scaled to 2 everywhere: the Eikonal term contributes
    // exactly gamma3 * 1.
    let grads2 = vec![nalgebra::Vector3::new(2.0, 0.0, 0.0); 4];
    let loss = sdf_loss(&on, &on, &[1e9], &grads2, &w);
    assert!((loss - w.gamma3).abs() < 1e-9);

    // Hand-computed five-sample toy set.
    let on = vec![0.1, -0.3];
    let gt = vec![0.0, -0.1];
    let off = vec![0.02];
    let grads = vec![
        nalgebra::Vector3::new(0.0, 1.5, 0.0),
        nalgebra::Vector3::new(0.6, 0.0, 0.0),
    ];
    let expect = w.gamma1 / 2.0 * (0.1 + 0.2)
        + w.gamma2 * (-w.a * 0.02f64).exp()
        + w.gamma3 / 2.0 * (0.5 + 0.4);
    assert!((sdf_loss(&on, &gt, &off, &grads, &w) - expect).abs() < 1e-9 * expect);
}

#[test]
fn sdf_loss_gradients_match_finite_differences() {
    let w = SdfLossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let m1 = rng.random_range(1..5);
        let m2 = rng.random_range(1..5);
        let on: Vec<f64> = (0..m1).map(|_| rng.random_range(-0.5..0.5)).collect();
        let gt: Vec<f64> = (0..m1).map(|_| rng.random_range(-0.5..0.5)).collect();
        let off: Vec<f64> = (0..m2).map(|_| rng.random_range(0.01..0.5)).collect();
        let grads: Vec<nalgebra::Vector3<f64>> = (0..m1)
            .map(|_| {
                nalgebra::Vector3::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                )
            })
            .collect();
        let (d_on, d_off, d_grad) = sdf_loss_gradients(&on, &gt, &off, &grads, &w);
        let h = 1e-7;

        for i in 0..on.len() {
            let mut hi = on.clone();
            let mut lo = on.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (sdf_loss(&hi, &gt, &off, &grads, &w) - sdf_loss(&lo, &gt, &off, &grads, &w))
                / (2.0 * h);
            assert!((d_on[i] - fd).abs() <= 1e-4 * (1.0 + fd.abs()));
        }
        for i in 0..off.len() {
            let mut hi = off.clone();
            let mut lo = off.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (sdf_loss(&on, &gt, &hi, &grads, &w) - sdf_loss(&on, &gt, &lo, &grads, &w))
                / (2.0 * h);
            assert!((d_off[i] - fd).abs() <= 1e-4 * (1.0 + fd.abs()));
        }
        for i in 0..grads.len() {
            for c in 0..3 {
                let mut hi = grads.clone();
                let mut lo = grads.clone();
                hi[i][c] += h;
                lo[i][c] -= h;
                let fd = (sdf_loss(&on, &gt, &off, &hi, &w) - sdf_loss(&on, &gt, &off, &lo, &w))
                    / (2.0 * h);
                assert!((d_grad[i][c] - fd).abs() <= 1e-4 * (1.0 + fd.abs()));
            }
        }
    }
}

#[test]
fn unbiased_estimator_certifies_everything_exactly() {
    let (basis, dec) = test_decoder(2);
    let dataset = test_dataset(&dec, 3, 2, 10);
    let est = BiasedOracleEstimator::unbiased(2, 0);
    let batch = generate_pseudo_labels(
        &dataset,
        &est,
        CorrectorKind::Bcd,
        &basis,
        &dec,
        &CorrectorConfig::default(),
        &CertificateConfig::default(),
    )
    .unwrap();
    assert_eq!(batch.objects_certified, 3);
    assert_eq!(batch.labels.len(), dataset.len());
    for label in &batch.labels {
        assert!(label.certified);
        let frame = &dataset[label.frame_index];
        for (a, b) in label.z.iter().zip(frame.gt_z.iter()) {
            assert!((a - b).norm() < 1e-6);
        }
        assert!((label.code.alpha.clone() - frame.gt_alpha.alpha.clone()).norm() < 1e-6);
    }
}

#[test]
fn extreme_pose_bias_fails_certification() {
    // 90 degrees of pose bias on an asymmetric shape leaves residuals far
    // beyond epsilon even after correction from that initialization.
    let (basis, dec) = test_decoder(2);
    let dataset = test_dataset(&dec, 2, 1, 11);
    let est = BiasedOracleEstimator::with_bias(
        Twist::new(nalgebra::Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), nalgebra::Vector3::zeros()),
        nalgebra::DVector::zeros(2),
        0,
    );
    let batch = generate_pseudo_labels(
        &dataset,
        &est,
        CorrectorKind::None,
        &basis,
        &dec,
        &CorrectorConfig::default(),
        &CertificateConfig::default(),
    )
    .unwrap();
    assert_eq!(batch.objects_certified, 0);
    assert!(batch.labels.is_empty());
}

#[test]
fn corrector_lifts_certified_fraction_over_baseline() {
    let (basis, dec) = test_decoder(2);
    let dataset = test_dataset(&dec, 4, 1, 12);
    let est = BiasedOracleEstimator::with_bias(
        Twist::new(
            nalgebra::Vector3::new(0.05, -0.03, 0.04),
            nalgebra::Vector3::new(0.02, 0.01, -0.015),
        ),
        zero_sum_bias(2, 0.1, 3),
        0,
    );
    let run = |kind| {
        generate_pseudo_labels(
            &dataset,
            &est,
            kind,
            &basis,
            &dec,
            &CorrectorConfig::default(),
            &CertificateConfig::default(),
        )
        .unwrap()
        .certified_fraction()
    };
    let without = run(CorrectorKind::None);
    let with_bcd = run(CorrectorKind::Bcd);
    assert!(
        with_bcd > without,
        "corrector should certify more: {with_bcd} vs {without}"
    );
}

#[test]
fn pseudo_labels_are_correction_fixed_points() {
    let (basis, dec) = test_decoder(2);
    let dataset = test_dataset(&dec, 2, 1, 13);
    let est = BiasedOracleEstimator::with_bias(
        Twist::new(
            nalgebra::Vector3::new(0.03, 0.02, -0.04),
            nalgebra::Vector3::new(0.01, -0.02, 0.01),
        ),
        zero_sum_bias(2, 0.08, 5),
        0,
    );
    let cfg = deep_cfg(150);
    let batch = generate_pseudo_labels(
        &dataset,
        &est,
        CorrectorKind::Bcd,
        &basis,
        &dec,
        &cfg,
        &CertificateConfig::default(),
    )
    .unwrap();
    assert!(!batch.labels.is_empty());
    for label in &batch.labels {
        let frame = &dataset[label.frame_index];
        let buffer = MultiViewBuffer::single(frame.object_id, frame.x.clone(), label.z.clone());
        let again = correct_bcd(&buffer, &label.code, &dec, &cfg).unwrap();
        for (a, b) in again.z_hat.iter().zip(label.z.iter()) {
            assert!((a - b).norm() < 1e-6, "re-correction moved a label point");
        }
    }
}

#[test]
fn converged_estimator_barely_moves() {
    let (basis, dec) = test_decoder(2);
    let dataset = test_dataset(&dec, 2, 2, 14);
    let mut est = BiasedOracleEstimator::unbiased(2, 0);
    let before = (est.pose_bias, est.code_bias.clone());
    let stats = self_train_epoch(
        &mut est,
        &dataset,
        CorrectorKind::Bcd,
        &basis,
        &dec,
        &CorrectorConfig::default(),
        &CertificateConfig::default(),
        &LearningRates::default(),
        0,
    )
    .unwrap();
    assert_eq!(stats.certified_fraction, 1.0);
    let moved = (Twist::new(
        est.pose_bias.omega - before.0.omega,
        est.pose_bias.v - before.0.v,
    )
    .norm()
    .powi(2)
        + (est.code_bias.clone() - before.1).norm_squared())
    .sqrt();
    assert!(moved < 1e-8, "converged estimator moved by {moved}");
}

#[test]
fn self_training_shrinks_bias() {
    let (basis, dec) = test_decoder(3);
    let dataset = test_dataset(&dec, 4, 2, 15);
    let mut est = BiasedOracleEstimator::with_bias(
        Twist::new(
            nalgebra::Vector3::new(0.04, -0.05, 0.03),
            nalgebra::Vector3::new(0.02, 0.015, -0.01),
        ),
        zero_sum_bias(3, 0.12, 7),
        0,
    );
    let initial = est.bias_norm();
    let cfg = deep_cfg(30);
    let mut fractions = Vec::new();
    for epoch in 0..5 {
        let stats = self_train_epoch(
            &mut est,
            &dataset,
            CorrectorKind::Bcd,
            &basis,
            &dec,
            &cfg,
            &CertificateConfig::default(),
            &LearningRates::default(),
            epoch,
        )
        .unwrap();
        fractions.push(stats.certified_fraction);
    }
    for w in fractions.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "certified fraction dropped: {fractions:?}");
    }
    assert!(
        est.bias_norm() < initial,
        "bias should shrink: {} -> {}",
        initial,
        est.bias_norm()
    );
}

#[test]
fn estimator_gradients_match_finite_differences() {
    let (_, dec) = test_decoder(2);
    let dataset = test_dataset(&dec, 1, 1, 16);
    let frame = &dataset[0];
    let est = BiasedOracleEstimator::with_bias(
        Twist::new(
            nalgebra::Vector3::new(0.03, 0.01, -0.02),
            nalgebra::Vector3::new(0.01, -0.01, 0.02),
        ),
        zero_sum_bias(2, 0.07, 9),
        0,
    );
    let label = PseudoLabel {
        frame_index: 0,
        z: frame.gt_z.clone(),
        code: frame.gt_alpha.clone(),
        certified: true,
    };
    let (twist_grad, code_grad, _, _) = est.loss_gradients(frame, &label);

    let coord_loss = |e: &BiasedOracleEstimator| -> f64 {
        let (z, _) = e.predict(frame);
        z.iter().zip(label.z.iter()).map(|(a, b)| (a - b).norm_squared()).sum()
    };
    let code_loss = |e: &BiasedOracleEstimator| -> f64 {
        let (_, c) = e.predict(frame);
        (c.alpha - label.code.alpha.clone()).norm_squared()
    };

    let h = 1e-7;
    // Twist gradient: perturb through a left increment.
    let mut fd6 = Vector6::zeros();
    for j in 0..6 {
        let mut d = [0.0; 6];
        d[j] = h;
        let plus = {
            let mut e = est.clone();
            e.pose_bias = Twist::new(
                nalgebra::Vector3::new(d[0], d[1], d[2]),
                nalgebra::Vector3::new(d[3], d[4], d[5]),
            )
            .exp()
            .compose(&est.pose_bias.exp())
            .log();
            coord_loss(&e)
        };
        d[j] = -h;
        let minus = {
            let mut e = est.clone();
            e.pose_bias = Twist::new(
                nalgebra::Vector3::new(d[0], d[1], d[2]),
                nalgebra::Vector3::new(d[3], d[4], d[5]),
            )
            .exp()
            .compose(&est.pose_bias.exp())
            .log();
            coord_loss(&e)
        };
        fd6[j] = (plus - minus) / (2.0 * h);
    }
    for j in 0..6 {
        assert!(
            (twist_grad[j] - fd6[j]).abs() <= 1e-4 * (1.0 + fd6[j].abs()),
            "twist {j}: {} vs {}",
            twist_grad[j],
            fd6[j]
        );
    }

    for j in 0..2 {
        let mut plus = est.clone();
        plus.code_bias[j] += h;
        let mut minus = est.clone();
        minus.code_bias[j] -= h;
        let fd = (code_loss(&plus) - code_loss(&minus)) / (2.0 * h);
        assert!(
            (code_grad[j] - fd).abs() <= 1e-4 * (1.0 + fd.abs()),
            "code {j}: {} vs {fd}",
            code_grad[j]
        );
    }
}

#[test]
fn training_losses_match_hand_computed_mse() {
    // Two-point toy frame: the per-frame losses are the plain squared
    // errors of the (biased) predictions against the label.
    let (_, dec) = test_decoder(2);
    let mut dataset = test_dataset(&dec, 1, 1, 19);
    dataset[0].gt_z = PointCloud::new(vec![
        Point3::new(0.5, 0.0, 0.0),
        Point3::new(0.0, 0.5, 0.0),
    ]);
    dataset[0].x = dataset[0].gt_z.transformed(&dataset[0].gt_pose.inverse());
    let frame = &dataset[0];

    let est = BiasedOracleEstimator::with_bias(
        Twist::new(nalgebra::Vector3::zeros(), nalgebra::Vector3::new(0.1, 0.0, 0.0)),
        nalgebra::DVector::zeros(2),
        0,
    );
    let label = PseudoLabel {
        frame_index: 0,
        z: frame.gt_z.clone(),
        code: frame.gt_alpha.clone(),
        certified: true,
    };
    let (_, _, loss_code, loss_coords) = est.loss_gradients(frame, &label);
    // Translation bias of 0.1 m offsets both points: 2 * 0.1^2.
    assert!((loss_coords - 0.02).abs() < 1e-12);
    // No code bias: the code loss vanishes.
    assert!(loss_code.abs() < 1e-12);

    // Known code offset: prediction is the projected biased code.
    let mut biased = est.clone();
    biased.code_bias = nalgebra::DVector::from_row_slice(&[0.1, -0.1]);
    let (_, _, loss_code, _) = biased.loss_gradients(frame, &label);
    let expect = {
        let pred = crate::shape::project_simplex(
            &(&frame.gt_alpha.alpha + &biased.code_bias),
        );
        (pred - &frame.gt_alpha.alpha).norm_squared()
    };
    assert!((loss_code - expect).abs() < 1e-12);
}

#[test]
fn frozen_channels_do_not_move() {
    let (basis, dec) = test_decoder(2);
    let dataset = test_dataset(&dec, 1, 1, 18);
    let mut est = BiasedOracleEstimator::with_bias(
        Twist::new(nalgebra::Vector3::new(0.02, -0.01, 0.03), nalgebra::Vector3::zeros()),
        zero_sum_bias(2, 0.1, 13),
        0,
    );
    est.train_pose = false;
    let pose_before = est.pose_bias;
    let code_before = est.code_bias.clone();
    self_train_epoch(
        &mut est,
        &dataset,
        CorrectorKind::Bcd,
        &basis,
        &dec,
        &deep_cfg(20),
        &CertificateConfig::default(),
        &LearningRates { code: 0.05, coords: 1.5e-3 },
        0,
    )
    .unwrap();
    assert_eq!(est.pose_bias, pose_before, "frozen pose channel moved");
    assert_ne!(est.code_bias, code_before, "trainable code channel should move");
}

#[test]
fn decoder_is_frozen_through_training() {
    let (basis, dec) = test_decoder(2);
    let manifest_before = BasisManifest::from_basis(&basis).to_json();
    let dataset = test_dataset(&dec, 2, 1, 17);
    let mut est = BiasedOracleEstimator::with_bias(
        Twist::new(nalgebra::Vector3::new(0.02, 0.0, 0.01), nalgebra::Vector3::zeros()),
        zero_sum_bias(2, 0.05, 11),
        0,
    );
    for epoch in 0..3 {
        self_train_epoch(
            &mut est,
            &dataset,
            CorrectorKind::Lsq,
            &basis,
            &dec,
            &CorrectorConfig::default(),
            &CertificateConfig::default(),
            &LearningRates::default(),
            epoch,
        )
        .unwrap();
    }
    let manifest_after = BasisManifest::from_basis(&basis).to_json();
    assert_eq!(manifest_before, manifest_after);
}
