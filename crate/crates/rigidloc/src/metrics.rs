//! Evaluation metrics over Monte-Carlo trials: mean angular error of the
//! rotation estimate and RMSE of the translation estimate.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::estimators::PoseEstimate;
use crate::geometry::Pose;

/// One Monte-Carlo trial: the estimate, the ground truth it should match,
/// and the scenario parameters it was produced under.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub estimate: PoseEstimate,
    pub truth: Pose,
    pub reference_range_db: f64,
    pub perturbation_std: f64,
    pub master_seed: u64,
}

/// Mean angular error plus the count of degenerate (zero-norm) estimated
/// columns encountered, each of which contributes 90°.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanAngularError {
    pub degrees: f64,
    pub zero_norm_columns: usize,
}

/// Angle in degrees between each true basis column and the corresponding
/// (normalized) estimated column. Zero-norm estimated columns score 90° and
/// are counted separately.
pub fn column_angles_deg(truth_q: &Matrix3<f64>, estimate_q: &Matrix3<f64>) -> ([f64; 3], usize) {
    let mut angles = [0.0; 3];
    let mut zero_norm = 0;
    for (m, angle) in angles.iter_mut().enumerate() {
        let q_true = truth_q.column(m);
        let q_hat = estimate_q.column(m);
        let norm = q_hat.norm();
        *angle = if norm == 0.0 {
            zero_norm += 1;
            90.0
        } else {
            // clamp: floating point can push the cosine past ±1 exactly when
            // the estimate is best
            (q_true.dot(&q_hat) / norm).clamp(-1.0, 1.0).acos().to_degrees()
        };
    }
    (angles, zero_norm)
}

fn check_homogeneous(records: &[TrialRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let first = &records[0];
    for r in records {
        if r.estimate.method != first.estimate.method || r.truth != first.truth {
            return Err(Error::MixedRecords);
        }
    }
    Ok(())
}

/// `(1/(3·N))·Σᵢ Σₘ acos(q_mᵀ·q̂_m⁽ⁱ⁾ / ‖q̂_m⁽ⁱ⁾‖)` in degrees, over records
/// that share one method and one truth.
pub fn mean_angular_error(records: &[TrialRecord]) -> Result<MeanAngularError> {
    check_homogeneous(records)?;
    let mut sum = 0.0;
    let mut zero_norm_columns = 0;
    for r in records {
        let (angles, zeros) = column_angles_deg(&r.truth.q, &r.estimate.pose.q);
        sum += angles.iter().sum::<f64>();
        zero_norm_columns += zeros;
    }
    Ok(MeanAngularError {
        degrees: sum / (3.0 * records.len() as f64),
        zero_norm_columns,
    })
}

/// `√((1/N)·Σᵢ ‖t̂⁽ⁱ⁾ − t‖²)` in meters.
pub fn rmse_translation(records: &[TrialRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let sum: f64 = records
        .iter()
        .map(|r| (r.estimate.pose.t - r.truth.t).norm_squared())
        .sum();
    Ok((sum / records.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{Diagnostics, Method};
    use crate::geometry::{pose_from_euler, EulerAngles};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(method: Method, truth: Pose, est: Pose, idx: usize) -> TrialRecord {
        TrialRecord {
            trial_index: idx,
            estimate: PoseEstimate {
                column_norms: [
                    est.q.column(0).norm(),
                    est.q.column(1).norm(),
                    est.q.column(2).norm(),
                ],
                pose: est,
                method,
                diagnostics: Diagnostics {
                    condition_number: 1.0,
                    a_bar_rank: 3,
                    c_e_rank: 4,
                    degenerate_svd: false,
                },
            },
            truth,
            reference_range_db: 100.0,
            perturbation_std: 0.0,
            master_seed: 0,
        }
    }

    #[test]
    fn perfect_estimates_score_zero() {
        let truth = pose_from_euler(&EulerAngles::new(20.0, -25.0, 10.0));
        let records: Vec<_> = (0..5)
            .map(|i| record(Method::Cls, truth.clone(), truth.clone(), i))
            .collect();
        assert_eq!(mean_angular_error(&records).unwrap().degrees, 0.0);
        assert_eq!(rmse_translation(&records).unwrap(), 0.0);
    }

    #[test]
    fn z_rotation_by_five_degrees() {
        // Q̂ = R_z(5°)·I tilts the x and y columns by 5° and leaves z alone.
        let truth = Pose::identity();
        let est = pose_from_euler(&EulerAngles::new(0.0, 0.0, 5.0));
        let records = vec![record(Method::Cls, truth, est, 0)];
        let mae = mean_angular_error(&records).unwrap();
        assert_relative_eq!(mae.degrees, 10.0 / 3.0, max_relative = 1e-12);
        assert_eq!(mae.zero_norm_columns, 0);
    }

    #[test]
    fn column_scale_does_not_matter() {
        let truth = pose_from_euler(&EulerAngles::new(20.0, -25.0, 10.0));
        let mut est = truth.clone();
        est.q *= 7.0;
        let records = vec![record(Method::Ls, truth, est, 0)];
        // normalization removes the scale; only rounding of the normalized
        // dot product remains
        assert!(mean_angular_error(&records).unwrap().degrees <= 1e-6);
    }

    #[test]
    fn zero_norm_column_scores_ninety_and_flags() {
        let truth = Pose::identity();
        let mut est = Pose::identity();
        est.q.set_column(1, &Vector3::zeros());
        let records = vec![record(Method::Ls, truth, est, 0)];
        let mae = mean_angular_error(&records).unwrap();
        assert_relative_eq!(mae.degrees, 30.0, max_relative = 1e-12);
        assert_eq!(mae.zero_norm_columns, 1);
    }

    #[test]
    fn rmse_two_trials() {
        let truth = Pose::identity();
        let mut off = Pose::identity();
        off.t = Vector3::new(1.0, 0.0, 0.0);
        let records = vec![
            record(Method::Cls, truth.clone(), off, 0),
            record(Method::Cls, truth.clone(), truth.clone(), 1),
        ];
        assert_relative_eq!(
            rmse_translation(&records).unwrap(),
            (0.5f64).sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn rmse_matches_chi_mean_square() {
        // i.i.d. per-axis Gaussian error of σ = 0.1 ⇒ RMSE → 0.1·√3.
        let truth = Pose::identity();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records: Vec<_> = (0..10_000)
            .map(|i| {
                let mut est = Pose::identity();
                est.t = Vector3::from_fn(|_, _| {
                    0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal)
                });
                record(Method::Cls, truth.clone(), est, i)
            })
            .collect();
        assert_relative_eq!(
            rmse_translation(&records).unwrap(),
            0.1 * 3.0f64.sqrt(),
            max_relative = 0.03
        );
    }

    #[test]
    fn preconditions_are_enforced() {
        assert!(matches!(mean_angular_error(&[]), Err(Error::EmptyRecords)));
        assert!(matches!(rmse_translation(&[]), Err(Error::EmptyRecords)));
        let truth = Pose::identity();
        let records = vec![
            record(Method::Cls, truth.clone(), truth.clone(), 0),
            record(Method::Ls, truth.clone(), truth.clone(), 1),
        ];
        assert!(matches!(
            mean_angular_error(&records),
            Err(Error::MixedRecords)
        ));
    }

    proptest! {
        #[test]
        fn prop_scale_invariance_and_range(
            scale in 0.01f64..100.0,
            ax in -80.0f64..80.0,
            by in -80.0f64..80.0,
            gz in -80.0f64..80.0,
        ) {
            let truth = Pose::identity();
            let mut est = pose_from_euler(&EulerAngles::new(ax, by, gz));
            let reference = mean_angular_error(&[record(Method::Ls, truth.clone(), est.clone(), 0)])
                .unwrap()
                .degrees;
            est.q *= scale;
            let scaled = mean_angular_error(&[record(Method::Ls, truth.clone(), est, 0)])
                .unwrap()
                .degrees;
            prop_assert!((reference - scaled).abs() <= 1e-9);
            prop_assert!((0.0..=180.0).contains(&reference));
        }

        #[test]
        fn prop_permutation_invariance(seed in 0u64..500) {
            let truth = Pose::identity();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut records: Vec<_> = (0..8)
                .map(|i| {
                    let mut est = pose_from_euler(&EulerAngles::new(
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                    ));
                    est.t = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                    record(Method::Cls, truth.clone(), est, i)
                })
                .collect();
            let forward_mae = mean_angular_error(&records).unwrap().degrees;
            let forward_rmse = rmse_translation(&records).unwrap();
            records.reverse();
            prop_assert!((mean_angular_error(&records).unwrap().degrees - forward_mae).abs() <= 1e-12);
            prop_assert!((rmse_translation(&records).unwrap() - forward_rmse).abs() <= 1e-12);
        }
    }
}
