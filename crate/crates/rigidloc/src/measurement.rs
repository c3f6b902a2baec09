//! Range measurement simulation under the TOA noise model, squaring, and the
//! reference-range noise parameterization.
//!
//! The noise is parameterized by a single *reference range* in dB: at
//! reference range X dB, the ranging standard deviation at distance r is
//! `r·10^(−X/20)` (100 dB ⇒ 1 mm at 100 m). A reference range of `+inf`
//! disables noise entirely.

use nalgebra::{DMatrix, Matrix3xX};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{AnchorSet, SensorPositions, Topology};

/// Noise parameterization shared by the simulator and the whitener.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    reference_range_db: f64,
    perturbation_std: f64,
}

impl NoiseModel {
    /// `reference_range_db` may be `+inf` (noise disabled) but not NaN or
    /// `−inf`; `perturbation_std` must be finite and non-negative.
    pub fn new(reference_range_db: f64, perturbation_std: f64) -> Result<Self> {
        if reference_range_db.is_nan() || reference_range_db == f64::NEG_INFINITY {
            return Err(Error::InvalidNoiseModel(format!(
                "reference_range_db must be finite or +inf, got {reference_range_db}"
            )));
        }
        if !perturbation_std.is_finite() || perturbation_std < 0.0 {
            return Err(Error::InvalidNoiseModel(format!(
                "perturbation_std must be finite and >= 0, got {perturbation_std}"
            )));
        }
        Ok(Self {
            reference_range_db,
            perturbation_std,
        })
    }

    /// Noise disabled, no topology perturbation.
    pub fn noiseless() -> Self {
        Self {
            reference_range_db: f64::INFINITY,
            perturbation_std: 0.0,
        }
    }

    pub fn reference_range_db(&self) -> f64 {
        self.reference_range_db
    }

    pub fn perturbation_std(&self) -> f64 {
        self.perturbation_std
    }

    pub fn is_noiseless(&self) -> bool {
        self.reference_range_db == f64::INFINITY
    }

    /// `10^(−reference_range_db/20)`, the per-meter ranging noise factor.
    pub(crate) fn noise_factor(&self) -> f64 {
        10f64.powf(-self.reference_range_db / 20.0)
    }
}

/// Which distance indexes the per-anchor noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseIndexing {
    /// Variance pinned to the range to sensor 1 for all sensors (the
    /// simplified path-loss model; default).
    ReferenceSensor,
    /// Variance follows each sensor's own range (model-mismatch studies).
    PerSensor,
}

/// Measured anchor-to-sensor ranges (M×N, meters) plus the noise model that
/// produced them. `true_ranges` is populated by the simulator only.
#[derive(Debug, Clone)]
pub struct RangeSet {
    pub ranges: DMatrix<f64>,
    pub model: NoiseModel,
    pub true_ranges: Option<DMatrix<f64>>,
}

/// Squared measured ranges (M×N, meters²).
#[derive(Debug, Clone)]
pub struct SquaredRangeSet {
    pub d: DMatrix<f64>,
}

/// Ranging standard deviation at distance `r`: `σ(e) = r·10^(−ref_db/20)`.
pub fn range_noise_std(model: &NoiseModel, r: f64) -> Result<f64> {
    if r.is_nan() || r <= 0.0 {
        return Err(Error::NonPositiveRange { got: r });
    }
    Ok(r * model.noise_factor())
}

/// Simulates noisy ranges with the per-anchor variance pinned to sensor 1.
///
/// Negative draws are retained as-is; clipping would bias the noise, and at
/// sane noise levels the event has vanishing probability.
pub fn simulate_ranges<R: Rng + ?Sized>(
    anchors: &AnchorSet,
    sensors: &SensorPositions,
    model: &NoiseModel,
    rng: &mut R,
) -> Result<RangeSet> {
    simulate_ranges_with(anchors, sensors, model, NoiseIndexing::ReferenceSensor, rng)
}

/// [`simulate_ranges`] with an explicit choice of variance indexing.
pub fn simulate_ranges_with<R: Rng + ?Sized>(
    anchors: &AnchorSet,
    sensors: &SensorPositions,
    model: &NoiseModel,
    indexing: NoiseIndexing,
    rng: &mut R,
) -> Result<RangeSet> {
    let m = anchors.anchor_count();
    let n = sensors.ncols();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            context: "simulate_ranges",
            expected: "at least one sensor".into(),
            actual: "0 sensors".into(),
        });
    }

    let mut true_ranges = DMatrix::zeros(m, n);
    for (mi, a) in anchors.matrix().column_iter().enumerate() {
        for (ni, s) in sensors.column_iter().enumerate() {
            let r = (a - s).norm();
            if r == 0.0 {
                return Err(Error::CoincidentAnchorSensor {
                    anchor: mi,
                    sensor: ni,
                });
            }
            true_ranges[(mi, ni)] = r;
        }
    }

    let factor = model.noise_factor();
    let mut ranges = true_ranges.clone();
    for mi in 0..m {
        let sigma_ref = factor * true_ranges[(mi, 0)];
        for ni in 0..n {
            let sigma = match indexing {
                NoiseIndexing::ReferenceSensor => sigma_ref,
                NoiseIndexing::PerSensor => factor * true_ranges[(mi, ni)],
            };
            let z: f64 = rng.sample(StandardNormal);
            ranges[(mi, ni)] += sigma * z;
        }
    }

    Ok(RangeSet {
        ranges,
        model: *model,
        true_ranges: Some(true_ranges),
    })
}

/// Elementwise square of the measured ranges.
pub fn square_ranges(rs: &RangeSet) -> SquaredRangeSet {
    SquaredRangeSet {
        d: rs.ranges.map(|r| r * r),
    }
}

/// Adds an i.i.d. zero-mean Gaussian offset of the given standard deviation
/// to every topology entry. With `std = 0` the topology is returned
/// unchanged (and the random stream is not consumed).
pub fn perturb_topology<R: Rng + ?Sized>(
    topology: &Topology,
    std: f64,
    rng: &mut R,
) -> Result<Topology> {
    if !std.is_finite() || std < 0.0 {
        return Err(Error::NegativeStd { got: std });
    }
    if std == 0.0 {
        return Ok(topology.clone());
    }
    let c = topology.matrix();
    let perturbed = Matrix3xX::from_fn(c.ncols(), |i, j| {
        let z: f64 = rng.sample(StandardNormal);
        c[(i, j)] + std * z
    });
    Topology::new(perturbed)
}
