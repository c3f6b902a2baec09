//! Command-line experiment driver: seeded Monte-Carlo sweeps over reference
//! ranges for all three estimators, with or without topology perturbation,
//! persisted as CSV plus a reproducibility manifest.
//!
//! Determinism contract: `(config, master_seed)` fully determines every
//! output byte. Each (sweep point, trial, purpose) triple owns an
//! independent ChaCha substream, so trials may run concurrently — results
//! are aggregated in trial order and never depend on scheduling.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix3xX, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_cls_with, estimate_ctls_with, estimate_ls, Method, PoseEstimate,
};
use crate::geometry::{
    apply_pose, matrix_rank, pose_from_euler, AnchorSet, EulerAngles, Pose, SensorPositions,
    Topology,
};
use crate::measurement::{
    perturb_topology, simulate_ranges_with, square_ranges, NoiseIndexing, NoiseModel, RangeSet,
};
use crate::metrics::{column_angles_deg, mean_angular_error, rmse_translation, TrialRecord};
use crate::preprocess::{build_model, whitening_matrix};

/// Axis-aligned cube in which anchors are deployed uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorRegion {
    pub origin: [f64; 3],
    pub side: f64,
}

impl Default for AnchorRegion {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0, 0.0],
            side: 100.0,
        }
    }
}

/// Whether anchors are drawn once per experiment or afresh every trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    #[default]
    RedrawnPerTrial,
    FixedPerExperiment,
}

impl AnchorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnchorMode::RedrawnPerTrial => "redrawn-per-trial",
            AnchorMode::FixedPerExperiment => "fixed-per-experiment",
        }
    }
}

/// Monte-Carlo sweep definition. Every field has a default matching the
/// reference scenario (six-sensor pyramid, ten anchors in a 100 m cube,
/// rotation (20, −25, 10)°, translation (5, 5, 5) m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Body-frame sensor coordinates, row-major (3 rows of N entries).
    pub topology: Vec<Vec<f64>>,
    pub anchor_count: usize,
    pub anchor_region: AnchorRegion,
    /// Ground-truth rotation angles in degrees (about x, y, z).
    pub truth_euler: [f64; 3],
    /// Ground-truth translation in meters.
    pub truth_translation: [f64; 3],
    pub reference_range_db_sweep: Vec<f64>,
    pub n_exp: usize,
    /// Topology perturbation handed to the estimators (meters; 0 disables).
    pub perturbation_std: f64,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub anchor_mode: AnchorMode,
    /// Index ranging noise by each sensor's own range instead of sensor 1's
    /// (model-mismatch studies).
    pub per_sensor_noise: bool,
    /// Force det(Q̂) = +1 for the constrained estimators.
    pub proper_rotation: bool,
    /// Collect per-trial range matrices for `measurements.csv`.
    pub dump_measurements: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: default_topology_rows(),
            anchor_count: 10,
            anchor_region: AnchorRegion::default(),
            truth_euler: [20.0, -25.0, 10.0],
            truth_translation: [5.0, 5.0, 5.0],
            reference_range_db_sweep: (2..=12).map(|k| 10.0 * k as f64).collect(),
            n_exp: 1000,
            perturbation_std: 0.0,
            master_seed: 1,
            methods: vec![Method::Ls, Method::Cls, Method::Ctls],
            anchor_mode: AnchorMode::default(),
            per_sensor_noise: false,
            proper_rotation: false,
            dump_measurements: false,
        }
    }
}

impl ExperimentConfig {
    pub fn topology(&self) -> Result<Topology> {
        Topology::from_rows(&self.topology)
    }

    pub fn truth_pose(&self) -> Pose {
        let mut pose = pose_from_euler(&EulerAngles::new(
            self.truth_euler[0],
            self.truth_euler[1],
            self.truth_euler[2],
        ));
        pose.t = Vector3::from_column_slice(&self.truth_translation);
        pose
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn default_topology_rows() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 6.0, 7.0, 6.0, 2.0, 2.5],
        vec![0.0, 0.0, 5.0, 5.0, 5.0, 2.5],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 5.0],
    ]
}

/// The reference six-sensor pyramid topology (3×6, meters).
pub fn default_topology() -> Topology {
    Topology::from_rows(&default_topology_rows()).expect("reference topology is valid")
}

/// One identifiability / sanity check with its outcome.
#[derive(Debug, Clone)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs every static identifiability and sanity check on a config.
pub fn validate_config(config: &ExperimentConfig) -> Vec<ValidationCheck> {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| {
        checks.push(ValidationCheck {
            name,
            passed,
            detail,
        })
    };

    push(
        "n_exp >= 1",
        config.n_exp >= 1,
        format!("n_exp = {}", config.n_exp),
    );
    push(
        "sweep non-empty",
        !config.reference_range_db_sweep.is_empty(),
        format!("{} sweep points", config.reference_range_db_sweep.len()),
    );
    push(
        "methods non-empty",
        !config.methods.is_empty(),
        format!("{} methods", config.methods.len()),
    );
    push(
        "anchor count M >= 2",
        config.anchor_count >= 2,
        format!("M = {}", config.anchor_count),
    );
    let constrained = config
        .methods
        .iter()
        .any(|m| matches!(m, Method::Cls | Method::Ctls));
    push(
        "M >= 4 when CLS/CTLS enabled",
        !constrained || config.anchor_count >= 4,
        format!("M = {}, constrained = {}", config.anchor_count, constrained),
    );
    push(
        "anchor region side > 0",
        config.anchor_region.side > 0.0 && config.anchor_region.side.is_finite(),
        format!("side = {}", config.anchor_region.side),
    );
    push(
        "perturbation_std >= 0",
        config.perturbation_std >= 0.0 && config.perturbation_std.is_finite(),
        format!("perturbation_std = {}", config.perturbation_std),
    );
    push(
        "sweep values finite or +inf",
        config
            .reference_range_db_sweep
            .iter()
            .all(|db| !db.is_nan() && *db != f64::NEG_INFINITY),
        format!(
            "{} reference ranges checked",
            config.reference_range_db_sweep.len()
        ),
    );

    match config.topology() {
        Err(e) => push("topology well-formed", false, e.to_string()),
        Ok(topology) => {
            let m = config.anchor_count;
            let n = topology.sensor_count();
            push(
                "topology well-formed",
                true,
                format!("3x{n} topology"),
            );
            push(
                "(M-1)N >= 12",
                m >= 1 && (m - 1) * n >= 12,
                format!("(M-1)N = {}", m.saturating_sub(1) * n),
            );
            let c = nalgebra::DMatrix::from_column_slice(3, n, topology.matrix().as_slice());
            let mut c_e = nalgebra::DMatrix::zeros(4, n);
            c_e.view_mut((0, 0), (3, n)).copy_from(&c);
            c_e.row_mut(3).fill(1.0);
            let c_e_rank = matrix_rank(&c_e);
            push(
                "rank(C_e) = 4",
                c_e_rank == 4,
                format!("rank = {c_e_rank}"),
            );
            if n >= 2 {
                let ones = nalgebra::DVector::from_element(n, 1.0);
                let u_n = crate::geometry::nullspace_basis(&ones).expect("n >= 2");
                let c_bar_rank = matrix_rank(&(&c * u_n));
                push(
                    "rank(C·U_N) = 3",
                    c_bar_rank == 3,
                    format!("rank = {c_bar_rank}"),
                );
            } else {
                push("rank(C·U_N) = 3", false, "N < 2".into());
            }
        }
    }

    checks
}

fn enforce_run_invariants(config: &ExperimentConfig) -> Result<()> {
    if config.n_exp == 0 {
        return Err(Error::InvalidConfig("n_exp must be >= 1".into()));
    }
    if config.n_exp as u64 >= 1 << 32 {
        return Err(Error::InvalidConfig("n_exp must be < 2^32".into()));
    }
    if config.reference_range_db_sweep.is_empty() {
        return Err(Error::InvalidConfig("sweep must be non-empty".into()));
    }
    if config.reference_range_db_sweep.len() as u64 >= 1 << 29 {
        return Err(Error::InvalidConfig("sweep too long".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidConfig("methods must be non-empty".into()));
    }
    if config.anchor_count < 2 {
        return Err(Error::InvalidConfig("anchor count must be >= 2".into()));
    }
    let constrained = config
        .methods
        .iter()
        .any(|m| matches!(m, Method::Cls | Method::Ctls));
    if constrained && config.anchor_count < 4 {
        return Err(Error::InvalidConfig(
            "CLS/CTLS require at least 4 anchors".into(),
        ));
    }
    if !config.anchor_region.side.is_finite() || config.anchor_region.side <= 0.0 {
        return Err(Error::InvalidConfig("anchor region side must be > 0".into()));
    }
    Ok(())
}

// -- seeded substreams ------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum StreamLane {
    Anchors = 0,
    RangeNoise = 1,
    Perturbation = 2,
}

fn trial_stream(master_seed: u64, sweep_idx: usize, trial: usize, lane: StreamLane) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((sweep_idx as u64) << 34) | ((trial as u64) << 2) | lane as u64);
    rng
}

fn experiment_stream(master_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(1 << 63);
    rng
}

fn draw_anchors<R: Rng + ?Sized>(
    region: &AnchorRegion,
    count: usize,
    rng: &mut R,
) -> Result<AnchorSet> {
    let a = Matrix3xX::from_fn(count, |axis, _| {
        region.origin[axis] + rng.random_range(0.0..region.side)
    });
    AnchorSet::new(a)
}

/// Anchors affinely span 3-D space (necessary for a full-rank `Ā`).
fn anchors_span_3d(anchors: &AnchorSet) -> bool {
    let m = anchors.anchor_count();
    let mut ext = nalgebra::DMatrix::zeros(4, m);
    ext.view_mut((0, 0), (3, m)).copy_from(anchors.matrix());
    ext.row_mut(3).fill(1.0);
    matrix_rank(&ext) == 4
}

// -- report rows -------------------------------------------------------------

/// Per-(reference range, method) aggregate.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub ref_range_db: f64,
    pub method: Method,
    pub perturbation_std: f64,
    pub n_exp: usize,
    pub mean_angular_error_deg: f64,
    pub rmse_translation_m: f64,
}

/// Per-trial estimate with its errors; `q` is stored column-major.
#[derive(Debug, Clone)]
pub struct TrialRow {
    pub trial: usize,
    pub method: Method,
    pub ref_range_db: f64,
    pub perturbation_std: f64,
    pub q: [f64; 9],
    pub t: [f64; 3],
    pub angular_error_deg: f64,
    pub translation_error_m: f64,
}

/// One measured range, emitted only under `dump_measurements`.
#[derive(Debug, Clone)]
pub struct MeasurementRow {
    pub ref_range_db: f64,
    pub trial: usize,
    pub anchor: usize,
    pub sensor: usize,
    pub range_m: f64,
    pub true_range_m: f64,
}

/// Redraw and failure accounting across the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounters {
    /// Trials redrawn because a measured range to sensor 1 was non-positive.
    pub redrawn_nonpositive_range: usize,
    /// Trials redrawn because the anchor draw was degenerate.
    pub redrawn_degenerate_anchors: usize,
    /// (method, trial) pairs whose estimator precondition failed.
    pub estimator_failures: usize,
}

/// Full result of a sweep: aggregates, per-trial rows, optional raw
/// measurements, counters, and the config that produced them.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Vec<SummaryRow>,
    pub trials: Vec<TrialRow>,
    pub measurements: Vec<MeasurementRow>,
    pub counters: RunCounters,
    pub config: ExperimentConfig,
}

// -- trial execution ---------------------------------------------------------

struct TrialOutcome {
    records: Vec<(Method, TrialRecord)>,
    rows: Vec<TrialRow>,
    measurements: Vec<MeasurementRow>,
    redrawn_nonpositive_range: usize,
    redrawn_degenerate_anchors: usize,
    estimator_failures: usize,
}

struct RunContext {
    config: ExperimentConfig,
    topology: Topology,
    truth: Pose,
    sensors_true: SensorPositions,
    fixed_anchors: Option<AnchorSet>,
    indexing: NoiseIndexing,
}

const MAX_REDRAWS: usize = 1000;

fn run_trial(
    ctx: &RunContext,
    sweep_idx: usize,
    ref_range_db: f64,
    trial: usize,
) -> Result<TrialOutcome> {
    let noise = NoiseModel::new(ref_range_db, ctx.config.perturbation_std)?;
    let mut rng_anchors = trial_stream(
        ctx.config.master_seed,
        sweep_idx,
        trial,
        StreamLane::Anchors,
    );
    let mut rng_noise = trial_stream(
        ctx.config.master_seed,
        sweep_idx,
        trial,
        StreamLane::RangeNoise,
    );
    let mut rng_perturb = trial_stream(
        ctx.config.master_seed,
        sweep_idx,
        trial,
        StreamLane::Perturbation,
    );

    // One perturbation draw per trial; redraws triggered by anchor or noise
    // pathologies must not shift it.
    let topology_known =
        perturb_topology(&ctx.topology, ctx.config.perturbation_std, &mut rng_perturb)?;

    let mut redrawn_nonpositive_range = 0;
    let mut redrawn_degenerate_anchors = 0;

    let (ranges, model) = 'attempts: {
        for _ in 0..MAX_REDRAWS {
            let anchors = match &ctx.fixed_anchors {
                Some(fixed) => fixed.clone(),
                None => draw_anchors(
                    &ctx.config.anchor_region,
                    ctx.config.anchor_count,
                    &mut rng_anchors,
                )?,
            };
            if ctx.fixed_anchors.is_none() && !anchors_span_3d(&anchors) {
                redrawn_degenerate_anchors += 1;
                continue;
            }
            let ranges = match simulate_ranges_with(
                &anchors,
                &ctx.sensors_true,
                &noise,
                ctx.indexing,
                &mut rng_noise,
            ) {
                Ok(rs) => rs,
                Err(Error::CoincidentAnchorSensor { .. }) if ctx.fixed_anchors.is_none() => {
                    redrawn_degenerate_anchors += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let w = match whitening_matrix(&ranges) {
                Ok(w) => w,
                Err(Error::NonPositiveMeasuredRange { .. }) => {
                    redrawn_nonpositive_range += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let model = build_model(&square_ranges(&ranges), &anchors, &w, &topology_known)?;
            break 'attempts (ranges, model);
        }
        return Err(Error::RedrawBudgetExhausted {
            trial,
            attempts: MAX_REDRAWS,
        });
    };

    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut estimator_failures = 0;
    for &method in &ctx.config.methods {
        let estimate: Result<PoseEstimate> = match method {
            Method::Ls => estimate_ls(&model),
            Method::Cls => estimate_cls_with(&model, ctx.config.proper_rotation),
            Method::Ctls => estimate_ctls_with(&model, ctx.config.proper_rotation),
        };
        match estimate {
            Ok(estimate) => {
                let (angles, _) = column_angles_deg(&ctx.truth.q, &estimate.pose.q);
                let angular_error_deg = angles.iter().sum::<f64>() / 3.0;
                let translation_error_m = (estimate.pose.t - ctx.truth.t).norm();
                let mut q = [0.0; 9];
                q.copy_from_slice(estimate.pose.q.as_slice());
                rows.push(TrialRow {
                    trial,
                    method,
                    ref_range_db,
                    perturbation_std: ctx.config.perturbation_std,
                    q,
                    t: [estimate.pose.t[0], estimate.pose.t[1], estimate.pose.t[2]],
                    angular_error_deg,
                    translation_error_m,
                });
                records.push((
                    method,
                    TrialRecord {
                        trial_index: trial,
                        estimate,
                        truth: ctx.truth.clone(),
                        reference_range_db: ref_range_db,
                        perturbation_std: ctx.config.perturbation_std,
                        master_seed: ctx.config.master_seed,
                    },
                ));
            }
            Err(Error::Identifiability(_)) => estimator_failures += 1,
            Err(e) => return Err(e),
        }
    }

    let measurements = if ctx.config.dump_measurements {
        measurement_rows(&ranges, ref_range_db, trial)
    } else {
        Vec::new()
    };

    Ok(TrialOutcome {
        records,
        rows,
        measurements,
        redrawn_nonpositive_range,
        redrawn_degenerate_anchors,
        estimator_failures,
    })
}

fn measurement_rows(ranges: &RangeSet, ref_range_db: f64, trial: usize) -> Vec<MeasurementRow> {
    let truth = ranges.true_ranges.as_ref();
    let (m, n) = ranges.ranges.shape();
    let mut rows = Vec::with_capacity(m * n);
    for anchor in 0..m {
        for sensor in 0..n {
            rows.push(MeasurementRow {
                ref_range_db,
                trial,
                anchor,
                sensor,
                range_m: ranges.ranges[(anchor, sensor)],
                true_range_m: truth.map_or(f64::NAN, |t| t[(anchor, sensor)]),
            });
        }
    }
    rows
}

/// Runs the configured sweep. Deterministic given `(config, master_seed)`
/// regardless of thread count; trials run in parallel and are reduced in
/// trial order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    enforce_run_invariants(config)?;
    let topology = config.topology()?;
    let truth = config.truth_pose();
    let sensors_true = apply_pose(&topology, &truth);

    let fixed_anchors = match config.anchor_mode {
        AnchorMode::RedrawnPerTrial => None,
        AnchorMode::FixedPerExperiment => {
            let mut rng = experiment_stream(config.master_seed);
            let mut redraws = 0;
            loop {
                let anchors = draw_anchors(&config.anchor_region, config.anchor_count, &mut rng)?;
                if anchors_span_3d(&anchors) {
                    break Some(anchors);
                }
                redraws += 1;
                if redraws >= MAX_REDRAWS {
                    return Err(Error::RedrawBudgetExhausted {
                        trial: 0,
                        attempts: MAX_REDRAWS,
                    });
                }
            }
        }
    };

    let ctx = RunContext {
        config: config.clone(),
        topology,
        truth,
        sensors_true,
        fixed_anchors,
        indexing: if config.per_sensor_noise {
            NoiseIndexing::PerSensor
        } else {
            NoiseIndexing::ReferenceSensor
        },
    };

    let mut summary = Vec::new();
    let mut trials = Vec::new();
    let mut measurements = Vec::new();
    let mut counters = RunCounters::default();

    for (sweep_idx, &ref_range_db) in config.reference_range_db_sweep.iter().enumerate() {
        let outcomes: Vec<Result<TrialOutcome>> = (0..config.n_exp)
            .into_par_iter()
            .map(|trial| run_trial(&ctx, sweep_idx, ref_range_db, trial))
            .collect();

        let mut per_method: Vec<(Method, Vec<TrialRecord>)> = config
            .methods
            .iter()
            .map(|&m| (m, Vec::with_capacity(config.n_exp)))
            .collect();
        for outcome in outcomes {
            let outcome = outcome?;
            counters.redrawn_nonpositive_range += outcome.redrawn_nonpositive_range;
            counters.redrawn_degenerate_anchors += outcome.redrawn_degenerate_anchors;
            counters.estimator_failures += outcome.estimator_failures;
            trials.extend(outcome.rows);
            measurements.extend(outcome.measurements);
            for (method, record) in outcome.records {
                per_method
                    .iter_mut()
                    .find(|(m, _)| *m == method)
                    .expect("method enabled")
                    .1
                    .push(record);
            }
        }

        for (method, records) in &per_method {
            let (mae, rmse) = if records.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (
                    mean_angular_error(records)?.degrees,
                    rmse_translation(records)?,
                )
            };
            summary.push(SummaryRow {
                ref_range_db,
                method: *method,
                perturbation_std: config.perturbation_std,
                n_exp: records.len(),
                mean_angular_error_deg: mae,
                rmse_translation_m: rmse,
            });
        }
    }

    Ok(ExperimentReport {
        summary,
        trials,
        measurements,
        counters,
        config: config.clone(),
    })
}

// -- persistence --------------------------------------------------------------

/// 17 significant digits: enough to reproduce every f64 bit-exactly on read.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub const SUMMARY_HEADER: &str =
    "ref_range_db,method,perturbation_std_m,n_exp,mean_angular_error_deg,rmse_translation_m";

pub const TRIALS_HEADER: &str = "trial,method,ref_range_db,perturbation_std_m,\
q11,q21,q31,q12,q22,q32,q13,q23,q33,t1,t2,t3,angular_error_deg,translation_error_m";

pub const MEASUREMENTS_HEADER: &str = "ref_range_db,trial,anchor,sensor,range_m,true_range_m";

fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for row in &report.summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format_float(row.ref_range_db),
            row.method,
            format_float(row.perturbation_std),
            row.n_exp,
            format_float(row.mean_angular_error_deg),
            format_float(row.rmse_translation_m),
        );
    }
    out
}

fn trials_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(TRIALS_HEADER);
    out.push('\n');
    for row in &report.trials {
        let mut line = format!(
            "{},{},{},{}",
            row.trial,
            row.method,
            format_float(row.ref_range_db),
            format_float(row.perturbation_std),
        );
        for v in row.q.iter().chain(row.t.iter()) {
            line.push(',');
            line.push_str(&format_float(*v));
        }
        let _ = writeln!(
            out,
            "{line},{},{}",
            format_float(row.angular_error_deg),
            format_float(row.translation_error_m),
        );
    }
    out
}

fn measurements_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(MEASUREMENTS_HEADER);
    out.push('\n');
    for row in &report.measurements {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format_float(row.ref_range_db),
            row.trial,
            row.anchor,
            row.sensor,
            format_float(row.range_m),
            format_float(row.true_range_m),
        );
    }
    out
}

fn manifest_text(report: &ExperimentReport) -> String {
    let cfg = &report.config;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("code_version", env!("CARGO_PKG_VERSION").to_string());
    kv("master_seed", cfg.master_seed.to_string());
    kv(
        "euler_convention",
        "extrinsic-xyz: Q = Rz(gamma) * Ry(beta) * Rx(alpha), degrees".to_string(),
    );
    kv("anchor_mode", cfg.anchor_mode.as_str().to_string());
    kv("anchor_count", cfg.anchor_count.to_string());
    kv(
        "anchor_region_origin",
        cfg.anchor_region
            .origin
            .iter()
            .map(|v| format_float(*v))
            .collect::<Vec<_>>()
            .join(","),
    );
    kv("anchor_region_side", format_float(cfg.anchor_region.side));
    kv("n_exp", cfg.n_exp.to_string());
    kv(
        "methods",
        cfg.methods
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    kv(
        "reference_range_db_sweep",
        cfg.reference_range_db_sweep
            .iter()
            .map(|v| format_float(*v))
            .collect::<Vec<_>>()
            .join(","),
    );
    kv("perturbation_std_m", format_float(cfg.perturbation_std));
    kv(
        "truth_euler_deg",
        cfg.truth_euler
            .iter()
            .map(|v| format_float(*v))
            .collect::<Vec<_>>()
            .join(","),
    );
    kv(
        "truth_translation_m",
        cfg.truth_translation
            .iter()
            .map(|v| format_float(*v))
            .collect::<Vec<_>>()
            .join(","),
    );
    for (i, row) in cfg.topology.iter().enumerate() {
        kv(
            &format!("topology_row_{i}"),
            row.iter()
                .map(|v| format_float(*v))
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    kv("per_sensor_noise", cfg.per_sensor_noise.to_string());
    kv("proper_rotation", cfg.proper_rotation.to_string());
    kv(
        "redrawn_nonpositive_range",
        report.counters.redrawn_nonpositive_range.to_string(),
    );
    kv(
        "redrawn_degenerate_anchors",
        report.counters.redrawn_degenerate_anchors.to_string(),
    );
    kv(
        "estimator_failures",
        report.counters.estimator_failures.to_string(),
    );
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    let mut file = fs::File::create(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    file.write_all(contents.as_bytes())
        .map_err(|source| Error::Io { path, source })
}

/// Writes `summary.csv`, `trials.csv`, `manifest.txt`, and (when measurement
/// dumping was enabled) `measurements.csv` into `dir`.
pub fn export_csv(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(dir, "summary.csv", &summary_csv(report))?;
    write_file(dir, "trials.csv", &trials_csv(report))?;
    write_file(dir, "manifest.txt", &manifest_text(report))?;
    if !report.measurements.is_empty() {
        write_file(dir, "measurements.csv", &measurements_csv(report))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            reference_range_db_sweep: vec![60.0],
            n_exp: 2,
            master_seed: 11,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_topology_matches_reference_matrix() {
        let topo = default_topology();
        let expected = [
            [1.0, 6.0, 7.0, 6.0, 2.0, 2.5],
            [0.0, 0.0, 5.0, 5.0, 5.0, 2.5],
            [0.0, 0.0, 0.0, 0.0, 0.0, 5.0],
        ];
        assert_eq!(topo.sensor_count(), 6);
        for (i, row) in expected.iter().enumerate() {
            for (j, value) in row.iter().enumerate() {
                assert_eq!(topo.matrix()[(i, j)], *value);
            }
        }
        assert_eq!(
            topo.matrix().column(5),
            nalgebra::Vector3::new(2.5, 2.5, 5.0)
        );
        // centered topology has full rank, so the constrained estimators are
        // identifiable on the reference scenario
        let u_n =
            crate::geometry::nullspace_basis(&nalgebra::DVector::from_element(6, 1.0)).unwrap();
        let c = nalgebra::DMatrix::from_column_slice(3, 6, topo.matrix().as_slice());
        assert_eq!(matrix_rank(&(c * u_n)), 3);
    }

    #[test]
    fn validation_flags_bad_configs() {
        let good = ExperimentConfig::default();
        assert!(validate_config(&good).iter().all(|c| c.passed));

        let bad = ExperimentConfig {
            anchor_count: 2,
            ..ExperimentConfig::default()
        };
        let checks = validate_config(&bad);
        assert!(checks
            .iter()
            .any(|c| c.name == "M >= 4 when CLS/CTLS enabled" && !c.passed));

        let flat = ExperimentConfig {
            topology: vec![vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4], vec![0.0; 4]],
            ..ExperimentConfig::default()
        };
        let checks = validate_config(&flat);
        assert!(checks.iter().any(|c| c.name == "rank(C·U_N) = 3" && !c.passed));
        assert!(checks.iter().any(|c| c.name == "rank(C_e) = 4" && !c.passed));
    }

    #[test]
    fn noiseless_single_trial_recovers_exactly() {
        let config = ExperimentConfig {
            reference_range_db_sweep: vec![f64::INFINITY],
            n_exp: 1,
            master_seed: 5,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.summary.len(), 3);
        for row in &report.summary {
            assert!(
                row.mean_angular_error_deg <= 1e-6,
                "{}: {:e}",
                row.method,
                row.mean_angular_error_deg
            );
            assert!(row.rmse_translation_m <= 1e-8);
        }
    }

    #[test]
    fn csv_schemas_have_documented_shapes() {
        let config = ExperimentConfig {
            methods: vec![Method::Cls],
            ..tiny_config()
        };
        let report = run_experiment(&config).unwrap();
        let trials = trials_csv(&report);
        let lines: Vec<&str> = trials.trim_end().lines().collect();
        assert_eq!(lines.len(), 1 + 2, "header + 2 data rows");
        for line in &lines {
            assert_eq!(line.split(',').count(), 18);
        }
        let summary = summary_csv(&report);
        let summary_lines: Vec<&str> = summary.trim_end().lines().collect();
        assert_eq!(
            summary_lines.len() - 1,
            config.reference_range_db_sweep.len() * config.methods.len()
        );
    }

    #[test]
    fn reruns_are_byte_identical() {
        let config = tiny_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(summary_csv(&a), summary_csv(&b));
        assert_eq!(trials_csv(&a), trials_csv(&b));
        assert_eq!(manifest_text(&a), manifest_text(&b));
    }

    #[test]
    fn trials_round_trip_reproduces_summary() {
        let config = ExperimentConfig {
            reference_range_db_sweep: vec![60.0, 100.0],
            n_exp: 20,
            master_seed: 3,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&config).unwrap();
        let text = trials_csv(&report);
        for summary in &report.summary {
            let mut angular = Vec::new();
            let mut translation_sq = Vec::new();
            for line in text.lines().skip(1) {
                let fields: Vec<&str> = line.split(',').collect();
                let method = fields[1];
                let ref_db: f64 = fields[2].parse().unwrap();
                if method == summary.method.as_str() && ref_db == summary.ref_range_db {
                    angular.push(fields[16].parse::<f64>().unwrap());
                    translation_sq.push(fields[17].parse::<f64>().unwrap().powi(2));
                }
            }
            assert_eq!(angular.len(), summary.n_exp);
            let mae = angular.iter().sum::<f64>() / angular.len() as f64;
            let rmse =
                (translation_sq.iter().sum::<f64>() / translation_sq.len() as f64).sqrt();
            assert_relative_eq!(mae, summary.mean_angular_error_deg, epsilon = 1e-12);
            assert_relative_eq!(rmse, summary.rmse_translation_m, epsilon = 1e-12);
        }
    }

    #[test]
    fn heavy_noise_triggers_logged_redraws_and_still_completes() {
        let config = ExperimentConfig {
            reference_range_db_sweep: vec![-5.0],
            n_exp: 3,
            master_seed: 77,
            methods: vec![Method::Cls],
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&config).unwrap();
        assert!(report.counters.redrawn_nonpositive_range > 0);
        assert_eq!(report.summary[0].n_exp, 3);
    }

    #[test]
    fn per_sensor_noise_flag_changes_the_draws() {
        let reference = tiny_config();
        let mismatched = ExperimentConfig {
            per_sensor_noise: true,
            ..reference.clone()
        };
        let a = run_experiment(&reference).unwrap();
        let b = run_experiment(&mismatched).unwrap();
        // same substreams, different variance indexing: estimates must differ
        let differs = a
            .trials
            .iter()
            .zip(&b.trials)
            .any(|(ra, rb)| ra.q != rb.q);
        assert!(differs);
    }

    #[test]
    fn fixed_anchor_mode_shares_one_draw_across_trials() {
        let config = ExperimentConfig {
            anchor_mode: AnchorMode::FixedPerExperiment,
            dump_measurements: true,
            reference_range_db_sweep: vec![f64::INFINITY],
            n_exp: 2,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&config).unwrap();
        // noiseless: identical anchors + identical sensors => identical true ranges
        let trial0: Vec<f64> = report
            .measurements
            .iter()
            .filter(|m| m.trial == 0)
            .map(|m| m.true_range_m)
            .collect();
        let trial1: Vec<f64> = report
            .measurements
            .iter()
            .filter(|m| m.trial == 1)
            .map(|m| m.true_range_m)
            .collect();
        assert_eq!(trial0, trial1);
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let config = ExperimentConfig::default();
        let text = config.to_toml_string();
        let parsed = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(parsed, config);
        // sparse configs inherit defaults
        let sparse = ExperimentConfig::from_toml_str("n_exp = 7\nmaster_seed = 9").unwrap();
        assert_eq!(sparse.n_exp, 7);
        assert_eq!(sparse.master_seed, 9);
        assert_eq!(sparse.topology, default_topology_rows());
        assert!(ExperimentConfig::from_toml_str("nonsense_field = 3").is_err());
    }

    #[test]
    fn format_float_round_trips_exactly() {
        for &x in &[
            0.0,
            -0.0,
            1.0,
            std::f64::consts::PI,
            1e-300,
            -3.333333333333333e-2,
            f64::INFINITY,
        ] {
            let s = format_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_float(f64::NAN), "NaN");
    }
}
