//! Joint 3-D position and orientation estimation of a rigid body from noisy
//! anchor-to-sensor range measurements.
//!
//! A body carries N sensors whose body-frame coordinates (the *topology*) are
//! known; M anchors at known absolute positions measure ranges to them. The
//! sensor positions are an affine image of the topology, `S = Q·C + t·1ᵀ`,
//! with the rotation `Q` constrained to the set of 3×3 unitary matrices.
//! Squared ranges are whitened and projected onto null-space bases that
//! cancel the unknown `‖s_n‖²` term and the translation, after which three
//! estimators recover the pose:
//!
//! * an unconstrained joint least-squares solve ([`estimators::estimate_ls`]),
//! * a unitarily constrained solve via the orthogonal Procrustes problem
//!   ([`estimators::estimate_cls`]), and
//! * a unitarily constrained total-least-squares variant for perturbed
//!   topologies ([`estimators::estimate_ctls`]), which shares the CLS
//!   closed form.
//!
//! The [`harness`] module drives seeded Monte-Carlo sweeps over the
//! reference-range noise level and persists summary/trial CSVs with a
//! reproducibility manifest; `rigidloc` is the matching CLI.

pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod measurement;
pub mod metrics;
pub mod preprocess;

pub use error::{Error, Result};
pub use estimators::{
    estimate_cls, estimate_cls_with, estimate_ctls, estimate_ctls_with, estimate_ls,
    estimate_ls_with, oracle_procrustes_grid, solve_procrustes, LsRoute, Method, PoseEstimate,
};
pub use geometry::{
    apply_pose, nullspace_basis, pose_from_euler, pseudo_inverse, AnchorSet, EulerAngles, Pose,
    SensorPositions, Topology,
};
pub use harness::{
    default_topology, export_csv, run_experiment, validate_config, AnchorMode, ExperimentConfig,
    ExperimentReport,
};
pub use measurement::{
    perturb_topology, range_noise_std, simulate_ranges, square_ranges, NoiseModel, RangeSet,
    SquaredRangeSet,
};
pub use metrics::{mean_angular_error, rmse_translation, MeanAngularError, TrialRecord};
pub use preprocess::{build_model, whitening_matrix, PreprocessedModel};
