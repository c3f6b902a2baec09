//! Core types for poses, topologies, and anchors, the forward model
//! `S = Q·C + t·1ᵀ`, and the small-matrix utilities (orthonormal null-space
//! bases, Moore–Penrose pseudo-inverse, numerical rank) shared by every other
//! module.
//!
//! All computation is `f64`; mm-level accuracy targets at 100 m scale leave
//! no headroom in single precision.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, Vector3};

use crate::error::{Error, Result};

/// Absolute sensor positions, one column per sensor.
pub type SensorPositions = Matrix3xX<f64>;

/// Known body-frame coordinates of the sensors mounted on the rigid body
/// (3×N, meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    c: Matrix3xX<f64>,
}

impl Topology {
    /// Requires at least one sensor and finite entries.
    pub fn new(c: Matrix3xX<f64>) -> Result<Self> {
        if c.ncols() == 0 {
            return Err(Error::EmptyTopology);
        }
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "topology",
            });
        }
        Ok(Self { c })
    }

    /// Builds from three row slices of equal length (row-major layout, as in
    /// config files).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != 3 || rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(Error::DimensionMismatch {
                context: "topology rows",
                expected: "3 rows of equal length".into(),
                actual: format!(
                    "{} rows of lengths {:?}",
                    rows.len(),
                    rows.iter().map(Vec::len).collect::<Vec<_>>()
                ),
            });
        }
        let n = rows[0].len();
        let c = Matrix3xX::from_fn(n, |i, j| rows[i][j]);
        Self::new(c)
    }

    pub fn matrix(&self) -> &Matrix3xX<f64> {
        &self.c
    }

    pub fn sensor_count(&self) -> usize {
        self.c.ncols()
    }
}

/// Absolute anchor positions (3×M, meters). At least two anchors are needed
/// for the (M−1)-dimensional projection to exist.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    a: Matrix3xX<f64>,
}

impl AnchorSet {
    pub fn new(a: Matrix3xX<f64>) -> Result<Self> {
        if a.ncols() < 2 {
            return Err(Error::TooFewAnchors { got: a.ncols() });
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "anchors" });
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &Matrix3xX<f64> {
        &self.a
    }

    pub fn anchor_count(&self) -> usize {
        self.a.ncols()
    }

    /// Squared Euclidean norms of the anchor positions, one per anchor.
    pub fn squared_norms(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.a.ncols(),
            self.a.column_iter().map(|col| col.norm_squared()),
        )
    }
}

/// Per-axis rotation angles in degrees, used to construct ground-truth poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub alpha_x: f64,
    pub beta_y: f64,
    pub gamma_z: f64,
}

impl EulerAngles {
    pub fn new(alpha_x: f64, beta_y: f64, gamma_z: f64) -> Self {
        Self {
            alpha_x,
            beta_y,
            gamma_z,
        }
    }
}

/// A rigid-body pose: rotation `q` (3×3) and translation `t` (meters).
///
/// The type itself does not enforce unitarity of `q`; raw LS estimates are
/// carried in the same type as constrained ones. Use [`Pose::unitarity_defect`]
/// to measure `‖QᵀQ − I‖_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub q: Matrix3<f64>,
    pub t: Vector3<f64>,
}

impl Pose {
    pub fn new(q: Matrix3<f64>, t: Vector3<f64>) -> Self {
        Self { q, t }
    }

    pub fn identity() -> Self {
        Self {
            q: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    /// `‖QᵀQ − I₃‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.q.transpose() * self.q - Matrix3::identity()).norm()
    }

    /// The stacked 3×4 view `[Q | t]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(3, 4);
        m.view_mut((0, 0), (3, 3)).copy_from(&self.q);
        m.set_column(3, &self.t);
        m
    }
}

fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Builds the pose with `Q = R_z(γ)·R_y(β)·R_x(α)` (extrinsic x-then-y-then-z)
/// and zero translation.
///
/// The composition order is a convention of this library; the experiment
/// manifest records it so results stay reproducible.
pub fn pose_from_euler(angles: &EulerAngles) -> Pose {
    let q = rot_z(angles.gamma_z) * rot_y(angles.beta_y) * rot_x(angles.alpha_x);
    Pose::new(q, Vector3::zeros())
}

/// Forward model: column n of the result is `Q·c_n + t`.
pub fn apply_pose(topology: &Topology, pose: &Pose) -> SensorPositions {
    let mut s = pose.q * topology.matrix();
    for mut col in s.column_iter_mut() {
        col += pose.t;
    }
    s
}

/// Orthonormal basis of the null-space of `v`: a K×(K−1) matrix `U` with
/// `Uᵀv = 0` and `UᵀU = I`.
///
/// Taken as columns 2..K of the Householder reflector that maps `v` onto a
/// multiple of `e₁` (a full orthogonal decomposition of the vector). Any
/// valid basis is acceptable downstream; estimators depend only on the
/// spanned subspace.
pub fn nullspace_basis(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let k = v.len();
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let mut w = v.clone();
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += sign * norm;
    let scale = 2.0 / w.norm_squared();
    // H = I − scale·wwᵀ, columns 2..K
    let mut u = DMatrix::zeros(k, k - 1);
    for j in 1..k {
        for i in 0..k {
            let h_ij = if i == j { 1.0 } else { 0.0 } - scale * w[i] * w[j];
            u[(i, j - 1)] = h_ij;
        }
    }
    Ok(u)
}

/// Numerical rank cutoff: `max(rows, cols) · ε · σ_max`.
fn singular_value_cutoff(rows: usize, cols: usize, s_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * s_max
}

/// Singular-value analysis of a matrix: pseudo-inverse, rank, and condition
/// number under one scale-aware cutoff.
pub(crate) struct SvdAnalysis {
    pub pinv: DMatrix<f64>,
    pub rank: usize,
    /// σ_max / σ_min over the retained spectrum (∞ if rank-deficient in the
    /// full-rank sense, 0 for an all-zero matrix).
    pub condition: f64,
}

pub(crate) fn svd_analyze(x: &DMatrix<f64>) -> SvdAnalysis {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return SvdAnalysis {
            pinv: DMatrix::zeros(cols, rows),
            rank: 0,
            condition: 0.0,
        };
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = singular_value_cutoff(rows, cols, s_max);
    let rank = s.iter().filter(|&&sv| sv > cutoff).count();

    let k = s.len();
    let mut s_inv = DMatrix::zeros(k, k);
    let mut s_min_kept = f64::INFINITY;
    for i in 0..k {
        if s[i] > cutoff {
            s_inv[(i, i)] = 1.0 / s[i];
            s_min_kept = s_min_kept.min(s[i]);
        }
    }
    let pinv = v_t.transpose() * s_inv * u.transpose();
    let condition = if rank == 0 {
        0.0
    } else if rank < rows.min(cols) {
        f64::INFINITY
    } else {
        s_max / s_min_kept
    };
    SvdAnalysis {
        pinv,
        rank,
        condition,
    }
}

/// Moore–Penrose pseudo-inverse via SVD, zeroing singular values below
/// `max(rows, cols)·ε·σ_max`.
pub fn pseudo_inverse(x: &DMatrix<f64>) -> DMatrix<f64> {
    svd_analyze(x).pinv
}

/// Numerical rank under the same cutoff as [`pseudo_inverse`].
pub fn matrix_rank(x: &DMatrix<f64>) -> usize {
    svd_analyze(x).rank
}
