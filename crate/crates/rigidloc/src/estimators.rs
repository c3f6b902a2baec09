//! The three pose estimators:
//!
//! * `estimate_ls` — unconstrained joint solve of `D̄ = Ā·[Q|t]·C_e`; the
//!   returned rotation block is generally not unitary.
//! * `estimate_cls` — unitarily constrained solve via the orthogonal
//!   Procrustes problem: SVD of `C̄·Xᵀ` with `X = Ā†·D̃`, then `Q̂ = V·Uᵀ` and
//!   `t̂ = (1/N)·(Ā†·D̄ − Q̂·C)·1`.
//! * `estimate_ctls` — the total-least-squares variant accounting for
//!   topology perturbations; it provably shares the CLS solution and is kept
//!   as a distinct entry point so experiment reports list it separately.
//!
//! Plus `oracle_procrustes_grid`, a brute-force O(3) grid scan used by tests
//! to certify the closed-form Procrustes solution.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{svd_analyze, Pose};
use crate::preprocess::PreprocessedModel;

/// Estimation method label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Ls,
    Cls,
    Ctls,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ls => "LS",
            Method::Cls => "CLS",
            Method::Ctls => "CTLS",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Numerical diagnostics attached to an estimate.
#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    /// Condition number of the solved system (κ(Ā)·κ(C_e) for LS, κ(Ā) for
    /// CLS/CTLS).
    pub condition_number: f64,
    pub a_bar_rank: usize,
    pub c_e_rank: usize,
    /// Set when the Procrustes SVD has repeated or zero singular values, in
    /// which case the constrained minimizer is not unique.
    pub degenerate_svd: bool,
}

/// A pose estimate with its method label, the LS column norms, and
/// diagnostics.
#[derive(Debug, Clone)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub method: Method,
    /// `‖q̂_m‖₂` for the three rotation columns; differs from 1 for LS.
    pub column_norms: [f64; 3],
    pub diagnostics: Diagnostics,
}

/// Which algebraic route the unconstrained LS solve takes. Both give the
/// same estimate; the matrix form avoids materializing the Kronecker product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsRoute {
    /// `Q̂_e = Ā†·D̄·C_e†` (default).
    Matrix,
    /// `q̂_e = (C_eᵀ ⊗ Ā)†·vec(D̄)`.
    Kronecker,
}

fn column_norms(q: &Matrix3<f64>) -> [f64; 3] {
    [
        q.column(0).norm(),
        q.column(1).norm(),
        q.column(2).norm(),
    ]
}

fn check_ls_preconditions(model: &PreprocessedModel) -> Result<()> {
    let m = model.anchor_count();
    let n = model.sensor_count();
    if (m - 1) * n < 12 {
        return Err(Error::Identifiability(format!(
            "(M-1)N = {} < 12: the joint system is underdetermined (M = {m}, N = {n})",
            (m - 1) * n
        )));
    }
    Ok(())
}

/// Joint unconstrained LS estimate of `[Q | t]`.
pub fn estimate_ls(model: &PreprocessedModel) -> Result<PoseEstimate> {
    estimate_ls_with(model, LsRoute::Matrix)
}

/// [`estimate_ls`] with an explicit solve route.
pub fn estimate_ls_with(model: &PreprocessedModel, route: LsRoute) -> Result<PoseEstimate> {
    check_ls_preconditions(model)?;

    let a = svd_analyze(&model.a_bar);
    if a.rank < 3 {
        return Err(Error::Identifiability(format!(
            "whitened anchor matrix has rank {} < 3; anchors are degenerate",
            a.rank
        )));
    }
    let c = svd_analyze(&model.c_e);
    if c.rank < 4 {
        return Err(Error::Identifiability(format!(
            "extended topology has rank {} < 4; sensors do not span 3-D affinely",
            c.rank
        )));
    }

    let q_e = match route {
        LsRoute::Matrix => &a.pinv * &model.d_bar * &c.pinv,
        LsRoute::Kronecker => {
            let kron = model.c_e.transpose().kronecker(&model.a_bar);
            let d_vec = DVector::from_column_slice(model.d_bar.as_slice());
            let q_vec = svd_analyze(&kron).pinv * d_vec;
            DMatrix::from_column_slice(3, 4, q_vec.as_slice())
        }
    };

    let q = Matrix3::from_fn(|i, j| q_e[(i, j)]);
    let t = Vector3::new(q_e[(0, 3)], q_e[(1, 3)], q_e[(2, 3)]);
    Ok(PoseEstimate {
        pose: Pose::new(q, t),
        method: Method::Ls,
        column_norms: column_norms(&q),
        diagnostics: Diagnostics {
            condition_number: a.condition * c.condition,
            a_bar_rank: a.rank,
            c_e_rank: c.rank,
            degenerate_svd: false,
        },
    })
}

/// Closed-form solution of `min ‖Q·C̄ − X‖_F` over `QᵀQ = I` (the orthogonal
/// Procrustes problem): SVD `C̄·Xᵀ = U·Σ·Vᵀ`, then `Q̂ = V·Uᵀ`.
///
/// Returns the minimizer over all of O(3) exactly as the closed form gives
/// it; `proper_rotation` flips the smallest singular direction to force
/// `det = +1`. The second value reports whether the SVD was degenerate
/// (repeated or zero singular values ⇒ non-unique minimizer).
pub fn solve_procrustes(
    c_bar: &DMatrix<f64>,
    x: &DMatrix<f64>,
    proper_rotation: bool,
) -> Result<(Matrix3<f64>, bool)> {
    if c_bar.nrows() != 3 || x.nrows() != 3 || c_bar.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "solve_procrustes",
            expected: "3xK factors of equal width".into(),
            actual: format!("{:?} vs {:?}", c_bar.shape(), x.shape()),
        });
    }
    let g = c_bar * x.transpose();
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let s = &svd.singular_values;

    let s_max = s.iter().cloned().fold(0.0f64, f64::max);
    let tol = 3.0 * f64::EPSILON * s_max.max(1.0);
    let mut sorted: Vec<f64> = s.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let degenerate = sorted[2] <= tol
        || sorted[0] - sorted[1] <= tol
        || sorted[1] - sorted[2] <= tol;

    let mut q_dyn = v_t.transpose() * u.transpose();
    if proper_rotation && q_dyn.determinant() < 0.0 {
        // Flip the singular direction with the smallest singular value.
        let (min_idx, _) = s
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("3 singular values");
        let mut v = v_t.transpose();
        v.column_mut(min_idx).neg_mut();
        q_dyn = v * u.transpose();
    }
    Ok((Matrix3::from_fn(|i, j| q_dyn[(i, j)]), degenerate))
}

fn estimate_constrained(
    model: &PreprocessedModel,
    method: Method,
    proper_rotation: bool,
) -> Result<PoseEstimate> {
    let a = svd_analyze(&model.a_bar);
    if a.rank < 3 {
        return Err(Error::Identifiability(format!(
            "whitened anchor matrix has rank {} < 3; need M >= 4 non-degenerate anchors",
            a.rank
        )));
    }
    let c_bar_rank = svd_analyze(&model.c_bar).rank;
    if c_bar_rank < 1 {
        return Err(Error::Identifiability(
            "centered topology C·U_N is zero; rotations are unobservable".into(),
        ));
    }

    let x = &a.pinv * &model.d_tilde;
    let (q, degenerate) = solve_procrustes(&model.c_bar, &x, proper_rotation)?;

    // t̂ = (1/N)·(Ā†·D̄ − Q̂·C)·1_N
    let n = model.sensor_count();
    let c = model.topology_matrix();
    let q_dyn = DMatrix::from_fn(3, 3, |i, j| q[(i, j)]);
    let residual = &a.pinv * &model.d_bar - q_dyn * c;
    let t_dyn = residual * DVector::from_element(n, 1.0) / n as f64;
    let t = Vector3::new(t_dyn[0], t_dyn[1], t_dyn[2]);

    Ok(PoseEstimate {
        pose: Pose::new(q, t),
        method,
        column_norms: column_norms(&q),
        diagnostics: Diagnostics {
            condition_number: a.condition,
            a_bar_rank: a.rank,
            c_e_rank: svd_analyze(&model.c_e).rank,
            degenerate_svd: degenerate,
        },
    })
}

/// Unitarily constrained LS estimate (orthogonal Procrustes).
pub fn estimate_cls(model: &PreprocessedModel) -> Result<PoseEstimate> {
    estimate_constrained(model, Method::Cls, false)
}

/// [`estimate_cls`] with optional projection onto proper rotations
/// (`det = +1`).
pub fn estimate_cls_with(model: &PreprocessedModel, proper_rotation: bool) -> Result<PoseEstimate> {
    estimate_constrained(model, Method::Cls, proper_rotation)
}

/// Unitarily constrained TLS estimate. Accounts for perturbed sensor
/// topologies; shares the CLS closed form and therefore returns the
/// bit-identical pose, labeled `CTLS`.
pub fn estimate_ctls(model: &PreprocessedModel) -> Result<PoseEstimate> {
    estimate_constrained(model, Method::Ctls, false)
}

/// [`estimate_ctls`] with optional projection onto proper rotations.
pub fn estimate_ctls_with(
    model: &PreprocessedModel,
    proper_rotation: bool,
) -> Result<PoseEstimate> {
    estimate_constrained(model, Method::Ctls, proper_rotation)
}

/// `‖Q·C̄ − X‖_F`, the Procrustes data-fit objective.
pub fn procrustes_objective(q: &Matrix3<f64>, c_bar: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let q_dyn = DMatrix::from_fn(3, 3, |i, j| q[(i, j)]);
    (q_dyn * c_bar - x).norm()
}

/// Brute-force grid scan of `min ‖Q·C̄ − X‖_F` over O(3): an Euler-angle grid
/// over SO(3) at the given resolution plus the same grid composed with a
/// fixed reflection. Returns the grid minimizer as a pose with zero
/// translation.
///
/// Scans by maximizing `tr(Qᵀ·X·C̄ᵀ)`, which equals minimizing the objective
/// over the same grid since `‖Q·C̄‖_F = ‖C̄‖_F` for orthogonal `Q`.
pub fn oracle_procrustes_grid(
    c_bar: &DMatrix<f64>,
    x: &DMatrix<f64>,
    resolution_deg: f64,
) -> Result<Pose> {
    if !(resolution_deg > 0.0 && resolution_deg <= 30.0) {
        return Err(Error::InvalidResolution {
            got: resolution_deg,
        });
    }
    if c_bar.nrows() != 3 || x.nrows() != 3 || c_bar.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "oracle_procrustes_grid",
            expected: "3xK factors of equal width".into(),
            actual: format!("{:?} vs {:?}", c_bar.shape(), x.shape()),
        });
    }

    let g = x * c_bar.transpose(); // 3x3
    let g = Matrix3::from_fn(|i, j| g[(i, j)]);

    // Q = Rz(γ)·Ry(β)·Rx(α); γ, α sweep [0, 360), β sweeps [−90, 90].
    let full_steps = (360.0 / resolution_deg).ceil() as usize;
    let half_steps = (180.0 / resolution_deg).floor() as usize + 1;
    let full_angles: Vec<f64> = (0..full_steps)
        .map(|k| (k as f64 * resolution_deg).to_radians())
        .collect();
    let half_angles: Vec<f64> = (0..half_steps)
        .map(|k| (-90.0 + k as f64 * resolution_deg).to_radians())
        .collect();
    let alpha_trig: Vec<(f64, f64)> = full_angles.iter().map(|a| a.sin_cos()).collect();

    let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));

    let mut best_trace = f64::NEG_INFINITY;
    let mut best = (0usize, 0usize, 0usize, false);
    for (branch, reflected) in [(g, false), (g * reflection, true)] {
        for (gi, &gamma) in full_angles.iter().enumerate() {
            let (sg, cg) = gamma.sin_cos();
            let rz = Matrix3::new(cg, -sg, 0.0, sg, cg, 0.0, 0.0, 0.0, 1.0);
            let g1 = rz.transpose() * branch;
            for (bi, &beta) in half_angles.iter().enumerate() {
                let (sb, cb) = beta.sin_cos();
                let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
                let g2 = ry.transpose() * g1;
                let base = g2[(0, 0)];
                let cos_coef = g2[(1, 1)] + g2[(2, 2)];
                let sin_coef = g2[(2, 1)] - g2[(1, 2)];
                for (ai, &(sa, ca)) in alpha_trig.iter().enumerate() {
                    let trace = base + ca * cos_coef + sa * sin_coef;
                    if trace > best_trace {
                        best_trace = trace;
                        best = (gi, bi, ai, reflected);
                    }
                }
            }
        }
    }

    let (gi, bi, ai, reflected) = best;
    let (sg, cg) = full_angles[gi].sin_cos();
    let (sb, cb) = half_angles[bi].sin_cos();
    let (sa, ca) = full_angles[ai].sin_cos();
    let rz = Matrix3::new(cg, -sg, 0.0, sg, cg, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca);
    let mut q = rz * ry * rx;
    if reflected {
        q *= reflection;
    }
    Ok(Pose::new(q, Vector3::zeros()))
}
