//! Turns squared ranges plus anchor geometry into the whitened, projected
//! linear models consumed by the estimators:
//!
//! * `D̄ = U_MᵀW(D − u·1ᵀ)` and `Ā = −2·U_MᵀWAᵀ`, where `U_M` spans the
//!   null-space of `W·1_M` (cancels the unknown `‖s_n‖²` term without
//!   coloring the noise), and
//! * `D̃ = D̄·U_N`, `C̄ = C·U_N`, where `U_N` spans the null-space of `1_N`
//!   (cancels the translation), plus `C_e = [C; 1ᵀ]` for the joint solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{nullspace_basis, AnchorSet, Topology};
use crate::measurement::{range_noise_std, RangeSet, SquaredRangeSet};

/// Whitened, projected data matrices ready for estimation.
#[derive(Debug, Clone)]
pub struct PreprocessedModel {
    /// (M−1)×N: whitened, projected, `u`-subtracted squared ranges.
    pub d_bar: DMatrix<f64>,
    /// (M−1)×3: `−2·U_MᵀWAᵀ`.
    pub a_bar: DMatrix<f64>,
    /// (M−1)×(N−1): `D̄·U_N`, the translation-free data.
    pub d_tilde: DMatrix<f64>,
    /// 3×(N−1): centered topology `C·U_N`.
    pub c_bar: DMatrix<f64>,
    /// 4×N: topology with an appended row of ones.
    pub c_e: DMatrix<f64>,
    /// M×M diagonal whitener.
    pub w: DMatrix<f64>,
}

impl PreprocessedModel {
    /// Assembles a model from already-projected parts. Intended for tests
    /// that exercise basis invariance or synthetic estimator inputs; the
    /// regular entry point is [`build_model`].
    pub fn from_parts(
        d_bar: DMatrix<f64>,
        a_bar: DMatrix<f64>,
        d_tilde: DMatrix<f64>,
        c_bar: DMatrix<f64>,
        c_e: DMatrix<f64>,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        if a_bar.ncols() != 3
            || c_e.nrows() != 4
            || c_bar.nrows() != 3
            || d_bar.nrows() != a_bar.nrows()
            || d_tilde.nrows() != a_bar.nrows()
            || d_bar.ncols() != c_e.ncols()
            || d_tilde.ncols() != c_bar.ncols()
        {
            return Err(Error::DimensionMismatch {
                context: "PreprocessedModel::from_parts",
                expected: "consistent (M-1)/N/(N-1) shapes".into(),
                actual: format!(
                    "d_bar {:?}, a_bar {:?}, d_tilde {:?}, c_bar {:?}, c_e {:?}",
                    d_bar.shape(),
                    a_bar.shape(),
                    d_tilde.shape(),
                    c_bar.shape(),
                    c_e.shape()
                ),
            });
        }
        Ok(Self {
            d_bar,
            a_bar,
            d_tilde,
            c_bar,
            c_e,
            w,
        })
    }

    pub fn anchor_count(&self) -> usize {
        self.d_bar.nrows() + 1
    }

    pub fn sensor_count(&self) -> usize {
        self.d_bar.ncols()
    }

    /// The plain topology block of `C_e` (its first three rows).
    pub fn topology_matrix(&self) -> DMatrix<f64> {
        self.c_e.rows(0, 3).into_owned()
    }
}

/// Diagonal whitener `W = diag(1/σ̂_m)` with `σ̂²_m = 4·σ̂²(e_m)·r̂²(a_m, s₁)`,
/// both factors evaluated from the *measured* range to sensor 1.
///
/// With noise disabled the literal σ̂ is zero and `W` would diverge; since the
/// estimators are invariant to a global scaling of `W`, the noiseless case
/// uses the scale-free limit `W_mm = 1/(2·r̂²(a_m, s₁))`.
pub fn whitening_matrix(rs: &RangeSet) -> Result<DMatrix<f64>> {
    let m = rs.ranges.nrows();
    let mut diag = DVector::zeros(m);
    for mi in 0..m {
        let r_hat = rs.ranges[(mi, 0)];
        if r_hat.is_nan() || r_hat <= 0.0 {
            return Err(Error::NonPositiveMeasuredRange {
                anchor: mi,
                got: r_hat,
            });
        }
        diag[mi] = if rs.model.is_noiseless() {
            1.0 / (2.0 * r_hat * r_hat)
        } else {
            let sigma_e = range_noise_std(&rs.model, r_hat)?;
            1.0 / (2.0 * sigma_e * r_hat)
        };
    }
    Ok(DMatrix::from_diagonal(&diag))
}

/// Builds the whitened, projected model from squared ranges, anchors, a
/// whitener, and the topology handed to the estimator.
pub fn build_model(
    d: &SquaredRangeSet,
    anchors: &AnchorSet,
    w: &DMatrix<f64>,
    topology_known: &Topology,
) -> Result<PreprocessedModel> {
    let m = anchors.anchor_count();
    let n = topology_known.sensor_count();
    if d.d.nrows() != m || d.d.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "build_model",
            expected: format!("{m}x{n} squared ranges"),
            actual: format!("{}x{}", d.d.nrows(), d.d.ncols()),
        });
    }
    if w.nrows() != m || w.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "build_model",
            expected: format!("{m}x{m} whitener"),
            actual: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }

    // D = [d(s_1) … d(s_N)] − u·1ᵀ with u_m = ‖a_m‖²
    let u = anchors.squared_norms();
    let mut data = d.d.clone();
    for mut col in data.column_iter_mut() {
        col -= &u;
    }

    let w_ones = w * DVector::from_element(m, 1.0);
    let u_m = nullspace_basis(&w_ones)?;
    let residual = (u_m.transpose() * &w_ones).norm();
    assert!(
        residual <= 1e-10 * w_ones.norm().max(1.0),
        "U_M^T W 1_M = 0 violated: residual {residual:e}"
    );

    let a = DMatrix::from_column_slice(3, m, anchors.matrix().as_slice());
    let u_mt_w = u_m.transpose() * w;
    let d_bar = &u_mt_w * data;
    let a_bar = -2.0 * &u_mt_w * a.transpose();

    let u_n = nullspace_basis(&DVector::from_element(n, 1.0))?;
    let d_tilde = &d_bar * &u_n;
    let c = DMatrix::from_column_slice(3, n, topology_known.matrix().as_slice());
    let c_bar = &c * &u_n;

    let mut c_e = DMatrix::zeros(4, n);
    c_e.view_mut((0, 0), (3, n)).copy_from(&c);
    c_e.row_mut(3).fill(1.0);

    Ok(PreprocessedModel {
        d_bar,
        a_bar,
        d_tilde,
        c_bar,
        c_e,
        w: w.clone(),
    })
}
