//! Second-order beliefs about the fourth moments of the residuals.
//!
//! Each residual outer product is split into a time-constant and a
//! time-varying part,
//!
//! ```text
//!   ω_t ω_tᵀ = V^ω + S^ω_t,      ν_t ν_tᵀ = V^ν + S^ν_t,
//! ```
//!
//! where V^ω and V^ν are uncertain covariance matrices drawn once per series
//! (with prior means W and V) and the S^κ_t are zero-mean disturbances,
//! uncorrelated across time and with everything else. Second-order beliefs
//! about these quantities are carried by four moment matrices over vec'd
//! symmetric matrices: Var(vec V^ω), Var(vec V^ν), Var(vec S^ω), and
//! Var(vec S^ν). This module builds, validates, and expands those matrices.
//!
//! All vec operations stack columns: entry (i, j) of a d×d matrix lands at
//! flat position j·d + i (0-based).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, symmetric_eigen};
use crate::quadratic::ResidualKind;

/// Tolerance for fourth-order positive semidefiniteness on the symmetric
/// subspace: eigenvalues above −FOURTH_PSD_TOLERANCE · max(1, λ_max) pass.
pub const FOURTH_PSD_TOLERANCE: f64 = 1e-8;

/// Tolerance for the index-symmetry identities of fourth-moment matrices,
/// relative to 1 + the largest absolute entry.
pub const INDEX_SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Flat position of entry (i, j) of a d×d matrix under column-stacking vec.
#[inline]
pub fn vec_index(i: usize, j: usize, dim: usize) -> usize {
    j * dim + i
}

/// Exchangeable fourth-moment pattern: a moment matrix over vec'd d×d
/// matrices whose entries depend only on the coincidence pattern of the four
/// indices involved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeablePattern {
    /// Common value of Cov-type entries with all four indices equal,
    /// e.g. Var(M₁₁).
    pub iiii: f64,
    /// Common value for two distinct indices in matching pairs,
    /// e.g. Var(M₁₂) (and Cov(M₁₂, M₂₁)).
    pub ijij: f64,
    /// Common value for two distinct diagonal positions, e.g. Cov(M₁₁, M₂₂).
    pub iijj: f64,
}

impl ExchangeablePattern {
    /// Pattern with the mixed diagonal-diagonal entry defaulted to zero.
    pub fn without_cross_diagonal(iiii: f64, ijij: f64) -> Self {
        Self { iiii, ijij, iijj: 0.0 }
    }
}

/// Expand an exchangeable pattern into the full d²×d² moment matrix.
///
/// Entry (vec(i,j), vec(k,l)) is `iiii` when i = j = k = l, `iijj` when
/// i = j and k = l with i ≠ k, `ijij` when {i, j} = {k, l} with i ≠ j, and
/// zero otherwise. Errors when the result is not positive semidefinite on
/// the symmetric subspace, since no joint belief could have such a moment
/// matrix.
pub fn expand_pattern(pattern: &ExchangeablePattern, dim: usize) -> Result<DMatrix<f64>> {
    assert!(dim >= 1, "pattern expansion needs dimension at least 1");
    let d2 = dim * dim;
    let mut out = DMatrix::zeros(d2, d2);
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let value = if i == j && k == l {
                        if i == k {
                            pattern.iiii
                        } else {
                            pattern.iijj
                        }
                    } else if i != j && ((i == k && j == l) || (i == l && j == k)) {
                        pattern.ijij
                    } else {
                        0.0
                    };
                    if value != 0.0 {
                        out[(vec_index(i, j, dim), vec_index(k, l, dim))] = value;
                    }
                }
            }
        }
    }
    check_symmetric_subspace_psd("expanded pattern", &out, dim)?;
    Ok(out)
}

/// Fourth moments of a Gaussian vector with covariance `v`:
/// Cov(M_ij, M_kl) for M = z zᵀ − V, z ~ N(0, V), which is
/// V_ik V_jl + V_il V_jk at entry (vec(i,j), vec(k,l)).
pub fn gaussian_fourth_moments(v: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(v.nrows(), v.ncols(), "covariance must be square");
    let dim = v.nrows();
    let d2 = dim * dim;
    let mut out = DMatrix::zeros(d2, d2);
    for i in 0..dim {
        for j in 0..dim {
            let row = vec_index(i, j, dim);
            for k in 0..dim {
                for l in 0..dim {
                    out[(row, vec_index(k, l, dim))] = v[(i, k)] * v[(j, l)] + v[(i, l)] * v[(j, k)];
                }
            }
        }
    }
    out
}

/// Orthonormal basis of the vec'd symmetric d×d matrices, one column per
/// basis element: unit vectors at diagonal positions, and
/// (e_vec(i,j) + e_vec(j,i))/√2 for i < j.
pub fn symmetric_subspace_basis(dim: usize) -> DMatrix<f64> {
    let d2 = dim * dim;
    let cols = dim * (dim + 1) / 2;
    let mut p = DMatrix::zeros(d2, cols);
    let mut c = 0;
    for i in 0..dim {
        p[(vec_index(i, i, dim), c)] = 1.0;
        c += 1;
    }
    let half_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        for j in (i + 1)..dim {
            p[(vec_index(i, j, dim), c)] = half_sqrt2;
            p[(vec_index(j, i, dim), c)] = half_sqrt2;
            c += 1;
        }
    }
    p
}

/// Smallest eigenvalue of a d²×d² moment matrix restricted to the vec'd
/// symmetric matrices. Moment matrices of symmetric random matrices are only
/// meaningful on that subspace; off it they may legitimately be indefinite.
pub fn symmetric_subspace_min_eigenvalue(m: &DMatrix<f64>, dim: usize) -> f64 {
    let p = symmetric_subspace_basis(dim);
    let restricted = p.transpose() * m * &p;
    let eig = symmetric_eigen(&restricted);
    let n = eig.eigenvalues.len();
    if n == 0 {
        0.0
    } else {
        eig.eigenvalues[n - 1]
    }
}

fn check_symmetric_subspace_psd(name: &str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    let p = symmetric_subspace_basis(dim);
    let restricted = p.transpose() * m * &p;
    let eig = symmetric_eigen(&restricted);
    let n = eig.eigenvalues.len();
    if n == 0 {
        return Ok(());
    }
    let min_eigenvalue = eig.eigenvalues[n - 1];
    let scale = eig.eigenvalues[0].abs().max(1.0);
    let tolerance = FOURTH_PSD_TOLERANCE;
    if min_eigenvalue < -tolerance * scale {
        return Err(Error::NotPositive {
            name: format!("{name} (on the symmetric subspace)"),
            min_eigenvalue,
            tolerance,
        });
    }
    Ok(())
}

fn check_index_symmetry(name: &str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    let d2 = dim * dim;
    if m.shape() != (d2, d2) {
        return Err(Error::DimensionMismatch {
            context: "fourth-moment matrix",
            expected: format!("{d2}×{d2} for dimension {dim}"),
            actual: format!("{}×{}", m.nrows(), m.ncols()),
        });
    }
    let tolerance = INDEX_SYMMETRY_TOLERANCE * (1.0 + max_abs(m));
    for i in 0..dim {
        for j in 0..dim {
            let row = vec_index(i, j, dim);
            let row_swapped = vec_index(j, i, dim);
            for k in 0..dim {
                for l in 0..dim {
                    let col = vec_index(k, l, dim);
                    let col_swapped = vec_index(l, k, dim);
                    let value = m[(row, col)];
                    let by_row = m[(row_swapped, col)];
                    if (value - by_row).abs() > tolerance {
                        return Err(Error::IndexAsymmetry {
                            name: name.to_string(),
                            entry_a: (row, col),
                            entry_b: (row_swapped, col),
                            difference: (value - by_row).abs(),
                        });
                    }
                    let by_col = m[(row, col_swapped)];
                    if (value - by_col).abs() > tolerance {
                        return Err(Error::IndexAsymmetry {
                            name: name.to_string(),
                            entry_a: (row, col),
                            entry_b: (row, col_swapped),
                            difference: (value - by_col).abs(),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// The four fourth-moment matrices describing second-order beliefs about the
/// residual covariance structure of a model with state dimension p and
/// observation dimension r.
#[derive(Debug, Clone)]
pub struct FourthOrderBeliefs {
    state_dim: usize,
    obs_dim: usize,
    var_vec_v_omega: DMatrix<f64>,
    var_vec_v_nu: DMatrix<f64>,
    var_vec_s_omega: DMatrix<f64>,
    var_vec_s_nu: DMatrix<f64>,
}

impl FourthOrderBeliefs {
    /// Assemble beliefs from explicit moment matrices, validating shapes,
    /// index symmetry (entries must be invariant under swapping the indices
    /// within either matrix position), and positive semidefiniteness on the
    /// symmetric subspace.
    pub fn new(
        state_dim: usize,
        obs_dim: usize,
        var_vec_v_omega: DMatrix<f64>,
        var_vec_v_nu: DMatrix<f64>,
        var_vec_s_omega: DMatrix<f64>,
        var_vec_s_nu: DMatrix<f64>,
    ) -> Result<Self> {
        check_index_symmetry("Var(vec V^ω)", &var_vec_v_omega, state_dim)?;
        check_index_symmetry("Var(vec V^ν)", &var_vec_v_nu, obs_dim)?;
        check_index_symmetry("Var(vec S^ω)", &var_vec_s_omega, state_dim)?;
        check_index_symmetry("Var(vec S^ν)", &var_vec_s_nu, obs_dim)?;
        check_symmetric_subspace_psd("Var(vec V^ω)", &var_vec_v_omega, state_dim)?;
        check_symmetric_subspace_psd("Var(vec V^ν)", &var_vec_v_nu, obs_dim)?;
        check_symmetric_subspace_psd("Var(vec S^ω)", &var_vec_s_omega, state_dim)?;
        check_symmetric_subspace_psd("Var(vec S^ν)", &var_vec_s_nu, obs_dim)?;
        Ok(Self {
            state_dim,
            obs_dim,
            var_vec_v_omega,
            var_vec_v_nu,
            var_vec_s_omega,
            var_vec_s_nu,
        })
    }

    /// Assemble beliefs from four exchangeable patterns.
    pub fn from_patterns(
        state_dim: usize,
        obs_dim: usize,
        v_omega: &ExchangeablePattern,
        v_nu: &ExchangeablePattern,
        s_omega: &ExchangeablePattern,
        s_nu: &ExchangeablePattern,
    ) -> Result<Self> {
        Self::new(
            state_dim,
            obs_dim,
            expand_pattern(v_omega, state_dim)?,
            expand_pattern(v_nu, obs_dim)?,
            expand_pattern(s_omega, state_dim)?,
            expand_pattern(s_nu, obs_dim)?,
        )
    }

    /// Assemble beliefs with Gaussian fourth moments for the time-varying
    /// parts: Var(vec S^ω) and Var(vec S^ν) are set to the Gaussian moments
    /// of the prior mean covariances `w` and `v`.
    pub fn with_gaussian_disturbances(
        var_vec_v_omega: DMatrix<f64>,
        var_vec_v_nu: DMatrix<f64>,
        w: &DMatrix<f64>,
        v: &DMatrix<f64>,
    ) -> Result<Self> {
        let state_dim = w.nrows();
        let obs_dim = v.nrows();
        Self::new(
            state_dim,
            obs_dim,
            var_vec_v_omega,
            var_vec_v_nu,
            gaussian_fourth_moments(w),
            gaussian_fourth_moments(v),
        )
    }

    /// State dimension p (the side of the ω matrices).
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Observation dimension r (the side of the ν matrices).
    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Var(vec V^κ) for a residual kind.
    pub fn var_vec_v(&self, kind: ResidualKind) -> &DMatrix<f64> {
        match kind {
            ResidualKind::Evolution => &self.var_vec_v_omega,
            ResidualKind::Observation => &self.var_vec_v_nu,
        }
    }

    /// Var(vec S^κ) for a residual kind.
    pub fn var_vec_s(&self, kind: ResidualKind) -> &DMatrix<f64> {
        match kind {
            ResidualKind::Evolution => &self.var_vec_s_omega,
            ResidualKind::Observation => &self.var_vec_s_nu,
        }
    }
}
