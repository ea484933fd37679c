//! Model structure and admissibility for the constant multivariate dynamic
//! linear model
//!
//! ```text
//!   x_t = Fᵀ θ_t + ν_t,      ν_t ~ (0, V),   observation equation
//!   θ_t = G θ_{t−1} + ω_t,   ω_t ~ (0, W),   evolution equation
//! ```
//!
//! with prior mean μ₀ and prior covariance Σ for θ₀. F is p×r, G is p×p, V is
//! r×r, W is p×p, and all four matrices are constant over time. The residual
//! covariances V and W are treated as prior *means* of uncertain covariance
//! matrices elsewhere in the library; here they are only required to be
//! admissible (symmetric positive semidefinite).
//!
//! This module also constructs the transfer matrix H solving H Fᵀ = Fᵀ G,
//! which propagates the state contribution of an observation one step
//! forward. Its existence and invertibility determine which identification
//! constructions are available.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, min_symmetric_eigenvalue, pinv, rank_and_condition};
use crate::quadratic::ResidualKind;

/// Relative tolerance on ‖H Fᵀ − Fᵀ G‖_max below which the transfer relation
/// counts as satisfied.
pub const TRANSFER_TOLERANCE: f64 = 1e-10;

/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_SV_CUTOFF: f64 = 1e-12;

/// Relative singular-value cutoff for numerical rank decisions. Singular
/// values come from eigenvalues of the Gram matrix, whose rounding noise is
/// of order machine epsilon times the largest eigenvalue; square roots of
/// that noise reach ~1e-8 times the largest singular value, so the cutoff
/// must sit above it. Transfers with condition numbers beyond 1e7 are
/// treated as singular.
pub const RANK_SV_CUTOFF: f64 = 1e-7;

/// Relative tolerance for symmetry checks during validation.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Tolerance on the minimum eigenvalue in positive semidefiniteness checks:
/// eigenvalues above −PSD_TOLERANCE · (1 + λ_max) are accepted.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Structural description of a constant multivariate dynamic linear model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// Observation operator F (p×r); the observation equation uses Fᵀ.
    pub f: DMatrix<f64>,
    /// Evolution operator G (p×p).
    pub g: DMatrix<f64>,
    /// Prior mean of the initial state θ₀ (length p).
    pub mu0: DVector<f64>,
    /// Prior covariance of the initial state θ₀ (p×p).
    pub sigma: DMatrix<f64>,
    /// Observation residual covariance V (r×r), the prior mean of Var(ν_t).
    pub v: DMatrix<f64>,
    /// Evolution residual covariance W (p×p), the prior mean of Var(ω_t).
    pub w: DMatrix<f64>,
}

impl ModelSpec {
    /// Assemble a model, rejecting inconsistent dimensions. Admissibility of
    /// the covariance matrices is checked separately by [`validate_model`].
    pub fn new(
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        mu0: DVector<f64>,
        sigma: DMatrix<f64>,
        v: DMatrix<f64>,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        let p = f.nrows();
        let r = f.ncols();
        if p == 0 || r == 0 {
            return Err(Error::DimensionMismatch {
                context: "ModelSpec::new",
                expected: "p ≥ 1 and r ≥ 1".to_string(),
                actual: format!("F is {p}×{r}"),
            });
        }
        let check = |name: &str, rows: usize, cols: usize, m: (usize, usize)| -> Result<()> {
            if m != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    context: "ModelSpec::new",
                    expected: format!("{name} of size {rows}×{cols}"),
                    actual: format!("{}×{}", m.0, m.1),
                });
            }
            Ok(())
        };
        check("G", p, p, g.shape())?;
        check("Σ", p, p, sigma.shape())?;
        check("V", r, r, v.shape())?;
        check("W", p, p, w.shape())?;
        if mu0.len() != p {
            return Err(Error::DimensionMismatch {
                context: "ModelSpec::new",
                expected: format!("μ₀ of length {p}"),
                actual: format!("{}", mu0.len()),
            });
        }
        Ok(Self { f, g, mu0, sigma, v, w })
    }

    /// State dimension p.
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    /// Observation dimension r.
    pub fn obs_dim(&self) -> usize {
        self.f.ncols()
    }

    /// Prior mean covariance of a residual kind: W for evolution residuals,
    /// V for observation residuals.
    pub fn residual_cov(&self, kind: ResidualKind) -> &DMatrix<f64> {
        match kind {
            ResidualKind::Evolution => &self.w,
            ResidualKind::Observation => &self.v,
        }
    }

    /// Dimension of a residual kind: p for evolution, r for observation.
    pub fn residual_dim(&self, kind: ResidualKind) -> usize {
        match kind {
            ResidualKind::Evolution => self.state_dim(),
            ResidualKind::Observation => self.obs_dim(),
        }
    }

    /// Whether F and G are both identity matrices (which forces p = r). The
    /// closed-form second-moment relations apply exactly to such models.
    pub fn is_identity_structure(&self) -> bool {
        let p = self.state_dim();
        let r = self.obs_dim();
        p == r
            && self.f == DMatrix::<f64>::identity(p, r)
            && self.g == DMatrix::<f64>::identity(p, p)
    }
}

/// A single admissibility violation found by [`validate_model`].
#[derive(Debug, Clone)]
pub enum Violation {
    /// A matrix contains NaN or infinite entries.
    NonFinite {
        /// Offending matrix.
        name: &'static str,
    },
    /// A covariance matrix is not symmetric within tolerance.
    NotSymmetric {
        /// Offending matrix.
        name: &'static str,
        /// Largest absolute asymmetry found.
        max_asymmetry: f64,
    },
    /// A covariance matrix has a significantly negative eigenvalue.
    NotPsd {
        /// Offending matrix.
        name: &'static str,
        /// Smallest eigenvalue of the symmetric part.
        min_eigenvalue: f64,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonFinite { name } => {
                write!(out, "{name} contains non-finite entries")
            }
            Violation::NotSymmetric { name, max_asymmetry } => {
                write!(out, "{name} is not symmetric: max |A − Aᵀ| = {max_asymmetry:.3e}")
            }
            Violation::NotPsd { name, min_eigenvalue } => {
                write!(
                    out,
                    "{name} is not positive semidefinite: min eigenvalue {min_eigenvalue:.6e}"
                )
            }
        }
    }
}

/// Outcome of model validation: an explicit list of violations, empty when
/// the model is admissible.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    /// Violations in the order they were found.
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// True when no violations were found.
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_admissible() {
            return write!(out, "model is admissible");
        }
        writeln!(out, "model is not admissible:")?;
        for violation in &self.violations {
            writeln!(out, "  - {violation}")?;
        }
        Ok(())
    }
}

fn check_covariance(name: &'static str, m: &DMatrix<f64>, report: &mut ValidationReport) {
    if m.iter().any(|v| !v.is_finite()) {
        report.violations.push(Violation::NonFinite { name });
        return;
    }
    let scale = 1.0 + max_abs(m);
    let mut max_asymmetry = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            max_asymmetry = max_asymmetry.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if max_asymmetry > SYMMETRY_TOLERANCE * scale {
        report.violations.push(Violation::NotSymmetric { name, max_asymmetry });
        return;
    }
    let min_eigenvalue = min_symmetric_eigenvalue(m);
    if min_eigenvalue < -PSD_TOLERANCE * scale {
        report.violations.push(Violation::NotPsd { name, min_eigenvalue });
    }
}

/// Check a model for admissibility: finite entries everywhere, and symmetric
/// positive semidefinite Σ, V, and W. Returns a report rather than an error
/// so callers can present every violation at once.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    if spec.f.iter().any(|v| !v.is_finite()) {
        report.violations.push(Violation::NonFinite { name: "F" });
    }
    if spec.g.iter().any(|v| !v.is_finite()) {
        report.violations.push(Violation::NonFinite { name: "G" });
    }
    if spec.mu0.iter().any(|v| !v.is_finite()) {
        report.violations.push(Violation::NonFinite { name: "μ₀" });
    }
    check_covariance("Σ", &spec.sigma, &mut report);
    check_covariance("V", &spec.v, &mut report);
    check_covariance("W", &spec.w, &mut report);
    report
}

/// Transfer matrix H with H Fᵀ = Fᵀ G, together with diagnostics about how
/// well the relation is satisfied and whether H can be inverted.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    /// The r×r transfer matrix.
    pub h: DMatrix<f64>,
    /// Whether H has full numerical rank at [`RANK_SV_CUTOFF`].
    pub invertible: bool,
    /// σ_max/σ_min of H; infinite when H is singular.
    pub condition_estimate: f64,
    /// Achieved ‖H Fᵀ − Fᵀ G‖_max.
    pub residual: f64,
}

impl TransferMatrix {
    /// H², which transfers a state contribution across two steps:
    /// H² Fᵀ = Fᵀ G².
    pub fn squared(&self) -> DMatrix<f64> {
        &self.h * &self.h
    }

    /// Inverse of H, computed through the spectral pseudo-inverse. Errors
    /// when H is numerically singular.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        if !self.invertible {
            let (rank, _) = rank_and_condition(&self.h, RANK_SV_CUTOFF);
            return Err(Error::SingularH { rank, dim: self.h.nrows() });
        }
        Ok(pinv(&self.h, PINV_SV_CUTOFF))
    }
}

fn transfer_from_candidate(spec: &ModelSpec, h: DMatrix<f64>) -> Result<TransferMatrix> {
    let ft = spec.f.transpose();
    let ftg = &ft * &spec.g;
    let residual = max_abs(&(&h * &ft - &ftg));
    let tolerance = TRANSFER_TOLERANCE * (1.0 + max_abs(&ftg));
    if residual > tolerance {
        return Err(Error::NoTransferExists { residual, tolerance });
    }
    let (rank, condition_estimate) = rank_and_condition(&h, RANK_SV_CUTOFF);
    let invertible = rank == h.nrows();
    Ok(TransferMatrix { h, invertible, condition_estimate, residual })
}

/// Construct the transfer matrix H = Fᵀ G (Fᵀ)⁺ and verify that it satisfies
/// H Fᵀ = Fᵀ G. The relation is solvable whenever the columns of Fᵀ G lie in
/// the column space of Fᵀ; when F has full row rank p (with r ≥ p) this holds
/// for every G. Errors with [`Error::NoTransferExists`] otherwise.
pub fn compute_transfer(spec: &ModelSpec) -> Result<TransferMatrix> {
    let ft = spec.f.transpose();
    let candidate = &ft * &spec.g * pinv(&ft, PINV_SV_CUTOFF);
    transfer_from_candidate(spec, candidate)
}

/// Extend a transfer matrix to an invertible one when possible.
///
/// H is only constrained on the column space of Fᵀ. Adding the orthogonal
/// projector onto the complement of that space leaves H Fᵀ = Fᵀ G intact and
/// makes the result act as the identity off the constrained subspace. For
/// full-rank F with r ≥ p the completion is invertible exactly when G is;
/// errors with [`Error::SingularH`] when it is not.
pub fn invertible_completion(spec: &ModelSpec, transfer: &TransferMatrix) -> Result<TransferMatrix> {
    let r = spec.obs_dim();
    let ft = spec.f.transpose();
    let projector = &ft * pinv(&ft, PINV_SV_CUTOFF);
    let candidate = &transfer.h + (DMatrix::<f64>::identity(r, r) - projector);
    let completed = transfer_from_candidate(spec, candidate)?;
    if !completed.invertible {
        let (rank, _) = rank_and_condition(&completed.h, RANK_SV_CUTOFF);
        return Err(Error::SingularH { rank, dim: r });
    }
    Ok(completed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_valid_model() -> ModelSpec {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let g = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let mu0 = DVector::from_vec(vec![1.0, 2.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = DMatrix::from_row_slice(2, 2, &[3.0, 0.2, 0.2, 3.0]);
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        ModelSpec::new(f, g, mu0, sigma, v, w).expect("model dimensions are consistent")
    }

    #[test]
    fn new_rejects_inconsistent_dimensions() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let mu0 = DVector::from_vec(vec![0.0, 0.0]);
        let sigma = DMatrix::identity(2, 2);
        let w = DMatrix::identity(2, 2);
        let v_wrong = DMatrix::identity(3, 3);
        let err = ModelSpec::new(f, g, mu0, sigma, v_wrong, w).unwrap_err();
        assert!(
            matches!(err, Error::DimensionMismatch { .. }),
            "expected a dimension error, got {err:?}"
        );
    }

    #[test]
    fn validate_accepts_admissible_model() {
        let report = validate_model(&small_valid_model());
        assert!(report.is_admissible(), "unexpected violations: {report}");
    }

    #[test]
    fn validate_flags_asymmetric_v() {
        let mut spec = small_valid_model();
        spec.v[(0, 1)] = 5.0;
        let report = validate_model(&spec);
        assert!(
            report
                .violations
                .iter()
                .any(|v| matches!(v, Violation::NotSymmetric { name: "V", .. })),
            "asymmetric V must be reported, got {report}"
        );
    }

    #[test]
    fn validate_flags_indefinite_sigma() {
        let mut spec = small_valid_model();
        spec.sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let report = validate_model(&spec);
        assert!(
            report
                .violations
                .iter()
                .any(|v| matches!(v, Violation::NotPsd { name: "Σ", .. })),
            "indefinite Σ must be reported, got {report}"
        );
    }

    #[test]
    fn transfer_for_identity_operators_is_exactly_identity() {
        let spec = ModelSpec::new(
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3),
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let transfer = compute_transfer(&spec).expect("identity model has a transfer matrix");
        assert_eq!(transfer.h, DMatrix::<f64>::identity(3, 3), "H must be the identity, exactly");
        assert!(transfer.invertible);
        assert_eq!(transfer.residual, 0.0);
    }

    #[test]
    fn transfer_solves_relation_for_square_full_rank_f() {
        let spec = small_valid_model();
        let transfer = compute_transfer(&spec).unwrap();
        let ft = spec.f.transpose();
        let residual = max_abs(&(&transfer.h * &ft - &ft * &spec.g));
        assert!(residual <= 1e-12, "transfer residual {residual} too large");
        assert!(transfer.invertible);
        assert!(transfer.condition_estimate.is_finite());
    }

    #[test]
    fn transfer_requires_compatible_g_when_r_less_than_p() {
        // With p = 2, r = 1 and Fᵀ = [1 0], the relation H Fᵀ = Fᵀ G forces
        // the (1,2) entry of G to vanish.
        let f = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let mu0 = DVector::zeros(2);
        let sigma = DMatrix::identity(2, 2);
        let v = DMatrix::identity(1, 1);
        let w = DMatrix::identity(2, 2);

        let g_ok = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.3, 0.5]);
        let spec_ok =
            ModelSpec::new(f.clone(), g_ok, mu0.clone(), sigma.clone(), v.clone(), w.clone())
                .unwrap();
        let transfer = compute_transfer(&spec_ok).expect("compatible G must admit a transfer");
        assert!((transfer.h[(0, 0)] - 0.7).abs() <= 1e-12);

        let g_bad = DMatrix::from_row_slice(2, 2, &[0.7, 0.5, 0.3, 0.5]);
        let spec_bad = ModelSpec::new(f, g_bad, mu0, sigma, v, w).unwrap();
        let err = compute_transfer(&spec_bad).unwrap_err();
        assert!(
            matches!(err, Error::NoTransferExists { .. }),
            "expected NoTransferExists, got {err:?}"
        );
    }

    #[test]
    fn completion_makes_rank_deficient_transfer_invertible() {
        // p = 1, r = 2, Fᵀ = [1; 1], G = [2]: the direct solution has rank 1;
        // the completion adds the complement projector and becomes invertible.
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let g = DMatrix::from_row_slice(1, 1, &[2.0]);
        let spec = ModelSpec::new(
            f,
            g,
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let transfer = compute_transfer(&spec).unwrap();
        assert!(!transfer.invertible, "rank-1 transfer must not report invertible");

        let completed = invertible_completion(&spec, &transfer).unwrap();
        assert!(completed.invertible);
        let expected = DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 1.5]);
        assert!(
            max_abs(&(&completed.h - &expected)) <= 1e-12,
            "completion differs from the analytic value: {}",
            &completed.h
        );
        let ft = spec.f.transpose();
        let residual = max_abs(&(&completed.h * &ft - &ft * &spec.g));
        assert!(residual <= 1e-12, "completed transfer residual {residual}");
    }

    #[test]
    fn inverse_errors_on_singular_transfer() {
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let g = DMatrix::from_row_slice(1, 1, &[2.0]);
        let spec = ModelSpec::new(
            f,
            g,
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let transfer = compute_transfer(&spec).unwrap();
        let err = transfer.inverse().unwrap_err();
        assert!(matches!(err, Error::SingularH { rank: 1, dim: 2 }), "got {err:?}");
    }
}
