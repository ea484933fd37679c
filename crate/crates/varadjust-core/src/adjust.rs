//! Adjustment of the uncertain covariance targets by orthogonal projection
//! onto observed quadratic products.
//!
//! The projection space is spanned by the r² constant unit matrices together
//! with conjugated one-step and two-step products over a horizon of n
//! observations: at t = 2 the products x′x′ᵀ, H x′x′ᵀ Hᵀ and H⁻¹ x′x′ᵀ H⁻ᵀ,
//! and for 3 ≤ t ≤ n additionally x″x″ᵀ and H⁻¹ x″x″ᵀ H⁻ᵀ. Elements that
//! coincide as residual forms (as happens throughout when H = I) are kept
//! once.
//!
//! The inner product between elements is (A, B) = tr Cov(vec A, vec B)
//! + ⟨E A, E B⟩_F. Projecting a target τ onto the span yields coefficients
//! a with Gram · a = rhs, solved through a spectral pseudo-inverse so that
//! numerically dependent spans degrade gracefully; the resolution
//! (a, rhs)/(τ, τ) reports the fraction of target variation the span
//! explains. Binding the coefficients to observed data produces the
//! adjusted moment E_D(τ).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::beliefs::FourthOrderBeliefs;
use crate::error::{Error, Result};
use crate::identify::DifferenceOrder;
use crate::linalg::{frobenius_inner, symmetric_eigen, symmetric_part, SymmetricEigen};
use crate::model::{ModelSpec, TransferMatrix};
use crate::quadratic::{
    cov_target_quadratic, covariance_quadratic, difference_observables, expectation_quadratic,
    one_step_product, two_step_product, vec_of, AdjustTarget, QuadraticObservable,
};

/// Relative spectral cutoff for the Gram pseudo-inverse.
pub const DEFAULT_SOLVER_TOLERANCE: f64 = 1e-10;

/// Conjugation class of a random basis element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    /// x′_t x′_tᵀ.
    OneStep,
    /// H x′_t x′_tᵀ Hᵀ.
    OneStepTransfer,
    /// H⁻¹ x′_t x′_tᵀ H⁻ᵀ.
    OneStepInverse,
    /// x″_t x″_tᵀ.
    TwoStep,
    /// H⁻¹ x″_t x″_tᵀ H⁻ᵀ.
    TwoStepInverse,
}

impl ElementKind {
    fn order(&self) -> DifferenceOrder {
        match self {
            ElementKind::OneStep | ElementKind::OneStepTransfer | ElementKind::OneStepInverse => {
                DifferenceOrder::OneStep
            }
            ElementKind::TwoStep | ElementKind::TwoStepInverse => DifferenceOrder::TwoStep,
        }
    }
}

/// One random element of the projection space.
#[derive(Debug, Clone)]
pub struct BasisElement {
    /// Conjugation class.
    pub kind: ElementKind,
    /// Time index of the underlying differenced product.
    pub time: i64,
    /// The conjugated product as a residual form.
    pub observable: QuadraticObservable,
    conjugator: DMatrix<f64>,
}

/// The projection space over a fixed horizon: r² constant unit matrices
/// followed by the deduplicated random elements.
#[derive(Debug, Clone)]
pub struct ObservableBasis {
    /// Observation dimension r.
    pub obs_dim: usize,
    /// Number of observations the random elements draw on (0 when the basis
    /// is constants-only).
    pub horizon: usize,
    /// Random elements in construction order.
    pub elements: Vec<BasisElement>,
    transfer_h: DMatrix<f64>,
}

impl ObservableBasis {
    /// Total basis size r² + number of random elements.
    pub fn len(&self) -> usize {
        self.obs_dim * self.obs_dim + self.elements.len()
    }

    /// True when the basis holds no elements at all, which never happens
    /// for a valid observation dimension.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of constant elements r².
    pub fn constant_count(&self) -> usize {
        self.obs_dim * self.obs_dim
    }
}

/// Builds the constants-only space, whose projection reproduces prior means
/// exactly.
pub fn constants_only_basis(spec: &ModelSpec) -> ObservableBasis {
    let r = spec.obs_dim();
    ObservableBasis {
        obs_dim: r,
        horizon: 0,
        elements: Vec::new(),
        transfer_h: DMatrix::identity(r, r),
    }
}

/// Builds the projection space over observations 1..=n.
///
/// Requires n ≥ 2 so at least one differenced product exists, and an
/// invertible transfer matrix for the inverse-conjugated elements; pass the
/// invertible completion when H itself is rank deficient.
pub fn build_basis(
    spec: &ModelSpec,
    transfer: &TransferMatrix,
    n: usize,
) -> Result<ObservableBasis> {
    if n < 2 {
        return Err(Error::TooShort { required: 2, actual: n });
    }
    let h_inv = transfer.inverse()?;
    let r = spec.obs_dim();
    let identity = DMatrix::<f64>::identity(r, r);

    let mut elements: Vec<BasisElement> = Vec::new();
    let mut push_deduplicated = |kind: ElementKind, time: i64, conjugator: &DMatrix<f64>| {
        let base = match kind.order() {
            DifferenceOrder::OneStep => one_step_product(spec, &transfer.h, time),
            DifferenceOrder::TwoStep => two_step_product(spec, &transfer.h, time),
        };
        let observable = base.conjugated(conjugator);
        let duplicate = elements.iter().any(|kept| {
            kept.time == time
                && kept.kind.order() == kind.order()
                && kept.observable.form.same_up_to_sign(&observable.form)
        });
        if !duplicate {
            elements.push(BasisElement {
                kind,
                time,
                observable,
                conjugator: conjugator.clone(),
            });
        }
    };

    for t in 2..=n as i64 {
        push_deduplicated(ElementKind::OneStep, t, &identity);
        push_deduplicated(ElementKind::OneStepTransfer, t, &transfer.h);
        push_deduplicated(ElementKind::OneStepInverse, t, &h_inv);
        if t >= 3 {
            push_deduplicated(ElementKind::TwoStep, t, &identity);
            push_deduplicated(ElementKind::TwoStepInverse, t, &h_inv);
        }
    }

    Ok(ObservableBasis {
        obs_dim: r,
        horizon: n,
        elements,
        transfer_h: transfer.h.clone(),
    })
}

/// The assembled inner-product system for a basis: the Gram matrix, its
/// spectral decomposition, and the target-side quantities for both
/// adjustment targets.
#[derive(Debug, Clone)]
pub struct GramSystem {
    /// The basis the system was assembled for.
    pub basis: ObservableBasis,
    /// Gram matrix of pairwise inner products, constants first.
    pub gram: DMatrix<f64>,
    /// Right-hand sides (τ, basis element) keyed by target.
    pub target_rhs: HashMap<&'static str, DVector<f64>>,
    /// Squared target norms (τ, τ) keyed by target.
    pub target_self: HashMap<&'static str, f64>,
    /// Relative spectral cutoff used when solving.
    pub solver_tolerance: f64,
    eigen: SymmetricEigen,
}

/// Assembles the Gram system for a basis under the given beliefs.
///
/// Inner products between random elements depend only on their conjugation
/// classes and time offset, which keeps assembly linear in the horizon; the
/// spectral decomposition is computed once here and reused by every
/// projection.
pub fn assemble_gram(
    basis: &ObservableBasis,
    beliefs: &FourthOrderBeliefs,
    spec: &ModelSpec,
) -> GramSystem {
    let constants = basis.constant_count();
    let k = basis.elements.len();
    let m = constants + k;

    let expectations: Vec<DMatrix<f64>> = basis
        .elements
        .iter()
        .map(|element| expectation_quadratic(&element.observable, spec))
        .collect();

    let mut gram = DMatrix::zeros(m, m);
    for a in 0..constants {
        gram[(a, a)] = 1.0;
    }
    for (j, expectation) in expectations.iter().enumerate() {
        let col = constants + j;
        let e_vec = vec_of(expectation);
        for a in 0..constants {
            gram[(a, col)] = e_vec[a];
            gram[(col, a)] = e_vec[a];
        }
    }

    // Covariance traces repeat across time: memoize on the pair of
    // conjugation classes and the clamped time offset. Differenced products
    // span at most three consecutive times, so offsets beyond ±3 share the
    // no-overlap value.
    let mut trace_memo: HashMap<(ElementKind, ElementKind, i64), f64> = HashMap::new();
    for i in 0..k {
        for j in i..k {
            let (ei, ej) = (&basis.elements[i], &basis.elements[j]);
            let key = (ei.kind, ej.kind, (ej.time - ei.time).clamp(-3, 3));
            let trace = *trace_memo.entry(key).or_insert_with(|| {
                covariance_quadratic(&ei.observable, &ej.observable, beliefs, spec).trace()
            });
            let value = trace + frobenius_inner(&expectations[i], &expectations[j]);
            gram[(constants + i, constants + j)] = value;
            gram[(constants + j, constants + i)] = value;
        }
    }

    let mut target_rhs = HashMap::new();
    let mut target_self = HashMap::new();
    for target in [AdjustTarget::ObservationCov, AdjustTarget::ProjectedEvolutionCov] {
        let mean = target.prior_mean(spec);
        let mean_vec = vec_of(&mean);
        let mut rhs = DVector::zeros(m);
        for a in 0..constants {
            rhs[a] = mean_vec[a];
        }
        let mut kind_memo: HashMap<ElementKind, f64> = HashMap::new();
        for (j, element) in basis.elements.iter().enumerate() {
            let trace = *kind_memo.entry(element.kind).or_insert_with(|| {
                cov_target_quadratic(target, &element.observable, beliefs, spec).trace()
            });
            rhs[constants + j] = trace + frobenius_inner(&mean, &expectations[j]);
        }
        target_rhs.insert(target.key(), rhs);
        target_self
            .insert(target.key(), target.var_vec(beliefs, spec).trace() + mean_vec.norm_squared());
    }

    let eigen = symmetric_eigen(&gram);
    GramSystem {
        basis: basis.clone(),
        gram,
        target_rhs,
        target_self,
        solver_tolerance: DEFAULT_SOLVER_TOLERANCE,
        eigen,
    }
}

/// The coefficients and quality measures of one projected target.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Which target was projected.
    pub target: AdjustTarget,
    /// Coefficients over the basis, constants first.
    pub coefficients: DVector<f64>,
    /// Fraction of the target's squared norm captured by the projection,
    /// in [0, 1] up to rounding.
    pub resolution: f64,
    /// Number of Gram eigenvalues above the solver cutoff.
    pub effective_rank: usize,
    /// True when the Gram matrix is numerically rank deficient, in which
    /// case the minimum-norm coefficient vector is reported.
    pub ill_conditioned: bool,
}

/// Projects one target onto the assembled basis.
pub fn project(system: &GramSystem, target: AdjustTarget) -> Projection {
    let rhs = &system.target_rhs[target.key()];
    let (coefficients, kept) = system.eigen.apply_pinv(rhs, system.solver_tolerance);
    let self_norm = system.target_self[target.key()];
    let resolution = if self_norm > 0.0 { coefficients.dot(rhs) / self_norm } else { 0.0 };
    Projection {
        target,
        coefficients,
        resolution,
        effective_rank: kept,
        ill_conditioned: kept < system.gram.nrows(),
    }
}

/// Largest scaled orthogonality defect |(τ − E_D τ, D_j)| over the basis,
/// each defect scaled by √(D_j, D_j) · √(τ, τ). Exact projection makes the
/// residual target component orthogonal to every element, so this measures
/// solver quality.
pub fn max_orthogonality_residual(system: &GramSystem, projection: &Projection) -> f64 {
    let rhs = &system.target_rhs[projection.target.key()];
    let self_norm = system.target_self[projection.target.key()].max(f64::MIN_POSITIVE);
    let defect = rhs - &system.gram * &projection.coefficients;
    let mut worst: f64 = 0.0;
    for j in 0..defect.len() {
        let scale = (system.gram[(j, j)].max(f64::MIN_POSITIVE) * self_norm).sqrt();
        worst = worst.max(defect[j].abs() / scale);
    }
    worst
}

/// How negative eigenvalues of an adjusted moment are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdPolicy {
    /// Report the spectrum and leave the matrix unchanged.
    ReportOnly,
    /// Replace negative eigenvalues with zero.
    Clip,
}

impl PsdPolicy {
    /// Stable name for reports and serialized output.
    pub fn key(&self) -> &'static str {
        match self {
            PsdPolicy::ReportOnly => "report",
            PsdPolicy::Clip => "clip",
        }
    }
}

/// Spectrum report produced when checking an adjusted moment.
#[derive(Debug, Clone)]
pub struct PsdReport {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// The smallest eigenvalue.
    pub min_eigenvalue: f64,
    /// True when the returned matrix differs from the input.
    pub modified: bool,
    /// The policy that produced this report.
    pub policy: PsdPolicy,
}

/// Checks the symmetric part of a matrix for positive semidefiniteness and
/// applies the chosen repair policy.
pub fn repair_psd(matrix: &DMatrix<f64>, policy: PsdPolicy) -> (DMatrix<f64>, PsdReport) {
    let eigen = symmetric_eigen(matrix);
    let eigenvalues: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    let min_eigenvalue = eigenvalues.last().copied().unwrap_or(0.0);
    match policy {
        PsdPolicy::ReportOnly => (
            matrix.clone(),
            PsdReport { eigenvalues, min_eigenvalue, modified: false, policy },
        ),
        PsdPolicy::Clip => {
            if min_eigenvalue >= 0.0 {
                return (
                    matrix.clone(),
                    PsdReport { eigenvalues, min_eigenvalue, modified: false, policy },
                );
            }
            let clipped = eigen.eigenvalues.map(|lambda| lambda.max(0.0));
            let repaired = &eigen.eigenvectors
                * DMatrix::from_diagonal(&clipped)
                * eigen.eigenvectors.transpose();
            (
                symmetric_part(&repaired),
                PsdReport { eigenvalues, min_eigenvalue, modified: true, policy },
            )
        }
    }
}

/// One adjusted target bound to data.
#[derive(Debug, Clone)]
pub struct AdjustedTarget {
    /// The projection that produced it.
    pub projection: Projection,
    /// The adjusted moment E_D(τ), symmetrized but not repaired.
    pub adjusted: DMatrix<f64>,
}

/// Adjusted moments for both targets over one observed series.
#[derive(Debug, Clone)]
pub struct AdjustmentResult {
    /// Horizon n the basis drew on.
    pub horizon: usize,
    /// Adjusted targets in the order the projections were given.
    pub targets: Vec<AdjustedTarget>,
}

/// Evaluates the basis on an observed series and forms the adjusted moments
/// E_D(τ) = Σ_i a_i D_i(data) for each projection.
///
/// The series must contain at least the basis horizon; later observations
/// are ignored.
pub fn bind_data(
    system: &GramSystem,
    projections: &[Projection],
    series: &[DVector<f64>],
) -> Result<AdjustmentResult> {
    let basis = &system.basis;
    if series.len() < basis.horizon {
        return Err(Error::LengthMismatch { required: basis.horizon, actual: series.len() });
    }
    let r = basis.obs_dim;
    for (i, x) in series.iter().enumerate().take(basis.horizon) {
        if x.len() != r {
            return Err(Error::DimensionMismatch {
                context: "observation series",
                expected: format!("vectors of length {r}"),
                actual: format!("length {} at position {i}", x.len()),
            });
        }
    }

    let values: Vec<DMatrix<f64>> = if basis.elements.is_empty() {
        Vec::new()
    } else {
        let (one_step, two_step) =
            difference_observables(&series[..basis.horizon], &basis.transfer_h)?;
        basis
            .elements
            .iter()
            .map(|element| {
                let d = match element.kind.order() {
                    DifferenceOrder::OneStep => &one_step[(element.time - 2) as usize],
                    DifferenceOrder::TwoStep => &two_step[(element.time - 3) as usize],
                };
                let ld = &element.conjugator * d;
                &ld * ld.transpose()
            })
            .collect()
    };

    let constants = basis.constant_count();
    let targets = projections
        .iter()
        .map(|projection| {
            let mut total = DMatrix::zeros(r, r);
            for a in 0..constants {
                total[(a % r, a / r)] += projection.coefficients[a];
            }
            for (j, value) in values.iter().enumerate() {
                total += projection.coefficients[constants + j] * value;
            }
            AdjustedTarget { projection: projection.clone(), adjusted: symmetric_part(&total) }
        })
        .collect();

    Ok(AdjustmentResult { horizon: basis.horizon, targets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beliefs::ExchangeablePattern;
    use crate::linalg::max_abs;
    use crate::model::compute_transfer;
    use nalgebra::DVector;

    fn paper_like_model() -> ModelSpec {
        let dim = 6;
        let mut sigma = DMatrix::from_element(dim, dim, 3.0);
        let mut v = DMatrix::from_element(dim, dim, -4.0);
        let mut w = DMatrix::from_element(dim, dim, 1.0);
        for i in 0..dim {
            sigma[(i, i)] = 9.0;
            v[(i, i)] = 36.0;
            w[(i, i)] = 4.0;
        }
        ModelSpec::new(
            DMatrix::identity(dim, dim),
            DMatrix::identity(dim, dim),
            DVector::from_vec(vec![10.0, 9.0, 9.0, 8.0, 8.0, 7.0]),
            sigma,
            v,
            w,
        )
        .unwrap()
    }

    fn paper_like_beliefs() -> FourthOrderBeliefs {
        FourthOrderBeliefs::from_patterns(
            6,
            6,
            &ExchangeablePattern { iiii: 2.25, ijij: 0.5625, iijj: 0.2 },
            &ExchangeablePattern { iiii: 25.0, ijij: 1.0, iijj: 4.0 },
            &ExchangeablePattern::without_cross_diagonal(30.0, 15.0),
            &ExchangeablePattern::without_cross_diagonal(2500.0, 1000.0),
        )
        .unwrap()
    }

    #[test]
    fn identity_model_basis_counts_constants_and_distinct_products() {
        let spec = paper_like_model();
        let transfer = compute_transfer(&spec).unwrap();
        let basis = build_basis(&spec, &transfer, 17).unwrap();
        assert_eq!(basis.constant_count(), 36);
        assert_eq!(
            basis.elements.len(),
            31,
            "16 one-step and 15 two-step products remain after removing identical conjugates"
        );
        assert_eq!(basis.len(), 67);
    }

    #[test]
    fn observation_target_self_inner_product_matches_hand_value() {
        // tr Var(vec V^ν) for the running pattern: 6 · 25 + 30 · 1 = 180;
        // ‖E V^ν‖²_F = 6 · 36² + 30 · 4² = 8256; total 8436.
        let spec = paper_like_model();
        let beliefs = paper_like_beliefs();
        let basis = constants_only_basis(&spec);
        let system = assemble_gram(&basis, &beliefs, &spec);
        let got = system.target_self["observation_cov"];
        assert!(
            (got - 8436.0).abs() < 1e-9,
            "(τ, τ) for the observation target must be 8436, got {got}"
        );
    }

    #[test]
    fn constants_only_projection_recovers_prior_means_exactly() {
        let spec = paper_like_model();
        let beliefs = paper_like_beliefs();
        let basis = constants_only_basis(&spec);
        let system = assemble_gram(&basis, &beliefs, &spec);
        for target in [AdjustTarget::ObservationCov, AdjustTarget::ProjectedEvolutionCov] {
            let projection = project(&system, target);
            assert!(!projection.ill_conditioned);
            let series: Vec<DVector<f64>> = Vec::new();
            let bound = bind_data(&system, &[projection], &series).unwrap();
            let diff = &bound.targets[0].adjusted - target.prior_mean(&spec);
            assert_eq!(
                max_abs(&diff),
                0.0,
                "constants-only adjustment must reproduce the prior mean bitwise"
            );
        }
    }

    #[test]
    fn projection_coefficients_satisfy_orthogonality() {
        let spec = paper_like_model();
        let beliefs = paper_like_beliefs();
        let transfer = compute_transfer(&spec).unwrap();
        let basis = build_basis(&spec, &transfer, 8).unwrap();
        let system = assemble_gram(&basis, &beliefs, &spec);
        for target in [AdjustTarget::ObservationCov, AdjustTarget::ProjectedEvolutionCov] {
            let projection = project(&system, target);
            let residual = max_orthogonality_residual(&system, &projection);
            assert!(
                residual <= 1e-8,
                "projection for {} leaves orthogonality residual {residual:.3e}",
                target.key()
            );
        }
    }

    #[test]
    fn resolution_grows_with_the_horizon() {
        let spec = paper_like_model();
        let beliefs = paper_like_beliefs();
        let transfer = compute_transfer(&spec).unwrap();
        let mut previous = 0.0;
        for n in [3, 6, 10, 17] {
            let basis = build_basis(&spec, &transfer, n).unwrap();
            let system = assemble_gram(&basis, &beliefs, &spec);
            let projection = project(&system, AdjustTarget::ObservationCov);
            assert!(
                projection.resolution >= previous - 1e-12,
                "resolution must not decrease as the horizon grows: {} then {} at n = {n}",
                previous,
                projection.resolution
            );
            assert!(projection.resolution <= 1.0 + 1e-9);
            previous = projection.resolution;
        }
        assert!(previous > 0.0, "a nontrivial horizon must explain some target variation");
    }

    #[test]
    fn bound_adjustment_changes_with_the_data() {
        let spec = paper_like_model();
        let beliefs = paper_like_beliefs();
        let transfer = compute_transfer(&spec).unwrap();
        let basis = build_basis(&spec, &transfer, 5).unwrap();
        let system = assemble_gram(&basis, &beliefs, &spec);
        let projection = project(&system, AdjustTarget::ObservationCov);

        let flat: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_element(6, 8.0)).collect();
        let wild: Vec<DVector<f64>> =
            (0..5).map(|t| DVector::from_fn(6, |i, _| ((t * 7 + i * 3) % 11) as f64 * 4.0)).collect();
        let bound_flat = bind_data(&system, &[projection.clone()], &flat).unwrap();
        let bound_wild = bind_data(&system, &[projection], &wild).unwrap();
        let gap = max_abs(&(&bound_flat.targets[0].adjusted - &bound_wild.targets[0].adjusted));
        assert!(gap > 1.0, "different series must produce different adjusted moments");

        let symmetry = max_abs(
            &(&bound_wild.targets[0].adjusted - bound_wild.targets[0].adjusted.transpose()),
        );
        assert_eq!(symmetry, 0.0, "adjusted moments are symmetrized");
    }

    #[test]
    fn binding_rejects_short_series() {
        let spec = paper_like_model();
        let beliefs = paper_like_beliefs();
        let transfer = compute_transfer(&spec).unwrap();
        let basis = build_basis(&spec, &transfer, 6).unwrap();
        let system = assemble_gram(&basis, &beliefs, &spec);
        let projection = project(&system, AdjustTarget::ObservationCov);
        let series: Vec<DVector<f64>> = (0..4).map(|_| DVector::zeros(6)).collect();
        let err = bind_data(&system, &[projection], &series).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { required: 6, actual: 4 }));
    }

    #[test]
    fn psd_repair_clips_negative_eigenvalues() {
        let matrix = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (unchanged, report) = repair_psd(&matrix, PsdPolicy::ReportOnly);
        assert_eq!(unchanged, matrix);
        assert!(!report.modified);
        assert!((report.min_eigenvalue + 1.0).abs() < 1e-12);

        let (repaired, report) = repair_psd(&matrix, PsdPolicy::Clip);
        assert!(report.modified);
        let expected = DMatrix::from_row_slice(2, 2, &[1.5, 1.5, 1.5, 1.5]);
        assert!(max_abs(&(&repaired - &expected)) < 1e-12);

        let psd = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]);
        let (kept, report) = repair_psd(&psd, PsdPolicy::Clip);
        assert_eq!(kept, psd, "positive semidefinite input must pass through clip unchanged");
        assert!(!report.modified);
    }
}
