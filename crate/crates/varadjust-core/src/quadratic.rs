//! Linear residual forms, quadratic observables, and the second-moment
//! engine that prices their covariances under fourth-order beliefs.
//!
//! Subtracting the transferred past removes the latent state from an
//! observation series:
//!
//! ```text
//!   x′_t = x_t − H x_{t−1}  = Fᵀ ω_t + ν_t − H ν_{t−1}                 (t ≥ 2)
//!   x″_t = x_t − H² x_{t−2} = Fᵀ ω_t + Fᵀ G ω_{t−1} + ν_t − H² ν_{t−2}  (t ≥ 3)
//! ```
//!
//! Both are linear forms in residuals, and their outer products are
//! quadratic observables. Under the beliefs of [`crate::beliefs`] (a shared
//! uncertain covariance V^κ per residual kind plus time-local disturbances
//! S^κ_t, mutually uncorrelated across kinds and times, with vanishing mixed
//! odd moments), means and covariances of those quadratic observables are
//! exact bilinear expressions in the four moment matrices. This module
//! evaluates them with explicit index loops; the flattening convention is
//! column-stacking throughout, matching [`crate::beliefs::vec_index`].

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::beliefs::{vec_index, FourthOrderBeliefs};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// The two residual kinds of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResidualKind {
    /// State evolution residual ω_t, dimension p.
    Evolution,
    /// Observation residual ν_t, dimension r.
    Observation,
}

/// Identity of one residual vector: its time index and kind. Ordering is by
/// time first, so sorted residual lists enumerate a series chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResidualId {
    /// Time index of the residual.
    pub time: i64,
    /// Which residual of that time step.
    pub kind: ResidualKind,
}

impl ResidualId {
    /// Evolution residual ω_t.
    pub fn evolution(time: i64) -> Self {
        Self { time, kind: ResidualKind::Evolution }
    }

    /// Observation residual ν_t.
    pub fn observation(time: i64) -> Self {
        Self { time, kind: ResidualKind::Observation }
    }
}

/// One coefficient of a linear residual form: the matrix applied to a single
/// residual vector.
#[derive(Debug, Clone)]
pub struct FormTerm {
    /// Which residual the coefficient multiplies.
    pub id: ResidualId,
    /// Coefficient matrix, output_dim × dim(kind).
    pub coefficient: DMatrix<f64>,
}

/// A linear combination Σ_k A_k ε_k of distinct residual vectors.
#[derive(Debug, Clone)]
pub struct LinearResidualForm {
    /// Dimension of the form's value.
    pub output_dim: usize,
    /// Terms sorted by residual id; ids are unique.
    pub terms: Vec<FormTerm>,
}

impl LinearResidualForm {
    /// Assemble a form, sorting terms into canonical id order and rejecting
    /// duplicate residual ids or inconsistent coefficient heights.
    pub fn new(output_dim: usize, mut terms: Vec<FormTerm>) -> Result<Self> {
        terms.sort_by_key(|t| t.id);
        for pair in terms.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DimensionMismatch {
                    context: "LinearResidualForm::new",
                    expected: "distinct residual ids".to_string(),
                    actual: format!("duplicate {:?}", pair[0].id),
                });
            }
        }
        for term in &terms {
            if term.coefficient.nrows() != output_dim {
                return Err(Error::DimensionMismatch {
                    context: "LinearResidualForm::new",
                    expected: format!("coefficient height {output_dim}"),
                    actual: format!("{} for {:?}", term.coefficient.nrows(), term.id),
                });
            }
        }
        Ok(Self { output_dim, terms })
    }

    /// The form L·(this form) for a matrix L applied on the left.
    pub fn conjugated(&self, l: &DMatrix<f64>) -> Self {
        assert_eq!(
            l.ncols(),
            self.output_dim,
            "left factor width must match the form dimension"
        );
        Self {
            output_dim: l.nrows(),
            terms: self
                .terms
                .iter()
                .map(|t| FormTerm { id: t.id, coefficient: l * &t.coefficient })
                .collect(),
        }
    }

    /// Residual ids the form touches, in canonical order.
    pub fn residual_ids(&self) -> Vec<ResidualId> {
        self.terms.iter().map(|t| t.id).collect()
    }

    /// Value of the form given a resolver for residual draws.
    pub fn evaluate(&self, resolve: &mut dyn FnMut(ResidualId) -> DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.output_dim);
        for term in &self.terms {
            let draw = resolve(term.id);
            out += &term.coefficient * draw;
        }
        out
    }

    /// Whether two forms are the same up to an overall sign. Coefficients
    /// are compared exactly; forms assembled by identical arithmetic compare
    /// equal bit for bit, which is what basis deduplication relies on.
    pub fn same_up_to_sign(&self, other: &Self) -> bool {
        if self.output_dim != other.output_dim || self.terms.len() != other.terms.len() {
            return false;
        }
        let sign_a = self.leading_sign();
        let sign_b = other.leading_sign();
        self.terms.iter().zip(&other.terms).all(|(a, b)| {
            a.id == b.id
                && a.coefficient.shape() == b.coefficient.shape()
                && a.coefficient
                    .iter()
                    .zip(b.coefficient.iter())
                    .all(|(&x, &y)| sign_a * x == sign_b * y)
        })
    }

    fn leading_sign(&self) -> f64 {
        for term in &self.terms {
            for &v in term.coefficient.iter() {
                if v != 0.0 {
                    return if v < 0.0 { -1.0 } else { 1.0 };
                }
            }
        }
        1.0
    }
}

/// The outer product Y Yᵀ of a linear residual form Y.
#[derive(Debug, Clone)]
pub struct QuadraticObservable {
    /// The underlying linear form.
    pub form: LinearResidualForm,
}

impl QuadraticObservable {
    /// Wrap a linear form as its outer product.
    pub fn from_form(form: LinearResidualForm) -> Self {
        Self { form }
    }

    /// Side length of the observable matrix.
    pub fn dim(&self) -> usize {
        self.form.output_dim
    }

    /// The observable L Y (L Y)ᵀ = L (Y Yᵀ) Lᵀ.
    pub fn conjugated(&self, l: &DMatrix<f64>) -> Self {
        Self { form: self.form.conjugated(l) }
    }

    /// Value of the observable given a resolver for residual draws.
    pub fn evaluate(&self, resolve: &mut dyn FnMut(ResidualId) -> DVector<f64>) -> DMatrix<f64> {
        let y = self.form.evaluate(resolve);
        &y * y.transpose()
    }
}

/// The one-step difference form Fᵀ ω_t + ν_t − H ν_{t−1} of x′_t.
pub fn one_step_form(spec: &ModelSpec, h: &DMatrix<f64>, t: i64) -> LinearResidualForm {
    assert!(t >= 2, "the one-step difference x′_t needs t ≥ 2, got t = {t}");
    let r = spec.obs_dim();
    LinearResidualForm::new(
        r,
        vec![
            FormTerm { id: ResidualId::evolution(t), coefficient: spec.f.transpose() },
            FormTerm { id: ResidualId::observation(t), coefficient: DMatrix::identity(r, r) },
            FormTerm { id: ResidualId::observation(t - 1), coefficient: -h },
        ],
    )
    .expect("one-step difference terms are distinct and well-shaped")
}

/// The two-step difference form Fᵀ ω_t + Fᵀ G ω_{t−1} + ν_t − H² ν_{t−2}
/// of x″_t.
pub fn two_step_form(spec: &ModelSpec, h: &DMatrix<f64>, t: i64) -> LinearResidualForm {
    assert!(t >= 3, "the two-step difference x″_t needs t ≥ 3, got t = {t}");
    let r = spec.obs_dim();
    let h2 = h * h;
    LinearResidualForm::new(
        r,
        vec![
            FormTerm { id: ResidualId::evolution(t), coefficient: spec.f.transpose() },
            FormTerm { id: ResidualId::evolution(t - 1), coefficient: spec.f.transpose() * &spec.g },
            FormTerm { id: ResidualId::observation(t), coefficient: DMatrix::identity(r, r) },
            FormTerm { id: ResidualId::observation(t - 2), coefficient: -h2 },
        ],
    )
    .expect("two-step difference terms are distinct and well-shaped")
}

/// One-step quadratic observable x′_t x′_tᵀ.
pub fn one_step_product(spec: &ModelSpec, h: &DMatrix<f64>, t: i64) -> QuadraticObservable {
    QuadraticObservable::from_form(one_step_form(spec, h, t))
}

/// Two-step quadratic observable x″_t x″_tᵀ.
pub fn two_step_product(spec: &ModelSpec, h: &DMatrix<f64>, t: i64) -> QuadraticObservable {
    QuadraticObservable::from_form(two_step_form(spec, h, t))
}

/// Difference both ways through an observation series: returns the one-step
/// differences x′_t for t = 2..n and the two-step differences x″_t for
/// t = 3..n (1-based). Errors when fewer than three observations are
/// available or when dimensions disagree with H.
pub fn difference_observables(
    series: &[DVector<f64>],
    h: &DMatrix<f64>,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    if series.len() < 3 {
        return Err(Error::TooShort { required: 3, actual: series.len() });
    }
    let r = h.nrows();
    for (i, x) in series.iter().enumerate() {
        if x.len() != r {
            return Err(Error::DimensionMismatch {
                context: "difference_observables",
                expected: format!("observations of length {r}"),
                actual: format!("length {} at position {i}", x.len()),
            });
        }
    }
    let h2 = h * h;
    let one_step: Vec<DVector<f64>> =
        (1..series.len()).map(|t| &series[t] - h * &series[t - 1]).collect();
    let two_step: Vec<DVector<f64>> =
        (2..series.len()).map(|t| &series[t] - &h2 * &series[t - 2]).collect();
    Ok((one_step, two_step))
}

/// vec(M) by column stacking.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Reshape a d²-vector back into the d×d matrix it column-stacks.
pub fn unvec(v: &DVector<f64>, dim: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), dim * dim, "vector length must be dim²");
    DMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Structured product with entry a_jk b_lm at (row r·l + j, column r·m + k),
/// both matrices square of side r (0-based indices). Together with
/// [`star_product`] it expresses Gaussian fourth moments:
/// tensor + star of (V, V) equals [`crate::beliefs::gaussian_fourth_moments`].
pub fn tensor_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = check_same_square(a, b, "tensor_product")?;
    let mut out = DMatrix::zeros(r * r, r * r);
    for j in 0..r {
        for k in 0..r {
            let ajk = a[(j, k)];
            if ajk == 0.0 {
                continue;
            }
            for l in 0..r {
                for m in 0..r {
                    out[(vec_index(j, l, r), vec_index(k, m, r))] = ajk * b[(l, m)];
                }
            }
        }
    }
    Ok(out)
}

/// Structured product with entry a_jk b_lm at (row r·l + j, column r·k + m):
/// the column index pairs with the *row* index of a. Square matrices of the
/// same side only.
pub fn star_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = check_same_square(a, b, "star_product")?;
    let mut out = DMatrix::zeros(r * r, r * r);
    for j in 0..r {
        for k in 0..r {
            let ajk = a[(j, k)];
            if ajk == 0.0 {
                continue;
            }
            for l in 0..r {
                for m in 0..r {
                    out[(vec_index(j, l, r), vec_index(m, k, r))] = ajk * b[(l, m)];
                }
            }
        }
    }
    Ok(out)
}

fn check_same_square(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &'static str) -> Result<usize> {
    if a.nrows() != a.ncols() || b.nrows() != b.ncols() || a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context,
            expected: "two square matrices of equal size".to_string(),
            actual: format!("{}×{} and {}×{}", a.nrows(), a.ncols(), b.nrows(), b.ncols()),
        });
    }
    Ok(a.nrows())
}

/// Expected value of a quadratic observable: E(Y Yᵀ) = Σ_k A_k Ē_κ(k) A_kᵀ,
/// with Ē the prior mean covariance of the residual kind (W or V).
pub fn expectation_quadratic(q: &QuadraticObservable, spec: &ModelSpec) -> DMatrix<f64> {
    let d = q.dim();
    let mut out = DMatrix::zeros(d, d);
    for term in &q.form.terms {
        let mean = spec.residual_cov(term.id.kind);
        out += &term.coefficient * mean * term.coefficient.transpose();
    }
    out
}

/// The matrix of M ↦ A M Bᵀ acting on column-stacked M: entry
/// (vec(i,j), flat(α,β)) is A_iα B_jβ, with flat(α,β) = β·cols(A) + α.
fn conj2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    debug_assert_eq!(n, b.nrows(), "conjugation factors must share output dimension");
    let ma = a.ncols();
    let mb = b.ncols();
    let mut out = DMatrix::zeros(n * n, ma * mb);
    for beta in 0..mb {
        for alpha in 0..ma {
            let col = beta * ma + alpha;
            for j in 0..n {
                let bj = b[(j, beta)];
                if bj == 0.0 {
                    continue;
                }
                for i in 0..n {
                    out[(j * n + i, col)] = a[(i, alpha)] * bj;
                }
            }
        }
    }
    out
}

/// E[vec(V^κa) vec(V^κb)ᵀ]: the shared-covariance cross moment between two
/// residual kinds. Same kind: Var(vec V^κ) + vec(Ē) vec(Ē)ᵀ. Different
/// kinds: the variance part vanishes (the shared covariances of the two
/// kinds are uncorrelated), leaving vec(Ē_a) vec(Ē_b)ᵀ.
fn pair_moment(
    kind_a: ResidualKind,
    kind_b: ResidualKind,
    beliefs: &FourthOrderBeliefs,
    spec: &ModelSpec,
) -> DMatrix<f64> {
    let mean_a = vec_of(spec.residual_cov(kind_a));
    let mean_b = vec_of(spec.residual_cov(kind_b));
    let mut out = &mean_a * mean_b.transpose();
    if kind_a == kind_b {
        out += beliefs.var_vec_v(kind_a);
    }
    out
}

/// Rearrange a pair moment C (dk²×dl²) into the middle factor for pairs
/// matched in the same order: out[(α,β),(γ,δ)] = C[(α,γ),(β,δ)] with
/// α,γ < dk and β,δ < dl.
fn reshape_aligned(c: &DMatrix<f64>, dk: usize, dl: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dk * dl, dk * dl);
    for alpha in 0..dk {
        for beta in 0..dl {
            let row = beta * dk + alpha;
            for gamma in 0..dk {
                for delta in 0..dl {
                    out[(row, delta * dk + gamma)] = c[(gamma * dk + alpha, delta * dl + beta)];
                }
            }
        }
    }
    out
}

/// Rearrange a pair moment C (dk²×dl²) into the middle factor for pairs
/// matched in swapped order: out[(α,β),(γ,δ)] = C[(α,δ),(β,γ)] with
/// α < dk, β,γ < dl, δ < dk.
fn reshape_swapped(c: &DMatrix<f64>, dk: usize, dl: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dk * dl, dl * dk);
    for alpha in 0..dk {
        for beta in 0..dl {
            let row = beta * dk + alpha;
            for gamma in 0..dl {
                for delta in 0..dk {
                    out[(row, delta * dl + gamma)] = c[(delta * dk + alpha, gamma * dl + beta)];
                }
            }
        }
    }
    out
}

/// Covariance Cov(vec(Qa), vec(Qb)) of two quadratic observables under the
/// given beliefs, a da²×db² matrix.
///
/// The sum has two parts. Shared-residual pairs: every pair of same-kind
/// terms shares the kind's uncertain covariance V^κ, and same-time pairs
/// (necessarily the same residual) additionally share the disturbance S^κ_t.
/// Distinct-residual pairs: ordered pairs of distinct residuals in one
/// observable covary with the matching (aligned or swapped) ordered pair in
/// the other, through E[vec V^κ vec V^κ'ᵀ]. Everything else vanishes under
/// the orthogonality and odd-moment assumptions.
pub fn covariance_quadratic(
    a: &QuadraticObservable,
    b: &QuadraticObservable,
    beliefs: &FourthOrderBeliefs,
    spec: &ModelSpec,
) -> DMatrix<f64> {
    let da = a.dim();
    let db = b.dim();
    let mut out = DMatrix::zeros(da * da, db * db);

    let self_conj_a: Vec<DMatrix<f64>> =
        a.form.terms.iter().map(|t| conj2(&t.coefficient, &t.coefficient)).collect();
    let self_conj_b: Vec<DMatrix<f64>> =
        b.form.terms.iter().map(|t| conj2(&t.coefficient, &t.coefficient)).collect();

    for (ka, ta) in a.form.terms.iter().enumerate() {
        for (kb, tb) in b.form.terms.iter().enumerate() {
            if ta.id.kind != tb.id.kind {
                continue;
            }
            let kind = ta.id.kind;
            let mut middle = beliefs.var_vec_v(kind).clone();
            if ta.id.time == tb.id.time {
                middle += beliefs.var_vec_s(kind);
            }
            out += &self_conj_a[ka] * middle * self_conj_b[kb].transpose();
        }
    }

    let terms_a = &a.form.terms;
    let terms_b = &b.form.terms;
    for (ia, ta) in terms_a.iter().enumerate() {
        for (ja, ua) in terms_a.iter().enumerate() {
            if ia == ja {
                continue;
            }
            let dk = ta.coefficient.ncols();
            let dl = ua.coefficient.ncols();
            let mut left: Option<DMatrix<f64>> = None;
            for (ib, tb) in terms_b.iter().enumerate() {
                for (jb, ub) in terms_b.iter().enumerate() {
                    if ib == jb {
                        continue;
                    }
                    let middle = if tb.id == ta.id && ub.id == ua.id {
                        let c = pair_moment(ta.id.kind, ua.id.kind, beliefs, spec);
                        reshape_aligned(&c, dk, dl)
                    } else if tb.id == ua.id && ub.id == ta.id {
                        let c = pair_moment(ta.id.kind, ua.id.kind, beliefs, spec);
                        reshape_swapped(&c, dk, dl)
                    } else {
                        continue;
                    };
                    let left_factor = left
                        .get_or_insert_with(|| conj2(&ta.coefficient, &ua.coefficient));
                    let right_factor = conj2(&tb.coefficient, &ub.coefficient);
                    out += &*left_factor * middle * right_factor.transpose();
                }
            }
        }
    }

    out
}

/// Target matrices the adjustment machinery can aim at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdjustTarget {
    /// The uncertain observation residual covariance V^ν.
    ObservationCov,
    /// The projected uncertain evolution covariance Fᵀ V^ω F.
    ProjectedEvolutionCov,
}

impl AdjustTarget {
    /// Stable lowercase name used in output files and reports.
    pub fn key(&self) -> &'static str {
        match self {
            AdjustTarget::ObservationCov => "observation_cov",
            AdjustTarget::ProjectedEvolutionCov => "projected_evolution_cov",
        }
    }

    /// Side length of the target matrix (always r; the evolution target is
    /// projected through Fᵀ into observation space).
    pub fn dim(&self, spec: &ModelSpec) -> usize {
        spec.obs_dim()
    }

    /// Prior mean of the target: V for the observation target, Fᵀ W F for
    /// the projected evolution target.
    pub fn prior_mean(&self, spec: &ModelSpec) -> DMatrix<f64> {
        match self {
            AdjustTarget::ObservationCov => spec.v.clone(),
            AdjustTarget::ProjectedEvolutionCov => spec.f.transpose() * &spec.w * &spec.f,
        }
    }

    /// Var(vec target): Var(vec V^ν) directly, or Var(vec V^ω) conjugated by
    /// the matrix of M ↦ Fᵀ M F for the projected evolution target.
    pub fn var_vec(&self, beliefs: &FourthOrderBeliefs, spec: &ModelSpec) -> DMatrix<f64> {
        match self {
            AdjustTarget::ObservationCov => beliefs.var_vec_v(ResidualKind::Observation).clone(),
            AdjustTarget::ProjectedEvolutionCov => {
                let ft = spec.f.transpose();
                let c = conj2(&ft, &ft);
                &c * beliefs.var_vec_v(ResidualKind::Evolution) * c.transpose()
            }
        }
    }
}

/// Covariance Cov(vec(target), vec(Qb)) between an adjustment target and a
/// quadratic observable, an r²×db² matrix. Only the shared-covariance parts
/// contribute: the target is time-constant, so disturbance and cross-pair
/// terms vanish.
pub fn cov_target_quadratic(
    target: AdjustTarget,
    b: &QuadraticObservable,
    beliefs: &FourthOrderBeliefs,
    spec: &ModelSpec,
) -> DMatrix<f64> {
    let target_kind = match target {
        AdjustTarget::ObservationCov => ResidualKind::Observation,
        AdjustTarget::ProjectedEvolutionCov => ResidualKind::Evolution,
    };
    let r = spec.obs_dim();
    let db = b.dim();
    let var_v = beliefs.var_vec_v(target_kind);

    let mut accumulated = DMatrix::zeros(var_v.nrows(), db * db);
    for term in &b.form.terms {
        if term.id.kind != target_kind {
            continue;
        }
        let c = conj2(&term.coefficient, &term.coefficient);
        accumulated += var_v * c.transpose();
    }

    match target {
        AdjustTarget::ObservationCov => accumulated,
        AdjustTarget::ProjectedEvolutionCov => {
            let ft = spec.f.transpose();
            let projector = conj2(&ft, &ft);
            let out = &projector * accumulated;
            debug_assert_eq!(out.nrows(), r * r);
            out
        }
    }
}

/// Convenience resolver that looks residual draws up in a map. Panics if a
/// draw is missing, which indicates an internal bookkeeping bug.
pub fn resolve_from_map(
    draws: &HashMap<ResidualId, DVector<f64>>,
) -> impl FnMut(ResidualId) -> DVector<f64> + '_ {
    move |id| {
        draws
            .get(&id)
            .unwrap_or_else(|| panic!("missing residual draw for {id:?}"))
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beliefs::{gaussian_fourth_moments, ExchangeablePattern};
    use crate::linalg::max_abs;
    use crate::model::compute_transfer;

    fn identity_model(dim: usize, v: DMatrix<f64>, w: DMatrix<f64>) -> ModelSpec {
        ModelSpec::new(
            DMatrix::identity(dim, dim),
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            DMatrix::identity(dim, dim),
            v,
            w,
        )
        .unwrap()
    }

    fn rectangular_model() -> ModelSpec {
        // p = 2, r = 3, F of full row rank, non-trivial G.
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.25, 0.0, 1.0, 0.75]);
        let g = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.7]);
        let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let v = DMatrix::from_row_slice(3, 3, &[4.0, 0.5, 0.2, 0.5, 3.0, -0.4, 0.2, -0.4, 5.0]);
        ModelSpec::new(f, g, DVector::zeros(2), DMatrix::identity(2, 2), v, w).unwrap()
    }

    fn gaussian_beliefs(spec: &ModelSpec) -> FourthOrderBeliefs {
        let p = spec.state_dim();
        let r = spec.obs_dim();
        FourthOrderBeliefs::with_gaussian_disturbances(
            DMatrix::zeros(p * p, p * p),
            DMatrix::zeros(r * r, r * r),
            &spec.w,
            &spec.v,
        )
        .unwrap()
    }

    #[test]
    fn one_step_form_has_expected_terms_for_identity_model() {
        let spec = identity_model(2, DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let h = DMatrix::identity(2, 2);
        let form = one_step_form(&spec, &h, 5);
        assert_eq!(form.terms.len(), 3);
        assert_eq!(form.terms[0].id, ResidualId::observation(4));
        assert_eq!(form.terms[0].coefficient, -DMatrix::<f64>::identity(2, 2));
        assert_eq!(form.terms[1].id, ResidualId::evolution(5));
        assert_eq!(form.terms[2].id, ResidualId::observation(5));
    }

    #[test]
    fn expectation_of_difference_products_matches_hand_formulas() {
        let v = DMatrix::from_row_slice(2, 2, &[36.0, -4.0, -4.0, 36.0]);
        let w = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 4.0]);
        let spec = identity_model(2, v.clone(), w.clone());
        let h = DMatrix::identity(2, 2);

        let e1 = expectation_quadratic(&one_step_product(&spec, &h, 4), &spec);
        let expected1 = &w + 2.0 * &v;
        assert!(max_abs(&(&e1 - &expected1)) < 1e-12, "E(x′x′ᵀ) must be W + 2V");

        let e2 = expectation_quadratic(&two_step_product(&spec, &h, 4), &spec);
        let expected2 = 2.0 * &w + 2.0 * &v;
        assert!(max_abs(&(&e2 - &expected2)) < 1e-12, "E(x″x″ᵀ) must be 2W + 2V");
    }

    #[test]
    fn tensor_product_places_entries_per_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let t = tensor_product(&a, &b).unwrap();
        // Entry a_jk b_lm sits at (row 2l + j, column 2m + k).
        assert_eq!(t[(0, 0)], 1.0 * 5.0);
        assert_eq!(t[(1, 2)], a[(1, 0)] * b[(0, 1)], "row (j=1,l=0), column (k=0,m=1)");
        assert_eq!(t[(2, 1)], a[(0, 1)] * b[(1, 0)], "row (j=0,l=1), column (k=1,m=0)");
        assert_eq!(t[(3, 3)], a[(1, 1)] * b[(1, 1)]);
    }

    #[test]
    fn tensor_product_is_a_kronecker_product_in_disguise() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let t = tensor_product(&a, &b).unwrap();
        let kron = b.kronecker(&a);
        assert_eq!(t, kron, "tensor_product(a, b) must equal kron(b, a)");
    }

    #[test]
    fn star_product_swaps_the_column_pairing() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let s = star_product(&a, &b).unwrap();
        // Entry a_jk b_lm sits at (row 2l + j, column 2k + m).
        assert_eq!(s[(1, 2)], a[(1, 1)] * b[(0, 0)], "row (j=1,l=0), column (k=1,m=0)");
        assert_eq!(s[(0, 1)], a[(0, 0)] * b[(0, 1)], "row (j=0,l=0), column (k=0,m=1)");

        // star = tensor with the column index pair transposed.
        let t = tensor_product(&a, &b).unwrap();
        let r = 2;
        for j in 0..r {
            for l in 0..r {
                for k in 0..r {
                    for m in 0..r {
                        assert_eq!(
                            s[(vec_index(j, l, r), vec_index(m, k, r))],
                            t[(vec_index(j, l, r), vec_index(k, m, r))]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_moments_equal_tensor_plus_star() {
        let v = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let lhs = gaussian_fourth_moments(&v);
        let rhs = tensor_product(&v, &v).unwrap() + star_product(&v, &v).unwrap();
        assert!(
            max_abs(&(&lhs - &rhs)) == 0.0,
            "Gaussian fourth moments must equal tensor + star exactly"
        );
    }

    #[test]
    fn products_reject_mismatched_shapes() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::identity(3, 3);
        assert!(tensor_product(&a, &b).is_err());
        assert!(star_product(&a, &b).is_err());
    }

    /// For purely Gaussian residuals the covariance of two outer products has
    /// a classical closed form: with Y_a, Y_b jointly Gaussian, zero-mean,
    /// Cov((Y_aY_aᵀ)_ij, (Y_bY_bᵀ)_kl) = Σ_ik Σ_jl + Σ_il Σ_jk where
    /// Σ = Cov(Y_a, Y_b). The engine must reproduce this for *any* model when
    /// the beliefs carry no covariance uncertainty and Gaussian disturbances.
    fn gaussian_cross_oracle(
        a: &QuadraticObservable,
        b: &QuadraticObservable,
        spec: &ModelSpec,
    ) -> DMatrix<f64> {
        let da = a.dim();
        let db = b.dim();
        let mut sigma = DMatrix::zeros(da, db);
        for ta in &a.form.terms {
            for tb in &b.form.terms {
                if ta.id == tb.id {
                    let mean = spec.residual_cov(ta.id.kind);
                    sigma += &ta.coefficient * mean * tb.coefficient.transpose();
                }
            }
        }
        let mut out = DMatrix::zeros(da * da, db * db);
        for i in 0..da {
            for j in 0..da {
                let row = vec_index(i, j, da);
                for k in 0..db {
                    for l in 0..db {
                        out[(row, vec_index(k, l, db))] =
                            sigma[(i, k)] * sigma[(j, l)] + sigma[(i, l)] * sigma[(j, k)];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn engine_matches_gaussian_oracle_on_rectangular_model() {
        let spec = rectangular_model();
        let transfer = compute_transfer(&spec).unwrap();
        let beliefs = gaussian_beliefs(&spec);

        let observables = vec![
            one_step_product(&spec, &transfer.h, 5),
            one_step_product(&spec, &transfer.h, 6),
            one_step_product(&spec, &transfer.h, 9),
            two_step_product(&spec, &transfer.h, 5),
            two_step_product(&spec, &transfer.h, 6),
            two_step_product(&spec, &transfer.h, 7),
            two_step_product(&spec, &transfer.h, 10),
        ];
        for a in &observables {
            for b in &observables {
                let engine = covariance_quadratic(a, b, &beliefs, &spec);
                let oracle = gaussian_cross_oracle(a, b, &spec);
                let scale = 1.0 + max_abs(&oracle);
                let diff = max_abs(&(&engine - &oracle));
                assert!(
                    diff <= 1e-12 * scale,
                    "engine disagrees with the Gaussian oracle by {diff:.3e} (scale {scale:.3e})"
                );
            }
        }
    }

    #[test]
    fn engine_output_is_symmetric_under_argument_swap() {
        let spec = rectangular_model();
        let transfer = compute_transfer(&spec).unwrap();
        let beliefs = FourthOrderBeliefs::from_patterns(
            2,
            3,
            &ExchangeablePattern { iiii: 2.25, ijij: 0.5625, iijj: 0.2 },
            &ExchangeablePattern { iiii: 25.0, ijij: 1.0, iijj: 4.0 },
            &ExchangeablePattern::without_cross_diagonal(30.0, 15.0),
            &ExchangeablePattern::without_cross_diagonal(2500.0, 1000.0),
        )
        .unwrap();
        let a = one_step_product(&spec, &transfer.h, 5);
        let b = two_step_product(&spec, &transfer.h, 6);
        let ab = covariance_quadratic(&a, &b, &beliefs, &spec);
        let ba = covariance_quadratic(&b, &a, &beliefs, &spec);
        let diff = max_abs(&(&ab - &ba.transpose()));
        assert!(diff <= 1e-10, "Cov(a,b) must equal Cov(b,a)ᵀ, differs by {diff:.3e}");
    }

    #[test]
    fn target_covariance_matches_hand_computation_in_one_dimension() {
        let v = DMatrix::from_row_slice(1, 1, &[36.0]);
        let w = DMatrix::from_row_slice(1, 1, &[4.0]);
        let spec = identity_model(1, v, w);
        let h = DMatrix::identity(1, 1);
        let beliefs = FourthOrderBeliefs::from_patterns(
            1,
            1,
            &ExchangeablePattern { iiii: 2.25, ijij: 0.0, iijj: 0.0 },
            &ExchangeablePattern { iiii: 25.0, ijij: 0.0, iijj: 0.0 },
            &ExchangeablePattern { iiii: 30.0, ijij: 0.0, iijj: 0.0 },
            &ExchangeablePattern { iiii: 2500.0, ijij: 0.0, iijj: 0.0 },
        )
        .unwrap();

        let q1 = one_step_product(&spec, &h, 4);
        let cov_nu = cov_target_quadratic(AdjustTarget::ObservationCov, &q1, &beliefs, &spec);
        assert!((cov_nu[(0, 0)] - 2.0 * 25.0).abs() < 1e-12, "two ν slots each contribute VarV^ν");

        let cov_omega =
            cov_target_quadratic(AdjustTarget::ProjectedEvolutionCov, &q1, &beliefs, &spec);
        assert!((cov_omega[(0, 0)] - 2.25).abs() < 1e-12, "one ω slot contributes VarV^ω");
    }

    #[test]
    fn difference_observables_require_three_points() {
        let h = DMatrix::identity(2, 2);
        let series: Vec<DVector<f64>> = vec![DVector::zeros(2), DVector::zeros(2)];
        let err = difference_observables(&series, &h).unwrap_err();
        assert!(matches!(err, Error::TooShort { required: 3, actual: 2 }));
    }

    #[test]
    fn difference_observables_compute_both_orders() {
        let h = DMatrix::identity(1, 1);
        let series: Vec<DVector<f64>> = (1..=5).map(|v| DVector::from_vec(vec![v as f64])).collect();
        let (one, two) = difference_observables(&series, &h).unwrap();
        assert_eq!(one.len(), 4, "x′_t exists for t = 2..5");
        assert_eq!(two.len(), 3, "x″_t exists for t = 3..5");
        assert!(one.iter().all(|d| (d[0] - 1.0).abs() < 1e-15));
        assert!(two.iter().all(|d| (d[0] - 2.0).abs() < 1e-15));
    }

    #[test]
    fn forms_compare_equal_up_to_sign() {
        let spec = identity_model(2, DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let h = DMatrix::identity(2, 2);
        let form = one_step_form(&spec, &h, 3);
        let negated = form.conjugated(&(-DMatrix::<f64>::identity(2, 2)));
        assert!(form.same_up_to_sign(&negated), "a form and its negation must match");
        let other = one_step_form(&spec, &h, 4);
        assert!(!form.same_up_to_sign(&other), "forms at different times must differ");
    }
}
