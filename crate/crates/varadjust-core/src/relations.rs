//! Closed-form covariance relations for identity-structure models.
//!
//! When F = G = I (so H = I as well), the covariances among the one-step and
//! two-step quadratic products, and between those products and the uncertain
//! covariance targets, collapse to short formulas in the four belief moment
//! matrices plus a handful of expected structured products. There are
//! fifteen distinct relations once lags far enough apart merge.
//!
//! The formulas here are written out independently of the general engine in
//! [`crate::quadratic`]: they use their own expected-product helpers and no
//! engine internals, so agreement between the two is a meaningful
//! cross-check rather than a tautology. [`RelationCase::instances`] supplies
//! representative observable pairs for exactly that comparison.

use nalgebra::DMatrix;

use crate::beliefs::{vec_index, FourthOrderBeliefs};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::quadratic::{
    one_step_product, star_product, tensor_product, two_step_product, vec_of, AdjustTarget,
    QuadraticObservable, ResidualKind,
};

/// The fifteen closed-form relations. "One-step" and "two-step" refer to the
/// differenced products x′_t x′_tᵀ and x″_t x″_tᵀ; "lag" is the time offset
/// between the two observables of a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationCase {
    /// Cov(vec V^ω, vec x′x′ᵀ) = Var(vec V^ω).
    EvolutionTargetOneStep,
    /// Cov(vec V^ν, vec x′x′ᵀ) = 2 Var(vec V^ν).
    ObservationTargetOneStep,
    /// Var(vec x′x′ᵀ) = Var(vec V^ω) + 4 Var(vec V^ν) + 2 Var(vec S^ν)
    /// + Var(vec S^ω) + 2 [E(V^ν⊗V^ν) + E(V^ν★V^ν)] + 2 [cross products of
    /// the mean covariances].
    OneStepLag0,
    /// One-step products one step apart: Var(vec V^ω) + 4 Var(vec V^ν)
    /// + Var(vec S^ν).
    OneStepLag1,
    /// One-step products two or more steps apart: Var(vec V^ω)
    /// + 4 Var(vec V^ν).
    OneStepFar,
    /// Cov(vec V^ω, vec x″x″ᵀ) = 2 Var(vec V^ω).
    EvolutionTargetTwoStep,
    /// Cov(vec V^ν, vec x″x″ᵀ) = 2 Var(vec V^ν).
    ObservationTargetTwoStep,
    /// Var(vec x″x″ᵀ) = 4 Var(vec V^ω) + 4 Var(vec V^ν) + 2 Var(vec S^ν)
    /// + 2 Var(vec S^ω) + 2 [E(V^ν⊗V^ν) + E(V^ν★V^ν) + E(V^ω⊗V^ω)
    /// + E(V^ω★V^ω)] + 4 [cross products of the mean covariances].
    TwoStepLag0,
    /// Two-step products one step apart: 4 [Var(vec V^ν) + Var(vec V^ω)]
    /// + Var(vec S^ω).
    TwoStepLag1,
    /// Two-step products two steps apart: 4 [Var(vec V^ν) + Var(vec V^ω)]
    /// + Var(vec S^ν).
    TwoStepLag2,
    /// Two-step products three or more steps apart:
    /// 4 [Var(vec V^ν) + Var(vec V^ω)].
    TwoStepFar,
    /// One-step at t against two-step at t + s for s ≥ 3, or at t − s for
    /// s ≥ 2 (no shared residuals): 4 Var(vec V^ν) + 2 Var(vec V^ω).
    CrossFar,
    /// One-step at t against two-step at t + 2 or t − 1 (one shared
    /// observation residual): 4 Var(vec V^ν) + 2 Var(vec V^ω)
    /// + Var(vec S^ν).
    CrossSharedObservation,
    /// One-step at t against two-step at t + 1: 2 Var(vec V^ω)
    /// + 4 Var(vec V^ν) + Var(vec S^ν) + Var(vec S^ω) + [cross products of
    /// the mean covariances].
    CrossLead1,
    /// One-step and two-step at the same t: same formula as [`CrossLead1`].
    ///
    /// [`CrossLead1`]: RelationCase::CrossLead1
    CrossLag0,
}

impl RelationCase {
    /// All fifteen relations in a fixed reporting order.
    pub fn all() -> [RelationCase; 15] {
        use RelationCase::*;
        [
            EvolutionTargetOneStep,
            ObservationTargetOneStep,
            OneStepLag0,
            OneStepLag1,
            OneStepFar,
            EvolutionTargetTwoStep,
            ObservationTargetTwoStep,
            TwoStepLag0,
            TwoStepLag1,
            TwoStepLag2,
            TwoStepFar,
            CrossFar,
            CrossSharedObservation,
            CrossLead1,
            CrossLag0,
        ]
    }

    /// Short stable name for reports.
    pub fn name(&self) -> &'static str {
        use RelationCase::*;
        match self {
            EvolutionTargetOneStep => "evolution-target vs one-step",
            ObservationTargetOneStep => "observation-target vs one-step",
            OneStepLag0 => "one-step variance",
            OneStepLag1 => "one-step lag 1",
            OneStepFar => "one-step lag ≥ 2",
            EvolutionTargetTwoStep => "evolution-target vs two-step",
            ObservationTargetTwoStep => "observation-target vs two-step",
            TwoStepLag0 => "two-step variance",
            TwoStepLag1 => "two-step lag 1",
            TwoStepLag2 => "two-step lag 2",
            TwoStepFar => "two-step lag ≥ 3",
            CrossFar => "one-step vs two-step, disjoint",
            CrossSharedObservation => "one-step vs two-step, shared observation",
            CrossLead1 => "one-step vs two-step, lead 1",
            CrossLag0 => "one-step vs two-step, same time",
        }
    }

    /// The closed-form covariance matrix for this relation. Errors with
    /// [`Error::NotIdentityModel`] unless F = G = I.
    pub fn closed_form(
        &self,
        beliefs: &FourthOrderBeliefs,
        spec: &ModelSpec,
    ) -> Result<DMatrix<f64>> {
        let ing = Ingredients::prepare(beliefs, spec)?;
        use RelationCase::*;
        let out = match self {
            EvolutionTargetOneStep => ing.var_v_omega.clone(),
            ObservationTargetOneStep => 2.0 * &ing.var_v_nu,
            OneStepLag0 => {
                &ing.var_v_omega
                    + 4.0 * &ing.var_v_nu
                    + 2.0 * &ing.var_s_nu
                    + &ing.var_s_omega
                    + 2.0 * &ing.expected_nu_products
                    + 2.0 * &ing.cross_mean_products
            }
            OneStepLag1 => &ing.var_v_omega + 4.0 * &ing.var_v_nu + &ing.var_s_nu,
            OneStepFar => &ing.var_v_omega + 4.0 * &ing.var_v_nu,
            EvolutionTargetTwoStep => 2.0 * &ing.var_v_omega,
            ObservationTargetTwoStep => 2.0 * &ing.var_v_nu,
            TwoStepLag0 => {
                4.0 * &ing.var_v_omega
                    + 4.0 * &ing.var_v_nu
                    + 2.0 * &ing.var_s_nu
                    + 2.0 * &ing.var_s_omega
                    + 2.0 * (&ing.expected_nu_products + &ing.expected_omega_products)
                    + 4.0 * &ing.cross_mean_products
            }
            TwoStepLag1 => 4.0 * (&ing.var_v_nu + &ing.var_v_omega) + &ing.var_s_omega,
            TwoStepLag2 => 4.0 * (&ing.var_v_nu + &ing.var_v_omega) + &ing.var_s_nu,
            TwoStepFar => 4.0 * (&ing.var_v_nu + &ing.var_v_omega),
            CrossFar => 4.0 * &ing.var_v_nu + 2.0 * &ing.var_v_omega,
            CrossSharedObservation => {
                4.0 * &ing.var_v_nu + 2.0 * &ing.var_v_omega + &ing.var_s_nu
            }
            CrossLead1 | CrossLag0 => {
                2.0 * &ing.var_v_omega
                    + 4.0 * &ing.var_v_nu
                    + &ing.var_s_nu
                    + &ing.var_s_omega
                    + &ing.cross_mean_products
            }
        };
        Ok(out)
    }

    /// Representative operand instances for checking this relation against
    /// the general engine or against simulation. Merged far-lag and
    /// shared-residual cases return one instance per constituent lag
    /// geometry, so the lag-invariance the formula claims is itself checked.
    pub fn instances(&self, spec: &ModelSpec) -> Result<Vec<RelationOperands>> {
        if !spec.is_identity_structure() {
            return Err(Error::NotIdentityModel);
        }
        let r = spec.obs_dim();
        let h = DMatrix::<f64>::identity(r, r);
        let q1 = |t: i64| one_step_product(spec, &h, t);
        let q2 = |t: i64| two_step_product(spec, &h, t);
        use RelationCase::*;
        let base = 10;
        let out = match self {
            EvolutionTargetOneStep => vec![RelationOperands::TargetProduct {
                target: AdjustTarget::ProjectedEvolutionCov,
                product: q1(base),
            }],
            ObservationTargetOneStep => vec![RelationOperands::TargetProduct {
                target: AdjustTarget::ObservationCov,
                product: q1(base),
            }],
            OneStepLag0 => vec![RelationOperands::ProductPair { a: q1(base), b: q1(base) }],
            OneStepLag1 => vec![RelationOperands::ProductPair { a: q1(base), b: q1(base - 1) }],
            OneStepFar => vec![
                RelationOperands::ProductPair { a: q1(base), b: q1(base - 2) },
                RelationOperands::ProductPair { a: q1(base), b: q1(base + 5) },
            ],
            EvolutionTargetTwoStep => vec![RelationOperands::TargetProduct {
                target: AdjustTarget::ProjectedEvolutionCov,
                product: q2(base),
            }],
            ObservationTargetTwoStep => vec![RelationOperands::TargetProduct {
                target: AdjustTarget::ObservationCov,
                product: q2(base),
            }],
            TwoStepLag0 => vec![RelationOperands::ProductPair { a: q2(base), b: q2(base) }],
            TwoStepLag1 => vec![RelationOperands::ProductPair { a: q2(base), b: q2(base - 1) }],
            TwoStepLag2 => vec![RelationOperands::ProductPair { a: q2(base), b: q2(base + 2) }],
            TwoStepFar => vec![
                RelationOperands::ProductPair { a: q2(base), b: q2(base - 3) },
                RelationOperands::ProductPair { a: q2(base), b: q2(base + 4) },
            ],
            CrossFar => vec![
                RelationOperands::ProductPair { a: q1(base), b: q2(base + 3) },
                RelationOperands::ProductPair { a: q1(base), b: q2(base + 6) },
                RelationOperands::ProductPair { a: q1(base), b: q2(base - 2) },
                RelationOperands::ProductPair { a: q1(base), b: q2(base - 4) },
            ],
            CrossSharedObservation => vec![
                RelationOperands::ProductPair { a: q1(base), b: q2(base + 2) },
                RelationOperands::ProductPair { a: q1(base), b: q2(base - 1) },
            ],
            CrossLead1 => vec![RelationOperands::ProductPair { a: q1(base), b: q2(base + 1) }],
            CrossLag0 => vec![RelationOperands::ProductPair { a: q1(base), b: q2(base) }],
        };
        Ok(out)
    }
}

/// One concrete pair of operands realizing a relation.
#[derive(Debug, Clone)]
pub enum RelationOperands {
    /// Covariance between an adjustment target and a quadratic product.
    TargetProduct {
        /// The target side.
        target: AdjustTarget,
        /// The product side.
        product: QuadraticObservable,
    },
    /// Covariance between two quadratic products.
    ProductPair {
        /// Left observable.
        a: QuadraticObservable,
        /// Right observable.
        b: QuadraticObservable,
    },
}

/// Moment matrices the relation formulas are assembled from.
struct Ingredients {
    var_v_omega: DMatrix<f64>,
    var_v_nu: DMatrix<f64>,
    var_s_omega: DMatrix<f64>,
    var_s_nu: DMatrix<f64>,
    /// E(V^ν ⊗ V^ν) + E(V^ν ★ V^ν).
    expected_nu_products: DMatrix<f64>,
    /// E(V^ω ⊗ V^ω) + E(V^ω ★ V^ω).
    expected_omega_products: DMatrix<f64>,
    /// E(V^ω)⊗E(V^ν) + E(V^ω)★E(V^ν) + E(V^ν)⊗E(V^ω) + E(V^ν)★E(V^ω);
    /// expectations factor because the two kinds are uncorrelated.
    cross_mean_products: DMatrix<f64>,
}

impl Ingredients {
    fn prepare(beliefs: &FourthOrderBeliefs, spec: &ModelSpec) -> Result<Self> {
        if !spec.is_identity_structure() {
            return Err(Error::NotIdentityModel);
        }
        let r = spec.obs_dim();
        let var_v_omega = beliefs.var_vec_v(ResidualKind::Evolution).clone();
        let var_v_nu = beliefs.var_vec_v(ResidualKind::Observation).clone();
        let var_s_omega = beliefs.var_vec_s(ResidualKind::Evolution).clone();
        let var_s_nu = beliefs.var_vec_s(ResidualKind::Observation).clone();

        let moment_nu = &var_v_nu + vec_of(&spec.v) * vec_of(&spec.v).transpose();
        let moment_omega = &var_v_omega + vec_of(&spec.w) * vec_of(&spec.w).transpose();
        let expected_nu_products =
            expected_tensor_square(&moment_nu, r) + expected_star_square(&moment_nu, r);
        let expected_omega_products =
            expected_tensor_square(&moment_omega, r) + expected_star_square(&moment_omega, r);

        let cross_mean_products = tensor_product(&spec.w, &spec.v)?
            + star_product(&spec.w, &spec.v)?
            + tensor_product(&spec.v, &spec.w)?
            + star_product(&spec.v, &spec.w)?;

        Ok(Self {
            var_v_omega,
            var_v_nu,
            var_s_omega,
            var_s_nu,
            expected_nu_products,
            expected_omega_products,
            cross_mean_products,
        })
    }
}

/// E(V ⊗ V) for a random symmetric matrix V with second-moment matrix
/// `moment` = E[vec V (vec V)ᵀ]: entry (vec(j,l), vec(k,m)) is
/// E[V_jk V_lm] = moment[(vec(j,k), vec(l,m))].
fn expected_tensor_square(moment: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let d2 = dim * dim;
    let mut out = DMatrix::zeros(d2, d2);
    for j in 0..dim {
        for k in 0..dim {
            for l in 0..dim {
                for m in 0..dim {
                    out[(vec_index(j, l, dim), vec_index(k, m, dim))] =
                        moment[(vec_index(j, k, dim), vec_index(l, m, dim))];
                }
            }
        }
    }
    out
}

/// E(V ★ V) under the same convention: entry (vec(j,l), vec(m,k)) is
/// E[V_jk V_lm].
fn expected_star_square(moment: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let d2 = dim * dim;
    let mut out = DMatrix::zeros(d2, d2);
    for j in 0..dim {
        for k in 0..dim {
            for l in 0..dim {
                for m in 0..dim {
                    out[(vec_index(j, l, dim), vec_index(m, k, dim))] =
                        moment[(vec_index(j, k, dim), vec_index(l, m, dim))];
                }
            }
        }
    }
    out
}
