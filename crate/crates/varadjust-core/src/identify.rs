//! Identification of the uncertain covariance targets from differenced
//! products.
//!
//! When the transfer matrix H is invertible the expectations of the one-step
//! and two-step products x′_t x′_tᵀ and x″_t x″_tᵀ can be combined into
//! statistics whose expectations are exactly V and FᵀWF. The observation
//! combination is ½[x′x′ᵀ + H⁻¹ x′x′ᵀ H⁻ᵀ − H⁻¹ x″x″ᵀ H⁻ᵀ]; the evolution
//! combination is ½[x″x″ᵀ + H⁻¹ x″x″ᵀ H⁻ᵀ − H x′x′ᵀ Hᵀ − H⁻¹ x′x′ᵀ H⁻ᵀ].
//! Both hold for every t at which the two-step product exists.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, TransferMatrix};
use crate::quadratic::{
    expectation_quadratic, one_step_product, two_step_product, AdjustTarget,
};

/// Which differenced product a combination term is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifferenceOrder {
    /// The one-step product x′_t x′_tᵀ.
    OneStep,
    /// The two-step product x″_t x″_tᵀ.
    TwoStep,
}

/// One weighted, conjugated product inside an identification combination.
#[derive(Debug, Clone)]
pub struct ComboTerm {
    /// Scalar weight.
    pub weight: f64,
    /// Left conjugation matrix L; the term contributes weight · L d dᵀ Lᵀ.
    pub conjugator: DMatrix<f64>,
    /// Which differenced product d is.
    pub order: DifferenceOrder,
}

/// A linear combination of conjugated quadratic products whose expectation
/// equals an adjustment target.
#[derive(Debug, Clone)]
pub struct IdentifierCombo {
    /// The target the combination recovers in expectation.
    pub target: AdjustTarget,
    /// The weighted terms.
    pub terms: Vec<ComboTerm>,
}

/// Builds the combination recovering the observation covariance V.
///
/// Requires an invertible transfer matrix.
pub fn observation_identifier(
    spec: &ModelSpec,
    transfer: &TransferMatrix,
) -> Result<IdentifierCombo> {
    let r = spec.obs_dim();
    let h_inv = transfer.inverse()?;
    Ok(IdentifierCombo {
        target: AdjustTarget::ObservationCov,
        terms: vec![
            ComboTerm {
                weight: 0.5,
                conjugator: DMatrix::identity(r, r),
                order: DifferenceOrder::OneStep,
            },
            ComboTerm {
                weight: 0.5,
                conjugator: h_inv.clone(),
                order: DifferenceOrder::OneStep,
            },
            ComboTerm { weight: -0.5, conjugator: h_inv, order: DifferenceOrder::TwoStep },
        ],
    })
}

/// Builds the combination recovering the projected evolution covariance
/// FᵀWF.
///
/// Requires an invertible transfer matrix.
pub fn evolution_identifier(
    spec: &ModelSpec,
    transfer: &TransferMatrix,
) -> Result<IdentifierCombo> {
    let r = spec.obs_dim();
    let h_inv = transfer.inverse()?;
    Ok(IdentifierCombo {
        target: AdjustTarget::ProjectedEvolutionCov,
        terms: vec![
            ComboTerm {
                weight: 0.5,
                conjugator: DMatrix::identity(r, r),
                order: DifferenceOrder::TwoStep,
            },
            ComboTerm {
                weight: 0.5,
                conjugator: h_inv.clone(),
                order: DifferenceOrder::TwoStep,
            },
            ComboTerm {
                weight: -0.5,
                conjugator: transfer.h.clone(),
                order: DifferenceOrder::OneStep,
            },
            ComboTerm { weight: -0.5, conjugator: h_inv, order: DifferenceOrder::OneStep },
        ],
    })
}

impl IdentifierCombo {
    /// The exact expectation of the combination, evaluated through the
    /// residual-form expectations of its terms. Unbiasedness means this
    /// equals the target's prior mean.
    pub fn expectation(&self, spec: &ModelSpec, transfer: &TransferMatrix) -> DMatrix<f64> {
        let t = 3;
        let r = spec.obs_dim();
        let mut out = DMatrix::zeros(r, r);
        for term in &self.terms {
            let product = match term.order {
                DifferenceOrder::OneStep => one_step_product(spec, &transfer.h, t),
                DifferenceOrder::TwoStep => two_step_product(spec, &transfer.h, t),
            };
            let conjugated = product.conjugated(&term.conjugator);
            out += term.weight * expectation_quadratic(&conjugated, spec);
        }
        out
    }

    /// Evaluates the combination on observed differences at one time point.
    pub fn evaluate(&self, one_step: &DVector<f64>, two_step: &DVector<f64>) -> Result<DMatrix<f64>> {
        let r = self.terms.first().map_or(0, |term| term.conjugator.ncols());
        for (name, d) in [("one-step", one_step), ("two-step", two_step)] {
            if d.len() != r {
                return Err(Error::DimensionMismatch {
                    context: "identifier difference vector",
                    expected: format!("{name} difference of length {r}"),
                    actual: format!("length {}", d.len()),
                });
            }
        }
        let mut out = DMatrix::zeros(r, r);
        for term in &self.terms {
            let d = match term.order {
                DifferenceOrder::OneStep => one_step,
                DifferenceOrder::TwoStep => two_step,
            };
            let ld = &term.conjugator * d;
            out += term.weight * &ld * ld.transpose();
        }
        Ok(out)
    }

    /// Averages the combination over all usable time points of a series of
    /// differences, as produced by
    /// [`crate::quadratic::difference_observables`]. One-step differences
    /// start at t = 2 and two-step differences at t = 3, so entry i of
    /// `two_step` pairs with entry i + 1 of `one_step`.
    pub fn average(
        &self,
        one_step: &[DVector<f64>],
        two_step: &[DVector<f64>],
    ) -> Result<DMatrix<f64>> {
        if two_step.is_empty() || one_step.len() != two_step.len() + 1 {
            return Err(Error::TooShort { required: 3, actual: one_step.len().saturating_add(1) });
        }
        let r = one_step[0].len();
        let mut out = DMatrix::zeros(r, r);
        for (i, d2) in two_step.iter().enumerate() {
            out += self.evaluate(&one_step[i + 1], d2)?;
        }
        Ok(out / two_step.len() as f64)
    }
}
