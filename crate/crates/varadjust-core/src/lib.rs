//! Second-moment modelling, identification, and variance adjustment for
//! constant multivariate dynamic linear models.
//!
//! The model is x_t = Fᵀ θ_t + ν_t, θ_t = G θ_{t−1} + ω_t with prior state
//! moments (μ0, Σ) and residual covariances V and W that are themselves
//! uncertain: squared residuals decompose as ω_t ω_tᵀ = V^ω + S^ω_t and
//! ν_t ν_tᵀ = V^ν + S^ν_t into realized covariances, constant over the
//! series, plus uncorrelated fluctuations. Fourth-order beliefs are the
//! variance matrices of the vec'd components, and everything in this crate
//! is derived from them without distributional assumptions:
//!
//! - [`quadratic`] computes exact covariances between outer products of
//!   residual differences, the engine behind every other module;
//! - [`relations`] holds the closed forms those covariances collapse to
//!   when F = G = I, as an independent cross-check;
//! - [`model`] validates priors and builds the transfer matrix
//!   H = Fᵀ G (Fᵀ)⁺ that propagates one-step differences;
//! - [`identify`] combines differenced products into statistics unbiased
//!   for V and Fᵀ W F;
//! - [`adjust`] projects those targets onto observed quadratic products,
//!   yielding data-adjusted covariances with explicit resolution;
//! - [`forecast`] runs the sequential filter and scores calibration;
//! - [`simulate`] draws series and Monte Carlo covariance estimates for
//!   validation;
//! - [`config`] reads and writes the model, series, and adjustment file
//!   formats.

pub mod adjust;
pub mod beliefs;
pub mod config;
pub mod error;
pub mod forecast;
pub mod identify;
pub mod linalg;
pub mod model;
pub mod quadratic;
pub mod relations;
pub mod simulate;

pub use adjust::{
    assemble_gram, bind_data, build_basis, constants_only_basis, project, repair_psd,
    AdjustmentResult, GramSystem, ObservableBasis, Projection, PsdPolicy, PsdReport,
};
pub use beliefs::{ExchangeablePattern, FourthOrderBeliefs};
pub use error::{Error, Result};
pub use forecast::{run_filter, size_ratio_summary, ForecastState, StepDiagnostic};
pub use identify::{evolution_identifier, observation_identifier, IdentifierCombo};
pub use model::{
    compute_transfer, invertible_completion, validate_model, ModelSpec, TransferMatrix,
    ValidationReport,
};
pub use quadratic::{
    covariance_quadratic, expectation_quadratic, AdjustTarget, QuadraticObservable, ResidualKind,
};
pub use relations::{RelationCase, RelationOperands};
pub use simulate::{
    generator_fourth_moments, monte_carlo_cov, monte_carlo_target_cov, simulate_series,
    McEstimate, ResidualGenerator,
};
