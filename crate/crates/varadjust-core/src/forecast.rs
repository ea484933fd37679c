//! Sequential forecasting and calibration diagnostics.
//!
//! The filter propagates the state moments (m, C) of θ_t through the usual
//! recursion: prior a = G m, R = G C Gᵀ + W; forecast f = Fᵀ a,
//! Q = Fᵀ R F + V; after observing x_t the update uses the gain
//! A = R F Q⁻¹, giving m = a + A e and C = R − A Q Aᵀ with e = x_t − f.
//!
//! Calibration is judged through the standardized forecast error size
//! eᵀ Q⁻¹ e, which has expectation r step by step when the covariances
//! match the data; the running mean of eᵀ Q⁻¹ e / r is reported as the
//! size-ratio summary, so values near 1 indicate a well-calibrated pair
//! (V, W) and values above 1 underdispersed forecasts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{psd_pinv_with_rank, symmetric_part};
use crate::model::ModelSpec;

/// Relative eigenvalue cutoff for inverting the forecast covariance.
pub const FORECAST_PINV_CUTOFF: f64 = 1e-12;

/// Posterior state moments after t observations.
#[derive(Debug, Clone)]
pub struct ForecastState {
    /// Posterior mean of θ_t.
    pub mean: DVector<f64>,
    /// Posterior covariance of θ_t.
    pub cov: DMatrix<f64>,
    /// Number of observations absorbed.
    pub step: usize,
}

/// One-step-ahead moments before an observation arrives.
#[derive(Debug, Clone)]
pub struct StepPrediction {
    /// Prior state mean a.
    pub state_mean: DVector<f64>,
    /// Prior state covariance R.
    pub state_cov: DMatrix<f64>,
    /// Forecast mean f.
    pub forecast_mean: DVector<f64>,
    /// Forecast covariance Q.
    pub forecast_cov: DMatrix<f64>,
}

/// Diagnostics recorded when an observation is absorbed.
#[derive(Debug, Clone)]
pub struct StepDiagnostic {
    /// 1-based observation index.
    pub step: usize,
    /// Forecast error e = x − f.
    pub error: DVector<f64>,
    /// Standardized size eᵀ Q⁻¹ e.
    pub standardized_size: f64,
    /// Standardized size divided by the observation dimension.
    pub size_ratio: f64,
    /// True when Q was numerically singular and a pseudo-inverse was used.
    pub singular_forecast_cov: bool,
}

/// The state before any observation: the model prior (μ0, Σ).
pub fn init_state(spec: &ModelSpec) -> ForecastState {
    ForecastState { mean: spec.mu0.clone(), cov: spec.sigma.clone(), step: 0 }
}

/// Propagates the state one step and forms the observation forecast using
/// the covariance pair (v, w) in place of the model's priors.
pub fn forecast_step(
    state: &ForecastState,
    spec: &ModelSpec,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> StepPrediction {
    let state_mean = &spec.g * &state.mean;
    let state_cov = symmetric_part(&(&spec.g * &state.cov * spec.g.transpose() + w));
    let forecast_mean = spec.f.transpose() * &state_mean;
    let forecast_cov =
        symmetric_part(&(spec.f.transpose() * &state_cov * &spec.f + v));
    StepPrediction { state_mean, state_cov, forecast_mean, forecast_cov }
}

/// Absorbs one observation, returning the updated state and the step
/// diagnostics.
pub fn update_step(
    state: &ForecastState,
    observation: &DVector<f64>,
    spec: &ModelSpec,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<(ForecastState, StepDiagnostic)> {
    let r = spec.obs_dim();
    if observation.len() != r {
        return Err(Error::DimensionMismatch {
            context: "filter observation",
            expected: format!("length {r}"),
            actual: format!("length {}", observation.len()),
        });
    }
    let prediction = forecast_step(state, spec, v, w);
    let error = observation - &prediction.forecast_mean;
    let (q_inv, rank) = psd_pinv_with_rank(&prediction.forecast_cov, FORECAST_PINV_CUTOFF);
    let singular = rank < r;
    let standardized_size = (q_inv.clone() * &error).dot(&error);

    let gain = &prediction.state_cov * &spec.f * &q_inv;
    let mean = &prediction.state_mean + &gain * &error;
    let cov = symmetric_part(
        &(&prediction.state_cov - &gain * &prediction.forecast_cov * gain.transpose()),
    );

    Ok((
        ForecastState { mean, cov, step: state.step + 1 },
        StepDiagnostic {
            step: state.step + 1,
            error,
            standardized_size,
            size_ratio: standardized_size / r as f64,
            singular_forecast_cov: singular,
        },
    ))
}

/// Runs the filter over a whole series with the covariance pair (v, w).
pub fn run_filter(
    spec: &ModelSpec,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
    series: &[DVector<f64>],
) -> Result<Vec<StepDiagnostic>> {
    if series.is_empty() {
        return Err(Error::Empty);
    }
    let mut state = init_state(spec);
    let mut diagnostics = Vec::with_capacity(series.len());
    for observation in series {
        let (next, diagnostic) = update_step(&state, observation, spec, v, w)?;
        state = next;
        diagnostics.push(diagnostic);
    }
    Ok(diagnostics)
}

/// Mean size ratio over a slice of diagnostics; near 1 when the covariances
/// are calibrated to the data.
pub fn size_ratio_summary(diagnostics: &[StepDiagnostic]) -> Result<f64> {
    if diagnostics.is_empty() {
        return Err(Error::Empty);
    }
    Ok(diagnostics.iter().map(|d| d.size_ratio).sum::<f64>() / diagnostics.len() as f64)
}
