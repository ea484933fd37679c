//! Simulation of observation series and Monte Carlo estimation of
//! quadratic-product covariances.
//!
//! Residual generators realize the quadratic representation directly: the
//! per-series realized covariances play the role of V^ω and V^ν, and the
//! per-time fluctuations of ω_t ω_tᵀ and ν_t ν_tᵀ around them the role of
//! the S matrices. A fixed Gaussian generator has degenerate realized
//! covariances; a two-point mixture draws each kind's realized covariance
//! independently from a pair of components, giving genuinely random V
//! matrices with moments available in closed form through
//! [`generator_fourth_moments`]. Monte Carlo estimates of covariances
//! between quadratic observables come with entrywise standard errors, so
//! engine output can be checked against simulation at a known confidence
//! level.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::beliefs::{gaussian_fourth_moments, FourthOrderBeliefs};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, min_symmetric_eigenvalue, psd_sampling_factor};
use crate::model::ModelSpec;
use crate::quadratic::{vec_of, AdjustTarget, QuadraticObservable, ResidualId, ResidualKind};

/// Eigenvalue slack accepted when validating generator covariances.
pub const GENERATOR_PSD_TOLERANCE: f64 = 1e-10;

/// How residuals are drawn when simulating.
#[derive(Debug, Clone)]
pub enum ResidualGenerator {
    /// ω_t ~ N(0, w) and ν_t ~ N(0, v) with fixed covariances.
    GaussianFixed {
        /// Observation residual covariance.
        v: DMatrix<f64>,
        /// Evolution residual covariance.
        w: DMatrix<f64>,
    },
    /// Before a series is generated, each kind independently commits to one
    /// of two covariance components (the first with probability `weight`);
    /// residuals are then Gaussian with the committed covariance.
    TwoPointMixture {
        /// Probability of the first component.
        weight: f64,
        /// First observation component.
        v1: DMatrix<f64>,
        /// First evolution component.
        w1: DMatrix<f64>,
        /// Second observation component.
        v2: DMatrix<f64>,
        /// Second evolution component.
        w2: DMatrix<f64>,
    },
}

impl ResidualGenerator {
    /// The fixed Gaussian generator matching the model's prior covariances.
    pub fn gaussian_from_model(spec: &ModelSpec) -> Self {
        ResidualGenerator::GaussianFixed { v: spec.v.clone(), w: spec.w.clone() }
    }

    /// Mean realized covariance for a residual kind.
    pub fn mean_cov(&self, kind: ResidualKind) -> DMatrix<f64> {
        match (self, kind) {
            (ResidualGenerator::GaussianFixed { v, .. }, ResidualKind::Observation) => v.clone(),
            (ResidualGenerator::GaussianFixed { w, .. }, ResidualKind::Evolution) => w.clone(),
            (
                ResidualGenerator::TwoPointMixture { weight, v1, v2, .. },
                ResidualKind::Observation,
            ) => *weight * v1 + (1.0 - *weight) * v2,
            (
                ResidualGenerator::TwoPointMixture { weight, w1, w2, .. },
                ResidualKind::Evolution,
            ) => *weight * w1 + (1.0 - *weight) * w2,
        }
    }

    /// Checks dimensions against the model and positive semidefiniteness of
    /// every component; matrices are interpreted through their symmetric
    /// parts when sampling.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let named: Vec<(&'static str, &DMatrix<f64>, usize)> = match self {
            ResidualGenerator::GaussianFixed { v, w } => {
                vec![("v", v, spec.obs_dim()), ("w", w, spec.state_dim())]
            }
            ResidualGenerator::TwoPointMixture { weight, v1, w1, v2, w2 } => {
                if !(*weight > 0.0 && *weight < 1.0) {
                    return Err(Error::OutOfRange {
                        name: "mixture weight",
                        value: *weight,
                        range: "(0, 1)",
                    });
                }
                vec![
                    ("v1", v1, spec.obs_dim()),
                    ("w1", w1, spec.state_dim()),
                    ("v2", v2, spec.obs_dim()),
                    ("w2", w2, spec.state_dim()),
                ]
            }
        };
        for (name, matrix, dim) in named {
            if matrix.nrows() != dim || matrix.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    context: "residual generator covariance",
                    expected: format!("{name} of size {dim}×{dim}"),
                    actual: format!("{}×{}", matrix.nrows(), matrix.ncols()),
                });
            }
            let min = min_symmetric_eigenvalue(matrix);
            let scale = max_abs(matrix).max(1.0);
            if min < -GENERATOR_PSD_TOLERANCE * scale {
                return Err(Error::NotPositive {
                    name: format!("generator covariance {name}"),
                    min_eigenvalue: min,
                    tolerance: GENERATOR_PSD_TOLERANCE * scale,
                });
            }
        }
        Ok(())
    }
}

/// Fourth-moment beliefs implied by a two-point mixture: with Δ the
/// component difference and q the weight, Var(vec V) = q(1−q) vec Δ vec Δᵀ
/// and Var(vec S) = q 𝔾(V₁) + (1−q) 𝔾(V₂) where 𝔾 is the Gaussian
/// fourth-moment map. Errors with [`Error::WrongMode`] for a fixed Gaussian
/// generator.
pub fn mixture_fourth_moments(generator: &ResidualGenerator) -> Result<FourthOrderBeliefs> {
    match generator {
        ResidualGenerator::GaussianFixed { .. } => {
            Err(Error::WrongMode { required: "two-point mixture generator" })
        }
        ResidualGenerator::TwoPointMixture { weight, v1, w1, v2, w2 } => {
            let q = *weight;
            let delta_w = vec_of(&(w1 - w2));
            let delta_v = vec_of(&(v1 - v2));
            FourthOrderBeliefs::new(
                w1.nrows(),
                v1.nrows(),
                q * (1.0 - q) * &delta_w * delta_w.transpose(),
                q * (1.0 - q) * &delta_v * delta_v.transpose(),
                q * gaussian_fourth_moments(w1) + (1.0 - q) * gaussian_fourth_moments(w2),
                q * gaussian_fourth_moments(v1) + (1.0 - q) * gaussian_fourth_moments(v2),
            )
        }
    }
}

/// Fourth-moment beliefs implied by any generator: degenerate realized
/// covariances with Gaussian fluctuation moments for the fixed Gaussian
/// case, the mixture moments otherwise.
pub fn generator_fourth_moments(generator: &ResidualGenerator) -> Result<FourthOrderBeliefs> {
    match generator {
        ResidualGenerator::GaussianFixed { v, w } => {
            let p2 = w.nrows() * w.nrows();
            let r2 = v.nrows() * v.nrows();
            FourthOrderBeliefs::new(
                w.nrows(),
                v.nrows(),
                DMatrix::zeros(p2, p2),
                DMatrix::zeros(r2, r2),
                gaussian_fourth_moments(w),
                gaussian_fourth_moments(v),
            )
        }
        ResidualGenerator::TwoPointMixture { .. } => mixture_fourth_moments(generator),
    }
}

/// Per-kind sampling state: the factor residuals are drawn through and the
/// realized covariance it represents.
struct RealizedKind {
    factor: DMatrix<f64>,
    realized: DMatrix<f64>,
}

/// Commits each kind to its realized covariance for one series or
/// replicate. Mixture components are drawn independently per kind, the
/// evolution kind first.
fn realize_components(generator: &ResidualGenerator, rng: &mut ChaCha8Rng) -> [RealizedKind; 2] {
    match generator {
        ResidualGenerator::GaussianFixed { v, w } => [
            RealizedKind { factor: psd_sampling_factor(w), realized: w.clone() },
            RealizedKind { factor: psd_sampling_factor(v), realized: v.clone() },
        ],
        ResidualGenerator::TwoPointMixture { weight, v1, w1, v2, w2 } => {
            let mut pick = |first: &DMatrix<f64>, second: &DMatrix<f64>| {
                let chosen = if rng.random::<f64>() < *weight { first } else { second };
                RealizedKind { factor: psd_sampling_factor(chosen), realized: chosen.clone() }
            };
            let evolution = pick(w1, w2);
            let observation = pick(v1, v2);
            [evolution, observation]
        }
    }
}

impl RealizedKind {
    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let dim = self.factor.nrows();
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.factor * z
    }
}

fn kind_slot(kind: ResidualKind) -> usize {
    match kind {
        ResidualKind::Evolution => 0,
        ResidualKind::Observation => 1,
    }
}

/// Simulates x_1, …, x_n from the model under a residual generator.
///
/// The draw order is fixed for reproducibility: mixture components first
/// (evolution then observation), then θ_0, then per time step the evolution
/// residual followed by the observation residual.
pub fn simulate_series(
    spec: &ModelSpec,
    generator: &ResidualGenerator,
    n: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    generator.validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = realize_components(generator, &mut rng);

    let sigma_factor = psd_sampling_factor(&spec.sigma);
    let z = DVector::from_fn(spec.state_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut theta = &spec.mu0 + sigma_factor * z;

    let mut series = Vec::with_capacity(n);
    for _ in 0..n {
        theta = &spec.g * theta + kinds[kind_slot(ResidualKind::Evolution)].draw(&mut rng);
        let x = spec.f.transpose() * &theta + kinds[kind_slot(ResidualKind::Observation)].draw(&mut rng);
        series.push(x);
    }
    Ok(series)
}

/// A Monte Carlo covariance estimate with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct McEstimate {
    /// Estimated covariance matrix.
    pub covariance: DMatrix<f64>,
    /// Entrywise standard errors of the covariance estimate.
    pub std_err: DMatrix<f64>,
    /// Number of replicates used.
    pub n_reps: usize,
}

/// Single-pass accumulator for Cov(vec A, vec B) with standard errors via
/// the moments of the deviation products.
struct CovAccumulator {
    n: f64,
    sum_a: DVector<f64>,
    sum_b: DVector<f64>,
    sum_a2: DVector<f64>,
    sum_b2: DVector<f64>,
    sum_ab: DMatrix<f64>,
    sum_a2b: DMatrix<f64>,
    sum_ab2: DMatrix<f64>,
    sum_a2b2: DMatrix<f64>,
}

impl CovAccumulator {
    fn new(da: usize, db: usize) -> Self {
        Self {
            n: 0.0,
            sum_a: DVector::zeros(da),
            sum_b: DVector::zeros(db),
            sum_a2: DVector::zeros(da),
            sum_b2: DVector::zeros(db),
            sum_ab: DMatrix::zeros(da, db),
            sum_a2b: DMatrix::zeros(da, db),
            sum_ab2: DMatrix::zeros(da, db),
            sum_a2b2: DMatrix::zeros(da, db),
        }
    }

    fn push(&mut self, a: &DVector<f64>, b: &DVector<f64>) {
        let a2 = a.map(|x| x * x);
        let b2 = b.map(|x| x * x);
        self.n += 1.0;
        self.sum_a += a;
        self.sum_b += b;
        self.sum_a2 += &a2;
        self.sum_b2 += &b2;
        self.sum_ab += a * b.transpose();
        self.sum_a2b += &a2 * b.transpose();
        self.sum_ab2 += a * b2.transpose();
        self.sum_a2b2 += a2 * b2.transpose();
    }

    fn finish(self) -> McEstimate {
        let n = self.n;
        let da = self.sum_a.len();
        let db = self.sum_b.len();
        let mut covariance = DMatrix::zeros(da, db);
        let mut std_err = DMatrix::zeros(da, db);
        for i in 0..da {
            let mean_a = self.sum_a[i] / n;
            for j in 0..db {
                let mean_b = self.sum_b[j] / n;
                // Deviation products d = (a − ā)(b − b̄) against the final
                // means: their sum and sum of squares expand into the raw
                // moment sums accumulated above.
                let sum_d = self.sum_ab[(i, j)] - n * mean_a * mean_b;
                let sum_d2 = self.sum_a2b2[(i, j)] + mean_b * mean_b * self.sum_a2[i]
                    + mean_a * mean_a * self.sum_b2[j]
                    + n * mean_a * mean_a * mean_b * mean_b
                    - 2.0 * mean_b * self.sum_a2b[(i, j)]
                    - 2.0 * mean_a * self.sum_ab2[(i, j)]
                    + 2.0 * mean_a * mean_b * self.sum_ab[(i, j)]
                    + 2.0 * mean_a * mean_b * self.sum_ab[(i, j)]
                    - 2.0 * mean_a * mean_b * mean_b * self.sum_a[i]
                    - 2.0 * mean_a * mean_a * mean_b * self.sum_b[j];
                covariance[(i, j)] = sum_d / (n - 1.0);
                let var_d = ((sum_d2 - sum_d * sum_d / n) / (n - 1.0)).max(0.0);
                std_err[(i, j)] = (var_d / n).sqrt();
            }
        }
        McEstimate { covariance, std_err, n_reps: n as usize }
    }
}

/// Draws one replicate's residuals for a fixed id set and returns the
/// evaluated observables through the supplied closures.
fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    rng
}

fn sorted_union(a: &QuadraticObservable, b: &QuadraticObservable) -> Vec<ResidualId> {
    let mut ids = a.form.residual_ids();
    ids.extend(b.form.residual_ids());
    ids.sort();
    ids.dedup();
    ids
}

/// Estimates Cov(vec A, vec B) for two quadratic observables by direct
/// simulation of their shared residuals.
///
/// Each replicate uses an independent random stream of the seed: realized
/// covariances are committed per kind, then every residual id appearing in
/// either observable is drawn once in ascending id order and both
/// observables are evaluated on the same draws.
pub fn monte_carlo_cov(
    a: &QuadraticObservable,
    b: &QuadraticObservable,
    spec: &ModelSpec,
    generator: &ResidualGenerator,
    n_reps: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_reps < 2 {
        return Err(Error::TooShort { required: 2, actual: n_reps });
    }
    generator.validate(spec)?;
    let ids = sorted_union(a, b);
    let mut acc = CovAccumulator::new(a.dim() * a.dim(), b.dim() * b.dim());
    for rep in 0..n_reps {
        let mut rng = replicate_rng(seed, rep);
        let kinds = realize_components(generator, &mut rng);
        let draws: Vec<(ResidualId, DVector<f64>)> = ids
            .iter()
            .map(|id| (*id, kinds[kind_slot(id.kind)].draw(&mut rng)))
            .collect();
        let mut resolve = |id: ResidualId| -> DVector<f64> {
            draws
                .iter()
                .find(|(key, _)| *key == id)
                .map(|(_, draw)| draw.clone())
                .expect("resolver queried for an id outside the drawn union")
        };
        let qa = a.evaluate(&mut resolve);
        let qb = b.evaluate(&mut resolve);
        acc.push(&vec_of(&qa), &vec_of(&qb));
    }
    Ok(acc.finish())
}

/// Estimates Cov(vec τ, vec B) between an adjustment target and a quadratic
/// observable: per replicate the realized target is the committed
/// covariance (projected through F for the evolution target).
pub fn monte_carlo_target_cov(
    target: AdjustTarget,
    b: &QuadraticObservable,
    spec: &ModelSpec,
    generator: &ResidualGenerator,
    n_reps: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_reps < 2 {
        return Err(Error::TooShort { required: 2, actual: n_reps });
    }
    generator.validate(spec)?;
    let ids = b.form.residual_ids();
    let r = spec.obs_dim();
    let mut acc = CovAccumulator::new(r * r, b.dim() * b.dim());
    for rep in 0..n_reps {
        let mut rng = replicate_rng(seed, rep);
        let kinds = realize_components(generator, &mut rng);
        let realized = match target {
            AdjustTarget::ObservationCov => {
                kinds[kind_slot(ResidualKind::Observation)].realized.clone()
            }
            AdjustTarget::ProjectedEvolutionCov => {
                spec.f.transpose()
                    * &kinds[kind_slot(ResidualKind::Evolution)].realized
                    * &spec.f
            }
        };
        let draws: Vec<(ResidualId, DVector<f64>)> = ids
            .iter()
            .map(|id| (*id, kinds[kind_slot(id.kind)].draw(&mut rng)))
            .collect();
        let mut resolve = |id: ResidualId| -> DVector<f64> {
            draws
                .iter()
                .find(|(key, _)| *key == id)
                .map(|(_, draw)| draw.clone())
                .expect("resolver queried for an id outside the drawn union")
        };
        let qb = b.evaluate(&mut resolve);
        acc.push(&vec_of(&realized), &vec_of(&qb));
    }
    Ok(acc.finish())
}
