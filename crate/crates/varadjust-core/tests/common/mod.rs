//! Shared fixtures for the integration tests: the six-dimensional running
//! example and deterministic random model generators.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varadjust_core::beliefs::{ExchangeablePattern, FourthOrderBeliefs};
use varadjust_core::model::ModelSpec;
use varadjust_core::quadratic::vec_of;

/// The six-dimensional exchangeable example used throughout the tests:
/// identity F and G, Σ with diagonal 9 and off-diagonal 3, W with diagonal
/// 4 and off-diagonal 1, V with diagonal 36 and off-diagonal −4.
pub fn example_model() -> ModelSpec {
    example_model_scaled(1.0)
}

/// The running example with V and W scaled by a common factor, leaving the
/// rest untouched.
pub fn example_model_scaled(factor: f64) -> ModelSpec {
    let dim = 6;
    let mut sigma = DMatrix::from_element(dim, dim, 3.0);
    let mut v = DMatrix::from_element(dim, dim, -4.0 * factor);
    let mut w = DMatrix::from_element(dim, dim, 1.0 * factor);
    for i in 0..dim {
        sigma[(i, i)] = 9.0;
        v[(i, i)] = 36.0 * factor;
        w[(i, i)] = 4.0 * factor;
    }
    ModelSpec::new(
        DMatrix::identity(dim, dim),
        DMatrix::identity(dim, dim),
        DVector::from_vec(vec![10.0, 9.0, 9.0, 8.0, 8.0, 7.0]),
        sigma,
        v,
        w,
    )
    .expect("the running example is admissible")
}

/// The exchangeable fourth-order beliefs of the running example.
pub fn example_beliefs() -> FourthOrderBeliefs {
    FourthOrderBeliefs::from_patterns(
        6,
        6,
        &ExchangeablePattern { iiii: 2.25, ijij: 0.5625, iijj: 0.2 },
        &ExchangeablePattern { iiii: 25.0, ijij: 1.0, iijj: 4.0 },
        &ExchangeablePattern::without_cross_diagonal(30.0, 15.0),
        &ExchangeablePattern::without_cross_diagonal(2500.0, 1000.0),
    )
    .expect("the running example beliefs are admissible")
}

/// Deterministic test RNG.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric matrix with entries of the given scale.
pub fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let value = scale * (2.0 * rng.random::<f64>() - 1.0);
            out[(i, j)] = value;
            out[(j, i)] = value;
        }
    }
    out
}

/// Random symmetric positive definite matrix of the given scale.
pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| 2.0 * rng.random::<f64>() - 1.0);
    scale * (&a * a.transpose() / dim as f64 + 0.2 * DMatrix::<f64>::identity(dim, dim))
}

/// Random fourth-order beliefs that are admissible by construction: each
/// moment matrix is a sum of outer products of vec'd symmetric matrices,
/// which is index symmetric and positive semidefinite.
pub fn random_beliefs(rng: &mut ChaCha8Rng, state_dim: usize, obs_dim: usize) -> FourthOrderBeliefs {
    let mut moment = |dim: usize, scale: f64| {
        let d2 = dim * dim;
        let mut out = DMatrix::zeros(d2, d2);
        for _ in 0..3 {
            let s = vec_of(&random_symmetric(rng, dim, scale));
            out += &s * s.transpose();
        }
        out
    };
    FourthOrderBeliefs::new(
        state_dim,
        obs_dim,
        moment(state_dim, 1.0),
        moment(obs_dim, 3.0),
        moment(state_dim, 2.0),
        moment(obs_dim, 10.0),
    )
    .expect("sums of symmetric outer products are admissible")
}

/// Random identity-structure model (F = G = I) of the given dimension.
pub fn random_identity_model(rng: &mut ChaCha8Rng, dim: usize) -> ModelSpec {
    ModelSpec::new(
        DMatrix::identity(dim, dim),
        DMatrix::identity(dim, dim),
        DVector::from_fn(dim, |_, _| 4.0 * rng.random::<f64>()),
        random_spd(rng, dim, 2.0),
        random_spd(rng, dim, 5.0),
        random_spd(rng, dim, 1.5),
    )
    .expect("random identity model is admissible")
}

/// Random invertible matrix via diagonal dominance.
pub fn random_invertible(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(dim, dim, |_, _| 2.0 * rng.random::<f64>() - 1.0);
    for i in 0..dim {
        let off: f64 = (0..dim).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        let sign = if m[(i, i)] >= 0.0 { 1.0 } else { -1.0 };
        m[(i, i)] = sign * (off + 0.5 + rng.random::<f64>());
    }
    m
}

/// Random square model (r = p) with full-rank F and invertible G, so the
/// transfer matrix exists and is invertible.
pub fn random_square_model(rng: &mut ChaCha8Rng, dim: usize) -> ModelSpec {
    ModelSpec::new(
        random_invertible(rng, dim),
        random_invertible(rng, dim),
        DVector::from_fn(dim, |_, _| 2.0 * rng.random::<f64>() - 1.0),
        random_spd(rng, dim, 1.0),
        random_spd(rng, dim, 3.0),
        random_spd(rng, dim, 1.0),
    )
    .expect("random square model is admissible")
}

/// Random wide model (r > p) whose F has full row rank, so the transfer
/// matrix exists; H itself is rank deficient and needs the invertible
/// completion.
pub fn random_wide_model(rng: &mut ChaCha8Rng, state_dim: usize, obs_dim: usize) -> ModelSpec {
    assert!(obs_dim > state_dim, "wide models need r > p");
    let mut f = DMatrix::from_fn(state_dim, obs_dim, |_, _| 2.0 * rng.random::<f64>() - 1.0);
    for i in 0..state_dim {
        let off: f64 = (0..obs_dim).filter(|&j| j != i).map(|j| f[(i, j)].abs()).sum();
        let sign = if f[(i, i)] >= 0.0 { 1.0 } else { -1.0 };
        f[(i, i)] = sign * (off + 0.5 + rng.random::<f64>());
    }
    ModelSpec::new(
        f,
        random_invertible(rng, state_dim),
        DVector::from_fn(state_dim, |_, _| 2.0 * rng.random::<f64>() - 1.0),
        random_spd(rng, state_dim, 1.0),
        random_spd(rng, obs_dim, 3.0),
        random_spd(rng, state_dim, 1.0),
    )
    .expect("random wide model is admissible")
}
