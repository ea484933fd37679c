//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by model validation, moment computation, identification,
/// adjustment, forecasting, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not match what an operation requires.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// Operation that rejected its input.
        context: &'static str,
        /// Expected shape, formatted for the message.
        expected: String,
        /// Actual shape, formatted for the message.
        actual: String,
    },

    /// No transfer matrix H with H Fᵀ = Fᵀ G exists for this model.
    #[error(
        "no transfer matrix exists: ‖H Fᵀ − Fᵀ G‖_max = {residual:.3e} \
         exceeds tolerance {tolerance:.3e}"
    )]
    NoTransferExists {
        /// Max-norm residual of the candidate solution.
        residual: f64,
        /// Tolerance the residual was compared against.
        tolerance: f64,
    },

    /// A matrix that must be positive semidefinite is not.
    #[error(
        "{name} is not positive semidefinite: minimum eigenvalue {min_eigenvalue:.6e} \
         (tolerance {tolerance:.1e})"
    )]
    NotPositive {
        /// Which matrix failed the check.
        name: String,
        /// Smallest eigenvalue found.
        min_eigenvalue: f64,
        /// Negative tolerance the eigenvalue was compared against.
        tolerance: f64,
    },

    /// A fourth-order moment matrix does not satisfy the symmetry its index
    /// pattern requires.
    #[error(
        "{name} violates fourth-order index symmetry: entries for index pair {entry_a:?} and \
         {entry_b:?} differ by {difference:.3e}"
    )]
    IndexAsymmetry {
        /// Which matrix failed the check.
        name: String,
        /// First flattened (row, column) position.
        entry_a: (usize, usize),
        /// Position that must carry the same value.
        entry_b: (usize, usize),
        /// Absolute difference found.
        difference: f64,
    },

    /// The observation series is too short for the requested construction.
    #[error("series too short: need at least {required} observations, got {actual}")]
    TooShort {
        /// Minimum number of observations required.
        required: usize,
        /// Number of observations supplied.
        actual: usize,
    },

    /// Closed-form second-moment relations only apply when the observation
    /// and evolution operators are identities.
    #[error("closed-form relations require an identity-structure model (F = G = I, H = I)")]
    NotIdentityModel,

    /// The transfer matrix is singular where an inverse is required.
    #[error("transfer matrix is singular (rank {rank} of {dim}); this operation needs H⁻¹")]
    SingularH {
        /// Numerical rank of H.
        rank: usize,
        /// Dimension of H.
        dim: usize,
    },

    /// Bound data does not cover the design horizon.
    #[error("design needs observations x_1..x_{required}, but the series has {actual}")]
    LengthMismatch {
        /// Design horizon n.
        required: usize,
        /// Observations available.
        actual: usize,
    },

    /// A generator-specific operation was called on the wrong generator mode.
    #[error("operation requires the {required} generator mode")]
    WrongMode {
        /// Mode the operation supports.
        required: &'static str,
    },

    /// Nothing to summarize.
    #[error("no forecast steps to summarize")]
    Empty,

    /// A scalar parameter is outside its admissible range.
    #[error("{name} = {value} is outside the admissible range {range}")]
    OutOfRange {
        /// Parameter name.
        name: &'static str,
        /// Offending value.
        value: f64,
        /// Human-readable admissible range.
        range: &'static str,
    },
}

/// Convenience alias used throughout the library.
pub type Result<T> = std::result::Result<T, Error>;
