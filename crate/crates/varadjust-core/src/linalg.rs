//! Dense symmetric linear algebra used throughout the library.
//!
//! Everything here is deterministic: the cyclic Jacobi eigenvalue iteration
//! visits pivots in a fixed order, ties in the eigenvalue sort are broken by
//! input order, and no randomized balancing or pivoting is involved. Repeated
//! runs on identical input produce bit-identical output.
//!
//! A matrix whose off-diagonal entries are exactly zero takes a fast path
//! with no rotations at all, so diagonal problems stay exact: for example the
//! pseudo-inverse of an identity matrix is the identity, bit for bit. Several
//! callers rely on this to keep analytically-exact cases exact in floating
//! point.

use nalgebra::{DMatrix, DVector};

/// Maximum number of full Jacobi sweeps before giving up on further
/// improvement. Convergence is quadratic once rotations become small; well
/// under 20 sweeps suffice even for matrices of dimension ~1000.
const MAX_SWEEPS: usize = 64;

/// Relative off-diagonal norm at which the Jacobi iteration stops.
const JACOBI_TOL: f64 = 1e-15;

/// Eigendecomposition A = Q Λ Qᵀ of a symmetric matrix, with eigenvalues
/// sorted in descending order and eigenvectors in the matching column order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors, one per column.
    pub eigenvectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// Number of eigenvalues strictly greater than `cutoff`.
    pub fn rank_above(&self, cutoff: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > cutoff).count()
    }

    /// Pseudo-inverse reconstructed from the decomposition, inverting only
    /// eigenvalues above `rel_cutoff` times the largest absolute eigenvalue.
    /// Intended for positive semidefinite input; negative eigenvalues are
    /// treated as zero.
    pub fn pinv_matrix(&self, rel_cutoff: f64) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        let cutoff = self.abs_cutoff(rel_cutoff);
        let mut out = DMatrix::zeros(n, n);
        for c in 0..n {
            let lambda = self.eigenvalues[c];
            if lambda > cutoff {
                let inv = 1.0 / lambda;
                let q = self.eigenvectors.column(c);
                for j in 0..n {
                    let qj = q[j] * inv;
                    if qj != 0.0 {
                        for i in 0..n {
                            out[(i, j)] += q[i] * qj;
                        }
                    }
                }
            }
        }
        out
    }

    /// Solve A x ≈ b through the pseudo-inverse without forming it, returning
    /// the solution and the number of eigenvalues kept.
    pub fn apply_pinv(&self, b: &DVector<f64>, rel_cutoff: f64) -> (DVector<f64>, usize) {
        let n = self.eigenvalues.len();
        assert_eq!(b.len(), n, "right-hand side length must match the decomposition");
        let cutoff = self.abs_cutoff(rel_cutoff);
        let mut x = DVector::zeros(n);
        let mut kept = 0;
        for c in 0..n {
            let lambda = self.eigenvalues[c];
            if lambda > cutoff {
                kept += 1;
                let q = self.eigenvectors.column(c);
                let coeff = q.dot(b) / lambda;
                if coeff != 0.0 {
                    for i in 0..n {
                        x[i] += coeff * q[i];
                    }
                }
            }
        }
        (x, kept)
    }

    fn abs_cutoff(&self, rel_cutoff: f64) -> f64 {
        let max_abs = self.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        rel_cutoff * max_abs
    }
}

/// Symmetric part (A + Aᵀ)/2 of a square matrix.
pub fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols(), "symmetric part requires a square matrix");
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    out
}

/// Largest absolute entry of a matrix; zero for an empty matrix.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Frobenius inner product ⟨A, B⟩ = Σᵢⱼ Aᵢⱼ Bᵢⱼ.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "Frobenius inner product requires equal shapes");
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn off_diagonal_sq(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s
}

/// Eigendecomposition of the symmetric part of `a` by cyclic Jacobi rotation.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen {
    assert_eq!(a.nrows(), a.ncols(), "eigendecomposition requires a square matrix");
    let n = a.nrows();
    let mut m = symmetric_part(a);
    let mut q = DMatrix::<f64>::identity(n, n);

    let frob_sq: f64 = m.iter().map(|v| v * v).sum();
    let stop_sq = (JACOBI_TOL * JACOBI_TOL) * frob_sq.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_sq(&m) <= stop_sq {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = m[(p, r)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(r, r)];
                if apq.abs() <= 0.5 * f64::EPSILON * (app.abs() + aqq.abs()) {
                    m[(p, r)] = 0.0;
                    m[(r, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, r)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(r, k)] = s * mpk + c * mqk;
                }
                m[(p, r)] = 0.0;
                m[(r, p)] = 0.0;

                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkq = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkq;
                    q[(k, r)] = s * qkp + c * qkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));

    let identity_order = order.iter().enumerate().all(|(pos, &idx)| pos == idx);
    if identity_order {
        let eigenvalues = DVector::from_fn(n, |i, _| m[(i, i)]);
        return SymmetricEigen { eigenvalues, eigenvectors: q };
    }

    let eigenvalues = DVector::from_fn(n, |i, _| m[(order[i], order[i])]);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (pos, &idx) in order.iter().enumerate() {
        eigenvectors.set_column(pos, &q.column(idx));
    }
    SymmetricEigen { eigenvalues, eigenvectors }
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let eig = symmetric_eigen(a);
    let n = eig.eigenvalues.len();
    if n == 0 {
        0.0
    } else {
        eig.eigenvalues[n - 1]
    }
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix, inverting
/// eigenvalues above `rel_cutoff` times the largest one.
pub fn psd_pinv(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    symmetric_eigen(a).pinv_matrix(rel_cutoff)
}

/// Like [`psd_pinv`], additionally reporting how many eigenvalues were
/// inverted.
pub fn psd_pinv_with_rank(a: &DMatrix<f64>, rel_cutoff: f64) -> (DMatrix<f64>, usize) {
    let eigen = symmetric_eigen(a);
    let max_abs_eigenvalue = eigen.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let rank = eigen.rank_above(rel_cutoff * max_abs_eigenvalue);
    (eigen.pinv_matrix(rel_cutoff), rank)
}

/// Moore–Penrose pseudo-inverse of a general rectangular matrix.
///
/// Built from the eigendecomposition of the smaller Gram matrix:
/// M⁺ = Mᵀ (M Mᵀ)⁺ when M has at most as many rows as columns, and
/// M⁺ = (Mᵀ M)⁺ Mᵀ otherwise. `sv_rel_cutoff` is a cutoff on singular values
/// relative to the largest; it is squared internally because Gram
/// eigenvalues are squared singular values.
pub fn pinv(m: &DMatrix<f64>, sv_rel_cutoff: f64) -> DMatrix<f64> {
    let eig_cutoff = sv_rel_cutoff * sv_rel_cutoff;
    if m.nrows() <= m.ncols() {
        let gram = m * m.transpose();
        m.transpose() * psd_pinv(&gram, eig_cutoff)
    } else {
        let gram = m.transpose() * m;
        psd_pinv(&gram, eig_cutoff) * m.transpose()
    }
}

/// Singular-value summary of a general matrix: numerical rank at
/// `sv_rel_cutoff` (relative to the largest singular value) and the condition
/// estimate σ_max/σ_min over all singular values, `f64::INFINITY` when the
/// matrix is rank-deficient at that cutoff or identically zero.
pub fn rank_and_condition(m: &DMatrix<f64>, sv_rel_cutoff: f64) -> (usize, f64) {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let eig = symmetric_eigen(&gram);
    let k = eig.eigenvalues.len();
    if k == 0 {
        return (0, f64::INFINITY);
    }
    let sigma: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let sigma_max = sigma[0];
    if sigma_max == 0.0 {
        return (0, f64::INFINITY);
    }
    let threshold = sv_rel_cutoff * sigma_max;
    let rank = sigma.iter().filter(|&&s| s > threshold).count();
    let sigma_min = sigma[k - 1];
    let condition = if rank < k || sigma_min == 0.0 {
        f64::INFINITY
    } else {
        sigma_max / sigma_min
    };
    (rank, condition)
}

/// Factor L with L Lᵀ equal to the positive semidefinite part of `a`,
/// obtained as Q √Λ₊ from the eigendecomposition. Slightly negative
/// eigenvalues from rounding are clamped to zero. Used for drawing samples
/// with a given covariance.
pub fn psd_sampling_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetric_eigen(a);
    let n = eig.eigenvalues.len();
    let mut l = eig.eigenvectors;
    for c in 0..n {
        let scale = eig.eigenvalues[c].max(0.0).sqrt();
        for i in 0..n {
            l[(i, c)] *= scale;
        }
    }
    l
}

/// Replace a symmetric matrix by its nearest positive semidefinite matrix in
/// Frobenius norm (eigenvalue clipping at zero). Returns the repaired matrix
/// and the eigenvalues of the input, sorted descending.
pub fn clip_to_psd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let eig = symmetric_eigen(a);
    let n = eig.eigenvalues.len();
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if eigenvalues.iter().all(|&l| l >= 0.0) {
        return (symmetric_part(a), eigenvalues);
    }
    let mut out = DMatrix::zeros(n, n);
    for c in 0..n {
        let lambda = eig.eigenvalues[c].max(0.0);
        if lambda == 0.0 {
            continue;
        }
        let q = eig.eigenvectors.column(c);
        for j in 0..n {
            let qj = q[j] * lambda;
            for i in 0..n {
                out[(i, j)] += q[i] * qj;
            }
        }
    }
    (symmetric_part(&out), eigenvalues)
}
