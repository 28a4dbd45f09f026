//! Spectral factorization of the covariance and the numerical check of the
//! drift-correction identity
//! `<u, sum_j D sigma_bar^j sigma_bar^j> = <u, sum_j DC^j (CC^+)^j>` on the
//! kernel of `C`, where `sigma_bar = Q_bar Lambda_bar^{1/2}` keeps only the
//! positive eigenpairs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_sorted;
use crate::model::{column_jacobians, pseudoinverse, JumpDiffusionModel};

/// Relative eigenvalue-gap guard below which finite differences of the
/// factor are considered unreliable.
pub const GAP_GUARD_REL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SpectralFactorization {
    /// Orthogonal eigenvector matrix, columns ordered by descending
    /// eigenvalue with the deterministic sign convention.
    pub q: DMatrix<f64>,
    /// Eigenvalues, descending; slightly negative values are clamped to 0.
    pub lambda: Vec<f64>,
    /// Numerical rank: eigenvalues above `rank_tol * max(lambda_1, 1)`.
    pub rank: usize,
    /// `Q_bar Lambda_bar^{1/2}`: last `d - rank` columns are zero.
    pub sigma_bar: DMatrix<f64>,
    /// Most negative raw eigenvalue clamped away (0 when input was PSD).
    pub clamped: f64,
}

impl SpectralFactorization {
    /// Smallest gap among the kept eigenvalues, counting the gap from
    /// `lambda_rank` down to the zero block.
    pub fn min_gap(&self) -> f64 {
        if self.rank == 0 {
            return f64::INFINITY;
        }
        let mut gap = f64::INFINITY;
        for i in 1..self.rank {
            gap = gap.min(self.lambda[i - 1] - self.lambda[i]);
        }
        let floor = if self.rank < self.lambda.len() {
            self.lambda[self.rank]
        } else {
            0.0
        };
        gap.min(self.lambda[self.rank - 1] - floor)
    }

    /// Reconstruction `Q Lambda Q^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lam = DMatrix::from_diagonal(&DVector::from_vec(self.lambda.clone()));
        &self.q * lam * self.q.transpose()
    }

    /// `Q_bar Q_bar^T`, the orthogonal projector onto the range.
    pub fn range_projector(&self) -> DMatrix<f64> {
        let d = self.q.nrows();
        let mut qbar = DMatrix::zeros(d, d);
        for j in 0..self.rank {
            qbar.set_column(j, &self.q.column(j));
        }
        &qbar * qbar.transpose()
    }
}

/// Factor a symmetric PSD matrix as `Q Lambda Q^T` and build the truncated
/// square root from the top-rank eigenpairs.
pub fn spectral_factor(c_at_x: &DMatrix<f64>, rank_tol: f64) -> Result<SpectralFactorization> {
    let d = c_at_x.nrows();
    let eig = sym_eigen_sorted(c_at_x)?;
    let lambda_max = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rank_tol * lambda_max.max(1.0);
    let mut clamped: f64 = 0.0;
    let lambda: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| {
            if l < 0.0 {
                clamped = clamped.min(l);
                0.0
            } else {
                l
            }
        })
        .collect();
    let rank = lambda.iter().filter(|&&l| l > cutoff).count();
    let mut sigma_bar = DMatrix::zeros(d, d);
    for (j, &lam) in lambda.iter().take(rank).enumerate() {
        sigma_bar.set_column(j, &(eig.vectors.column(j) * lam.sqrt()));
    }
    Ok(SpectralFactorization {
        q: eig.vectors,
        lambda,
        rank,
        sigma_bar,
        clamped,
    })
}

/// Result of the drift-identity check. When the eigenvalue gap at the base
/// point falls below the guard the finite-difference side is skipped and
/// only the pseudoinverse side is reported.
#[derive(Clone, Debug)]
pub struct DriftIdentityCheck {
    pub lhs: Option<f64>,
    pub rhs: f64,
    pub residual: Option<f64>,
    pub min_gap: f64,
    /// False when the gap guard tripped and the residual is not reported.
    pub reliable: bool,
}

/// Evaluate both sides of the drift-correction identity at `x` for a kernel
/// vector `u`. The left side differentiates `sigma_bar` by central
/// differences of step `fd_step` along coordinate directions; the right side
/// uses the column Jacobians and the range projector.
pub fn verify_drift_identity(
    model: &JumpDiffusionModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    fd_step: f64,
    rank_tol: f64,
) -> Result<DriftIdentityCheck> {
    let d = model.dim;
    let c = model.covariance_at(x);
    let kernel_resid = (&c * u).norm();
    let kernel_tol = 1e-8 * u.norm().max(1e-300) * (1.0 + c.norm());
    if kernel_resid > kernel_tol {
        return Err(Error::NotInKernel {
            residual: kernel_resid,
            tol: kernel_tol,
        });
    }

    // pseudoinverse side
    let pinv = pseudoinverse(&c, rank_tol)?;
    let projector = &c * &pinv.pinv;
    let jacs = column_jacobians(model, x)?;
    let mut rhs_vec = DVector::zeros(d);
    for (j, jac) in jacs.iter().enumerate() {
        rhs_vec += jac * projector.column(j);
    }
    let rhs = u.dot(&rhs_vec);

    let base = spectral_factor(&c, rank_tol)?;
    let min_gap = base.min_gap();
    let lambda1 = base.lambda.first().copied().unwrap_or(0.0);
    let gap_guard = GAP_GUARD_REL * lambda1.max(f64::MIN_POSITIVE);
    if base.rank > 0 && min_gap <= gap_guard {
        return Ok(DriftIdentityCheck {
            lhs: None,
            rhs,
            residual: None,
            min_gap,
            reliable: false,
        });
    }

    // finite differences of sigma_bar along each coordinate
    let mut dsigma = vec![DMatrix::zeros(d, d); d]; // dsigma[l] = d sigma_bar / d x_l
    for l in 0..d {
        let mut xp = x.clone();
        xp[l] += fd_step;
        let mut xm = x.clone();
        xm[l] -= fd_step;
        let fp = spectral_factor(&model.covariance_at(&xp), rank_tol)?;
        let fm = spectral_factor(&model.covariance_at(&xm), rank_tol)?;
        for f in [&fp, &fm] {
            if f.rank != base.rank {
                return Err(Error::EigenvalueCrossing { gap: min_gap });
            }
            // the sign convention must stay aligned with the base point,
            // otherwise the difference quotient is meaningless
            for j in 0..base.rank {
                if f.q.column(j).dot(&base.q.column(j)) < 0.5 {
                    return Err(Error::EigenvalueCrossing { gap: min_gap });
                }
            }
        }
        dsigma[l] = (&fp.sigma_bar - &fm.sigma_bar) / (2.0 * fd_step);
    }
    // sum_j D sigma_bar^j sigma_bar^j, with (D sigma_bar^j)_{il} the
    // derivative of entry (i, j) in direction l
    let mut lhs_vec = DVector::zeros(d);
    for j in 0..d {
        let col = base.sigma_bar.column(j);
        for i in 0..d {
            let mut acc = 0.0;
            for l in 0..d {
                acc += dsigma[l][(i, j)] * col[l];
            }
            lhs_vec[i] += acc;
        }
    }
    let lhs = u.dot(&lhs_vec);
    Ok(DriftIdentityCheck {
        lhs: Some(lhs),
        rhs,
        residual: Some((lhs - rhs).abs()),
        min_gap,
        reliable: true,
    })
}
