//! Shared dense linear-algebra helpers: deterministic symmetric
//! eigendecomposition, pairwise summation, and a small nonnegative
//! least-squares solver used by the cone-completeness checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with a fixed ordering and sign convention so
/// identical inputs give bit-identical output.
///
/// Eigenvalues are sorted descending (ties broken by original index); each
/// eigenvector is normalized so its largest-magnitude component is positive,
/// ties broken by lowest index.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, in the same order as `values`.
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> Result<SymEigen> {
    let n = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite matrix entry".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        values.push(eig.eigenvalues[i]);
        let mut col = eig.eigenvectors.column(i).clone_owned();
        fix_sign(&mut col);
        vectors.set_column(k, &col);
    }
    Ok(SymEigen { values, vectors })
}

/// Make the largest-magnitude component positive; ties go to the lowest index.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        let a = x.abs();
        if a > best_abs {
            best_abs = a;
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v = -&*v;
    }
}

/// Pairwise (tree) summation in a fixed order, independent of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Central-difference step scaled to the size of the expansion point.
pub fn fd_step(x_norm: f64) -> f64 {
    f64::EPSILON.cbrt() * x_norm.max(1.0)
}

/// The i-th standard basis vector of R^dim.
pub fn unit_vector(dim: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(dim);
    e[i] = 1.0;
    e
}

/// Nonnegative least squares `min ||A w - b||, w >= 0` by the active-set
/// method (Lawson–Hanson). Sized for tiny systems (cone membership tests).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let mut passive = vec![false; n];
    let mut w = DVector::zeros(n);
    let tol = 1e-12 * (1.0 + b.norm());
    for _ in 0..max_iter {
        let resid = b - a * &w;
        let grad = a.transpose() * &resid;
        let mut best = None;
        let mut best_val = tol;
        for j in 0..n {
            if !passive[j] && grad[j] > best_val {
                best_val = grad[j];
                best = Some(j);
            }
        }
        let Some(j_in) = best else { break };
        passive[j_in] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let ap = a.select_columns(idx.iter());
            let sol = ap
                .clone()
                .svd(true, true)
                .solve(b, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(idx.len()));
            if sol.iter().all(|&s| s > 0.0) {
                w.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    w[j] = sol[k];
                }
                break;
            }
            // step back to the feasibility boundary and drop a variable
            let mut alpha = 1.0f64;
            for (k, &j) in idx.iter().enumerate() {
                if sol[k] <= 0.0 {
                    let denom = w[j] - sol[k];
                    if denom > 0.0 {
                        alpha = alpha.min(w[j] / denom);
                    }
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                w[j] += alpha * (sol[k] - w[j]);
                if w[j] <= tol {
                    w[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    let resid = (b - a * &w).norm();
    (w, resid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_is_sorted_and_sign_fixed() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 2.0]);
        let e = sym_eigen_sorted(&m).unwrap();
        assert_eq!(e.values, vec![4.0, 2.0, 1.0]);
        for j in 0..3 {
            let col = e.vectors.column(j);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(max > 0.0);
        }
    }

    #[test]
    fn eigen_reconstructs() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 2.0, 1.0]);
        let m = &a * a.transpose();
        let e = sym_eigen_sorted(&m).unwrap();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()));
        let rec = &e.vectors * lam * e.vectors.transpose();
        assert_relative_eq!(m, rec, epsilon = 1e-10);
    }

    #[test]
    fn eigen_deterministic_bits() {
        let m = DMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) as f64).sin());
        let e1 = sym_eigen_sorted(&m).unwrap();
        let e2 = sym_eigen_sorted(&m).unwrap();
        assert_eq!(e1.values, e2.values);
        assert!(e1
            .vectors
            .iter()
            .zip(e2.vectors.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1001).map(|i| (i as f64).sqrt()).collect();
        let naive: f64 = xs.iter().sum();
        assert_relative_eq!(pairwise_sum(&xs), naive, max_relative = 1e-12);
    }

    #[test]
    fn nnls_recovers_nonnegative_combination() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![-0.6, -0.8]);
        let (w, resid) = nnls(&a, &b, 50);
        assert!(resid < 1e-10);
        assert_relative_eq!(w[0], 0.6, epsilon = 1e-10);
        assert_relative_eq!(w[1], 0.8, epsilon = 1e-10);
    }

    #[test]
    fn nnls_reports_infeasible_direction() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let (_, resid) = nnls(&a, &b, 50);
        assert!(resid > 0.9);
    }
}
