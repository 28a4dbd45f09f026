//! Jump-diffusion coefficient data `(b, C, rho, F)` with finite-activity
//! atomic jumps, plus the derivative and pseudoinverse machinery behind the
//! compensated drift, and sample-based probes of the standing growth and
//! regularity assumptions.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{AmplitudeField, ColumnJacobianField, MatrixField, VectorField};
use crate::linalg::{fd_step, sym_eigen_sorted};

/// Declared growth constants: `q`, `L` for the jump log-moment and quadratic
/// growth bounds, and their semimartingale counterparts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthParams {
    pub q: f64,
    pub big_l: f64,
    pub q_tilde: f64,
    pub big_l_tilde: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        Self {
            q: 2.0,
            big_l: 10.0,
            q_tilde: 2.0,
            big_l_tilde: 10.0,
        }
    }
}

/// One atom of the jump measure: a mark with a positive weight.
#[derive(Clone)]
pub struct JumpAtom {
    pub mark: DVector<f64>,
    pub weight: f64,
}

/// Finite-activity jump specification: `F ~ sum_k w_k delta_{z_k}` together
/// with the amplitude `rho(x, z)`. Truncated infinite-activity inputs carry
/// `approximate = true` and every verdict derived from them is tagged.
#[derive(Clone)]
pub struct JumpSpec {
    pub atoms: Vec<JumpAtom>,
    pub amplitude: AmplitudeField,
    pub approximate: bool,
    /// User-declared bound on the truncated tail of the integrability
    /// integral, reported alongside approximate verdicts.
    pub tail_bound: Option<f64>,
}

impl JumpSpec {
    pub fn none() -> Self {
        Self {
            atoms: vec![],
            amplitude: Arc::new(|_x, z| z.clone()),
            approximate: false,
            tail_bound: None,
        }
    }

    /// Atoms with the identity amplitude `rho(x, z) = z`.
    pub fn from_atoms(atoms: Vec<JumpAtom>) -> Result<Self> {
        if atoms.iter().any(|a| a.weight <= 0.0) {
            return Err(Error::InvalidParameter(
                "jump atom weights must be strictly positive".into(),
            ));
        }
        Ok(Self {
            atoms,
            amplitude: Arc::new(|_x, z| z.clone()),
            approximate: false,
            tail_bound: None,
        })
    }

    pub fn with_amplitude(mut self, amplitude: AmplitudeField) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Truncated quadrature of a one-dimensional jump density on
    /// `{eps <= |z| <= support}`: midpoint nodes become atoms and the result
    /// is flagged approximate.
    pub fn from_density_truncated(
        density: impl Fn(f64) -> f64,
        eps: f64,
        support: f64,
        nodes_per_side: usize,
        tail_bound: Option<f64>,
    ) -> Result<Self> {
        if eps <= 0.0 || support <= eps || nodes_per_side == 0 {
            return Err(Error::InvalidParameter(
                "truncation requires 0 < eps < support and at least one node".into(),
            ));
        }
        let h = (support - eps) / nodes_per_side as f64;
        let mut atoms = Vec::with_capacity(2 * nodes_per_side);
        for side in [-1.0, 1.0] {
            for k in 0..nodes_per_side {
                let z = side * (eps + (k as f64 + 0.5) * h);
                let w = density(z) * h;
                if w > 0.0 {
                    atoms.push(JumpAtom {
                        mark: DVector::from_vec(vec![z]),
                        weight: w,
                    });
                }
            }
        }
        Ok(Self {
            atoms,
            amplitude: Arc::new(|_x, z| z.clone()),
            approximate: true,
            tail_bound,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total mass of F, i.e. the jump intensity.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Pick an atom from a uniform draw in [0, 1) by cumulative weight.
    pub fn pick_atom(&self, u: f64) -> &JumpAtom {
        let total = self.total_mass();
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.weight / total;
            if u < acc {
                return a;
            }
        }
        self.atoms.last().expect("pick_atom on empty spec")
    }
}

/// The SDE coefficient record. `covariance` is the extended field `C = sigma
/// sigma^T`; it must be evaluable on a neighborhood of the domain so that
/// finite-difference stencils may leave it.
#[derive(Clone)]
pub struct JumpDiffusionModel {
    pub dim: usize,
    pub drift: VectorField,
    pub covariance: MatrixField,
    /// Analytic column Jacobians of the covariance, when available.
    pub covariance_jacobians: Option<ColumnJacobianField>,
    /// Optional volatility factor; defaults to the symmetric PSD square root
    /// of the covariance.
    pub sigma: Option<MatrixField>,
    pub jumps: JumpSpec,
    pub growth: GrowthParams,
}

impl JumpDiffusionModel {
    pub fn new(dim: usize, drift: VectorField, covariance: MatrixField) -> Self {
        Self {
            dim,
            drift,
            covariance,
            covariance_jacobians: None,
            sigma: None,
            jumps: JumpSpec::none(),
            growth: GrowthParams::default(),
        }
    }

    pub fn with_jacobians(mut self, jac: ColumnJacobianField) -> Self {
        self.covariance_jacobians = Some(jac);
        self
    }

    pub fn with_sigma(mut self, sigma: MatrixField) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_jumps(mut self, jumps: JumpSpec) -> Self {
        self.jumps = jumps;
        self
    }

    pub fn with_growth(mut self, growth: GrowthParams) -> Self {
        self.growth = growth;
        self
    }

    pub fn drift_at(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    pub fn covariance_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.covariance)(x)
    }

    /// Volatility factor at `x`: the user-specified sigma, else the
    /// symmetric square root of the covariance with negative eigenvalues
    /// clamped to zero.
    pub fn sigma_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Some(s) = &self.sigma {
            return Ok(s(x));
        }
        let c = self.covariance_at(x);
        let eig = sym_eigen_sorted(&c)?;
        let vals = DVector::from_iterator(
            self.dim,
            eig.values.iter().map(|&l| l.max(0.0).sqrt()),
        );
        Ok(&eig.vectors * DMatrix::from_diagonal(&vals) * eig.vectors.transpose())
    }

    pub fn jump_amplitude(&self, x: &DVector<f64>, mark: &DVector<f64>) -> DVector<f64> {
        (self.jumps.amplitude)(x, mark)
    }

    /// `sum_k w_k rho(x, z_k)`, the mean jump compensator direction.
    pub fn jump_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim);
        for a in &self.jumps.atoms {
            acc += self.jump_amplitude(x, &a.mark) * a.weight;
        }
        acc
    }
}

/// Moore-Penrose pseudoinverse of a symmetric matrix with its numerical rank
/// data. Singular values below `cutoff` are treated as zero.
#[derive(Clone, Debug)]
pub struct PseudoinverseResult {
    pub pinv: DMatrix<f64>,
    pub rank: usize,
    /// |eigenvalues|, descending.
    pub singular_values: Vec<f64>,
    pub cutoff: f64,
}

pub fn default_rank_tol(dim: usize) -> f64 {
    dim as f64 * f64::EPSILON
}

/// Eigendecomposition-based pseudoinverse of a (defensively symmetrized)
/// symmetric matrix. The cutoff is `rank_tol * max(sigma_max, 1)`.
pub fn pseudoinverse(m: &DMatrix<f64>, rank_tol: f64) -> Result<PseudoinverseResult> {
    let eig = sym_eigen_sorted(m)?;
    let mut singular: Vec<f64> = eig.values.iter().map(|l| l.abs()).collect();
    singular.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = singular.first().copied().unwrap_or(0.0);
    let cutoff = rank_tol * sigma_max.max(1.0);
    let mut rank = 0usize;
    let inv_vals = DVector::from_iterator(
        m.nrows(),
        eig.values.iter().map(|&l| {
            if l.abs() > cutoff {
                rank += 1;
                1.0 / l
            } else {
                0.0
            }
        }),
    );
    let pinv = &eig.vectors * DMatrix::from_diagonal(&inv_vals) * eig.vectors.transpose();
    Ok(PseudoinverseResult {
        pinv,
        rank,
        singular_values: singular,
        cutoff,
    })
}

/// The orthogonal projector `C C^+` onto the range of `C`.
pub fn range_projector(c: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    let p = pseudoinverse(c, rank_tol)?;
    Ok(c * p.pinv)
}

/// Jacobians of every column of the covariance at `x`: analytic when the
/// model provides them, central finite differences otherwise. Entry `(i, l)`
/// of the j-th matrix is the derivative of `C_{ij}` in direction `l`.
pub fn column_jacobians(model: &JumpDiffusionModel, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    if let Some(jac) = &model.covariance_jacobians {
        return Ok(jac(x));
    }
    let d = model.dim;
    let h = fd_step(x.norm());
    let mut jacs = vec![DMatrix::zeros(d, d); d];
    for l in 0..d {
        let mut xp = x.clone();
        xp[l] += h;
        let mut xm = x.clone();
        xm[l] -= h;
        let cp = model.covariance_at(&xp);
        let cm = model.covariance_at(&xm);
        if cp.iter().chain(cm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField);
        }
        let diff = (cp - cm) / (2.0 * h);
        for j in 0..d {
            for i in 0..d {
                jacs[j][(i, l)] = diff[(i, j)];
            }
        }
    }
    Ok(jacs)
}

/// The effective inward drift of the first-order characterization:
/// `b(x) - sum_k w_k rho(x, z_k) - 1/2 sum_j DC^j(x) (C C^+)^j(x)`.
///
/// Depends only on `(b, C, rho, F)`; the volatility factor is never read, so
/// the value is invariant under the choice of square root of `C`.
pub fn compensated_drift(
    model: &JumpDiffusionModel,
    x: &DVector<f64>,
    rank_tol: f64,
) -> Result<DVector<f64>> {
    let mut out = model.drift_at(x);
    out -= model.jump_mean(x);
    let c = model.covariance_at(x);
    let projector = range_projector(&c, rank_tol)?;
    let jacs = column_jacobians(model, x)?;
    for (j, jac) in jacs.iter().enumerate() {
        out -= jac * projector.column(j) * 0.5;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteField);
    }
    Ok(out)
}

/// Report of the sample-based assumption probes. Report-only: nothing here
/// is an error; failed probes flag models whose declared constants do not
/// cover the sampled behavior.
#[derive(Clone, Debug)]
pub struct AssumptionReport {
    /// Worst ratio of `||b||^2 + ||C|| + int ||rho||^2 F` to `L (1+||x||^2)`.
    pub quadratic_growth_worst_ratio: f64,
    pub quadratic_growth_pass: bool,
    /// Worst ratio of the large-jump log-moment to `L (1+||x||^q)`.
    pub log_moment_worst_ratio: f64,
    pub log_moment_pass: bool,
    /// Largest symmetry defect `||C - C^T|| / (1 + ||C||)` over the sample.
    pub symmetry_defect: f64,
    /// Most negative eigenvalue of `C` over the sample (0 when PSD).
    pub psd_defect: f64,
    pub psd_pass: bool,
    /// Heuristic continuity defect: max coefficient change between paired
    /// evaluations at distance `1e-6 (1 + ||x||)`, relative to scale.
    pub continuity_defect: f64,
    pub points_probed: usize,
    pub pass: bool,
}

/// Evaluate the growth and regularity probes on a set of points (which
/// should lie in, or near, the domain of interest).
pub fn probe_assumptions(model: &JumpDiffusionModel, points: &[DVector<f64>]) -> AssumptionReport {
    let gp = model.growth;
    let mut worst_quad: f64 = 0.0;
    let mut worst_log: f64 = 0.0;
    let mut sym_defect: f64 = 0.0;
    let mut psd_defect: f64 = 0.0;
    let mut cont_defect: f64 = 0.0;
    for x in points {
        let b = model.drift_at(x);
        let c = model.covariance_at(x);
        let spectral_norm = sym_eigen_sorted(&c)
            .map(|e| e.values.iter().fold(0.0f64, |m, &l| m.max(l.abs())))
            .unwrap_or(f64::INFINITY);
        let mut jump_sq = 0.0;
        let mut log_moment = 0.0;
        for a in &model.jumps.atoms {
            let rho = model.jump_amplitude(x, &a.mark);
            let n = rho.norm();
            jump_sq += a.weight * n * n;
            if n > 1.0 {
                log_moment += a.weight * n.powf(gp.q) * n.ln();
            }
        }
        let quad = (b.norm_squared() + spectral_norm + jump_sq)
            / (gp.big_l * (1.0 + x.norm_squared()));
        worst_quad = worst_quad.max(quad);
        let logr = log_moment / (gp.big_l * (1.0 + x.norm().powf(gp.q)));
        worst_log = worst_log.max(logr);

        sym_defect = sym_defect.max((&c - c.transpose()).norm() / (1.0 + c.norm()));
        if let Ok(eig) = sym_eigen_sorted(&c) {
            let min = eig.values.last().copied().unwrap_or(0.0);
            psd_defect = psd_defect.min(min);
        }

        // paired close evaluation for the continuity heuristic, covering
        // the drift, the covariance, and the jump second moment
        let delta = 1e-6 * (1.0 + x.norm());
        let mut x2 = x.clone();
        x2[0] += delta;
        let db = (model.drift_at(&x2) - &b).norm();
        let dc = (model.covariance_at(&x2) - &c).norm();
        let m2 = |p: &DVector<f64>| -> f64 {
            model
                .jumps
                .atoms
                .iter()
                .map(|a| a.weight * model.jump_amplitude(p, &a.mark).norm_squared())
                .sum()
        };
        let dj = (m2(&x2) - m2(x)).abs();
        cont_defect =
            cont_defect.max((db + dc + dj) / (delta.sqrt() * (1.0 + b.norm() + c.norm())));
    }
    let quad_pass = worst_quad <= 1.0;
    let log_pass = worst_log <= 1.0;
    let psd_pass = psd_defect >= -1e-10;
    AssumptionReport {
        quadratic_growth_worst_ratio: worst_quad,
        quadratic_growth_pass: quad_pass,
        log_moment_worst_ratio: worst_log,
        log_moment_pass: log_pass,
        symmetry_defect: sym_defect,
        psd_defect: psd_defect.min(0.0).abs(),
        psd_pass,
        continuity_defect: cont_defect,
        points_probed: points.len(),
        pass: quad_pass && log_pass && psd_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cir_model(kappa: f64, theta: f64, sigma: f64) -> JumpDiffusionModel {
        let s2 = sigma * sigma;
        JumpDiffusionModel::new(
            1,
            Arc::new(move |x: &DVector<f64>| DVector::from_vec(vec![kappa * (theta - x[0])])),
            Arc::new(move |x: &DVector<f64>| DMatrix::from_vec(1, 1, vec![s2 * x[0]])),
        )
    }

    #[test]
    fn pinv_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let r = pseudoinverse(&m, default_rank_tol(2)).unwrap();
        assert_eq!(r.rank, 1);
        assert_relative_eq!(r.pinv[(0, 0)], 0.5);
        assert_relative_eq!(r.pinv[(1, 1)], 0.0);
    }

    #[test]
    fn pinv_identity() {
        let m = DMatrix::<f64>::identity(4, 4);
        let r = pseudoinverse(&m, default_rank_tol(4)).unwrap();
        assert_eq!(r.rank, 4);
        assert_relative_eq!(r.pinv, m, epsilon = 1e-14);
    }

    #[test]
    fn pinv_rank_one_satisfies_penrose_axioms() {
        // v v^T with v = (1, 2): pinv = v v^T / 25
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let m = &v * v.transpose();
        let r = pseudoinverse(&m, default_rank_tol(2)).unwrap();
        assert_eq!(r.rank, 1);
        assert_relative_eq!(r.pinv, &m / 25.0, epsilon = 1e-12);
        let tol = 1e-10 * m.norm();
        assert!(((&m * &r.pinv * &m) - &m).norm() < tol);
        assert!(((&r.pinv * &m * &r.pinv) - &r.pinv).norm() < tol);
        let mp = &m * &r.pinv;
        let pm = &r.pinv * &m;
        assert!((&mp - mp.transpose()).norm() < tol);
        assert!((&pm - pm.transpose()).norm() < tol);
    }

    #[test]
    fn range_projector_is_orthogonal_projection() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 1.0, 0.7, -1.0]);
        let c = &a * a.transpose();
        let p = range_projector(&c, default_rank_tol(3)).unwrap();
        assert!(((&p * &p) - &p).norm() < 1e-10);
        assert!((&p - p.transpose()).norm() < 1e-10);
    }

    #[test]
    fn jacobians_constant_field_vanish() {
        let m = JumpDiffusionModel::new(
            2,
            Arc::new(|_x: &DVector<f64>| DVector::zeros(2)),
            Arc::new(|_x: &DVector<f64>| DMatrix::identity(2, 2)),
        );
        let jacs = column_jacobians(&m, &DVector::from_vec(vec![0.3, -1.0])).unwrap();
        for j in jacs {
            assert!(j.norm() < 1e-9);
        }
    }

    #[test]
    fn jacobians_linear_field() {
        let m = cir_model(1.0, 2.0, 1.5);
        let jacs = column_jacobians(&m, &DVector::from_vec(vec![0.7])).unwrap();
        assert_relative_eq!(jacs[0][(0, 0)], 2.25, max_relative = 1e-8);
    }

    #[test]
    fn jacobians_match_hand_derivative() {
        // C(x) = diag(x1^2, x2) at (1,1): DC^1 = [[2,0],[0,0]], DC^2 = [[0,0],[0,1]]
        let m = JumpDiffusionModel::new(
            2,
            Arc::new(|_x: &DVector<f64>| DVector::zeros(2)),
            Arc::new(|x: &DVector<f64>| {
                DMatrix::from_diagonal(&DVector::from_vec(vec![x[0] * x[0], x[1]]))
            }),
        );
        let jacs = column_jacobians(&m, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let dc1 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let dc2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(jacs[0], dc1, epsilon = 1e-7);
        assert_relative_eq!(jacs[1], dc2, epsilon = 1e-7);
    }

    #[test]
    fn compensated_drift_brownian_is_zero() {
        let m = JumpDiffusionModel::new(
            3,
            Arc::new(|_x: &DVector<f64>| DVector::zeros(3)),
            Arc::new(|_x: &DVector<f64>| DMatrix::identity(3, 3)),
        );
        let v = compensated_drift(&m, &DVector::from_vec(vec![1.0, 2.0, 3.0]), default_rank_tol(3))
            .unwrap();
        assert!(v.norm() < 1e-9);
    }

    #[test]
    fn compensated_drift_cir_at_origin() {
        // C(0) = 0 forces C^+(0) = 0, so the correction vanishes
        let m = cir_model(1.0, 2.0, 1.0);
        let v = compensated_drift(&m, &DVector::zeros(1), default_rank_tol(1)).unwrap();
        assert_relative_eq!(v[0], 2.0, max_relative = 1e-9);
    }

    #[test]
    fn compensated_drift_cir_interior() {
        // kappa=1, theta=2, sigma=1 at x=1: DC^1 = 1 and (CC^+)(1) = 1
        let m = cir_model(1.0, 2.0, 1.0);
        let v = compensated_drift(&m, &DVector::from_vec(vec![1.0]), default_rank_tol(1)).unwrap();
        assert_relative_eq!(v[0], 0.5, max_relative = 1e-7);
    }

    #[test]
    fn compensated_drift_never_reads_sigma() {
        let m = cir_model(1.0, 2.0, 1.0).with_sigma(Arc::new(|_x: &DVector<f64>| {
            panic!("sigma must not be evaluated by the compensated drift")
        }));
        let v = compensated_drift(&m, &DVector::from_vec(vec![1.0]), default_rank_tol(1)).unwrap();
        assert_relative_eq!(v[0], 0.5, max_relative = 1e-7);
    }

    #[test]
    fn probe_passes_for_cir_on_grid() {
        let mut m = cir_model(1.0, 1.0, 1.0);
        m.growth.big_l = 10.0;
        let points: Vec<DVector<f64>> = (0..=100)
            .map(|i| DVector::from_vec(vec![i as f64 * 0.1]))
            .collect();
        let report = probe_assumptions(&m, &points);
        assert!(report.pass);
        assert!(report.quadratic_growth_worst_ratio < 1.0);
    }

    #[test]
    fn probe_flags_superquadratic_drift() {
        let m = JumpDiffusionModel::new(
            1,
            Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0]])),
            Arc::new(|_x: &DVector<f64>| DMatrix::zeros(1, 1)),
        )
        .with_growth(GrowthParams {
            big_l: 1.0,
            ..GrowthParams::default()
        });
        let points: Vec<DVector<f64>> = (0..40)
            .map(|i| DVector::from_vec(vec![i as f64]))
            .collect();
        let report = probe_assumptions(&m, &points);
        assert!(!report.quadratic_growth_pass);
        assert!(report.quadratic_growth_worst_ratio > 100.0);
    }

    #[test]
    fn probe_log_moment_vacuous_without_jumps() {
        let m = cir_model(1.0, 1.0, 1.0);
        let report = probe_assumptions(&m, &[DVector::zeros(1)]);
        assert!(report.log_moment_pass);
        assert_eq!(report.log_moment_worst_ratio, 0.0);
    }

    #[test]
    fn pinv_continuity_at_fixed_rank() {
        // perturb the low-rank factor so the rank stays stable
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 0.4, -1.0, 0.3, 0.8]);
        let c = &a * a.transpose();
        let base = pseudoinverse(&c, default_rank_tol(3)).unwrap();
        let delta = 1e-9;
        let e = DMatrix::from_row_slice(3, 2, &[0.3, -0.5, 0.9, 0.1, -0.4, 0.7]);
        let ap = &a + &e * delta;
        let perturbed = &ap * ap.transpose();
        let shifted = pseudoinverse(&perturbed, default_rank_tol(3)).unwrap();
        assert_eq!(shifted.rank, base.rank);
        let diff = (&shifted.pinv - &base.pinv).norm() / base.pinv.norm();
        assert!(diff < 1e-6, "pseudoinverse moved too much: {diff}");
    }

    #[test]
    fn pinv_reports_decomposition_failure() {
        let m = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(
            pseudoinverse(&m, default_rank_tol(2)),
            Err(Error::EigenFailure(_))
        ));
    }

    #[test]
    fn truncated_density_atoms_are_flagged() {
        let spec =
            JumpSpec::from_density_truncated(|z| (-z.abs()).exp() / z.abs().powf(1.5), 0.1, 5.0, 50, Some(0.2))
                .unwrap();
        assert!(spec.approximate);
        assert!(spec.total_mass() > 0.0);
        assert!(spec.atoms.iter().all(|a| a.weight > 0.0));
    }
}
