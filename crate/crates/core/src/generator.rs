//! Evaluation of the infinitesimal generator
//! `L phi = Dphi b + 1/2 Tr(D^2 phi C) + sum_k w_k (phi(x + rho_k) - phi(x) - Dphi(x) . rho_k)`
//! on compactly supported test functions, and the positive-maximum-principle
//! probe built from quadratically capped bumps.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::sync::Arc;

use crate::domain::ClosedDomain;
use crate::error::{Error, Result};
use crate::field::{MatrixField, ScalarField, VectorField};
use crate::model::JumpDiffusionModel;

/// C^2 cutoff: 1 on [0, 1/2], 0 on [1, inf), quintic smoothstep between.
/// Returns (chi, chi', chi'').
pub fn cutoff_chi(s: f64) -> (f64, f64, f64) {
    if s <= 0.5 {
        (1.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        let t = 2.0 * s - 1.0;
        let p = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        let dp = 30.0 * t * t * (t - 1.0) * (t - 1.0);
        let ddp = t * (120.0 * t * t - 180.0 * t + 60.0);
        (1.0 - p, -2.0 * dp, -4.0 * ddp)
    }
}

/// A twice differentiable compactly supported test function with analytic
/// gradient and Hessian.
#[derive(Clone)]
pub struct TestFunction {
    pub value: ScalarField,
    pub gradient: VectorField,
    pub hessian: MatrixField,
    /// The value vanishes for `||y|| > support_radius`.
    pub support_radius: f64,
}

/// Radially truncate an inner function `f` by `chi(||y - center|| / width)`,
/// with derivatives assembled by the product rule.
fn truncate(
    f: ScalarField,
    grad_f: VectorField,
    hess_f: MatrixField,
    center: DVector<f64>,
    width: f64,
) -> TestFunction {
    let support_radius = center.norm() + width;
    let dim = center.len();
    let c1 = center.clone();
    let c2 = center.clone();
    let c3 = center;
    let (f1, f2, f3) = (f.clone(), f.clone(), f);
    let (g2, g3) = (grad_f.clone(), grad_f);
    let value: ScalarField = Arc::new(move |y: &DVector<f64>| {
        let s = (y - &c1).norm() / width;
        let (chi, _, _) = cutoff_chi(s);
        if chi == 0.0 {
            0.0
        } else {
            f1(y) * chi
        }
    });
    let gradient: VectorField = Arc::new(move |y: &DVector<f64>| {
        let d = y - &c2;
        let r = d.norm();
        let (chi, dchi, _) = cutoff_chi(r / width);
        if chi == 0.0 && dchi == 0.0 {
            return DVector::zeros(y.len());
        }
        let mut out = g2(y) * chi;
        if dchi != 0.0 && r > 0.0 {
            out += &d * (f2(y) * dchi / (width * r));
        }
        out
    });
    let hessian: MatrixField = Arc::new(move |y: &DVector<f64>| {
        let d = y - &c3;
        let r = d.norm();
        let (chi, dchi, ddchi) = cutoff_chi(r / width);
        if chi == 0.0 && dchi == 0.0 && ddchi == 0.0 {
            return DMatrix::zeros(y.len(), y.len());
        }
        let mut out = hess_f(y) * chi;
        if r > 0.0 && (dchi != 0.0 || ddchi != 0.0) {
            let g = g3(y);
            let fv = f3(y);
            let cross = (&g * d.transpose() + &d * g.transpose()) * (dchi / (width * r));
            out += cross;
            let outer = &d * d.transpose();
            out += &outer * (fv * ddchi / (width * width * r * r));
            out += (DMatrix::identity(y.len(), y.len()) - outer / (r * r))
                * (fv * dchi / (width * r));
        }
        out
    });
    let _ = dim;
    TestFunction {
        value,
        gradient,
        hessian,
        support_radius,
    }
}

impl TestFunction {
    /// `||y||^2` truncated outside `width` around `center`.
    pub fn truncated_squared_norm(center: DVector<f64>, width: f64) -> Self {
        truncate(
            Arc::new(|y: &DVector<f64>| y.norm_squared()),
            Arc::new(|y: &DVector<f64>| y * 2.0),
            Arc::new(|y: &DVector<f64>| DMatrix::identity(y.len(), y.len()) * 2.0),
            center,
            width,
        )
    }

    /// `a . y` truncated outside `width` around `center`.
    pub fn truncated_linear(a: DVector<f64>, center: DVector<f64>, width: f64) -> Self {
        let a1 = a.clone();
        let a2 = a.clone();
        let d = a.len();
        truncate(
            Arc::new(move |y: &DVector<f64>| a1.dot(y)),
            Arc::new(move |_y: &DVector<f64>| a2.clone()),
            Arc::new(move |_y: &DVector<f64>| DMatrix::zeros(d, d)),
            center,
            width,
        )
    }

    /// `cos(a . y)` truncated outside `width` around `center`.
    pub fn truncated_cosine(a: DVector<f64>, center: DVector<f64>, width: f64) -> Self {
        let a1 = a.clone();
        let a2 = a.clone();
        let a3 = a.clone();
        truncate(
            Arc::new(move |y: &DVector<f64>| a1.dot(y).cos()),
            Arc::new(move |y: &DVector<f64>| &a2 * (-a2.dot(y).sin())),
            Arc::new(move |y: &DVector<f64>| (&a3 * a3.transpose()) * (-a3.dot(y).cos())),
            center,
            width,
        )
    }

    /// Locally constant 1 near `center`, vanishing at `width`.
    pub fn truncated_constant(center: DVector<f64>, width: f64) -> Self {
        let d = center.len();
        truncate(
            Arc::new(|_y: &DVector<f64>| 1.0),
            Arc::new(move |_y: &DVector<f64>| DVector::zeros(d)),
            Arc::new(move |_y: &DVector<f64>| DMatrix::zeros(d, d)),
            center,
            width,
        )
    }

    /// The probe bump `(c + u . (y - x)) chi(||y - x|| / width)`; equals the
    /// linear part exactly inside radius `width / 2`, so the gradient at `x`
    /// is `u` and the Hessian at `x` vanishes.
    pub fn bump(base: DVector<f64>, u: DVector<f64>, c: f64, width: f64) -> Self {
        let u1 = u.clone();
        let u2 = u.clone();
        let b1 = base.clone();
        let d = base.len();
        truncate(
            Arc::new(move |y: &DVector<f64>| c + u1.dot(&(y - &b1))),
            Arc::new(move |_y: &DVector<f64>| u2.clone()),
            Arc::new(move |_y: &DVector<f64>| DMatrix::zeros(d, d)),
            base,
            width,
        )
    }

    pub fn linear_combination(a: f64, phi: &TestFunction, b: f64, psi: &TestFunction) -> Self {
        let (pv, qv) = (phi.value.clone(), psi.value.clone());
        let (pg, qg) = (phi.gradient.clone(), psi.gradient.clone());
        let (ph, qh) = (phi.hessian.clone(), psi.hessian.clone());
        TestFunction {
            value: Arc::new(move |y| a * pv(y) + b * qv(y)),
            gradient: Arc::new(move |y| pg(y) * a + qg(y) * b),
            hessian: Arc::new(move |y| ph(y) * a + qh(y) * b),
            support_radius: phi.support_radius.max(psi.support_radius),
        }
    }

    /// Spot-check the declared derivative consistency by finite differences
    /// at random probes; returns the worst relative defect.
    pub fn derivative_defect(&self, dim: usize, probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let h = 1e-5;
        for _ in 0..probes {
            let y = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
            let g = (self.gradient)(&y);
            let hess = (self.hessian)(&y);
            let scale = 1.0 + g.norm() + hess.norm();
            for l in 0..dim {
                let mut yp = y.clone();
                yp[l] += h;
                let mut ym = y.clone();
                ym[l] -= h;
                let fd_g = ((self.value)(&yp) - (self.value)(&ym)) / (2.0 * h);
                worst = worst.max((fd_g - g[l]).abs() / scale);
                let gp = (self.gradient)(&yp);
                let gm = (self.gradient)(&ym);
                for i in 0..dim {
                    let fd_h = (gp[i] - gm[i]) / (2.0 * h);
                    worst = worst.max((fd_h - hess[(i, l)]).abs() / scale);
                }
            }
        }
        worst
    }
}

/// `L phi (x)` for a finite-activity model.
pub fn apply_generator(model: &JumpDiffusionModel, phi: &TestFunction, x: &DVector<f64>) -> f64 {
    let grad = (phi.gradient)(x);
    let hess = (phi.hessian)(x);
    let c = model.covariance_at(x);
    let mut out = grad.dot(&model.drift_at(x)) + 0.5 * (&hess * &c).trace();
    if !model.jumps.is_empty() {
        let phix = (phi.value)(x);
        for a in &model.jumps.atoms {
            let rho = model.jump_amplitude(x, &a.mark);
            let dest = x + &rho;
            out += a.weight * ((phi.value)(&dest) - phix - grad.dot(&rho));
        }
    }
    out
}

/// Outcome of the maximum-principle probe at a boundary point.
#[derive(Clone, Debug)]
pub struct ProbeResult {
    pub value: f64,
    pub width: f64,
    /// True when the point was interior (trivial cone) and nothing was probed.
    pub skipped: bool,
}

const PROBE_SAMPLE: usize = 400;
const PROBE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Build a bump with maximum over D at `x`, gradient `u` there, and
/// nonnegative peak value, then evaluate the generator on it. The maximum
/// property is verified on a sample of domain points; on failure the width
/// is halved up to five times.
pub fn maximum_principle_probe(
    model: &JumpDiffusionModel,
    domain: &ClosedDomain,
    x: &DVector<f64>,
    u: &DVector<f64>,
    bump_width: f64,
) -> Result<ProbeResult> {
    if u.norm() < 1e-14 {
        return Ok(ProbeResult {
            value: 0.0,
            width: bump_width,
            skipped: true,
        });
    }
    let u = u / u.norm();
    let mut width = bump_width;
    for attempt in 0..=5 {
        let c = 0.5 * width;
        let phi = TestFunction::bump(x.clone(), u.clone(), c, width);
        if bump_attains_max(&phi, domain, x, c)? {
            let value = apply_generator(model, &phi, x);
            return Ok(ProbeResult {
                value,
                width,
                skipped: false,
            });
        }
        if attempt == 5 {
            break;
        }
        width *= 0.5;
    }
    Err(Error::BumpMaxNotAttained { attempts: 5 })
}

fn bump_attains_max(
    phi: &TestFunction,
    domain: &ClosedDomain,
    x: &DVector<f64>,
    peak: f64,
) -> Result<bool> {
    let mut rng = ChaCha12Rng::seed_from_u64(PROBE_SEED);
    let dim = x.len();
    let tol = 1e-10 * (1.0 + peak);
    // domain points near x, where the bump is nonzero
    for _ in 0..PROBE_SAMPLE {
        let dir = DVector::from_fn(dim, |_, _| {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            z
        });
        let r: f64 = rng.random_range(0.0..1.0);
        let norm = dir.norm();
        if norm < 1e-12 {
            continue;
        }
        let y = domain.project(&(x + dir * (r * phi.support_radius / norm)))?;
        if (phi.value)(&y) > peak + tol {
            return Ok(false);
        }
    }
    // boundary sample, where violations of the normal inequality concentrate
    if let Ok(pts) = domain.sample_boundary(64, PROBE_SEED ^ 1) {
        for y in pts {
            if (phi.value)(&y) > peak + tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
