//! Characteristics-triplet formulation `(b_tilde, c_tilde, K)` relative to a
//! truncation function h, with exact conversions to and from the SDE
//! coefficient form. The drift shift `b = b_tilde + sum w (z - h(z))` is what
//! ties the two formulations together; verdicts are independent of the
//! choice of h because the shift cancels in the compensated drift.

use nalgebra::DVector;
use std::sync::Arc;

use crate::checker::{check_domain, CheckerConfig, InvarianceReport};
use crate::domain::ClosedDomain;
use crate::error::{Error, Result};
use crate::field::{ColumnJacobianField, MatrixField, ScalarField, VectorField};
use crate::model::{GrowthParams, JumpAtom, JumpDiffusionModel, JumpSpec};

/// Bounded continuous truncation equal to the identity near the origin.
#[derive(Clone)]
pub struct TruncationFunction {
    pub h: VectorField,
    /// `h(z) = z` for `||z|| <= identity_radius`.
    pub identity_radius: f64,
    /// `sup ||h||`.
    pub bound: f64,
}

impl TruncationFunction {
    /// Radial ramp: identity on `||z|| <= r0`, zero beyond `r1`, linear
    /// attenuation in between.
    pub fn ramp(r0: f64, r1: f64) -> Result<Self> {
        if !(r0 > 0.0 && r1 > r0) {
            return Err(Error::InvalidParameter(
                "truncation needs 0 < identity radius < support radius".into(),
            ));
        }
        let h: VectorField = Arc::new(move |z: &DVector<f64>| {
            let n = z.norm();
            let factor = ((r1 - n) / (r1 - r0)).clamp(0.0, 1.0);
            z * factor
        });
        // max of n * (r1 - n)/(r1 - r0) over [r0, r1], against the plateau r0
        let crit = (r1 / 2.0).clamp(r0, r1);
        let bound = r0.max(crit * (r1 - crit) / (r1 - r0));
        Ok(Self {
            h,
            identity_radius: r0,
            bound,
        })
    }

    /// The default choice `h(z) = z max(0, min(1, 2 - ||z||))`.
    pub fn default_ramp() -> Self {
        Self::ramp(1.0, 2.0).expect("valid radii")
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.h)(z)
    }
}

/// Kernel atom weight; only constant weights are representable with a
/// state-independent jump measure.
#[derive(Clone)]
pub enum KernelWeight {
    Constant(f64),
    StateDependent(ScalarField),
}

#[derive(Clone)]
pub enum KernelNode {
    Constant(DVector<f64>),
    StateDependent(VectorField),
}

#[derive(Clone)]
pub struct KernelAtom {
    pub node: KernelNode,
    pub weight: KernelWeight,
}

impl KernelAtom {
    pub fn constant(node: DVector<f64>, weight: f64) -> Self {
        Self {
            node: KernelNode::Constant(node),
            weight: KernelWeight::Constant(weight),
        }
    }

    pub fn node_at(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.node {
            KernelNode::Constant(z) => z.clone(),
            KernelNode::StateDependent(f) => f(x),
        }
    }
}

/// Differential characteristics of a homogeneous diffusion with jumps.
#[derive(Clone)]
pub struct SemimartingaleTriplet {
    pub dim: usize,
    pub drift_tilde: VectorField,
    pub cov_tilde: MatrixField,
    pub cov_jacobians: Option<ColumnJacobianField>,
    pub kernel: Vec<KernelAtom>,
    pub truncation: TruncationFunction,
    pub growth: GrowthParams,
}

impl SemimartingaleTriplet {
    pub fn drift_tilde_at(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift_tilde)(x)
    }
}

/// Realize the triplet as an SDE coefficient record. The atomic kernel is
/// represented by indexing: the mark space is the atom index and the
/// amplitude returns the (possibly state-dependent) node. State-dependent
/// weights are rejected: the jump measure of the SDE form cannot depend on
/// the state.
pub fn triplet_to_model(trip: &SemimartingaleTriplet) -> Result<JumpDiffusionModel> {
    let mut weights = Vec::with_capacity(trip.kernel.len());
    for atom in &trip.kernel {
        match &atom.weight {
            KernelWeight::Constant(w) => {
                if *w <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "kernel weights must be strictly positive".into(),
                    ));
                }
                weights.push(*w);
            }
            KernelWeight::StateDependent(_) => return Err(Error::StateDependentWeights),
        }
    }

    let kernel = trip.kernel.clone();
    let truncation = trip.truncation.clone();
    let b_tilde = trip.drift_tilde.clone();
    let w_for_drift = weights.clone();
    let kernel_for_drift = kernel.clone();
    let drift: VectorField = Arc::new(move |x: &DVector<f64>| {
        let mut b = b_tilde(x);
        for (atom, &w) in kernel_for_drift.iter().zip(&w_for_drift) {
            let z = atom.node_at(x);
            b += (&z - truncation.apply(&z)) * w;
        }
        b
    });

    let kernel_for_amp = kernel;
    let amplitude = Arc::new(move |x: &DVector<f64>, mark: &DVector<f64>| {
        let k = mark[0].round() as usize;
        kernel_for_amp[k].node_at(x)
    });
    let atoms: Vec<JumpAtom> = weights
        .iter()
        .enumerate()
        .map(|(k, &w)| JumpAtom {
            mark: DVector::from_vec(vec![k as f64]),
            weight: w,
        })
        .collect();
    let jumps = JumpSpec::from_atoms(atoms)?.with_amplitude(amplitude);

    let mut model = JumpDiffusionModel::new(trip.dim, drift, trip.cov_tilde.clone())
        .with_jumps(jumps)
        .with_growth(GrowthParams {
            q: trip.growth.q_tilde,
            big_l: trip.growth.big_l_tilde,
            ..trip.growth
        });
    if let Some(jac) = &trip.cov_jacobians {
        model = model.with_jacobians(jac.clone());
    }
    Ok(model)
}

/// Extract the characteristics of an SDE coefficient record relative to h:
/// `c_tilde = C`, kernel atoms `(rho(x, z_k), w_k)`, and
/// `b_tilde = b - sum_k w_k (rho(x, z_k) - h(rho(x, z_k)))`.
pub fn model_to_triplet(
    model: &JumpDiffusionModel,
    truncation: TruncationFunction,
) -> SemimartingaleTriplet {
    let kernel: Vec<KernelAtom> = model
        .jumps
        .atoms
        .iter()
        .map(|a| {
            let amp = model.jumps.amplitude.clone();
            let mark = a.mark.clone();
            KernelAtom {
                node: KernelNode::StateDependent(Arc::new(move |x: &DVector<f64>| {
                    amp(x, &mark)
                })),
                weight: KernelWeight::Constant(a.weight),
            }
        })
        .collect();

    let b = model.drift.clone();
    let trunc = truncation.clone();
    let kernel_for_drift = kernel.clone();
    let weights: Vec<f64> = model.jumps.atoms.iter().map(|a| a.weight).collect();
    let drift_tilde: VectorField = Arc::new(move |x: &DVector<f64>| {
        let mut bt = b(x);
        for (atom, &w) in kernel_for_drift.iter().zip(&weights) {
            let z = atom.node_at(x);
            bt -= (&z - trunc.apply(&z)) * w;
        }
        bt
    });

    SemimartingaleTriplet {
        dim: model.dim,
        drift_tilde,
        cov_tilde: model.covariance.clone(),
        cov_jacobians: model.covariance_jacobians.clone(),
        kernel,
        truncation,
        growth: GrowthParams {
            q_tilde: model.growth.q,
            big_l_tilde: model.growth.big_l,
            ..model.growth
        },
    }
}

/// Invariance check in the triplet formulation: convert and run the domain
/// checker. The support condition on atoms `x + z_k(x) in D` and the drift
/// condition `b - sum w z - correction` coincide with the converted model's
/// conditions atom for atom.
pub fn check_triplet(
    trip: &SemimartingaleTriplet,
    domain: &ClosedDomain,
    n_points: usize,
    cfg: &CheckerConfig,
) -> Result<InvarianceReport> {
    let model = triplet_to_model(trip)?;
    check_domain(&model, domain, n_points, cfg)
}
