//! Per-point evaluation of the four first-order invariance conditions and
//! the domain-level aggregation over a boundary sample.
//!
//! At a boundary point x with outward unit generator u the conditions are:
//! (a) every jump lands in the domain, (b) the jump size is u-integrable,
//! (c) the covariance kills u, and (d) the compensated drift points inward.
//! Interior points have a trivial cone, so only (a) binds there.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::domain::ClosedDomain;
use crate::error::{Error, Result};
use crate::model::{compensated_drift, default_rank_tol, JumpDiffusionModel};

#[derive(Clone, Debug)]
pub struct CheckerConfig {
    pub n_points: usize,
    pub seed: u64,
    /// Base tolerances; each is scaled by the size of the local data.
    pub tol_support: f64,
    pub tol_kernel: f64,
    pub tol_drift: f64,
    /// Base tolerance for constraint-activity detection.
    pub active_tol: f64,
    /// Numerical-rank tolerance for the pseudoinverse; defaults to d * eps.
    pub rank_tol: Option<f64>,
    pub sampling_radius: f64,
    pub interior_points: usize,
    pub worst_k: usize,
    /// Echoed into the report: set when the model's fields are affine, in
    /// which case vertex plus facet checks already decide linear conditions.
    pub affine_fields: Option<bool>,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        Self {
            n_points: 64,
            seed: 0,
            tol_support: 1e-8,
            tol_kernel: 1e-8,
            tol_drift: 1e-8,
            active_tol: 1e-8,
            rank_tol: None,
            sampling_radius: 10.0,
            interior_points: 16,
            worst_k: 5,
            affine_fields: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SupportCheck {
    /// Worst distance of a jump destination to the domain over all atoms.
    pub worst_dist: f64,
    pub threshold: f64,
    pub pass: bool,
    pub approximate: bool,
}

#[derive(Clone, Debug)]
pub struct IntegrabilityCheck {
    /// `sum_k w_k |<u, rho(x, z_k)>|` per generator.
    pub values: Vec<f64>,
    pub tail_bound: Option<f64>,
    pub approximate: bool,
    /// Finite sums always pass in exact mode; in truncated mode a declared
    /// tail bound is required to pass.
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct KernelCheck {
    /// `||C(x) u||` per generator.
    pub residuals: Vec<f64>,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct DriftCheck {
    /// `<u, compensated drift>` per generator; nonpositive means inward.
    pub margins: Vec<f64>,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct PointVerdict {
    pub x: DVector<f64>,
    pub generators: Vec<DVector<f64>>,
    pub cone_is_polyhedral: bool,
    pub support: SupportCheck,
    pub integrability: IntegrabilityCheck,
    pub kernel: KernelCheck,
    pub drift: DriftCheck,
    pub pass: bool,
}

impl PointVerdict {
    /// Worst failing condition and its severity, when any.
    pub fn worst_violation(&self) -> Option<(&'static str, f64)> {
        let mut worst: Option<(&'static str, f64)> = None;
        let mut push = |name: &'static str, sev: f64| {
            if worst.is_none_or(|(_, s)| sev > s) {
                worst = Some((name, sev));
            }
        };
        if !self.support.pass {
            push("support", self.support.worst_dist - self.support.threshold);
        }
        if !self.kernel.pass {
            let m = self.kernel.residuals.iter().cloned().fold(0.0, f64::max);
            push("kernel", m - self.kernel.threshold);
        }
        if !self.drift.pass {
            let m = self
                .drift
                .margins
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            push("drift", m - self.drift.threshold);
        }
        if !self.integrability.pass {
            push("integrability", 0.0);
        }
        worst
    }

    fn has_hard_failure(&self) -> bool {
        (!self.support.pass && !self.support.approximate)
            || !self.kernel.pass
            || !self.drift.pass
            || (!self.integrability.pass && !self.integrability.approximate)
    }

    fn has_approximate_failure(&self) -> bool {
        (!self.support.pass && self.support.approximate)
            || (!self.integrability.pass && self.integrability.approximate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregate {
    Invariant,
    NotInvariant,
    Inconclusive,
}

impl Aggregate {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregate::Invariant => "invariant",
            Aggregate::NotInvariant => "not_invariant",
            Aggregate::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Offender {
    pub x: DVector<f64>,
    pub condition: &'static str,
    pub severity: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Coverage {
    pub vertices: usize,
    pub boundary: usize,
    pub interior: usize,
    /// Points per active-generator count (0 = interior, 1 = facet, ...).
    pub strata: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug)]
pub struct InvarianceReport {
    pub verdicts: Vec<PointVerdict>,
    pub aggregate: Aggregate,
    pub worst_offenders: Vec<Offender>,
    pub coverage: Coverage,
    pub config: CheckerConfig,
    pub approximate_jumps: bool,
    /// Cones are tested through their generators, which decides the cone
    /// exactly for polyhedral kinds and approximately for sampled cones.
    pub all_cones_polyhedral: bool,
}

/// Evaluate all four conditions at one point of the domain.
pub fn check_point(
    model: &JumpDiffusionModel,
    domain: &ClosedDomain,
    x: &DVector<f64>,
    cfg: &CheckerConfig,
) -> Result<PointVerdict> {
    if model.dim != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: model.dim,
        });
    }
    let rank_tol = cfg.rank_tol.unwrap_or_else(|| default_rank_tol(model.dim));
    let cone = domain.normal_cone_generators(x, cfg.active_tol)?;
    let generators = cone.generators;
    let scale_x = 1.0 + x.norm();

    // (a) every jump from x lands in the domain
    let approximate = model.jumps.approximate;
    let tol_support = cfg.tol_support * scale_x;
    let mut worst_dist: f64 = 0.0;
    for atom in &model.jumps.atoms {
        let dest = x + model.jump_amplitude(x, &atom.mark);
        worst_dist = worst_dist.max(domain.dist(&dest)?);
    }
    let support = SupportCheck {
        worst_dist,
        threshold: tol_support,
        pass: worst_dist <= tol_support,
        approximate,
    };

    // (b) jump-size integrability against each generator
    let integ_values: Vec<f64> = generators
        .iter()
        .map(|u| {
            model
                .jumps
                .atoms
                .iter()
                .map(|a| a.weight * u.dot(&model.jump_amplitude(x, &a.mark)).abs())
                .sum()
        })
        .collect();
    let integ_pass = !approximate || model.jumps.tail_bound.is_some() || generators.is_empty();
    let integrability = IntegrabilityCheck {
        values: integ_values,
        tail_bound: model.jumps.tail_bound,
        approximate,
        pass: integ_pass,
    };

    // (c) the covariance must kill every outward generator
    let c = model.covariance_at(x);
    let tol_kernel = cfg.tol_kernel * (1.0 + c.norm());
    let kernel_residuals: Vec<f64> = generators.iter().map(|u| (&c * u).norm()).collect();
    let kernel_pass = kernel_residuals.iter().all(|&r| r <= tol_kernel);
    let kernel = KernelCheck {
        residuals: kernel_residuals,
        threshold: tol_kernel,
        pass: kernel_pass,
    };

    // (d) the compensated drift must point inward
    let b = model.drift_at(x);
    let tol_drift = cfg.tol_drift * (1.0 + b.norm());
    let (margins, drift_pass) = if generators.is_empty() {
        (vec![], true)
    } else {
        let cd = compensated_drift(model, x, rank_tol)?;
        let margins: Vec<f64> = generators.iter().map(|u| u.dot(&cd)).collect();
        let pass = margins.iter().all(|&m| m <= tol_drift);
        (margins, pass)
    };
    let drift = DriftCheck {
        margins,
        threshold: tol_drift,
        pass: drift_pass,
    };

    let pass = support.pass && integrability.pass && kernel.pass && drift.pass;
    Ok(PointVerdict {
        x: x.clone(),
        generators,
        cone_is_polyhedral: cone.is_polyhedral,
        support,
        integrability,
        kernel,
        drift,
        pass,
    })
}

/// Run the point check over a boundary sample (vertices always included),
/// plus an interior sample where only the support condition binds. Point
/// evaluation is parallel; assembly is an ordered reduction so the result is
/// independent of the worker count.
pub fn check_domain(
    model: &JumpDiffusionModel,
    domain: &ClosedDomain,
    n_points: usize,
    cfg: &CheckerConfig,
) -> Result<InvarianceReport> {
    if n_points == 0 {
        return Err(Error::InvalidParameter("n_points must be >= 1".into()));
    }
    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut n_vertices = 0usize;
    let mut n_boundary = 0usize;

    if !domain.is_boundaryless() {
        for v in domain.vertices() {
            if push_new(&mut points, v) {
                n_vertices += 1;
            }
        }
        for p in domain.sample_boundary_in(n_points, cfg.seed, cfg.sampling_radius)? {
            if push_new(&mut points, p) {
                n_boundary += 1;
            }
        }
    }

    // interior sample: the support condition binds at every point of D
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x5bd1_e995);
    let anchor = domain.project(&DVector::zeros(domain.dim()))?;
    let mut n_interior = 0usize;
    let mut attempts = 0;
    while n_interior < cfg.interior_points && attempts < 50 * cfg.interior_points.max(1) {
        attempts += 1;
        let y = DVector::from_fn(domain.dim(), |i, _| {
            anchor[i] + rng.random_range(-cfg.sampling_radius..cfg.sampling_radius)
        });
        let p = domain.project(&y)?;
        if push_new(&mut points, p) {
            n_interior += 1;
        }
    }

    let verdicts: Result<Vec<PointVerdict>> = points
        .par_iter()
        .map(|x| check_point(model, domain, x, cfg))
        .collect();
    let verdicts = verdicts?;

    let mut strata: BTreeMap<usize, usize> = BTreeMap::new();
    for v in &verdicts {
        *strata.entry(v.generators.len()).or_insert(0) += 1;
    }

    let hard = verdicts.iter().any(|v| v.has_hard_failure());
    let approx = verdicts.iter().any(|v| v.has_approximate_failure());
    let aggregate = if hard {
        Aggregate::NotInvariant
    } else if approx {
        Aggregate::Inconclusive
    } else {
        Aggregate::Invariant
    };

    let mut offenders: Vec<Offender> = verdicts
        .iter()
        .filter_map(|v| {
            v.worst_violation().map(|(condition, severity)| Offender {
                x: v.x.clone(),
                condition,
                severity,
            })
        })
        .collect();
    offenders.sort_by(|a, b| {
        b.severity
            .partial_cmp(&a.severity)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    offenders.truncate(cfg.worst_k);

    let all_cones_polyhedral = verdicts.iter().all(|v| v.cone_is_polyhedral);
    Ok(InvarianceReport {
        verdicts,
        aggregate,
        worst_offenders: offenders,
        coverage: Coverage {
            vertices: n_vertices,
            boundary: n_boundary,
            interior: n_interior,
            strata,
        },
        config: cfg.clone(),
        approximate_jumps: model.jumps.approximate,
        all_cones_polyhedral,
    })
}

fn push_new(points: &mut Vec<DVector<f64>>, p: DVector<f64>) -> bool {
    let tol = 1e-9 * (1.0 + p.norm());
    if points.iter().any(|q| (q - &p).norm() <= tol) {
        false
    } else {
        points.push(p);
        true
    }
}
