//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Criterion 9 (byte-identical CLI reports across worker counts) lives in
//! the CLI crate's acceptance tests next to the binary it exercises.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use invariance_core::checker::{check_domain, Aggregate, CheckerConfig};
use invariance_core::domain::{ClosedDomain, DEFAULT_TOL_BASE};
use invariance_core::generator::{apply_generator, maximum_principle_probe, TestFunction};
use invariance_core::library;
use invariance_core::linalg::mean_and_std_error;
use invariance_core::model::{
    column_jacobians, default_rank_tol, pseudoinverse, JumpDiffusionModel,
};
use invariance_core::semimartingale::{
    check_triplet, model_to_triplet, triplet_to_model, TruncationFunction,
};
use invariance_core::simulator::{Scheme, SimConfig, Simulator};
use invariance_core::spectral::{spectral_factor, verify_drift_identity};

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn report_line(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id} ({name}): {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance criterion {id} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn acceptance_1_oracle_agreement_on_parameter_grids() {
    let start = Instant::now();
    let cfg = CheckerConfig {
        n_points: 32,
        interior_points: 8,
        seed: 2024,
        ..CheckerConfig::default()
    };
    let mut total = 0usize;
    let mut agreements = 0usize;

    // grids chosen with every point at least 5e-3 from the oracle's
    // decision boundary (criterion excludes only a 1e-6 band)
    let kappas = [-1.5, -0.7, 0.3, 0.9, 1.8];
    let thetas = [-1.1, -0.4, 0.25, 0.8, 1.6];
    let sigmas = [0.3, 0.8, 1.4];
    for &kappa in &kappas {
        for &theta in &thetas {
            for &sigma in &sigmas {
                let lib = library::build(
                    "cir",
                    &params(&[("kappa", kappa), ("theta", theta), ("sigma", sigma)]),
                )
                .unwrap();
                let got = check_domain(&lib.model, &lib.domain, cfg.n_points, &cfg)
                    .unwrap()
                    .aggregate
                    == Aggregate::Invariant;
                total += 1;
                agreements += (got == lib.oracle_invariant) as usize;
            }
        }
    }

    let kappas_j = [0.1, 0.45, 0.8, 1.2, 2.1];
    let lambdas = [0.15, 0.5, 0.9, 1.4, 2.2];
    let sizes = [0.3, 0.7, 1.3];
    for &kappa in &kappas_j {
        for &lambda in &lambdas {
            for &m in &sizes {
                let lib = library::build(
                    "cir_jumps",
                    &params(&[
                        ("kappa", kappa),
                        ("theta", 1.0),
                        ("sigma", 0.5),
                        ("jump_size", m),
                        ("intensity", lambda),
                    ]),
                )
                .unwrap();
                assert!(
                    (kappa - lambda * m).abs() > 1e-6,
                    "grid point on the oracle decision boundary"
                );
                let got = check_domain(&lib.model, &lib.domain, cfg.n_points, &cfg)
                    .unwrap()
                    .aggregate
                    == Aggregate::Invariant;
                total += 1;
                agreements += (got == lib.oracle_invariant) as usize;
            }
        }
    }

    let kappas_jac = [-1.2, -0.5, 0.4, 1.0, 1.7];
    let thetas_jac = [-0.6, 0.2, 0.5, 0.85, 1.45];
    let sigmas_jac = [0.3, 0.7, 1.1];
    for &kappa in &kappas_jac {
        for &theta in &thetas_jac {
            for &sigma in &sigmas_jac {
                let lib = library::build(
                    "jacobi",
                    &params(&[("kappa", kappa), ("theta", theta), ("sigma", sigma)]),
                )
                .unwrap();
                let got = check_domain(&lib.model, &lib.domain, cfg.n_points, &cfg)
                    .unwrap()
                    .aggregate
                    == Aggregate::Invariant;
                total += 1;
                agreements += (got == lib.oracle_invariant) as usize;
            }
        }
    }

    let betas12 = [-0.8, -0.3, 0.2, 0.7, 1.2];
    let betas21 = [-0.9, -0.25, 0.3, 0.8, 1.5];
    let thetas1 = [-0.5, 0.4, 1.0];
    for &b12 in &betas12 {
        for &b21 in &betas21 {
            for &t1 in &thetas1 {
                let lib = library::build(
                    "affine_orthant_2d",
                    &params(&[
                        ("beta12", b12),
                        ("beta21", b21),
                        ("theta1", t1),
                        ("theta2", 0.5),
                        ("sigma1", 0.6),
                        ("sigma2", 0.6),
                    ]),
                )
                .unwrap();
                let got = check_domain(&lib.model, &lib.domain, cfg.n_points, &cfg)
                    .unwrap()
                    .aggregate
                    == Aggregate::Invariant;
                total += 1;
                agreements += (got == lib.oracle_invariant) as usize;
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let pass = agreements == total && elapsed < 30.0;
    report_line(
        1,
        "oracle agreement",
        pass,
        &format!("{agreements}/{total} grid points agree in {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------- criterion 2

/// Random smooth rank-deficient field C = A A^T with affine A and analytic
/// column Jacobians.
fn random_low_rank_field(dim: usize, rank: usize, seed: u64) -> JumpDiffusionModel {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let alpha = DMatrix::from_fn(dim, rank, |_, _| rng.random_range(-1.0..1.0));
    let betas: Vec<DMatrix<f64>> = (0..dim)
        .map(|_| DMatrix::from_fn(dim, rank, |_, _| rng.random_range(-0.5..0.5)))
        .collect();
    let a_at = {
        let alpha = alpha.clone();
        let betas = betas.clone();
        move |x: &DVector<f64>| {
            let mut a = alpha.clone();
            for (l, beta) in betas.iter().enumerate() {
                a += beta * x[l];
            }
            a
        }
    };
    let a_for_cov = a_at.clone();
    let covariance = Arc::new(move |x: &DVector<f64>| {
        let a = a_for_cov(x);
        &a * a.transpose()
    });
    let jacobians = Arc::new(move |x: &DVector<f64>| {
        let a = a_at(x);
        // d C_ij / d x_l = sum_k (B_l[i,k] A[j,k] + A[i,k] B_l[j,k])
        (0..dim)
            .map(|j| {
                DMatrix::from_fn(dim, dim, |i, l| {
                    let beta = &betas[l];
                    (0..rank)
                        .map(|k| beta[(i, k)] * a[(j, k)] + a[(i, k)] * beta[(j, k)])
                        .sum()
                })
            })
            .collect::<Vec<_>>()
    });
    JumpDiffusionModel::new(
        dim,
        Arc::new(move |_x: &DVector<f64>| DVector::zeros(dim)),
        covariance,
    )
    .with_jacobians(jacobians)
}

#[test]
fn acceptance_2_spectral_drift_identity() {
    let mut checked = 0usize;
    let mut worst_rel = 0.0f64;
    let mut ratios: Vec<f64> = Vec::new();
    let h = 5e-4;
    let mut seed = 0u64;
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    while checked < 100 {
        seed += 1;
        let dim = 3 + (seed % 3) as usize; // d in {3, 4, 5}
        let rank = 1 + (seed as usize / 3) % (dim - 1); // r < d
        let model = random_low_rank_field(dim, rank, seed);
        let x = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let c = model.covariance_at(&x);
        let f = spectral_factor(&c, default_rank_tol(dim)).unwrap();
        // eigen-gap-safe points only: comfortable relative gap and exact rank
        if f.rank != rank || f.min_gap() < 0.05 * f.lambda[0] {
            continue;
        }
        let u = f.q.column(dim - 1).clone_owned();
        let jacs = column_jacobians(&model, &x).unwrap();
        let dc_norm = jacs.iter().map(|j| j.norm()).fold(0.0f64, f64::max);

        let r1 = match verify_drift_identity(&model, &x, &u, h, default_rank_tol(dim)) {
            Ok(r) if r.reliable => r,
            _ => continue,
        };
        let r2 = match verify_drift_identity(&model, &x, &u, h / 2.0, default_rank_tol(dim)) {
            Ok(r) if r.reliable => r,
            _ => continue,
        };
        let resid = r1.residual.unwrap();
        let rel = resid / (1.0 + dc_norm);
        worst_rel = worst_rel.max(rel);
        assert!(
            rel < 1e-5,
            "field {seed}: residual {resid:.3e} exceeds 1e-5 (1 + {dc_norm:.3e})"
        );
        let resid_half = r2.residual.unwrap();
        if resid > 1e-12 && resid_half > 0.0 {
            ratios.push(resid / resid_half);
        }
        checked += 1;
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = ratios[ratios.len() / 2];
    let pass = checked == 100 && (3.0..=5.0).contains(&median) && ratios.len() >= 50;
    report_line(
        2,
        "spectral drift identity",
        pass,
        &format!(
            "100 fields, worst residual ratio {worst_rel:.2e}, median halving ratio {median:.2} \
             over {} fields",
            ratios.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn acceptance_3_penrose_axioms() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let dim = 1 + trial % 8;
        let rank = rng.random_range(0..=dim);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        // random orthogonal basis, log-spread positive spectrum, exact zeros
        let m = if rank == 0 {
            DMatrix::zeros(dim, dim)
        } else {
            let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
            let q = g.qr().q();
            // two decades of spread: the axiom products carry a forward
            // error of order eps * cond, so an unbounded spectrum would
            // test conditioning rather than the pseudoinverse
            let lambda = DVector::from_fn(dim, |i, _| {
                if i < rank {
                    scale * 10f64.powf(rng.random_range(-2.0..0.0))
                } else {
                    0.0
                }
            });
            let m = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
            (&m + m.transpose()) * 0.5
        };
        let r = pseudoinverse(&m, default_rank_tol(dim)).unwrap();
        let tol = 1e-10 * m.norm().max(f64::EPSILON);
        let p = &r.pinv;
        let e1 = (&m * p * &m - &m).norm();
        let e2 = (p * &m * p - p).norm();
        let mp = &m * p;
        let pm = p * &m;
        let e3 = (&mp - mp.transpose()).norm();
        let e4 = (&pm - pm.transpose()).norm();
        let err = e1.max(e2 * m.norm() / p.norm().max(f64::EPSILON)).max(e3).max(e4);
        worst = worst.max(err / m.norm().max(f64::EPSILON));
        assert!(
            e1 <= tol && e3 <= tol && e4 <= tol,
            "trial {trial}: axiom defects {e1:.2e} {e2:.2e} {e3:.2e} {e4:.2e} vs tol {tol:.2e}"
        );
        // the second axiom scales with ||P||, not ||M||
        assert!(e2 <= 1e-10 * p.norm().max(f64::EPSILON));
    }
    report_line(
        3,
        "Penrose axioms",
        true,
        &format!("1000 matrices, worst relative defect {worst:.2e}"),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn acceptance_4_normal_cone_soundness() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let mut domains: Vec<(String, ClosedDomain)> = Vec::new();
    for name in library::MODEL_NAMES {
        let lib = library::build(name, &BTreeMap::new()).unwrap();
        if !lib.domain.is_boundaryless() {
            domains.push((name.to_string(), lib.domain));
        }
    }
    let mut points_checked = 0usize;
    for (name, domain) in &domains {
        let pts = domain.sample_boundary(20, 99).unwrap();
        for x in &pts {
            let cone = domain.normal_cone_generators(x, DEFAULT_TOL_BASE).unwrap();
            assert!(!cone.generators.is_empty(), "{name}: boundary point lost its cone");
            for _ in 0..10_000 {
                let dir = DVector::from_fn(domain.dim(), |_, _| {
                    rng.random_range(-1.0f64..1.0)
                });
                let y = domain.project(&(x + dir * 0.5)).unwrap();
                let gap = &y - x;
                let gap_norm = gap.norm();
                for u in &cone.generators {
                    let inner = u.dot(&gap);
                    assert!(
                        inner <= 1e-6 + 1e-3 * gap_norm,
                        "{name}: generator violates first-order inequality at {x:?}: \
                         <u, y-x> = {inner:.3e}, ||y-x|| = {gap_norm:.3e}"
                    );
                }
            }
            points_checked += 1;
        }
    }
    report_line(
        4,
        "normal-cone soundness",
        points_checked > 0,
        &format!(
            "{points_checked} boundary points x 10^4 domain samples across {} domains",
            domains.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn acceptance_5_semimartingale_roundtrip_and_truncation_independence() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let h1 = TruncationFunction::default_ramp();
    let h2 = TruncationFunction::ramp(0.3, 1.1).unwrap();
    let mut worst_err = 0.0f64;
    for name in library::MODEL_NAMES {
        let lib = library::build(name, &BTreeMap::new()).unwrap();
        let trip = model_to_triplet(&lib.model, h1.clone());
        let back = triplet_to_model(&trip).unwrap();
        for _ in 0..100 {
            let y = DVector::from_fn(lib.model.dim, |_, _| rng.random_range(-3.0..3.0));
            let x = lib.domain.project(&y).unwrap();
            let err = (lib.model.drift_at(&x) - back.drift_at(&x)).norm();
            worst_err = worst_err.max(err);
            assert!(err < 1e-8, "{name}: roundtrip drift error {err:.3e}");
        }
    }

    // verdict identity under two distinct truncation functions
    let cases = [
        ("cir_jumps", params(&[("kappa", 2.0), ("theta", 0.5)])),
        ("cir_jumps", params(&[("kappa", 0.1), ("theta", 1.0), ("jump_size", 1.5), ("intensity", 1.0)])),
        ("cir", params(&[("theta", 0.5)])),
        ("cir", params(&[("theta", -0.5)])),
        ("jacobi", params(&[("theta", 0.5)])),
        ("affine_orthant_2d", params(&[("beta12", 0.4), ("beta21", -0.6)])),
        ("heston_like", params(&[])),
    ];
    let cfg = CheckerConfig {
        n_points: 24,
        seed: 5,
        ..CheckerConfig::default()
    };
    for (name, ps) in cases {
        let lib = library::build(name, &ps).unwrap();
        let r1 = check_triplet(&model_to_triplet(&lib.model, h1.clone()), &lib.domain, 24, &cfg)
            .unwrap();
        let r2 = check_triplet(&model_to_triplet(&lib.model, h2.clone()), &lib.domain, 24, &cfg)
            .unwrap();
        assert_eq!(
            r1.aggregate, r2.aggregate,
            "{name}: verdict depends on the truncation function"
        );
    }
    report_line(
        5,
        "characteristics roundtrip",
        true,
        &format!("worst roundtrip drift error {worst_err:.2e}; verdicts truncation-independent"),
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn acceptance_6_maximum_principle_probe() {
    let invariant_cases = [
        ("cir", params(&[("kappa", 1.0), ("theta", 0.5), ("sigma", 1.0)])),
        (
            "cir_jumps",
            params(&[("kappa", 1.0), ("theta", 1.0), ("jump_size", 0.5), ("intensity", 0.5)]),
        ),
        ("jacobi", params(&[("kappa", 1.0), ("theta", 0.5), ("sigma", 0.7)])),
        (
            "affine_orthant_2d",
            params(&[("beta12", 0.3), ("beta21", 0.2)]),
        ),
        ("heston_like", params(&[("kappa", 1.0), ("theta", 0.5)])),
    ];
    let checker_cfg = CheckerConfig::default();
    let mut worst = f64::NEG_INFINITY;
    for (name, ps) in invariant_cases {
        let lib = library::build(name, &ps).unwrap();
        let report = check_domain(&lib.model, &lib.domain, 16, &checker_cfg).unwrap();
        assert_eq!(report.aggregate, Aggregate::Invariant, "{name} should be certified");
        let pts = lib.domain.sample_boundary(8, 6).unwrap();
        for x in &pts {
            let cone = lib.domain.normal_cone_generators(x, DEFAULT_TOL_BASE).unwrap();
            for u in &cone.generators {
                let probe = maximum_principle_probe(&lib.model, &lib.domain, x, u, 0.5).unwrap();
                if !probe.skipped {
                    worst = worst.max(probe.value);
                    assert!(
                        probe.value <= 1e-6,
                        "{name}: generator probe positive ({:.3e}) at {x:?}",
                        probe.value
                    );
                }
            }
        }
    }

    // the counterexample: kappa theta = -0.5 pushes outward at the origin
    let bad = library::build("cir", &params(&[("kappa", 1.0), ("theta", -0.5)])).unwrap();
    let x0 = DVector::zeros(1);
    let u = DVector::from_vec(vec![-1.0]);
    let probe = maximum_principle_probe(&bad.model, &bad.domain, &x0, &u, 0.5).unwrap();
    let pass = probe.value >= 0.25;
    report_line(
        6,
        "maximum-principle probe",
        pass,
        &format!(
            "worst probe on invariant models {worst:.2e}; counterexample probe {:.3}",
            probe.value
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn acceptance_7_moment_bound() {
    let start = Instant::now();
    let cases = [
        ("bm", params(&[("d", 2.0)]), vec![0.0, 0.0]),
        ("cir", params(&[("kappa", 1.0), ("theta", 1.0), ("sigma", 1.0)]), vec![1.0]),
        (
            "cir_jumps",
            params(&[("kappa", 1.0), ("theta", 1.0), ("sigma", 1.0), ("jump_size", 0.5), ("intensity", 0.5)]),
            vec![1.0],
        ),
    ];
    let mut lines = Vec::new();
    for (name, ps, x0) in cases {
        let lib = library::build(name, &ps).unwrap();
        let x0 = DVector::from_vec(x0);
        let scheme = if lib.domain.is_boundaryless() {
            Scheme::Euler
        } else {
            Scheme::FullTruncationEuler
        };
        let cfg = SimConfig {
            t_horizon: 1.0,
            dt: 1.0 / 512.0,
            n_paths: 10_000,
            seed: 7,
            scheme,
        };
        let sim = Simulator::new(&lib.model, Some(&lib.domain), cfg).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let r = sim.verify_moment_bound(&x0, t, lib.model.growth.big_l).unwrap();
            assert!(
                r.pass,
                "{name} at t={t}: estimate {:.3e} + 3 x {:.3e} exceeds bound {:.3e}",
                r.estimate, r.std_error, r.bound
            );
            lines.push(format!("{name}@{t}: {:.2e} <= {:.2e}", r.estimate, r.bound));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report_line(
        7,
        "second-moment bound",
        elapsed < 60.0,
        &format!("{} in {elapsed:.1}s", lines.join(", ")),
    );
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn acceptance_8_checker_simulator_coherence() {
    // invariant square-root diffusion with a nondegenerate boundary
    let good = library::build(
        "cir",
        &params(&[("kappa", 1.0), ("theta", 1.0), ("sigma", 1.0)]),
    )
    .unwrap();
    // parameters satisfy 2 kappa theta >= sigma^2
    let x0 = vec![DVector::from_vec(vec![1.0])];
    let mut coarse_fracs = Vec::new();
    let mut fine_fracs = Vec::new();
    for seed in 0..5u64 {
        for (dt, out) in [(1e-3, &mut coarse_fracs), (5e-4, &mut fine_fracs)] {
            let cfg = SimConfig {
                t_horizon: 1.0,
                dt,
                n_paths: 1000,
                seed,
                scheme: Scheme::FullTruncationEuler,
            };
            let sim = Simulator::new(&good.model, Some(&good.domain), cfg).unwrap();
            let stats = sim.violation_statistics(&x0, &[0.05]).unwrap();
            out.push(stats.per_delta[0].step_violation_fraction);
        }
    }
    let (coarse_mean, _) = mean_and_std_error(&coarse_fracs);
    let (fine_mean, _) = mean_and_std_error(&fine_fracs);
    assert!(
        coarse_fracs.iter().all(|&f| f < 1e-2),
        "violation fraction at dt=1e-3 not below 1e-2: {coarse_fracs:?}"
    );
    // nonincreasing under refinement, with a small allowance for MC noise
    assert!(
        fine_mean <= coarse_mean + 1e-3,
        "violations did not shrink under dt halving: {coarse_mean:.3e} -> {fine_mean:.3e}"
    );

    // the counterexample exits through the boundary with high frequency
    let bad = library::build("cir", &params(&[("kappa", 1.0), ("theta", -0.5)])).unwrap();
    let x0 = vec![DVector::zeros(1)];
    let mut exit_fracs = Vec::new();
    for seed in 0..5u64 {
        let cfg = SimConfig {
            t_horizon: 1.0,
            dt: 1e-3,
            n_paths: 1000,
            seed,
            scheme: Scheme::FullTruncationEuler,
        };
        let sim = Simulator::new(&bad.model, Some(&bad.domain), cfg).unwrap();
        let stats = sim.violation_statistics(&x0, &[0.05]).unwrap();
        exit_fracs.push(stats.per_delta[0].path_violation_fraction);
    }
    assert!(
        exit_fracs.iter().all(|&f| f > 0.3),
        "counterexample exit frequency not above 0.3: {exit_fracs:?}"
    );
    report_line(
        8,
        "checker-simulator coherence",
        true,
        &format!(
            "certified model: {coarse_mean:.2e} -> {fine_mean:.2e} under refinement; \
             counterexample exit frequency {:.2}",
            exit_fracs.iter().sum::<f64>() / exit_fracs.len() as f64
        ),
    );
}

// --------------------------------------------------------------- criterion 10

#[test]
fn acceptance_10_generator_dynkin_check() {
    // pinned allowance for the weak-discretization bias at horizon t
    const BIAS_ALLOWANCE: f64 = 100.0;
    let t = 1e-3;
    let cases: [(&str, BTreeMap<String, f64>, Vec<f64>); 2] = [
        ("bm", params(&[("d", 2.0)]), vec![0.3, -0.2]),
        ("cir", params(&[("kappa", 1.0), ("theta", 1.0), ("sigma", 1.0)]), vec![1.0]),
    ];
    let mut lines = Vec::new();
    for (name, ps, x0) in cases {
        let lib = library::build(name, &ps).unwrap();
        let dim = lib.model.dim;
        let x0 = DVector::from_vec(x0);
        let test_functions = [
            TestFunction::truncated_squared_norm(x0.clone(), 10.0),
            TestFunction::truncated_linear(
                DVector::from_fn(dim, |i, _| 1.0 + i as f64),
                x0.clone(),
                10.0,
            ),
            TestFunction::truncated_cosine(
                DVector::from_fn(dim, |i, _| 0.8 - 0.3 * i as f64),
                x0.clone(),
                10.0,
            ),
        ];
        let scheme = if lib.domain.is_boundaryless() {
            Scheme::Euler
        } else {
            Scheme::FullTruncationEuler
        };
        let cfg = SimConfig {
            t_horizon: t,
            dt: t / 4.0,
            n_paths: 10_000,
            seed: 10,
            scheme,
        };
        let sim = Simulator::new(&lib.model, Some(&lib.domain), cfg).unwrap();
        let finals = sim.terminal_states(&x0).unwrap();
        for (k, phi) in test_functions.iter().enumerate() {
            let generator_value = apply_generator(&lib.model, phi, &x0);
            let samples: Vec<f64> = finals.iter().map(|s| (phi.value)(s)).collect();
            let (mean, se) = mean_and_std_error(&samples);
            let ratio = (mean - (phi.value)(&x0)) / t;
            let err = (ratio - generator_value).abs();
            let tol = 3.0 * se / t + BIAS_ALLOWANCE * t;
            assert!(
                err <= tol,
                "{name} fn {k}: |(E[phi(X_t)] - phi(x))/t - L phi| = {err:.3e} > {tol:.3e}"
            );
            lines.push(format!("{name}/{k}: {err:.2e}<={tol:.2e}"));
        }
    }
    report_line(10, "Dynkin consistency", true, &lines.join(", "));
}
