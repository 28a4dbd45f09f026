//! Monte-Carlo simulation of the jump-diffusion by an Euler scheme with
//! compensated compound-Poisson jumps, plus the empirical validation
//! statistics: boundary-violation fractions, exit-time histograms, and the
//! closed-form second-moment bound check.
//!
//! Reproducibility contract: one root seed; the stream for path `i` is the
//! ChaCha12 stream `i` under the root key, so path `i` does not depend on
//! the number of paths and statistics are bit-identical across worker
//! counts. Statistics are reduced by pairwise summation in path order.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::domain::ClosedDomain;
use crate::error::{Error, Result};
use crate::linalg::{mean_and_std_error, pairwise_sum};
use crate::model::JumpDiffusionModel;

pub const EXIT_HISTOGRAM_BINS: usize = 20;
/// States beyond this norm terminate the path as overflowed.
const OVERFLOW_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    /// Evaluate the coefficient fields at the projection of the state onto
    /// the domain, mitigating spurious boundary exits of the discretization.
    FullTruncationEuler,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::FullTruncationEuler => "full_truncation_euler",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub t_horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidParameter("dt must be > 0".into()));
        }
        if self.t_horizon < self.dt {
            return Err(Error::InvalidParameter("horizon must be >= dt".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// One simulated discrete path on the step grid.
#[derive(Clone, Debug)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Whether at least one jump occurred in the step ending at this point.
    pub jump_flags: Vec<bool>,
    pub overflowed: bool,
}

impl Path {
    /// CSV dump with columns `t, x1..xd, jump_flag`.
    pub fn to_csv(&self) -> String {
        let d = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for i in 1..=d {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",jump_flag\n");
        for k in 0..self.times.len() {
            out.push_str(&format!("{:.12e}", self.times[k]));
            for v in self.states[k].iter() {
                out.push_str(&format!(",{:.12e}", v));
            }
            out.push_str(if self.jump_flags[k] { ",1\n" } else { ",0\n" });
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct DeltaStats {
    pub delta: f64,
    /// Fraction of (path, step) samples at distance > delta from the domain.
    pub step_violation_fraction: f64,
    /// Fraction of paths that ever violated by more than delta.
    pub path_violation_fraction: f64,
    /// First-violation times, binned uniformly over [0, T].
    pub exit_histogram: Vec<u64>,
    pub never_exited: u64,
}

#[derive(Clone, Debug)]
pub struct PathStats {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub t_horizon: f64,
    pub scheme: Scheme,
    /// MC estimate of `E[sup_{s<=T} ||X_s||^2]` with its standard error.
    pub sup_sq_norm_mean: f64,
    pub sup_sq_norm_se: f64,
    pub per_delta: Vec<DeltaStats>,
    pub overflow_count: usize,
}

#[derive(Clone, Debug)]
pub struct MomentBoundCheck {
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Simulation driver binding a model, an optional domain (required by the
/// full-truncation scheme and by violation statistics), and a configuration.
pub struct Simulator<'a> {
    model: &'a JumpDiffusionModel,
    domain: Option<&'a ClosedDomain>,
    cfg: SimConfig,
}

struct PathAccumulator<'d> {
    domain: Option<&'d ClosedDomain>,
    deltas: Vec<f64>,
    n_steps: usize,
    t_horizon: f64,
    sup_sq: f64,
    counts: Vec<u64>,
    first_exit: Vec<Option<f64>>,
    samples: u64,
    overflowed: bool,
    final_state: Option<DVector<f64>>,
}

impl<'d> PathAccumulator<'d> {
    fn new(domain: Option<&'d ClosedDomain>, deltas: &[f64], n_steps: usize, t: f64) -> Self {
        Self {
            domain,
            deltas: deltas.to_vec(),
            n_steps,
            t_horizon: t,
            sup_sq: 0.0,
            counts: vec![0; deltas.len()],
            first_exit: vec![None; deltas.len()],
            samples: 0,
            overflowed: false,
            final_state: None,
        }
    }

    fn visit(&mut self, step: usize, t: f64, state: &DVector<f64>, _jumped: bool) -> Result<()> {
        self.samples += 1;
        self.sup_sq = self.sup_sq.max(state.norm_squared());
        if let Some(domain) = self.domain {
            if !self.deltas.is_empty() {
                let dist = domain.dist(state)?;
                for (k, &delta) in self.deltas.iter().enumerate() {
                    if dist > delta {
                        self.counts[k] += 1;
                        if self.first_exit[k].is_none() {
                            self.first_exit[k] = Some(t);
                        }
                    }
                }
            }
        }
        if step == self.n_steps {
            self.final_state = Some(state.clone());
        }
        let _ = self.t_horizon;
        Ok(())
    }
}

impl<'a> Simulator<'a> {
    pub fn new(
        model: &'a JumpDiffusionModel,
        domain: Option<&'a ClosedDomain>,
        cfg: SimConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.scheme == Scheme::FullTruncationEuler && domain.is_none() {
            return Err(Error::InvalidParameter(
                "full-truncation scheme requires a domain".into(),
            ));
        }
        Ok(Self { model, domain, cfg })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// The documented stream split: path `i` uses ChaCha12 stream `i` under
    /// the root key derived from the seed.
    fn path_rng(&self, stream: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        rng
    }

    fn run_path<F>(&self, x0: &DVector<f64>, stream: u64, visit: &mut F) -> Result<bool>
    where
        F: FnMut(usize, f64, &DVector<f64>, bool) -> Result<()>,
    {
        let d = self.model.dim;
        if x0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x0.len(),
            });
        }
        let mut rng = self.path_rng(stream);
        let cfg = &self.cfg;
        let n_steps = cfg.n_steps();
        let dt = cfg.dt;
        let sqrt_dt = dt.sqrt();
        let total_mass = self.model.jumps.total_mass();
        let poisson = if total_mass > 0.0 {
            Some(Poisson::new(total_mass * dt).map_err(|e| {
                Error::InvalidParameter(format!("invalid jump intensity: {e}"))
            })?)
        } else {
            None
        };

        let mut x = x0.clone();
        visit(0, 0.0, &x, false)?;
        for step in 1..=n_steps {
            let eval_point = match cfg.scheme {
                Scheme::Euler => x.clone(),
                Scheme::FullTruncationEuler => {
                    self.domain.expect("validated at construction").project(&x)?
                }
            };
            let drift = self.model.drift_at(&eval_point);
            let sigma = self.model.sigma_at(&eval_point)?;
            let noise = DVector::from_fn(d, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            let mut next = &x + drift * dt + sigma * noise * sqrt_dt;
            let mut jumped = false;
            if let Some(poisson) = &poisson {
                let count: f64 = poisson.sample(&mut rng);
                let count = count as u64;
                for _ in 0..count {
                    let u: f64 = rng.random_range(0.0..1.0);
                    let atom = self.model.jumps.pick_atom(u);
                    next += self.model.jump_amplitude(&eval_point, &atom.mark);
                    jumped = true;
                }
                // compensator of the jump measure
                next -= self.model.jump_mean(&eval_point) * dt;
            }
            x = next;
            if x.iter().any(|v| !v.is_finite()) || x.norm() > OVERFLOW_NORM {
                return Ok(true);
            }
            visit(step, step as f64 * dt, &x, jumped)?;
        }
        Ok(false)
    }

    /// One full path, bit-reproducible in `(seed, path_index)`.
    pub fn simulate_path(&self, x0: &DVector<f64>, path_index: u64) -> Result<Path> {
        let n_steps = self.cfg.n_steps();
        let mut path = Path {
            times: Vec::with_capacity(n_steps + 1),
            states: Vec::with_capacity(n_steps + 1),
            jump_flags: Vec::with_capacity(n_steps + 1),
            overflowed: false,
        };
        let overflowed = self.run_path(x0, path_index, &mut |_, t, state, jumped| {
            path.times.push(t);
            path.states.push(state.clone());
            path.jump_flags.push(jumped);
            Ok(())
        })?;
        path.overflowed = overflowed;
        Ok(path)
    }

    /// Terminal states of all configured paths, in path order.
    pub fn terminal_states(&self, x0: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let results: Result<Vec<DVector<f64>>> = (0..self.cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut last = x0.clone();
                self.run_path(x0, i, &mut |_, _, state, _| {
                    last = state.clone();
                    Ok(())
                })?;
                Ok(last)
            })
            .collect();
        results
    }

    /// Violation statistics across paths started from each point of
    /// `x0_list` (boundary starts included). Requires a domain.
    pub fn violation_statistics(
        &self,
        x0_list: &[DVector<f64>],
        delta_list: &[f64],
    ) -> Result<PathStats> {
        let domain = self.domain.ok_or_else(|| {
            Error::InvalidParameter("violation statistics require a domain".into())
        })?;
        if x0_list.is_empty() {
            return Err(Error::InvalidParameter("empty start list".into()));
        }
        for x0 in x0_list {
            if !domain.contains(x0)? {
                return Err(Error::OutsideDomain {
                    dist: domain.dist(x0)?,
                    tol: 0.0,
                });
            }
        }
        let n_paths = self.cfg.n_paths;
        let n_steps = self.cfg.n_steps();
        let t_horizon = n_steps as f64 * self.cfg.dt;
        let jobs: Vec<(usize, u64)> = (0..x0_list.len())
            .flat_map(|s| (0..n_paths as u64).map(move |p| (s, s as u64 * n_paths as u64 + p)))
            .collect();
        let accs: Result<Vec<PathAccumulator>> = jobs
            .par_iter()
            .map(|&(start_idx, stream)| {
                let mut acc =
                    PathAccumulator::new(Some(domain), delta_list, n_steps, t_horizon);
                let overflowed =
                    self.run_path(&x0_list[start_idx], stream, &mut |step, t, state, j| {
                        acc.visit(step, t, state, j)
                    })?;
                acc.overflowed = overflowed;
                Ok(acc)
            })
            .collect();
        let accs = accs?;

        let sups: Vec<f64> = accs.iter().map(|a| a.sup_sq).collect();
        let (mean, se) = mean_and_std_error(&sups);
        let total_samples: u64 = accs.iter().map(|a| a.samples).sum();
        let mut per_delta = Vec::with_capacity(delta_list.len());
        for (k, &delta) in delta_list.iter().enumerate() {
            let viol: u64 = accs.iter().map(|a| a.counts[k]).sum();
            let paths_hit = accs.iter().filter(|a| a.first_exit[k].is_some()).count();
            let mut hist = vec![0u64; EXIT_HISTOGRAM_BINS];
            let mut never = 0u64;
            for a in &accs {
                match a.first_exit[k] {
                    Some(t) => {
                        let bin = ((t / t_horizon) * EXIT_HISTOGRAM_BINS as f64)
                            .floor()
                            .min(EXIT_HISTOGRAM_BINS as f64 - 1.0)
                            as usize;
                        hist[bin] += 1;
                    }
                    None => never += 1,
                }
            }
            per_delta.push(DeltaStats {
                delta,
                step_violation_fraction: viol as f64 / total_samples as f64,
                path_violation_fraction: paths_hit as f64 / accs.len() as f64,
                exit_histogram: hist,
                never_exited: never,
            });
        }
        Ok(PathStats {
            n_paths: accs.len(),
            n_steps,
            dt: self.cfg.dt,
            t_horizon,
            scheme: self.cfg.scheme,
            sup_sq_norm_mean: mean,
            sup_sq_norm_se: se,
            per_delta,
            overflow_count: accs.iter().filter(|a| a.overflowed).count(),
        })
    }

    /// Compare the MC estimate of `E[sup_{s<=t} ||X_s||^2]` against the
    /// closed-form bound `4 (||x0||^2 + L t (t+8)) exp(4 L t (t+8))`.
    pub fn verify_moment_bound(
        &self,
        x0: &DVector<f64>,
        t: f64,
        big_l: f64,
    ) -> Result<MomentBoundCheck> {
        if t < self.cfg.dt {
            return Err(Error::InvalidParameter("t must be >= dt".into()));
        }
        let exponent = 4.0 * big_l * t * (t + 8.0);
        if exponent > 700.0 {
            return Err(Error::BoundOverflow { exponent });
        }
        let bound = 4.0 * (x0.norm_squared() + big_l * t * (t + 8.0)) * exponent.exp();
        let sub = Simulator {
            model: self.model,
            domain: self.domain,
            cfg: SimConfig {
                t_horizon: t,
                ..self.cfg
            },
        };
        let n_steps = sub.cfg.n_steps();
        let sups: Result<Vec<f64>> = (0..sub.cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut sup: f64 = 0.0;
                sub.run_path(x0, i, &mut |_, _, state, _| {
                    sup = sup.max(state.norm_squared());
                    Ok(())
                })?;
                Ok(sup)
            })
            .collect();
        let sups = sups?;
        let _ = n_steps;
        let (estimate, std_error) = mean_and_std_error(&sups);
        Ok(MomentBoundCheck {
            estimate,
            std_error,
            bound,
            pass: estimate + 3.0 * std_error <= bound,
        })
    }
}

/// Mean of the coordinates of final states (pairwise reduction, path order).
pub fn mean_state(states: &[DVector<f64>]) -> DVector<f64> {
    let d = states.first().map_or(0, |s| s.len());
    DVector::from_fn(d, |i, _| {
        let coords: Vec<f64> = states.iter().map(|s| s[i]).collect();
        pairwise_sum(&coords) / states.len() as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpAtom, JumpSpec};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn deterministic(b: f64) -> JumpDiffusionModel {
        JumpDiffusionModel::new(
            1,
            Arc::new(move |_x: &DVector<f64>| DVector::from_vec(vec![b])),
            Arc::new(|_x: &DVector<f64>| DMatrix::zeros(1, 1)),
        )
    }

    fn bm(dim: usize) -> JumpDiffusionModel {
        JumpDiffusionModel::new(
            dim,
            Arc::new(move |_x: &DVector<f64>| DVector::zeros(dim)),
            Arc::new(move |_x: &DVector<f64>| DMatrix::identity(dim, dim)),
        )
    }

    fn cfg(t: f64, dt: f64, n: usize, seed: u64) -> SimConfig {
        SimConfig {
            t_horizon: t,
            dt,
            n_paths: n,
            seed,
            scheme: Scheme::Euler,
        }
    }

    #[test]
    fn constant_path_without_dynamics() {
        let m = deterministic(0.0);
        let sim = Simulator::new(&m, None, cfg(1.0, 0.1, 1, 0)).unwrap();
        let p = sim.simulate_path(&DVector::from_vec(vec![0.7]), 0).unwrap();
        assert!(p.states.iter().all(|s| s[0] == 0.7));
        assert!(!p.overflowed);
    }

    #[test]
    fn euler_exact_for_constant_drift() {
        let m = deterministic(1.0);
        let sim = Simulator::new(&m, None, cfg(1.0, 0.125, 1, 0)).unwrap();
        let p = sim.simulate_path(&DVector::from_vec(vec![0.5]), 0).unwrap();
        let last = p.states.last().unwrap();
        assert!((last[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn paths_are_bit_reproducible() {
        let m = bm(2);
        let sim = Simulator::new(&m, None, cfg(0.5, 0.01, 4, 99)).unwrap();
        let a = sim.simulate_path(&DVector::zeros(2), 3).unwrap();
        let b = sim.simulate_path(&DVector::zeros(2), 3).unwrap();
        for (s, t) in a.states.iter().zip(&b.states) {
            assert!(s.iter().zip(t.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let m = bm(1);
        let sim = Simulator::new(&m, None, cfg(0.5, 0.01, 4, 99)).unwrap();
        let a = sim.simulate_path(&DVector::zeros(1), 0).unwrap();
        let b = sim.simulate_path(&DVector::zeros(1), 1).unwrap();
        assert_ne!(a.states.last().unwrap()[0], b.states.last().unwrap()[0]);
    }

    #[test]
    fn compensated_poisson_is_centered() {
        // rho = 1, total mass 1: the compensated jumps form a martingale
        let m = JumpDiffusionModel::new(
            1,
            Arc::new(|_x: &DVector<f64>| DVector::zeros(1)),
            Arc::new(|_x: &DVector<f64>| DMatrix::zeros(1, 1)),
        )
        .with_jumps(
            JumpSpec::from_atoms(vec![JumpAtom {
                mark: DVector::from_vec(vec![1.0]),
                weight: 1.0,
            }])
            .unwrap(),
        );
        let sim = Simulator::new(&m, None, cfg(1.0, 0.01, 100_000, 7)).unwrap();
        let finals = sim.terminal_states(&DVector::zeros(1)).unwrap();
        let vals: Vec<f64> = finals.iter().map(|s| s[0]).collect();
        let (mean, se) = mean_and_std_error(&vals);
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn brownian_terminal_moments() {
        // mean and covariance of X_T must match (x0, T I) within 3 SE
        let m = bm(2);
        let t = 0.8;
        let sim = Simulator::new(&m, None, cfg(t, 0.01, 20_000, 11)).unwrap();
        let x0 = DVector::from_vec(vec![0.3, -0.2]);
        let finals = sim.terminal_states(&x0).unwrap();
        let mut centered: Vec<Vec<f64>> = vec![];
        for i in 0..2 {
            let coords: Vec<f64> = finals.iter().map(|s| s[i]).collect();
            let (mean, se) = mean_and_std_error(&coords);
            assert!((mean - x0[i]).abs() <= 3.0 * se, "mean[{i}] {mean}");
            centered.push(coords.iter().map(|c| c - mean).collect());
        }
        for i in 0..2 {
            for j in i..2 {
                let prods: Vec<f64> = centered[i]
                    .iter()
                    .zip(&centered[j])
                    .map(|(a, b)| a * b)
                    .collect();
                let (cov, cov_se) = mean_and_std_error(&prods);
                let expected = if i == j { t } else { 0.0 };
                assert!(
                    (cov - expected).abs() <= 3.0 * cov_se,
                    "cov[{i}{j}] {cov} vs {expected} (se {cov_se})"
                );
            }
        }
    }

    #[test]
    fn inward_flow_never_violates() {
        // b = (1,...,1) - x with zero noise stays in the orthant
        let m = JumpDiffusionModel::new(
            2,
            Arc::new(|x: &DVector<f64>| DVector::from_element(2, 1.0) - x),
            Arc::new(|_x: &DVector<f64>| DMatrix::zeros(2, 2)),
        );
        let domain = ClosedDomain::orthant(2);
        let sim = Simulator::new(&m, Some(&domain), cfg(1.0, 0.01, 8, 3)).unwrap();
        let stats = sim
            .violation_statistics(&[DVector::zeros(2)], &[1e-9, 0.1])
            .unwrap();
        for d in &stats.per_delta {
            assert_eq!(d.step_violation_fraction, 0.0);
            assert_eq!(d.never_exited as usize, stats.n_paths);
        }
    }

    #[test]
    fn brownian_on_orthant_violates_often() {
        let m = bm(1);
        let domain = ClosedDomain::orthant(1);
        let sim = Simulator::new(&m, Some(&domain), cfg(0.5, 0.01, 2000, 21)).unwrap();
        let stats = sim
            .violation_statistics(&[DVector::zeros(1)], &[0.1])
            .unwrap();
        assert!(stats.per_delta[0].path_violation_fraction > 0.3);
    }

    #[test]
    fn violation_fraction_monotone_in_delta() {
        let m = bm(1);
        let domain = ClosedDomain::orthant(1);
        let sim = Simulator::new(&m, Some(&domain), cfg(0.5, 0.02, 500, 5)).unwrap();
        let stats = sim
            .violation_statistics(&[DVector::zeros(1)], &[0.01, 0.05, 0.1, 0.5])
            .unwrap();
        for w in stats.per_delta.windows(2) {
            assert!(w[1].step_violation_fraction <= w[0].step_violation_fraction);
        }
    }

    #[test]
    fn moment_bound_trivially_holds_without_dynamics() {
        let m = deterministic(0.0);
        let sim = Simulator::new(&m, None, cfg(1.0, 0.1, 16, 0)).unwrap();
        let r = sim
            .verify_moment_bound(&DVector::from_vec(vec![2.0]), 0.5, 1.0)
            .unwrap();
        assert!(r.pass);
        assert!((r.estimate - 4.0).abs() < 1e-12);
    }

    #[test]
    fn moment_bound_brownian() {
        let m = bm(1);
        let sim = Simulator::new(&m, None, cfg(0.25, 1.0 / 512.0, 4000, 13)).unwrap();
        let r = sim.verify_moment_bound(&DVector::zeros(1), 0.25, 1.0).unwrap();
        assert!(r.pass, "estimate {} vs bound {}", r.estimate, r.bound);
        // Doob: E[sup W^2] <= 4 t = 1; the closed-form bound is far larger
        assert!(r.estimate < 1.5);
        assert!(r.bound > 1e4);
    }

    #[test]
    fn bound_overflow_is_reported() {
        let m = bm(1);
        let sim = Simulator::new(&m, None, cfg(1.0, 0.1, 4, 0)).unwrap();
        let r = sim.verify_moment_bound(&DVector::zeros(1), 1.0, 1e4);
        assert!(matches!(r, Err(Error::BoundOverflow { .. })));
    }

    #[test]
    fn full_truncation_requires_domain() {
        let m = bm(1);
        let r = Simulator::new(
            &m,
            None,
            SimConfig {
                scheme: Scheme::FullTruncationEuler,
                ..cfg(1.0, 0.1, 1, 0)
            },
        );
        assert!(r.is_err());
    }

    #[test]
    fn csv_dump_has_expected_columns() {
        let m = deterministic(1.0);
        let sim = Simulator::new(&m, None, cfg(0.2, 0.1, 1, 0)).unwrap();
        let p = sim.simulate_path(&DVector::zeros(1), 0).unwrap();
        let csv = p.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,jump_flag");
        assert_eq!(lines.count(), 3);
    }
}
