//! Command-line front end: ingest a JSON run configuration, execute checks,
//! simulations, conversions, or the combined crosscheck, and emit canonical
//! JSON reports.
//!
//! Exit codes for verdict-producing commands: 0 invariant, 2 not invariant,
//! 3 inconclusive, 1 on any error (including schema violations).

mod config;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

use config::{
    load_config, resolve_domain_spec, resolve_model_spec, resolve_triplet_spec, RunConfig,
};
use invariance_core::checker::{check_domain, Aggregate};
use invariance_core::domain::ClosedDomain;
use invariance_core::generator::maximum_principle_probe;
use invariance_core::model::JumpDiffusionModel;
use invariance_core::report::{
    invariance_report_value, num, path_stats_value, probe_result_value, to_canonical_json, vector,
};
use invariance_core::semimartingale::{triplet_to_model, TruncationFunction};
use invariance_core::simulator::{SimConfig, Simulator};

#[derive(Parser)]
#[command(name = "invariance", version, about = "Stochastic invariance verification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Report destination; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Worker-thread cap; output does not depend on it.
    #[arg(long, value_name = "T")]
    threads: Option<usize>,
    /// Root seed override.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Boundary points to sample.
    #[arg(long, value_name = "N")]
    points: Option<usize>,
    #[arg(long, value_name = "X")]
    tol_support: Option<f64>,
    #[arg(long, value_name = "X")]
    tol_kernel: Option<f64>,
    #[arg(long, value_name = "X")]
    tol_drift: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_name = "X")]
    dt: Option<f64>,
    #[arg(long, value_name = "N")]
    paths: Option<usize>,
    /// Dump the first path as CSV (columns t, x1..xd, jump_flag).
    #[arg(long, value_name = "FILE")]
    csv_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the invariance conditions over a boundary sample.
    Check(CheckArgs),
    /// Monte-Carlo simulation with boundary-violation statistics.
    Simulate(SimulateArgs),
    /// Convert between the SDE form and the characteristics triplet.
    Convert(CommonArgs),
    /// Checker verdict, simulation at two step sizes, and the
    /// maximum-principle probe in one report, with disagreement flags.
    Crosscheck(CommonArgs),
    /// Violation-fraction sweep over step-size refinements, as CSV.
    Plot(SimulateArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    let common = match &cli.command {
        Command::Check(a) => &a.common,
        Command::Simulate(a) | Command::Plot(a) => &a.common,
        Command::Convert(c) | Command::Crosscheck(c) => c,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    pool.install(|| match &cli.command {
        Command::Check(args) => run_check(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Convert(args) => run_convert(args),
        Command::Crosscheck(args) => run_crosscheck(args),
        Command::Plot(args) => run_plot(args),
    })
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn check_command_tag(cfg: &RunConfig, expected: &str) -> Result<()> {
    if let Some(cmd) = &cfg.command {
        if cmd != expected {
            bail!(
                "config schema: key `command` is `{cmd}` but the `{expected}` subcommand was invoked"
            );
        }
    }
    Ok(())
}

/// The model, domain, and metadata shared by all commands.
struct Target {
    model: JumpDiffusionModel,
    domain: ClosedDomain,
    affine_fields: bool,
    description: Value,
}

fn params_json(params: &std::collections::BTreeMap<String, f64>) -> Value {
    Value::Object(
        params
            .iter()
            .map(|(k, v)| (k.clone(), num(*v)))
            .collect::<serde_json::Map<String, Value>>(),
    )
}

fn resolve_target(cfg: &RunConfig, dir: &Path) -> Result<Target> {
    let (model, mut domain, affine, description) = match (&cfg.model, &cfg.triplet) {
        (Some(spec), None) => {
            let resolved = resolve_model_spec(spec, dir)?;
            let desc = json!({
                "form": "sde",
                "name": resolved.library.name,
                "params": params_json(&resolved.library.params),
            });
            (
                resolved.model,
                resolved.domain,
                resolved.library.affine_fields,
                desc,
            )
        }
        (None, Some(spec)) => {
            let (trip, resolved) = resolve_triplet_spec(spec, dir)?;
            let model = triplet_to_model(&trip)?;
            let desc = json!({
                "form": "triplet",
                "base": resolved.library.name,
                "params": params_json(&resolved.library.params),
                "kernel_atoms": spec.kernel_atoms.iter()
                    .map(|a| json!({"z": a.z.iter().map(|&z| num(z)).collect::<Vec<_>>(), "w": num(a.w)}))
                    .collect::<Vec<_>>(),
                "truncation": {"identity_radius": num(spec.truncation.identity_radius),
                                "support_radius": num(spec.truncation.support_radius)},
            });
            (model, resolved.domain, resolved.library.affine_fields, desc)
        }
        (Some(_), Some(_)) => bail!("config schema: supply either `model` or `triplet`, not both"),
        (None, None) => bail!("config schema: a `model` or `triplet` section is required"),
    };
    if let Some(dspec) = &cfg.domain {
        domain = resolve_domain_spec(dspec)?;
        if domain.dim() != model.dim {
            bail!(
                "config schema: domain dimension {} does not match model dimension {}",
                domain.dim(),
                model.dim
            );
        }
    }
    Ok(Target {
        model,
        domain,
        affine_fields: affine,
        description,
    })
}

fn write_output(out: &Option<PathBuf>, cfg_output: &Option<String>, text: &str) -> Result<()> {
    let path = out
        .clone()
        .or_else(|| cfg_output.as_ref().map(PathBuf::from));
    match path {
        Some(path) => std::fs::write(&path, text)
            .with_context(|| format!("writing report to {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn exit_code(aggregate: Aggregate) -> i32 {
    match aggregate {
        Aggregate::Invariant => 0,
        Aggregate::NotInvariant => 2,
        Aggregate::Inconclusive => 3,
    }
}

fn run_check(args: &CheckArgs) -> Result<i32> {
    let cfg = load_config(&args.common.config)?;
    check_command_tag(&cfg, "check")?;
    let dir = base_dir(&args.common.config);
    let target = resolve_target(&cfg, &dir)?;
    let mut checker_cfg = cfg.checker.to_config(args.common.seed.or(cfg.seed));
    if let Some(p) = args.points {
        checker_cfg.n_points = p;
    }
    if let Some(t) = args.tol_support {
        checker_cfg.tol_support = t;
    }
    if let Some(t) = args.tol_kernel {
        checker_cfg.tol_kernel = t;
    }
    if let Some(t) = args.tol_drift {
        checker_cfg.tol_drift = t;
    }
    checker_cfg.affine_fields = Some(target.affine_fields);
    let report = check_domain(&target.model, &target.domain, checker_cfg.n_points, &checker_cfg)?;
    let value = json!({
        "schema_version": config::SCHEMA_VERSION,
        "command": "check",
        "target": target.description,
        "report": invariance_report_value(&report),
    });
    write_output(&args.common.out, &cfg.output, &to_canonical_json(&value))?;
    Ok(exit_code(report.aggregate))
}

fn resolve_starts(cfg: &RunConfig, domain: &ClosedDomain) -> Result<Vec<DVector<f64>>> {
    match &cfg.simulation.x0 {
        Some(list) => {
            let mut out = Vec::with_capacity(list.len());
            for x in list {
                if x.len() != domain.dim() {
                    bail!(
                        "config schema: x0 entry has dimension {} but the domain has dimension {}",
                        x.len(),
                        domain.dim()
                    );
                }
                out.push(DVector::from_vec(x.clone()));
            }
            Ok(out)
        }
        None => Ok(vec![domain.project(&DVector::zeros(domain.dim()))?]),
    }
}

fn run_simulate(args: &SimulateArgs) -> Result<i32> {
    let cfg = load_config(&args.common.config)?;
    check_command_tag(&cfg, "simulate")?;
    let dir = base_dir(&args.common.config);
    let target = resolve_target(&cfg, &dir)?;
    let mut sim_cfg = cfg.simulation.to_config(args.common.seed.or(cfg.seed))?;
    if let Some(dt) = args.dt {
        sim_cfg.dt = dt;
    }
    if let Some(p) = args.paths {
        sim_cfg.n_paths = p;
    }
    let sim = Simulator::new(&target.model, Some(&target.domain), sim_cfg)?;
    let starts = resolve_starts(&cfg, &target.domain)?;
    let stats = sim.violation_statistics(&starts, &cfg.simulation.deltas)?;
    if let Some(csv_path) = &args.csv_out {
        let path = sim.simulate_path(&starts[0], 0)?;
        std::fs::write(csv_path, path.to_csv())
            .with_context(|| format!("writing CSV to {}", csv_path.display()))?;
    }
    let value = json!({
        "schema_version": config::SCHEMA_VERSION,
        "command": "simulate",
        "target": target.description,
        "starts": Value::Array(starts.iter().map(vector).collect()),
        "stats": path_stats_value(&stats),
    });
    write_output(&args.common.out, &cfg.output, &to_canonical_json(&value))?;
    Ok(0)
}

fn run_convert(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(&args.config)?;
    check_command_tag(&cfg, "convert")?;
    let dir = base_dir(&args.config);
    let value = match (&cfg.model, &cfg.triplet) {
        (Some(spec), None) => {
            // SDE form -> characteristics relative to the default truncation:
            // kernel atoms are the model's atoms (identity amplitude) and the
            // drift gains the negative compensated large-jump mass.
            let resolved = resolve_model_spec(spec, dir.as_path())?;
            let h = TruncationFunction::default_ramp();
            let anchor = resolved.domain.project(&DVector::zeros(resolved.model.dim))?;
            let mut shift = DVector::zeros(resolved.model.dim);
            let mut atoms_json = Vec::new();
            for a in &resolved.model.jumps.atoms {
                let z = resolved.model.jump_amplitude(&anchor, &a.mark);
                shift -= (&z - h.apply(&z)) * a.weight;
                atoms_json.push(json!({
                    "z": z.iter().map(|&v| num(v)).collect::<Vec<_>>(),
                    "w": num(a.weight),
                }));
            }
            let mut offset = shift;
            if let Some(extra) = &spec.drift_offset {
                offset += DVector::from_vec(extra.clone());
            }
            json!({
                "schema_version": config::SCHEMA_VERSION,
                "command": "convert",
                "converted_to": "triplet",
                "triplet": {
                    "base": {"name": spec.name, "params": params_json(&resolved.library.params)},
                    "drift_offset": vector(&offset),
                    "kernel_atoms": atoms_json,
                    "truncation": {"identity_radius": num(h.identity_radius),
                                    "support_radius": num(2.0)},
                },
            })
        }
        (None, Some(spec)) => {
            // triplet -> SDE form: the drift gains sum_k w_k (z_k - h(z_k))
            let (trip, resolved) = resolve_triplet_spec(spec, dir.as_path())?;
            let model = triplet_to_model(&trip)?;
            let probe = DVector::zeros(model.dim);
            let mut offset = model.drift_at(&probe) - resolved.model.drift_at(&probe);
            if let Some(extra) = &spec.base.drift_offset {
                offset += DVector::from_vec(extra.clone());
            }
            json!({
                "schema_version": config::SCHEMA_VERSION,
                "command": "convert",
                "converted_to": "model",
                "model": {
                    "name": spec.base.name,
                    "params": params_json(&resolved.library.params),
                    "drift_offset": vector(&offset),
                    "atoms": spec.kernel_atoms.iter()
                        .map(|a| json!({"z": a.z.iter().map(|&z| num(z)).collect::<Vec<_>>(), "w": num(a.w)}))
                        .collect::<Vec<_>>(),
                },
            })
        }
        _ => bail!("config schema: convert requires exactly one of `model` or `triplet`"),
    };
    write_output(&args.out, &cfg.output, &to_canonical_json(&value))?;
    Ok(0)
}

/// Pinned crosscheck disagreement thresholds.
const PROBE_TOL: f64 = 1e-6;
const VIOLATION_CEILING: f64 = 0.02;

fn run_crosscheck(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(&args.config)?;
    check_command_tag(&cfg, "crosscheck")?;
    let dir = base_dir(&args.config);
    let target = resolve_target(&cfg, &dir)?;
    let root_seed = args.seed.or(cfg.seed);
    let mut checker_cfg = cfg.checker.to_config(root_seed);
    checker_cfg.affine_fields = Some(target.affine_fields);
    let report = check_domain(&target.model, &target.domain, checker_cfg.n_points, &checker_cfg)?;

    // maximum-principle probes at boundary points
    let mut probes = Vec::new();
    let mut probe_worst = f64::NEG_INFINITY;
    let mut notes: Vec<String> = Vec::new();
    if !target.domain.is_boundaryless() {
        let pts = target.domain.sample_boundary_in(
            cfg.crosscheck.probe_points,
            checker_cfg.seed,
            checker_cfg.sampling_radius,
        )?;
        for x in &pts {
            let cone = target
                .domain
                .normal_cone_generators(x, checker_cfg.active_tol)?;
            for u in &cone.generators {
                match maximum_principle_probe(
                    &target.model,
                    &target.domain,
                    x,
                    u,
                    cfg.crosscheck.probe_width,
                ) {
                    Ok(p) => {
                        if !p.skipped {
                            probe_worst = probe_worst.max(p.value);
                        }
                        probes.push(probe_result_value(x, u, &p));
                    }
                    Err(e) => notes.push(format!("probe failed at a boundary point: {e}")),
                }
            }
        }
    }

    // simulation at two step sizes
    let starts = resolve_starts(&cfg, &target.domain)?;
    let deltas = cfg.simulation.deltas.clone();
    let scheme = cfg.simulation.to_config(root_seed)?.scheme;
    let mut stats_values = Vec::new();
    let mut path_fracs = Vec::new();
    for dt in [cfg.crosscheck.dt_coarse, cfg.crosscheck.dt_fine] {
        let sim_cfg = SimConfig {
            t_horizon: cfg.simulation.t,
            dt,
            n_paths: cfg.crosscheck.paths,
            seed: root_seed.unwrap_or(0),
            scheme,
        };
        let sim = Simulator::new(&target.model, Some(&target.domain), sim_cfg)?;
        let stats = sim.violation_statistics(&starts, &deltas)?;
        path_fracs.push(
            stats
                .per_delta
                .first()
                .map(|d| d.path_violation_fraction)
                .unwrap_or(0.0),
        );
        stats_values.push(path_stats_value(&stats));
    }

    let verdict_invariant = report.aggregate == Aggregate::Invariant;
    let probe_positive = probe_worst.is_finite() && probe_worst > PROBE_TOL;
    let fine_violations = path_fracs.get(1).copied().unwrap_or(0.0);
    let coarse_violations = path_fracs.first().copied().unwrap_or(0.0);
    let mut disagreement = false;
    if verdict_invariant && probe_positive {
        disagreement = true;
        notes.push("generator probe is positive although the checker certified invariance".into());
    }
    if verdict_invariant && fine_violations > VIOLATION_CEILING.max(coarse_violations + 0.01) {
        disagreement = true;
        notes.push(
            "violations grow under step refinement although the checker certified invariance"
                .into(),
        );
    }
    if report.aggregate == Aggregate::NotInvariant && !probe_positive && fine_violations < 1e-3 {
        disagreement = true;
        notes.push(
            "checker rejects invariance but neither probe nor simulation shows a violation".into(),
        );
    }

    let value = json!({
        "schema_version": config::SCHEMA_VERSION,
        "command": "crosscheck",
        "target": target.description,
        "checker": invariance_report_value(&report),
        "max_principle": {
            "probes": Value::Array(probes),
            "worst": if probe_worst.is_finite() { num(probe_worst) } else { Value::Null },
            "tolerance": num(PROBE_TOL),
        },
        "simulation": {
            "dt_values": [num(cfg.crosscheck.dt_coarse), num(cfg.crosscheck.dt_fine)],
            "stats": Value::Array(stats_values),
        },
        "flags": {
            "disagreement": disagreement,
            "notes": notes,
        },
    });
    write_output(&args.out, &cfg.output, &to_canonical_json(&value))?;
    Ok(exit_code(report.aggregate))
}

fn run_plot(args: &SimulateArgs) -> Result<i32> {
    let cfg = load_config(&args.common.config)?;
    if let Some(cmd) = &cfg.command {
        if cmd != "simulate" && cmd != "plot" {
            bail!("config schema: `plot` expects a simulate-style config (command `{cmd}`)");
        }
    }
    let dir = base_dir(&args.common.config);
    let target = resolve_target(&cfg, &dir)?;
    let mut sim_cfg = cfg.simulation.to_config(args.common.seed.or(cfg.seed))?;
    if let Some(dt) = args.dt {
        sim_cfg.dt = dt;
    }
    if let Some(p) = args.paths {
        sim_cfg.n_paths = p;
    }
    let starts = resolve_starts(&cfg, &target.domain)?;
    let mut csv = String::from("dt,delta,step_violation_fraction,path_violation_fraction\n");
    let mut dt = sim_cfg.dt;
    for _ in 0..4 {
        let run_cfg = SimConfig { dt, ..sim_cfg };
        let sim = Simulator::new(&target.model, Some(&target.domain), run_cfg)?;
        let stats = sim.violation_statistics(&starts, &cfg.simulation.deltas)?;
        for d in &stats.per_delta {
            csv.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e}\n",
                dt, d.delta, d.step_violation_fraction, d.path_violation_fraction
            ));
        }
        dt *= 0.5;
    }
    write_output(&args.common.out, &cfg.output, &csv)?;
    Ok(0)
}
