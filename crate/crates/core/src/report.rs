//! Canonical JSON emission: stable key order and fixed float formatting with
//! 17 significant digits, so reports are byte-identical across runs and
//! worker counts and diffable in CI.

use nalgebra::DVector;
use serde_json::{json, Map, Value};

use crate::checker::InvarianceReport;
use crate::generator::ProbeResult;
use crate::model::AssumptionReport;
use crate::simulator::{MomentBoundCheck, PathStats};

/// Render a JSON value canonically: object keys sorted, every float printed
/// as `{:.16e}`, integers as integers.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out.push('\n');
    out
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().unwrap();
                out.push_str(&format_float(f));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string encoding"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("key encoding"));
                out.push(':');
                write_value(&map[key.as_str()], out);
            }
            out.push('}');
        }
    }
}

fn format_float(f: f64) -> String {
    if f.is_finite() {
        format!("{f:.16e}")
    } else {
        "null".to_string()
    }
}

pub fn num(f: f64) -> Value {
    serde_json::Number::from_f64(f).map_or(Value::Null, Value::Number)
}

pub fn vector(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

pub fn invariance_report_value(r: &InvarianceReport) -> Value {
    let verdicts: Vec<Value> = r
        .verdicts
        .iter()
        .map(|v| {
            json!({
                "x": vector(&v.x),
                "generators": Value::Array(v.generators.iter().map(vector).collect()),
                "cone_is_polyhedral": v.cone_is_polyhedral,
                "support": {
                    "worst_dist": num(v.support.worst_dist),
                    "threshold": num(v.support.threshold),
                    "pass": v.support.pass,
                    "approximate": v.support.approximate,
                },
                "integrability": {
                    "values": floats(&v.integrability.values),
                    "tail_bound": v.integrability.tail_bound.map_or(Value::Null, num),
                    "approximate": v.integrability.approximate,
                    "pass": v.integrability.pass,
                },
                "kernel": {
                    "residuals": floats(&v.kernel.residuals),
                    "threshold": num(v.kernel.threshold),
                    "pass": v.kernel.pass,
                },
                "drift": {
                    "margins": floats(&v.drift.margins),
                    "threshold": num(v.drift.threshold),
                    "pass": v.drift.pass,
                },
                "pass": v.pass,
            })
        })
        .collect();
    let offenders: Vec<Value> = r
        .worst_offenders
        .iter()
        .map(|o| {
            json!({
                "x": vector(&o.x),
                "condition": o.condition,
                "severity": num(o.severity),
            })
        })
        .collect();
    let strata: Map<String, Value> = r
        .coverage
        .strata
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    json!({
        "aggregate": r.aggregate.as_str(),
        "verdicts": Value::Array(verdicts),
        "worst_offenders": Value::Array(offenders),
        "coverage": {
            "vertices": r.coverage.vertices,
            "boundary": r.coverage.boundary,
            "interior": r.coverage.interior,
            "strata": Value::Object(strata),
        },
        "config": {
            "n_points": r.config.n_points,
            "seed": r.config.seed,
            "tol_support": num(r.config.tol_support),
            "tol_kernel": num(r.config.tol_kernel),
            "tol_drift": num(r.config.tol_drift),
            "active_tol": num(r.config.active_tol),
            "sampling_radius": num(r.config.sampling_radius),
            "interior_points": r.config.interior_points,
            "affine_fields": r.config.affine_fields.map_or(Value::Null, Value::Bool),
        },
        "approximate_jumps": r.approximate_jumps,
        "all_cones_polyhedral": r.all_cones_polyhedral,
        "note": "the universal quantifier over boundary points is discharged by sampling; \
                 cones are tested through their generators",
    })
}

pub fn path_stats_value(s: &PathStats) -> Value {
    let per_delta: Vec<Value> = s
        .per_delta
        .iter()
        .map(|d| {
            json!({
                "delta": num(d.delta),
                "step_violation_fraction": num(d.step_violation_fraction),
                "path_violation_fraction": num(d.path_violation_fraction),
                "exit_histogram": d.exit_histogram,
                "never_exited": d.never_exited,
            })
        })
        .collect();
    json!({
        "n_paths": s.n_paths,
        "n_steps": s.n_steps,
        "dt": num(s.dt),
        "t_horizon": num(s.t_horizon),
        "scheme": s.scheme.as_str(),
        "sup_sq_norm_mean": num(s.sup_sq_norm_mean),
        "sup_sq_norm_se": num(s.sup_sq_norm_se),
        "per_delta": Value::Array(per_delta),
        "overflow_count": s.overflow_count,
    })
}

pub fn assumption_report_value(a: &AssumptionReport) -> Value {
    json!({
        "quadratic_growth_worst_ratio": num(a.quadratic_growth_worst_ratio),
        "quadratic_growth_pass": a.quadratic_growth_pass,
        "log_moment_worst_ratio": num(a.log_moment_worst_ratio),
        "log_moment_pass": a.log_moment_pass,
        "symmetry_defect": num(a.symmetry_defect),
        "psd_defect": num(a.psd_defect),
        "psd_pass": a.psd_pass,
        "continuity_defect": num(a.continuity_defect),
        "points_probed": a.points_probed,
        "pass": a.pass,
    })
}

pub fn probe_result_value(x: &DVector<f64>, u: &DVector<f64>, p: &ProbeResult) -> Value {
    json!({
        "x": vector(x),
        "u": vector(u),
        "value": num(p.value),
        "width": num(p.width),
        "skipped": p.skipped,
    })
}

pub fn moment_bound_value(m: &MomentBoundCheck) -> Value {
    json!({
        "estimate": num(m.estimate),
        "std_error": num(m.std_error),
        "bound": num(m.bound),
        "pass": m.pass,
    })
}
