//! JSON run-configuration schema. Strict: unknown keys are rejected and the
//! schema version is checked before anything runs.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use invariance_core::checker::CheckerConfig;
use invariance_core::domain::ClosedDomain;
use invariance_core::library::{self, LibraryModel};
use invariance_core::model::{JumpAtom, JumpDiffusionModel, JumpSpec};
use invariance_core::semimartingale::{KernelAtom, SemimartingaleTriplet, TruncationFunction};
use invariance_core::simulator::{Scheme, SimConfig};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u64,
    /// Optional; when present it must match the CLI subcommand.
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub triplet: Option<TripletSpec>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub checker: CheckerSpec,
    #[serde(default)]
    pub simulation: SimSpec,
    #[serde(default)]
    pub crosscheck: CrosscheckSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Default report destination; the --out flag overrides it.
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Library model name; exactly one of `name` and `file` must be set.
    #[serde(default)]
    pub name: Option<String>,
    /// Path to a JSON file holding a ModelSpec.
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Replaces the model's jump atoms with these (identity amplitude).
    #[serde(default)]
    pub atoms: Option<Vec<AtomSpec>>,
    /// Constant vector added to the drift field.
    #[serde(default)]
    pub drift_offset: Option<Vec<f64>>,
    /// Declared tail bound when the atoms truncate an infinite-activity
    /// measure; marks all jump-dependent verdicts approximate.
    #[serde(default)]
    pub approximate_tail_bound: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub z: Vec<f64>,
    pub w: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletSpec {
    /// Named diffusion base: its drift is `b_tilde`, its covariance `c_tilde`.
    pub base: ModelSpec,
    #[serde(default)]
    pub kernel_atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub truncation: TruncationSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    #[serde(default = "default_identity_radius")]
    pub identity_radius: f64,
    #[serde(default = "default_support_radius")]
    pub support_radius: f64,
}

fn default_identity_radius() -> f64 {
    1.0
}
fn default_support_radius() -> f64 {
    2.0
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self {
            identity_radius: default_identity_radius(),
            support_radius: default_support_radius(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub normal: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<f64>,
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub factors: Option<Vec<DomainSpec>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckerSpec {
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tol_support: Option<f64>,
    #[serde(default)]
    pub tol_kernel: Option<f64>,
    #[serde(default)]
    pub tol_drift: Option<f64>,
    #[serde(default)]
    pub active_tol: Option<f64>,
    #[serde(default)]
    pub sampling_radius: Option<f64>,
    #[serde(default)]
    pub interior_points: Option<usize>,
    #[serde(default)]
    pub worst_k: Option<usize>,
    /// Numerical-rank tolerance for the pseudoinverse; d * eps when absent.
    #[serde(default)]
    pub rank_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_horizon")]
    pub t: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    /// Start points; defaults to the projection of the origin.
    #[serde(default)]
    pub x0: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-2
}
fn default_paths() -> usize {
    1000
}
fn default_scheme() -> String {
    "full_truncation_euler".into()
}
fn default_deltas() -> Vec<f64> {
    vec![0.05]
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            t: default_horizon(),
            dt: default_dt(),
            paths: default_paths(),
            scheme: default_scheme(),
            x0: None,
            deltas: default_deltas(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosscheckSpec {
    #[serde(default = "default_dt_coarse")]
    pub dt_coarse: f64,
    #[serde(default = "default_dt_fine")]
    pub dt_fine: f64,
    #[serde(default = "default_cross_paths")]
    pub paths: usize,
    #[serde(default = "default_probe_width")]
    pub probe_width: f64,
    #[serde(default = "default_probe_points")]
    pub probe_points: usize,
}

fn default_dt_coarse() -> f64 {
    1e-2
}
fn default_dt_fine() -> f64 {
    5e-3
}
fn default_cross_paths() -> usize {
    500
}
fn default_probe_width() -> f64 {
    0.5
}
fn default_probe_points() -> usize {
    8
}

impl Default for CrosscheckSpec {
    fn default() -> Self {
        Self {
            dt_coarse: default_dt_coarse(),
            dt_fine: default_dt_fine(),
            paths: default_cross_paths(),
            probe_width: default_probe_width(),
            probe_points: default_probe_points(),
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| anyhow!("config schema: {e}"))?;
    if cfg.schema_version != SCHEMA_VERSION {
        bail!(
            "config schema: unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        );
    }
    Ok(cfg)
}

/// A resolved model plus the domain it is checked against.
pub struct ResolvedModel {
    pub library: LibraryModel,
    pub model: JumpDiffusionModel,
    pub domain: ClosedDomain,
}

pub fn resolve_model_spec(spec: &ModelSpec, base_dir: &Path) -> Result<ResolvedModel> {
    let spec = if let Some(file) = &spec.file {
        if spec.name.is_some() {
            bail!("config schema: model accepts either `name` or `file`, not both");
        }
        let path = base_dir.join(file);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read model file {}", path.display()))?;
        let inner: ModelSpec =
            serde_json::from_str(&text).map_err(|e| anyhow!("model file schema: {e}"))?;
        if inner.file.is_some() {
            bail!("config schema: nested model `file` references are not supported");
        }
        inner
    } else {
        spec.clone()
    };
    let name = spec
        .name
        .as_deref()
        .ok_or_else(|| anyhow!("config schema: model requires `name` (or `file`)"))?;
    let library = library::build(name, &spec.params)?;
    let mut model = library.model.clone();
    let dim = model.dim;

    if let Some(atoms) = &spec.atoms {
        let mut jump_atoms = Vec::with_capacity(atoms.len());
        for a in atoms {
            if a.z.len() != dim {
                bail!(
                    "config schema: atom `z` has dimension {} but the model has dimension {dim}",
                    a.z.len()
                );
            }
            jump_atoms.push(JumpAtom {
                mark: DVector::from_vec(a.z.clone()),
                weight: a.w,
            });
        }
        let mut jumps = JumpSpec::from_atoms(jump_atoms)?;
        if spec.approximate_tail_bound.is_some() {
            jumps.approximate = true;
            jumps.tail_bound = spec.approximate_tail_bound;
        }
        model = model.with_jumps(jumps);
    } else if spec.approximate_tail_bound.is_some() {
        model.jumps.approximate = true;
        model.jumps.tail_bound = spec.approximate_tail_bound;
    }

    if let Some(offset) = &spec.drift_offset {
        if offset.len() != dim {
            bail!(
                "config schema: drift_offset has dimension {} but the model has dimension {dim}",
                offset.len()
            );
        }
        let shift = DVector::from_vec(offset.clone());
        let base = model.drift.clone();
        model.drift = Arc::new(move |x: &DVector<f64>| base(x) + &shift);
    }

    let domain = library.domain.clone();
    Ok(ResolvedModel {
        library,
        model,
        domain,
    })
}

pub fn resolve_triplet_spec(
    spec: &TripletSpec,
    base_dir: &Path,
) -> Result<(SemimartingaleTriplet, ResolvedModel)> {
    let resolved = resolve_model_spec(&spec.base, base_dir)?;
    if !resolved.model.jumps.is_empty() {
        bail!(
            "config schema: triplet base must be a pure diffusion; put jumps in `kernel_atoms`"
        );
    }
    let dim = resolved.model.dim;
    let truncation = TruncationFunction::ramp(
        spec.truncation.identity_radius,
        spec.truncation.support_radius,
    )?;
    let mut kernel = Vec::with_capacity(spec.kernel_atoms.len());
    for a in &spec.kernel_atoms {
        if a.z.len() != dim {
            bail!(
                "config schema: kernel atom `z` has dimension {} but the model has dimension {dim}",
                a.z.len()
            );
        }
        kernel.push(KernelAtom::constant(DVector::from_vec(a.z.clone()), a.w));
    }
    let trip = SemimartingaleTriplet {
        dim,
        drift_tilde: resolved.model.drift.clone(),
        cov_tilde: resolved.model.covariance.clone(),
        cov_jacobians: resolved.model.covariance_jacobians.clone(),
        kernel,
        truncation,
        growth: resolved.model.growth,
    };
    Ok((trip, resolved))
}

fn require<T: Clone>(opt: &Option<T>, kind: &str, key: &str) -> Result<T> {
    opt.clone()
        .ok_or_else(|| anyhow!("config schema: domain kind `{kind}` requires key `{key}`"))
}

fn forbid_extras(spec: &DomainSpec, allowed: &[&str]) -> Result<()> {
    let present: [(&str, bool); 9] = [
        ("normal", spec.normal.is_some()),
        ("offset", spec.offset.is_some()),
        ("a", spec.a.is_some()),
        ("c", spec.c.is_some()),
        ("lower", spec.lower.is_some()),
        ("upper", spec.upper.is_some()),
        ("center", spec.center.is_some()),
        ("radius", spec.radius.is_some()),
        ("factors", spec.factors.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            bail!(
                "config schema: key `{key}` does not apply to domain kind `{}`",
                spec.kind
            );
        }
    }
    Ok(())
}

pub fn resolve_domain_spec(spec: &DomainSpec) -> Result<ClosedDomain> {
    let domain = match spec.kind.as_str() {
        "halfspace" => {
            forbid_extras(spec, &["normal", "offset"])?;
            let a = require(&spec.normal, "halfspace", "normal")?;
            let c = require(&spec.offset, "halfspace", "offset")?;
            ClosedDomain::halfspace(DVector::from_vec(a), c)?
        }
        "polyhedron" => {
            forbid_extras(spec, &["a", "c"])?;
            let a = require(&spec.a, "polyhedron", "a")?;
            let c = require(&spec.c, "polyhedron", "c")?;
            if a.len() != c.len() {
                bail!("config schema: polyhedron `a` and `c` must have equal length");
            }
            let dim = spec
                .dim
                .or_else(|| a.first().map(|r| r.len()))
                .ok_or_else(|| anyhow!("config schema: polyhedron requires `dim` or rows"))?;
            let rows = a
                .into_iter()
                .zip(c)
                .map(|(row, off)| (DVector::from_vec(row), off))
                .collect();
            ClosedDomain::polyhedron(rows, dim)?
        }
        "full_space" => {
            forbid_extras(spec, &[])?;
            let dim = require(&spec.dim, "full_space", "dim")?;
            ClosedDomain::full_space(dim)
        }
        "box" => {
            forbid_extras(spec, &["lower", "upper"])?;
            let lower = require(&spec.lower, "box", "lower")?;
            let upper = require(&spec.upper, "box", "upper")?;
            ClosedDomain::hyper_box(DVector::from_vec(lower), DVector::from_vec(upper))?
        }
        "orthant" => {
            forbid_extras(spec, &[])?;
            let dim = require(&spec.dim, "orthant", "dim")?;
            ClosedDomain::orthant(dim)
        }
        "ball" => {
            forbid_extras(spec, &["center", "radius"])?;
            let center = require(&spec.center, "ball", "center")?;
            let radius = require(&spec.radius, "ball", "radius")?;
            ClosedDomain::ball(DVector::from_vec(center), radius)?
        }
        "simplex" => {
            forbid_extras(spec, &[])?;
            let dim = require(&spec.dim, "simplex", "dim")?;
            ClosedDomain::simplex(dim)
        }
        "product" => {
            forbid_extras(spec, &["factors"])?;
            let factors = require(&spec.factors, "product", "factors")?;
            let built: Result<Vec<ClosedDomain>> =
                factors.iter().map(resolve_domain_spec).collect();
            ClosedDomain::product(built?)?
        }
        "smooth_sublevel" => bail!(
            "config schema: domain kind `smooth_sublevel` needs callable fields and is only \
             available through the library API"
        ),
        other => bail!("config schema: unknown domain kind `{other}`"),
    };
    Ok(domain)
}

impl CheckerSpec {
    pub fn to_config(&self, root_seed: Option<u64>) -> CheckerConfig {
        let mut cfg = CheckerConfig::default();
        if let Some(p) = self.points {
            cfg.n_points = p;
        }
        if let Some(s) = self.seed.or(root_seed) {
            cfg.seed = s;
        }
        if let Some(t) = self.tol_support {
            cfg.tol_support = t;
        }
        if let Some(t) = self.tol_kernel {
            cfg.tol_kernel = t;
        }
        if let Some(t) = self.tol_drift {
            cfg.tol_drift = t;
        }
        if let Some(t) = self.active_tol {
            cfg.active_tol = t;
        }
        if let Some(r) = self.sampling_radius {
            cfg.sampling_radius = r;
        }
        if let Some(i) = self.interior_points {
            cfg.interior_points = i;
        }
        if let Some(k) = self.worst_k {
            cfg.worst_k = k;
        }
        if self.rank_tol.is_some() {
            cfg.rank_tol = self.rank_tol;
        }
        cfg
    }
}

impl SimSpec {
    pub fn to_config(&self, root_seed: Option<u64>) -> Result<SimConfig> {
        let scheme = match self.scheme.as_str() {
            "euler" => Scheme::Euler,
            "full_truncation_euler" => Scheme::FullTruncationEuler,
            other => bail!("config schema: unknown scheme `{other}`"),
        };
        Ok(SimConfig {
            t_horizon: self.t,
            dt: self.dt,
            n_paths: self.paths,
            seed: root_seed.unwrap_or(0),
            scheme,
        })
    }
}
