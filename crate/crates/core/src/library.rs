//! Canonical parameterized models with closed-form invariance criteria.
//!
//! Each builder records the analytic verdict (the oracle) together with a
//! short derivation note. The oracles are derived from the boundary
//! conditions by hand and act as ground truth for the checker: they are pure
//! functions of the parameters, never outputs of the code under test.

use nalgebra::{DMatrix, DVector};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::domain::ClosedDomain;
use crate::error::{Error, Result};
use crate::model::{GrowthParams, JumpAtom, JumpDiffusionModel, JumpSpec};
use crate::spectral::spectral_factor;

#[derive(Clone)]
pub struct LibraryModel {
    pub name: String,
    /// Fully resolved parameters, defaults included.
    pub params: BTreeMap<String, f64>,
    pub model: JumpDiffusionModel,
    pub domain: ClosedDomain,
    /// Closed-form invariance verdict for these parameters.
    pub oracle_invariant: bool,
    pub oracle_provenance: String,
    /// Whether drift and covariance are affine in the state, in which case
    /// vertex and facet checks already decide the linear conditions.
    pub affine_fields: bool,
    pub reference_grid: Vec<DVector<f64>>,
}

pub const MODEL_NAMES: [&str; 7] = [
    "bm",
    "ou",
    "cir",
    "cir_jumps",
    "jacobi",
    "affine_orthant_2d",
    "heston_like",
];

struct ParamReader<'a> {
    map: &'a BTreeMap<String, f64>,
    known: BTreeSet<String>,
}

impl<'a> ParamReader<'a> {
    fn new(map: &'a BTreeMap<String, f64>) -> Self {
        Self {
            map,
            known: BTreeSet::new(),
        }
    }

    fn get(&mut self, key: &str, default: f64) -> f64 {
        self.known.insert(key.to_string());
        self.map.get(key).copied().unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        for key in self.map.keys() {
            if !self.known.contains(key) {
                return Err(Error::InvalidParameter(format!(
                    "unknown parameter `{key}`"
                )));
            }
        }
        Ok(())
    }
}

fn grid_1d(lo: f64, hi: f64, n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| DVector::from_vec(vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]))
        .collect()
}

fn grid_2d(lo: (f64, f64), hi: (f64, f64), n: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(DVector::from_vec(vec![
                lo.0 + (hi.0 - lo.0) * i as f64 / (n - 1) as f64,
                lo.1 + (hi.1 - lo.1) * j as f64 / (n - 1) as f64,
            ]));
        }
    }
    out
}

/// Build a named library model. Unknown names and parameter-domain
/// violations are rejected.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<LibraryModel> {
    match name {
        "bm" => build_bm(params),
        "ou" => build_ou(params),
        "cir" => build_cir(params, false),
        "cir_jumps" => build_cir(params, true),
        "jacobi" => build_jacobi(params),
        "affine_orthant_2d" => build_affine_orthant(params),
        "heston_like" => build_heston_like(params),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn resolved(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect()
}

fn build_bm(params: &BTreeMap<String, f64>) -> Result<LibraryModel> {
    let mut p = ParamReader::new(params);
    let d = p.get("d", 1.0);
    p.finish()?;
    if d < 1.0 || d.fract() != 0.0 || d > 16.0 {
        return Err(Error::InvalidParameter("d must be an integer in [1, 16]".into()));
    }
    let dim = d as usize;
    let model = JumpDiffusionModel::new(
        dim,
        Arc::new(move |_x: &DVector<f64>| DVector::zeros(dim)),
        Arc::new(move |_x: &DVector<f64>| DMatrix::identity(dim, dim)),
    )
    .with_sigma(Arc::new(move |_x: &DVector<f64>| DMatrix::identity(dim, dim)))
    .with_jacobians(Arc::new(move |_x: &DVector<f64>| {
        vec![DMatrix::zeros(dim, dim); dim]
    }))
    .with_growth(GrowthParams {
        big_l: 2.0,
        big_l_tilde: 2.0,
        ..GrowthParams::default()
    });
    let grid = if dim == 1 {
        grid_1d(-5.0, 5.0, 41)
    } else {
        grid_2d((-5.0, -5.0), (5.0, 5.0), 9)
            .into_iter()
            .map(|v| {
                let mut full = DVector::zeros(dim);
                full[0] = v[0];
                full[1.min(dim - 1)] = v[1];
                full
            })
            .collect()
    };
    Ok(LibraryModel {
        name: "bm".into(),
        params: resolved(&[("d", d)]),
        model,
        domain: ClosedDomain::full_space(dim),
        oracle_invariant: true,
        oracle_provenance: "the state space is all of R^d, so every normal cone is trivial and \
                            no condition binds"
            .into(),
        affine_fields: true,
        reference_grid: grid,
    })
}

fn build_ou(params: &BTreeMap<String, f64>) -> Result<LibraryModel> {
    let mut p = ParamReader::new(params);
    let d = p.get("d", 1.0);
    let kappa = p.get("kappa", 1.0);
    let theta = p.get("theta", 0.0);
    let sigma = p.get("sigma", 1.0);
    p.finish()?;
    if d < 1.0 || d.fract() != 0.0 || d > 16.0 {
        return Err(Error::InvalidParameter("d must be an integer in [1, 16]".into()));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    let dim = d as usize;
    let s2 = sigma * sigma;
    let model = JumpDiffusionModel::new(
        dim,
        Arc::new(move |x: &DVector<f64>| (DVector::from_element(dim, theta) - x) * kappa),
        Arc::new(move |_x: &DVector<f64>| DMatrix::identity(dim, dim) * s2),
    )
    .with_sigma(Arc::new(move |_x: &DVector<f64>| {
        DMatrix::identity(dim, dim) * sigma
    }))
    .with_jacobians(Arc::new(move |_x: &DVector<f64>| {
        vec![DMatrix::zeros(dim, dim); dim]
    }))
    .with_growth(GrowthParams {
        big_l: 2.0 * kappa * kappa * theta.abs().max(1.0).powi(2) + s2 + 1.0,
        ..GrowthParams::default()
    });
    Ok(LibraryModel {
        name: "ou".into(),
        params: resolved(&[("d", d), ("kappa", kappa), ("theta", theta), ("sigma", sigma)]),
        model,
        domain: ClosedDomain::full_space(dim),
        oracle_invariant: true,
        oracle_provenance: "full state space: trivial normal cones".into(),
        affine_fields: true,
        reference_grid: grid_1d(-5.0, 5.0, 41)
            .into_iter()
            .map(|v| {
                let mut full = DVector::zeros(dim);
                full[0] = v[0];
                full
            })
            .collect(),
    })
}

fn build_cir(params: &BTreeMap<String, f64>, with_jumps: bool) -> Result<LibraryModel> {
    let mut p = ParamReader::new(params);
    let kappa = p.get("kappa", 1.0);
    let theta = p.get("theta", 1.0);
    let sigma = p.get("sigma", 1.0);
    let (jump_size, intensity) = if with_jumps {
        (p.get("jump_size", 0.5), p.get("intensity", 0.5))
    } else {
        (0.0, 0.0)
    };
    p.finish()?;
    if sigma < 0.0 {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    if with_jumps && (jump_size <= 0.0 || intensity <= 0.0) {
        return Err(Error::InvalidParameter(
            "jump_size and intensity must be > 0".into(),
        ));
    }
    let s2 = sigma * sigma;
    let mut model = JumpDiffusionModel::new(
        1,
        Arc::new(move |x: &DVector<f64>| DVector::from_vec(vec![kappa * (theta - x[0])])),
        Arc::new(move |x: &DVector<f64>| DMatrix::from_vec(1, 1, vec![s2 * x[0]])),
    )
    .with_sigma(Arc::new(move |x: &DVector<f64>| {
        DMatrix::from_vec(1, 1, vec![sigma * x[0].max(0.0).sqrt()])
    }))
    .with_jacobians(Arc::new(move |_x: &DVector<f64>| {
        vec![DMatrix::from_vec(1, 1, vec![s2])]
    }));
    let mut big_l = 2.0 * kappa * kappa * theta.abs().max(1.0).powi(2) + s2 + 1.0;
    if with_jumps {
        model = model.with_jumps(JumpSpec::from_atoms(vec![JumpAtom {
            mark: DVector::from_vec(vec![jump_size]),
            weight: intensity,
        }])?);
        big_l += intensity * jump_size * jump_size * (1.0 + jump_size.ln().max(0.0));
    }
    let model = model.with_growth(GrowthParams {
        big_l,
        big_l_tilde: big_l,
        ..GrowthParams::default()
    });
    let (name, oracle, prov, mut pmap) = if with_jumps {
        (
            "cir_jumps",
            kappa * theta >= intensity * jump_size,
            "at the left endpoint the covariance vanishes, so the compensated drift \
             kappa*theta - intensity*jump_size must be nonnegative; positive jumps always \
             land inside"
                .to_string(),
            resolved(&[
                ("kappa", kappa),
                ("theta", theta),
                ("sigma", sigma),
                ("jump_size", jump_size),
                ("intensity", intensity),
            ]),
        )
    } else {
        (
            "cir",
            kappa * theta >= 0.0,
            "the covariance vanishes at the left endpoint together with its range \
             projector, so invariance reduces to kappa*theta >= 0"
                .to_string(),
            resolved(&[("kappa", kappa), ("theta", theta), ("sigma", sigma)]),
        )
    };
    pmap.retain(|_, v| v.is_finite());
    Ok(LibraryModel {
        name: name.into(),
        params: pmap,
        model,
        domain: ClosedDomain::orthant(1),
        oracle_invariant: oracle,
        oracle_provenance: prov,
        affine_fields: true,
        reference_grid: grid_1d(0.0, 10.0, 101),
    })
}

fn build_jacobi(params: &BTreeMap<String, f64>) -> Result<LibraryModel> {
    let mut p = ParamReader::new(params);
    let kappa = p.get("kappa", 1.0);
    let theta = p.get("theta", 0.5);
    let sigma = p.get("sigma", 1.0);
    p.finish()?;
    if sigma < 0.0 {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    let s2 = sigma * sigma;
    let model = JumpDiffusionModel::new(
        1,
        Arc::new(move |x: &DVector<f64>| DVector::from_vec(vec![kappa * (theta - x[0])])),
        Arc::new(move |x: &DVector<f64>| {
            DMatrix::from_vec(1, 1, vec![s2 * x[0] * (1.0 - x[0])])
        }),
    )
    .with_sigma(Arc::new(move |x: &DVector<f64>| {
        DMatrix::from_vec(1, 1, vec![sigma * (x[0] * (1.0 - x[0])).max(0.0).sqrt()])
    }))
    .with_jacobians(Arc::new(move |x: &DVector<f64>| {
        vec![DMatrix::from_vec(1, 1, vec![s2 * (1.0 - 2.0 * x[0])])]
    }))
    .with_growth(GrowthParams {
        big_l: 2.0 * kappa * kappa * theta.abs().max(1.0).powi(2) + s2 + 1.0,
        ..GrowthParams::default()
    });
    Ok(LibraryModel {
        name: "jacobi".into(),
        params: resolved(&[("kappa", kappa), ("theta", theta), ("sigma", sigma)]),
        model,
        domain: ClosedDomain::hyper_box(DVector::zeros(1), DVector::from_element(1, 1.0))?,
        oracle_invariant: kappa * theta >= 0.0 && kappa * (1.0 - theta) >= 0.0,
        oracle_provenance: "the covariance and its range projector vanish at both endpoints, \
                            so the drift must point inward there: kappa*theta >= 0 at 0 and \
                            kappa*(1-theta) >= 0 at 1"
            .into(),
        affine_fields: false,
        reference_grid: grid_1d(0.0, 1.0, 101),
    })
}

fn build_affine_orthant(params: &BTreeMap<String, f64>) -> Result<LibraryModel> {
    let mut p = ParamReader::new(params);
    let kappa1 = p.get("kappa1", 1.0);
    let kappa2 = p.get("kappa2", 1.0);
    let theta1 = p.get("theta1", 0.5);
    let theta2 = p.get("theta2", 0.5);
    let sigma1 = p.get("sigma1", 0.6);
    let sigma2 = p.get("sigma2", 0.6);
    let beta12 = p.get("beta12", 0.0);
    let beta21 = p.get("beta21", 0.0);
    p.finish()?;
    if sigma1 < 0.0 || sigma2 < 0.0 {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    let (s1, s2) = (sigma1 * sigma1, sigma2 * sigma2);
    let model = JumpDiffusionModel::new(
        2,
        Arc::new(move |x: &DVector<f64>| {
            DVector::from_vec(vec![
                kappa1 * (theta1 - x[0]) + beta12 * x[1],
                kappa2 * (theta2 - x[1]) + beta21 * x[0],
            ])
        }),
        Arc::new(move |x: &DVector<f64>| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![s1 * x[0], s2 * x[1]]))
        }),
    )
    .with_sigma(Arc::new(move |x: &DVector<f64>| {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            sigma1 * x[0].max(0.0).sqrt(),
            sigma2 * x[1].max(0.0).sqrt(),
        ]))
    }))
    .with_jacobians(Arc::new(move |_x: &DVector<f64>| {
        vec![
            DMatrix::from_row_slice(2, 2, &[s1, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, s2]),
        ]
    }))
    .with_growth(GrowthParams {
        big_l: 4.0
            * (kappa1 * kappa1 + kappa2 * kappa2 + beta12 * beta12 + beta21 * beta21)
            * (theta1 * theta1 + theta2 * theta2).max(1.0)
            + s1
            + s2
            + 2.0,
        ..GrowthParams::default()
    });
    let oracle = kappa1 * theta1 >= 0.0
        && kappa2 * theta2 >= 0.0
        && beta12 >= 0.0
        && beta21 >= 0.0;
    Ok(LibraryModel {
        name: "affine_orthant_2d".into(),
        params: resolved(&[
            ("kappa1", kappa1),
            ("kappa2", kappa2),
            ("theta1", theta1),
            ("theta2", theta2),
            ("sigma1", sigma1),
            ("sigma2", sigma2),
            ("beta12", beta12),
            ("beta21", beta21),
        ]),
        model,
        domain: ClosedDomain::orthant(2),
        oracle_invariant: oracle,
        oracle_provenance: "on the facet x_i = 0 the diagonal covariance kills the outward \
                            normal and the correction is tangential, so the i-th drift \
                            component kappa_i*theta_i + beta_ij*x_j must be nonnegative for \
                            all x_j >= 0: both the level kappa_i*theta_i and the slope \
                            beta_ij must be nonnegative"
            .into(),
        affine_fields: true,
        reference_grid: grid_2d((0.0, 0.0), (10.0, 10.0), 11),
    })
}

fn build_heston_like(params: &BTreeMap<String, f64>) -> Result<LibraryModel> {
    let mut p = ParamReader::new(params);
    let kappa = p.get("kappa", 1.0);
    let theta = p.get("theta", 0.5);
    let sigma = p.get("sigma", 0.8);
    let rho = p.get("rho", -0.5);
    let mu = p.get("mu", 0.0);
    p.finish()?;
    if sigma < 0.0 {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter("rho must lie in [-1, 1]".into()));
    }
    // state (v, s): variance factor and log-price
    let m = DMatrix::from_row_slice(2, 2, &[sigma * sigma, rho * sigma, rho * sigma, 1.0]);
    let m_sqrt = spectral_factor(&m, 2.0 * f64::EPSILON)?.sigma_bar;
    let m_for_cov = m.clone();
    let m_for_jac = m.clone();
    let model = JumpDiffusionModel::new(
        2,
        Arc::new(move |x: &DVector<f64>| DVector::from_vec(vec![kappa * (theta - x[0]), mu])),
        Arc::new(move |x: &DVector<f64>| &m_for_cov * x[0]),
    )
    .with_sigma(Arc::new(move |x: &DVector<f64>| {
        &m_sqrt * x[0].max(0.0).sqrt()
    }))
    .with_jacobians(Arc::new(move |_x: &DVector<f64>| {
        (0..2)
            .map(|j| {
                let mut jac = DMatrix::zeros(2, 2);
                jac.set_column(0, &m_for_jac.column(j));
                jac
            })
            .collect()
    }))
    .with_growth(GrowthParams {
        big_l: 2.0 * kappa * kappa * theta.abs().max(1.0).powi(2)
            + mu * mu
            + (sigma + 1.0).powi(2)
            + 2.0,
        ..GrowthParams::default()
    });
    Ok(LibraryModel {
        name: "heston_like".into(),
        params: resolved(&[
            ("kappa", kappa),
            ("theta", theta),
            ("sigma", sigma),
            ("rho", rho),
            ("mu", mu),
        ]),
        model,
        domain: ClosedDomain::halfspace(DVector::from_vec(vec![-1.0, 0.0]), 0.0)?,
        oracle_invariant: kappa * theta >= 0.0,
        oracle_provenance: "the covariance is linear in the variance factor and vanishes on \
                            the boundary v = 0 together with its range projector, so only \
                            the variance drift binds: kappa*theta >= 0"
            .into(),
        affine_fields: true,
        reference_grid: grid_2d((0.0, -10.0), (10.0, 10.0), 9),
    })
}
