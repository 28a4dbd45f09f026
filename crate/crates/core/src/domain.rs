//! Closed subsets D of R^d: membership, metric projection, boundary
//! sampling, and first-order normal-cone generators.
//!
//! For polyhedral kinds the cone at a point is the nonnegative span of the
//! outward unit normals of the constraints active there, which is exact. For
//! smooth sublevel sets {g <= 0} the cone at a boundary point is the ray
//! spanned by the gradient. Sampled proximal normals are available as an
//! approximation where no closed form exists and are flagged as such.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::linalg::{nnls, unit_vector};

/// Scale-aware default base tolerance for activity and membership tests.
pub const DEFAULT_TOL_BASE: f64 = 1e-8;
/// Half-width of the sampling box used when a domain is unbounded.
pub const DEFAULT_SAMPLING_RADIUS: f64 = 10.0;

const SURFACE_MAX_ITER: usize = 200;

/// One normalized linear constraint `a . x <= c` with `||a|| = 1`.
#[derive(Clone, Debug)]
pub struct LinearRow {
    pub normal: DVector<f64>,
    pub offset: f64,
}

#[derive(Clone)]
pub enum DomainKind {
    /// Intersection of normalized halfspaces; no rows means all of R^d.
    Polyhedron { rows: Vec<LinearRow> },
    Halfspace { row: LinearRow },
    Box { lower: DVector<f64>, upper: DVector<f64> },
    Orthant,
    Ball { center: DVector<f64>, radius: f64 },
    /// Standard simplex {x >= 0, sum x = 1}.
    Simplex,
    /// {x : g(x) <= 0} with a user gradient.
    SmoothSublevel { g: ScalarField, grad: VectorField },
    Product { factors: Vec<ClosedDomain> },
}

#[derive(Clone)]
pub struct ClosedDomain {
    kind: DomainKind,
    dim: usize,
}

impl std::fmt::Debug for ClosedDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ClosedDomain({}, dim={})", self.kind_name(), self.dim)
    }
}

/// First-order normal cone at a base point, described by generators.
#[derive(Clone, Debug)]
pub struct NormalCone {
    pub base_point: DVector<f64>,
    /// Unit outward generators; empty iff the base point is interior.
    pub generators: Vec<DVector<f64>>,
    /// True when the cone is exactly the nonnegative span of the generators,
    /// false for sampled proximal approximations.
    pub is_polyhedral: bool,
}

fn normalize_row(a: DVector<f64>, c: f64) -> Result<LinearRow> {
    let n = a.norm();
    if n < 1e-14 {
        return Err(Error::InvalidParameter(
            "constraint row has zero normal".into(),
        ));
    }
    Ok(LinearRow {
        normal: a / n,
        offset: c / n,
    })
}

impl ClosedDomain {
    pub fn halfspace(a: DVector<f64>, c: f64) -> Result<Self> {
        let dim = a.len();
        Ok(Self {
            kind: DomainKind::Halfspace {
                row: normalize_row(a, c)?,
            },
            dim,
        })
    }

    /// Intersection of `a_i . x <= c_i`. An empty constraint list gives R^d.
    pub fn polyhedron(rows: Vec<(DVector<f64>, f64)>, dim: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for (a, c) in rows {
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.len(),
                });
            }
            out.push(normalize_row(a, c)?);
        }
        Ok(Self {
            kind: DomainKind::Polyhedron { rows: out },
            dim,
        })
    }

    pub fn full_space(dim: usize) -> Self {
        Self {
            kind: DomainKind::Polyhedron { rows: vec![] },
            dim,
        }
    }

    pub fn hyper_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::InvalidParameter("box has lower > upper".into()));
        }
        let dim = lower.len();
        Ok(Self {
            kind: DomainKind::Box { lower, upper },
            dim,
        })
    }

    pub fn orthant(dim: usize) -> Self {
        Self {
            kind: DomainKind::Orthant,
            dim,
        }
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InvalidParameter("ball radius must be > 0".into()));
        }
        let dim = center.len();
        Ok(Self {
            kind: DomainKind::Ball { center, radius },
            dim,
        })
    }

    pub fn simplex(dim: usize) -> Self {
        Self {
            kind: DomainKind::Simplex,
            dim,
        }
    }

    pub fn smooth_sublevel(g: ScalarField, grad: VectorField, dim: usize) -> Self {
        Self {
            kind: DomainKind::SmoothSublevel { g, grad },
            dim,
        }
    }

    pub fn product(factors: Vec<ClosedDomain>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter("empty product".into()));
        }
        let dim = factors.iter().map(|f| f.dim).sum();
        Ok(Self {
            kind: DomainKind::Product { factors },
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            DomainKind::Polyhedron { rows } if rows.is_empty() => "full_space",
            DomainKind::Polyhedron { .. } => "polyhedron",
            DomainKind::Halfspace { .. } => "halfspace",
            DomainKind::Box { .. } => "box",
            DomainKind::Orthant => "orthant",
            DomainKind::Ball { .. } => "ball",
            DomainKind::Simplex => "simplex",
            DomainKind::SmoothSublevel { .. } => "smooth_sublevel",
            DomainKind::Product { .. } => "product",
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// True when the domain has no boundary at all (only R^d qualifies among
    /// the supported kinds, possibly nested in products).
    pub fn is_boundaryless(&self) -> bool {
        match &self.kind {
            DomainKind::Polyhedron { rows } => rows.is_empty(),
            DomainKind::Product { factors } => factors.iter().all(|f| f.is_boundaryless()),
            _ => false,
        }
    }

    /// The linear constraint rows for polyhedral kinds, `None` otherwise.
    pub fn linear_rows(&self) -> Option<Vec<LinearRow>> {
        match &self.kind {
            DomainKind::Polyhedron { rows } => Some(rows.clone()),
            DomainKind::Halfspace { row } => Some(vec![row.clone()]),
            DomainKind::Orthant => Some(
                (0..self.dim)
                    .map(|i| LinearRow {
                        normal: -unit_vector(self.dim, i),
                        offset: 0.0,
                    })
                    .collect(),
            ),
            DomainKind::Box { lower, upper } => {
                let mut rows = Vec::with_capacity(2 * self.dim);
                for i in 0..self.dim {
                    if upper[i].is_finite() {
                        rows.push(LinearRow {
                            normal: unit_vector(self.dim, i),
                            offset: upper[i],
                        });
                    }
                    if lower[i].is_finite() {
                        rows.push(LinearRow {
                            normal: -unit_vector(self.dim, i),
                            offset: -lower[i],
                        });
                    }
                }
                Some(rows)
            }
            DomainKind::Simplex => {
                let d = self.dim;
                let s = (d as f64).sqrt();
                let ones = DVector::from_element(d, 1.0 / s);
                let mut rows: Vec<LinearRow> = (0..d)
                    .map(|i| LinearRow {
                        normal: -unit_vector(d, i),
                        offset: 0.0,
                    })
                    .collect();
                rows.push(LinearRow {
                    normal: ones.clone(),
                    offset: 1.0 / s,
                });
                rows.push(LinearRow {
                    normal: -ones,
                    offset: -1.0 / s,
                });
                Some(rows)
            }
            _ => None,
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> Result<bool> {
        self.check_dim(x)?;
        let tol = DEFAULT_TOL_BASE * 0.1 * (1.0 + x.norm());
        Ok(self.contains_with_tol(x, tol))
    }

    fn contains_with_tol(&self, x: &DVector<f64>, tol: f64) -> bool {
        match &self.kind {
            DomainKind::Polyhedron { rows } => rows
                .iter()
                .all(|r| r.normal.dot(x) <= r.offset + tol),
            DomainKind::Halfspace { row } => row.normal.dot(x) <= row.offset + tol,
            DomainKind::Box { lower, upper } => (0..self.dim)
                .all(|i| x[i] >= lower[i] - tol && x[i] <= upper[i] + tol),
            DomainKind::Orthant => x.iter().all(|&v| v >= -tol),
            DomainKind::Ball { center, radius } => (x - center).norm() <= radius + tol,
            DomainKind::Simplex => {
                x.iter().all(|&v| v >= -tol) && (x.sum() - 1.0).abs() <= tol * (self.dim as f64)
            }
            DomainKind::SmoothSublevel { g, .. } => g(x) <= tol,
            DomainKind::Product { factors } => {
                let mut off = 0;
                factors.iter().all(|f| {
                    let slice = x.rows(off, f.dim).clone_owned();
                    off += f.dim;
                    f.contains_with_tol(&slice, tol)
                })
            }
        }
    }

    /// Metric projection onto the domain. Exact for the closed-form kinds,
    /// Dykstra iteration for general polyhedra, and a surface Newton sweep
    /// for smooth sublevel sets.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(y)?;
        match &self.kind {
            DomainKind::Halfspace { row } => Ok(project_halfspace(y, row)),
            DomainKind::Box { lower, upper } => Ok(DVector::from_fn(self.dim, |i, _| {
                y[i].max(lower[i]).min(upper[i])
            })),
            DomainKind::Orthant => Ok(y.map(|v| v.max(0.0))),
            DomainKind::Ball { center, radius } => {
                let d = y - center;
                let n = d.norm();
                if n <= *radius {
                    Ok(y.clone())
                } else {
                    Ok(center + d * (*radius / n))
                }
            }
            DomainKind::Simplex => Ok(project_simplex(y)),
            DomainKind::Polyhedron { rows } => {
                if rows.is_empty() || self.contains_with_tol(y, 0.0) {
                    return Ok(y.clone());
                }
                project_polyhedron_rows(y, rows)
            }
            DomainKind::SmoothSublevel { g, grad } => project_smooth(y, g, grad),
            DomainKind::Product { factors } => {
                let mut out = DVector::zeros(self.dim);
                let mut off = 0;
                for f in factors {
                    let slice = y.rows(off, f.dim).clone_owned();
                    let p = f.project(&slice)?;
                    out.rows_mut(off, f.dim).copy_from(&p);
                    off += f.dim;
                }
                Ok(out)
            }
        }
    }

    /// Distance to the domain via the projection.
    pub fn dist(&self, y: &DVector<f64>) -> Result<f64> {
        Ok((y - self.project(y)?).norm())
    }

    /// Normal-cone generators at `x`, which must lie within
    /// `tol_base * (1 + ||x||)` of the domain.
    pub fn normal_cone_generators(&self, x: &DVector<f64>, tol_base: f64) -> Result<NormalCone> {
        self.check_dim(x)?;
        let tol = tol_base * (1.0 + x.norm());
        let d = self.dist(x)?;
        if d > tol {
            return Err(Error::OutsideDomain { dist: d, tol });
        }
        let generators = self.generators_at(x, tol)?;
        Ok(NormalCone {
            base_point: x.clone(),
            generators,
            is_polyhedral: true,
        })
    }

    fn generators_at(&self, x: &DVector<f64>, tol: f64) -> Result<Vec<DVector<f64>>> {
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                let dvec = x - center;
                let n = dvec.norm();
                if n >= radius - tol {
                    if n < 1e-14 {
                        return Err(Error::DegenerateGradient { norm: n });
                    }
                    Ok(vec![dvec / n])
                } else {
                    Ok(vec![])
                }
            }
            DomainKind::SmoothSublevel { g, grad } => {
                let gx = g(x);
                let gr = grad(x);
                let gn = gr.norm();
                if gx.abs() <= tol * (1.0 + gn) {
                    if gn < 1e-12 {
                        return Err(Error::DegenerateGradient { norm: gn });
                    }
                    Ok(vec![gr / gn])
                } else {
                    Ok(vec![])
                }
            }
            DomainKind::Product { factors } => {
                let mut gens = Vec::new();
                let mut off = 0;
                for f in factors {
                    let slice = x.rows(off, f.dim).clone_owned();
                    for g in f.generators_at(&slice, tol)? {
                        let mut full = DVector::zeros(self.dim);
                        full.rows_mut(off, f.dim).copy_from(&g);
                        gens.push(full);
                    }
                    off += f.dim;
                }
                Ok(gens)
            }
            _ => {
                let rows = self.linear_rows().expect("linear kind");
                Ok(rows
                    .iter()
                    .filter(|r| (r.normal.dot(x) - r.offset).abs() <= tol)
                    .map(|r| r.normal.clone())
                    .collect())
            }
        }
    }

    /// Vertices (zero-dimensional faces), when the kind admits them. Returns
    /// an empty list for kinds without vertices.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        match &self.kind {
            DomainKind::Box { lower, upper } => {
                if self.dim > 16 {
                    return vec![];
                }
                let mut out = Vec::with_capacity(1 << self.dim);
                for mask in 0u32..(1 << self.dim) {
                    let v = DVector::from_fn(self.dim, |i, _| {
                        if mask >> i & 1 == 1 {
                            upper[i]
                        } else {
                            lower[i]
                        }
                    });
                    if v.iter().all(|t| t.is_finite()) {
                        out.push(v);
                    }
                }
                dedupe_points(out)
            }
            DomainKind::Orthant => vec![DVector::zeros(self.dim)],
            DomainKind::Simplex => (0..self.dim)
                .map(|i| unit_vector(self.dim, i))
                .collect(),
            DomainKind::Halfspace { row } => {
                if self.dim == 1 {
                    vec![row.normal.clone() * row.offset]
                } else {
                    vec![]
                }
            }
            DomainKind::Ball { center, radius } => {
                if self.dim == 1 {
                    vec![
                        center.add_scalar(-radius),
                        center.add_scalar(*radius),
                    ]
                } else {
                    vec![]
                }
            }
            DomainKind::Polyhedron { rows } => enumerate_polyhedron_vertices(rows, self.dim),
            DomainKind::SmoothSublevel { .. } => vec![],
            DomainKind::Product { factors } => {
                let per: Vec<Vec<DVector<f64>>> = factors.iter().map(|f| f.vertices()).collect();
                if per.iter().any(|v| v.is_empty()) {
                    return vec![];
                }
                let total: usize = per.iter().map(|v| v.len()).product();
                if total > 4096 {
                    return vec![];
                }
                let mut out = vec![DVector::zeros(self.dim); total];
                let mut stride = 1usize;
                let mut off = 0usize;
                for (f, verts) in factors.iter().zip(&per) {
                    for (k, item) in out.iter_mut().enumerate() {
                        let pick = (k / stride) % verts.len();
                        item.rows_mut(off, f.dim).copy_from(&verts[pick]);
                    }
                    stride *= verts.len();
                    off += f.dim;
                }
                out
            }
        }
    }

    /// Deterministic boundary sample of `n` points: vertices first, then
    /// stratified facet points at several scales, then projected rejection
    /// samples from a box of half-width `DEFAULT_SAMPLING_RADIUS`.
    pub fn sample_boundary(&self, n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        self.sample_boundary_in(n, seed, DEFAULT_SAMPLING_RADIUS)
    }

    pub fn sample_boundary_in(&self, n: usize, seed: u64, radius: f64) -> Result<Vec<DVector<f64>>> {
        if self.is_boundaryless() {
            return Err(Error::EmptyBoundary);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut out: Vec<DVector<f64>> = Vec::with_capacity(n);

        match &self.kind {
            DomainKind::Ball { center, radius: r } => {
                while out.len() < n {
                    let dir = random_unit(&mut rng, self.dim);
                    out.push(center + dir * *r);
                }
                return Ok(out);
            }
            DomainKind::Product { factors } => {
                let anchor = self.project(&DVector::zeros(self.dim))?;
                let k = factors.len();
                let mut attempts = 0usize;
                while out.len() < n && attempts < 200 * n.max(8) {
                    let forced = attempts % k;
                    let mut point = DVector::zeros(self.dim);
                    let mut off = 0;
                    let mut ok = true;
                    for (j, f) in factors.iter().enumerate() {
                        let sub = if j == forced && !f.is_boundaryless() {
                            match f.sample_boundary_in(1, rng.random::<u64>(), radius) {
                                Ok(mut v) => v.pop().unwrap(),
                                Err(_) => {
                                    ok = false;
                                    break;
                                }
                            }
                        } else {
                            // any point of the factor: project a box draw
                            let anchor_f = anchor.rows(off, f.dim).clone_owned();
                            let y = DVector::from_fn(f.dim, |i, _| {
                                anchor_f[i] + rng.random_range(-radius..radius)
                            });
                            f.project(&y)?
                        };
                        point.rows_mut(off, f.dim).copy_from(&sub);
                        off += f.dim;
                    }
                    attempts += 1;
                    if ok && !self.generators_at(&point, DEFAULT_TOL_BASE * (1.0 + point.norm()))?.is_empty() {
                        push_if_new(&mut out, point);
                    }
                }
                if out.is_empty() {
                    return Err(Error::EmptyBoundary);
                }
                return Ok(out);
            }
            _ => {}
        }

        for v in self.vertices() {
            if out.len() >= n {
                break;
            }
            push_if_new(&mut out, v);
        }

        // stratified facet points at multiple scales along tangent rays,
        // included so far-facet drift violations stay detectable
        if let Some(rows) = self.linear_rows() {
            'rows: for row in rows.iter().take(64) {
                let base = &row.normal * row.offset;
                for cand in facet_ray_candidates(&base, &row.normal, radius) {
                    if out.len() >= n {
                        break 'rows;
                    }
                    let p = self.project(&cand)?;
                    let tol = DEFAULT_TOL_BASE * (1.0 + p.norm());
                    if (row.normal.dot(&p) - row.offset).abs() <= tol
                        && !self.generators_at(&p, tol)?.is_empty()
                    {
                        push_if_new(&mut out, p);
                    }
                }
            }
        }

        let anchor = self.project(&DVector::zeros(self.dim))?;
        let mut attempts = 0usize;
        let max_attempts = 500 * n.max(8);
        while out.len() < n && attempts < max_attempts {
            attempts += 1;
            let y = DVector::from_fn(self.dim, |i, _| {
                anchor[i] + rng.random_range(-radius..radius)
            });
            let p = match &self.kind {
                DomainKind::SmoothSublevel { g, grad } => match surface_newton(&y, g, grad) {
                    Ok(p) => p,
                    Err(_) => continue,
                },
                _ => self.project(&y)?,
            };
            let tol = DEFAULT_TOL_BASE * (1.0 + p.norm());
            if !self.generators_at(&p, tol)?.is_empty() {
                // allow repeats once the deterministic strata are exhausted,
                // but prefer new points
                if !push_if_new(&mut out, p.clone()) && attempts > max_attempts / 2 {
                    out.push(p);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyBoundary);
        }
        // top up by repeating the sample cyclically if rejection stalled
        let mut k = 0usize;
        while out.len() < n {
            let p = out[k % out.len()].clone();
            out.push(p);
            k += 1;
        }
        Ok(out)
    }

    /// Sampled proximal normals: directions `(y - proj(y)) / ||.||` for
    /// perturbed outside points `y` near `x`. Approximate by construction,
    /// so the returned cone is flagged non-polyhedral.
    pub fn proximal_normals(
        &self,
        x: &DVector<f64>,
        delta: f64,
        n_dirs: usize,
        seed: u64,
    ) -> Result<NormalCone> {
        self.check_dim(x)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut gens: Vec<DVector<f64>> = Vec::new();
        for _ in 0..n_dirs {
            let dir = random_unit(&mut rng, self.dim);
            let y = x + dir * delta;
            if self.contains(&y)? {
                continue;
            }
            let p = self.project(&y)?;
            let u = &y - &p;
            let norm = u.norm();
            if norm < delta * 1e-6 {
                continue;
            }
            let u = u / norm;
            if gens.iter().all(|g| g.dot(&u) < 1.0 - 1e-10) {
                gens.push(u);
            }
        }
        Ok(NormalCone {
            base_point: x.clone(),
            generators: gens,
            is_polyhedral: false,
        })
    }
}

/// Whether `v` lies in the nonnegative span of `generators`, decided by a
/// small nonnegative least-squares solve.
pub fn cone_contains(generators: &[DVector<f64>], v: &DVector<f64>, tol: f64) -> bool {
    if generators.is_empty() {
        return v.norm() <= tol;
    }
    let d = v.len();
    let mut g = DMatrix::zeros(d, generators.len());
    for (j, gen) in generators.iter().enumerate() {
        g.set_column(j, gen);
    }
    let (_, resid) = nnls(&g, v, 200);
    resid <= tol
}

fn project_halfspace(y: &DVector<f64>, row: &LinearRow) -> DVector<f64> {
    let excess = row.normal.dot(y) - row.offset;
    if excess <= 0.0 {
        y.clone()
    } else {
        y - &row.normal * excess
    }
}

/// Euclidean projection onto the standard simplex (sort-and-threshold).
fn project_simplex(y: &DVector<f64>) -> DVector<f64> {
    let d = y.len();
    let mut u: Vec<f64> = y.iter().cloned().collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            tau = t;
        }
    }
    DVector::from_fn(d, |i, _| (y[i] - tau).max(0.0))
}

/// Projection onto an intersection of halfspaces as a least-distance
/// program: with `w = x - y` the problem is `min ||w||` subject to
/// `-A w >= A y - c`, which reduces to one nonnegative least-squares solve
/// on the augmented matrix `[-A^T; (A y - c)^T]` against the last unit
/// vector. Finite termination, no alternating-projection stalls.
fn project_polyhedron_rows(y: &DVector<f64>, rows: &[LinearRow]) -> Result<DVector<f64>> {
    let m = rows.len();
    let d = y.len();
    let max_iter = 10 * m + 50;
    let mut e = DMatrix::zeros(d + 1, m);
    for (j, row) in rows.iter().enumerate() {
        for i in 0..d {
            e[(i, j)] = -row.normal[i];
        }
        e[(d, j)] = row.normal.dot(y) - row.offset;
    }
    let f = unit_vector(d + 1, d);
    let (u, _) = nnls(&e, &f, max_iter);
    let r = &e * &u - &f;
    let denom = r[d];
    if denom.abs() < 1e-12 {
        return Err(Error::ProjectionDidNotConverge {
            residual: r.norm(),
            iterations: max_iter,
        });
    }
    let w = DVector::from_fn(d, |i, _| -r[i] / denom);
    let x = y + w;
    let viol = rows
        .iter()
        .map(|r| (r.normal.dot(&x) - r.offset).max(0.0))
        .fold(0.0f64, f64::max);
    if viol > 1e-9 * (1.0 + y.norm()) {
        return Err(Error::ProjectionDidNotConverge {
            residual: viol,
            iterations: max_iter,
        });
    }
    Ok(x)
}

/// Pull a point to the zero level set of g along the gradient (Newton).
fn surface_newton(y: &DVector<f64>, g: &ScalarField, grad: &VectorField) -> Result<DVector<f64>> {
    let mut x = y.clone();
    for _ in 0..SURFACE_MAX_ITER {
        let gx = g(&x);
        if !gx.is_finite() {
            return Err(Error::NonFiniteField);
        }
        if gx.abs() <= 1e-13 * (1.0 + x.norm()) {
            return Ok(x);
        }
        let gr = grad(&x);
        let gn2 = gr.norm_squared();
        if gn2 < 1e-24 {
            return Err(Error::DegenerateGradient { norm: gn2.sqrt() });
        }
        x -= gr * (gx / gn2);
    }
    let residual = g(&x).abs();
    Err(Error::ProjectionDidNotConverge {
        residual,
        iterations: SURFACE_MAX_ITER,
    })
}

/// Projection onto {g <= 0}: inside points are fixed; outside points are
/// driven to the surface and then polished with alternating tangential pulls
/// toward the query point.
fn project_smooth(y: &DVector<f64>, g: &ScalarField, grad: &VectorField) -> Result<DVector<f64>> {
    if g(y) <= 0.0 {
        return Ok(y.clone());
    }
    let mut x = surface_newton(y, g, grad)?;
    for _ in 0..SURFACE_MAX_ITER {
        let gr = grad(&x);
        let gn = gr.norm();
        if gn < 1e-12 {
            return Err(Error::DegenerateGradient { norm: gn });
        }
        let nrm = &gr / gn;
        let gap = y - &x;
        let tang = &gap - &nrm * nrm.dot(&gap);
        if tang.norm() <= 1e-12 * (1.0 + y.norm()) {
            return Ok(x);
        }
        x += tang * 0.5;
        x = surface_newton(&x, g, grad)?;
    }
    Ok(x)
}

fn enumerate_polyhedron_vertices(rows: &[LinearRow], dim: usize) -> Vec<DVector<f64>> {
    let m = rows.len();
    if m < dim {
        return vec![];
    }
    let mut combos: Vec<Vec<usize>> = Vec::new();
    let mut idx: Vec<usize> = (0..dim).collect();
    let cap = 100_000usize;
    loop {
        combos.push(idx.clone());
        if combos.len() >= cap {
            break;
        }
        // next combination in lexicographic order
        let mut i = dim;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            if idx[i] != i + m - dim {
                idx[i] += 1;
                for j in i + 1..dim {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return finish_vertices(rows, dim, combos);
            }
        }
        if idx[0] > m - dim {
            break;
        }
    }
    finish_vertices(rows, dim, combos)
}

fn finish_vertices(rows: &[LinearRow], dim: usize, combos: Vec<Vec<usize>>) -> Vec<DVector<f64>> {
    let mut verts = Vec::new();
    for combo in combos {
        let mut a = DMatrix::zeros(dim, dim);
        let mut c = DVector::zeros(dim);
        for (k, &i) in combo.iter().enumerate() {
            a.row_mut(k).copy_from(&rows[i].normal.transpose());
            c[k] = rows[i].offset;
        }
        let Some(sol) = a.lu().solve(&c) else { continue };
        let tol = 1e-9 * (1.0 + sol.norm());
        if rows.iter().all(|r| r.normal.dot(&sol) <= r.offset + tol) {
            verts.push(sol);
        }
    }
    dedupe_points(verts)
}

fn dedupe_points(points: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for p in points {
        push_if_new(&mut out, p);
    }
    out
}

fn push_if_new(out: &mut Vec<DVector<f64>>, p: DVector<f64>) -> bool {
    let tol = 1e-9 * (1.0 + p.norm());
    if out.iter().any(|q| (q - &p).norm() <= tol) {
        false
    } else {
        out.push(p);
        true
    }
}

fn facet_ray_candidates(base: &DVector<f64>, normal: &DVector<f64>, radius: f64) -> Vec<DVector<f64>> {
    let d = base.len();
    let mut cands = vec![base.clone()];
    for l in 0..d {
        let e = unit_vector(d, l);
        let t = &e - normal * normal[l];
        let tn = t.norm();
        if tn < 1e-8 {
            continue;
        }
        let t = t / tn;
        for s in [0.15, 0.45, 0.95, -0.15, -0.45, -0.95] {
            cands.push(base + &t * (s * radius));
        }
    }
    cands
}

fn random_unit(rng: &mut ChaCha12Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            z
        });
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}
