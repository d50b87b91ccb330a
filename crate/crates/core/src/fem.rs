//! P1 Galerkin assembly for the bilinear form
//! `(alpha grad u, grad v) + (beta u, v) + (sigma u, v)_boundary`
//! and the matching load functionals.
//!
//! Triangles use the three-point edge-midpoint rule (exact for quadratics);
//! boundary edges use two-point Gauss (exact for cubics). Discontinuous
//! coefficients are sampled at the quadrature points.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryRegion, Mesh, Point};
use crate::sparse::{self, CsrMatrix};

/// Barycentric coordinates of the edge midpoints of a triangle.
pub const TRIANGLE_QUAD: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// Two-point Gauss abscissae on `[0,1]`; each carries weight `L/2`.
pub fn edge_quad() -> [f64; 2] {
    let d = 0.5 / 3f64.sqrt();
    [0.5 - d, 0.5 + d]
}

/// Piecewise-linear function given by its nodal values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Lagrange interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        Self(mesh.nodes().iter().map(|&p| f(p)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.0.len() });
        }
        if let Some(v) = self.0.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficient(format!("non-finite nodal value {v}")));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &NodalField) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    pub fn sub(&self, other: &NodalField) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type MatrixFn = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// Scalar coefficient, either given pointwise or as a P1 field on the assembly mesh.
#[derive(Clone)]
pub enum ScalarCoefficient {
    Constant(f64),
    Function(ScalarFn),
    Nodal(NodalField),
}

impl ScalarCoefficient {
    pub fn function(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    /// Value at a point of triangle `tri` with barycentric coordinates `bary`.
    #[inline]
    pub fn eval(&self, tri: &[usize; 3], bary: &[f64; 3], p: Point) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Function(f) => f(p),
            Self::Nodal(v) => {
                let v = v.values();
                bary[0] * v[tri[0]] + bary[1] * v[tri[1]] + bary[2] * v[tri[2]]
            }
        }
    }

    /// Value at a point on the boundary edge `(a, b)` at parameter `s`.
    #[inline]
    pub fn eval_edge(&self, a: usize, b: usize, s: f64, p: Point) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Function(f) => f(p),
            Self::Nodal(v) => (1.0 - s) * v.values()[a] + s * v.values()[b],
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Constant(c) if *c == 0.0)
    }

    fn check_nodal(&self, n: usize) -> Result<()> {
        match self {
            Self::Nodal(v) => v.check_len(n),
            _ => Ok(()),
        }
    }
}

impl fmt::Debug for ScalarCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Function(_) => f.write_str("Function(..)"),
            Self::Nodal(v) => write!(f, "Nodal({} values)", v.len()),
        }
    }
}

impl From<f64> for ScalarCoefficient {
    fn from(c: f64) -> Self {
        Self::Constant(c)
    }
}

impl From<NodalField> for ScalarCoefficient {
    fn from(v: NodalField) -> Self {
        Self::Nodal(v)
    }
}

/// Symmetric 2x2 diffusion matrix.
#[derive(Clone)]
pub enum MatrixCoefficient {
    Constant([[f64; 2]; 2]),
    Function(MatrixFn),
}

impl MatrixCoefficient {
    pub fn identity() -> Self {
        Self::Constant([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn function(f: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, p: Point) -> [[f64; 2]; 2] {
        match self {
            Self::Constant(m) => *m,
            Self::Function(f) => f(p),
        }
    }
}

impl fmt::Debug for MatrixCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => write!(f, "Constant({m:?})"),
            Self::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Smallest eigenvalue of a symmetric 2x2 matrix.
pub fn min_eigenvalue(m: &[[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let diff = m[0][0] - m[1][1];
    0.5 * (tr - (diff * diff + 4.0 * m[0][1] * m[0][1]).sqrt())
}

/// Piecewise-constant boundary datum, one value per boundary edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFlux(Vec<f64>);

impl EdgeFlux {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self(vec![0.0; mesh.boundary_edges().len()])
    }

    /// Samples `g(midpoint, side)` on every boundary edge.
    pub fn from_fn(mesh: &Mesh, g: impl Fn(Point, crate::mesh::Side) -> f64) -> Self {
        Self(mesh.boundary_edges().iter().map(|e| g(mesh.edge_midpoint(e), e.side)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Copy with the edges on `region` set to zero.
    pub fn without(&self, mesh: &Mesh, region: &BoundaryRegion) -> Self {
        Self(
            self.0
                .iter()
                .zip(mesh.boundary_edges())
                .map(|(&v, e)| if region.contains(e.side) { 0.0 } else { v })
                .collect(),
        )
    }

    pub fn check_len(&self, mesh: &Mesh) -> Result<()> {
        let n = mesh.boundary_edges().len();
        if self.0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.0.len() });
        }
        Ok(())
    }
}

/// Mesh plus the cached geometry and sparsity pattern used by all assembly routines.
#[derive(Debug, Clone)]
pub struct FemSpace {
    mesh: Mesh,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
    pattern: CsrMatrix,
    tri_slots: Vec<[usize; 9]>,
    edge_slots: Vec<[usize; 4]>,
    mass: CsrMatrix,
}

impl FemSpace {
    pub fn new(mesh: Mesh) -> Self {
        let n = mesh.node_count();
        let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
        for t in mesh.triangles() {
            for &a in t {
                for &b in t {
                    triplets.push((a, b, 0.0));
                }
            }
        }
        let pattern = CsrMatrix::from_triplets(n, &triplets).expect("triangle indices are in range");
        let tri_slots = mesh
            .triangles()
            .iter()
            .map(|t| {
                let mut s = [0; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        s[3 * i + j] = pattern.find(t[i], t[j]).unwrap();
                    }
                }
                s
            })
            .collect();
        let edge_slots = mesh
            .boundary_edges()
            .iter()
            .map(|e| {
                let [a, b] = e.nodes;
                [pattern.find(a, a).unwrap(), pattern.find(a, b).unwrap(), pattern.find(b, a).unwrap(), pattern.find(b, b).unwrap()]
            })
            .collect();
        let mut areas = Vec::with_capacity(mesh.triangles().len());
        let mut grads = Vec::with_capacity(mesh.triangles().len());
        for t in 0..mesh.triangles().len() {
            let v = mesh.triangle_vertices(t);
            let (area, g) = barycentric_gradients(&v);
            areas.push(area);
            grads.push(g);
        }
        let mut space = Self { mesh, areas, grads, pattern, tri_slots, edge_slots, mass: CsrMatrix::identity(0) };
        space.mass = space.pattern.with_values(space.reaction_values(&ScalarCoefficient::Constant(1.0)));
        space
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    /// Consistent P1 mass matrix.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    /// Physical coordinates of the quadrature points of triangle `t`.
    pub fn quad_points(&self, t: usize) -> [Point; 3] {
        let v = self.mesh.triangle_vertices(t);
        TRIANGLE_QUAD.map(|b| [b[0] * v[0][0] + b[1] * v[1][0] + b[2] * v[2][0], b[0] * v[0][1] + b[1] * v[1][1] + b[2] * v[2][1]])
    }

    /// Diffusion and boundary-reaction part `(alpha grad u, grad v) + (sigma u, v)_boundary`.
    pub(crate) fn diffusion_values(&self, alpha: &MatrixCoefficient, sigma: &ScalarCoefficient) -> Result<Vec<f64>> {
        sigma.check_nodal(self.node_count())?;
        let mut vals = vec![0.0; self.pattern.nnz()];
        for t in 0..self.mesh.triangles().len() {
            let qp = self.quad_points(t);
            let mut a_q = [[[0.0; 2]; 2]; 3];
            for (q, p) in qp.iter().enumerate() {
                let a = alpha.eval(*p);
                if (a[0][1] - a[1][0]).abs() > 1e-14 * (a[0][1].abs() + 1.0) {
                    return Err(Error::InvalidCoefficient(format!("diffusion matrix not symmetric at {p:?}")));
                }
                let lam = min_eigenvalue(&a);
                if !(lam > 0.0) || !lam.is_finite() {
                    return Err(Error::InvalidCoefficient(format!("diffusion matrix not elliptic at {p:?} (min eigenvalue {lam})")));
                }
                a_q[q] = a;
            }
            let k = local_stiffness(self.areas[t], &self.grads[t], &a_q);
            for i in 0..3 {
                for j in 0..3 {
                    vals[self.tri_slots[t][3 * i + j]] += k[i][j];
                }
            }
        }
        if !sigma.is_zero() {
            let gq = edge_quad();
            for (e, edge) in self.mesh.boundary_edges().iter().enumerate() {
                let [a, b] = edge.nodes;
                let pa = self.mesh.node(a);
                let pb = self.mesh.node(b);
                let mut s_q = [0.0; 2];
                for (q, &s) in gq.iter().enumerate() {
                    let p = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                    let v = sigma.eval_edge(a, b, s, p);
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(Error::InvalidCoefficient(format!("sigma must be non-negative, got {v} at {p:?}")));
                    }
                    s_q[q] = v;
                }
                let m = local_edge_mass(self.mesh.edge_length(edge), &s_q);
                let slots = self.edge_slots[e];
                vals[slots[0]] += m[0][0];
                vals[slots[1]] += m[0][1];
                vals[slots[2]] += m[1][0];
                vals[slots[3]] += m[1][1];
            }
        }
        Ok(vals)
    }

    /// Volume reaction part `(beta u, v)`.
    pub(crate) fn reaction_values(&self, beta: &ScalarCoefficient) -> Vec<f64> {
        let mut vals = vec![0.0; self.pattern.nnz()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let qp = self.quad_points(t);
            let b_q = [0, 1, 2].map(|q| beta.eval(tri, &TRIANGLE_QUAD[q], qp[q]));
            let m = local_reaction(self.areas[t], &b_q);
            for i in 0..3 {
                for j in 0..3 {
                    vals[self.tri_slots[t][3 * i + j]] += m[i][j];
                }
            }
        }
        vals
    }

    pub(crate) fn check_beta(&self, beta: &ScalarCoefficient) -> Result<()> {
        beta.check_nodal(self.node_count())?;
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let qp = self.quad_points(t);
            for q in 0..3 {
                let v = beta.eval(tri, &TRIANGLE_QUAD[q], qp[q]);
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidCoefficient(format!("beta must be positive, got {v} at {:?}", qp[q])));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// `(u v, phi_p)` for every node `p`, using the triangle rule on the pointwise product.
    pub fn product_load(&self, u: &NodalField, v: &NodalField) -> Vec<f64> {
        let (u, v) = (u.values(), v.values());
        let mut out = vec![0.0; self.node_count()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let w = self.areas[t] / 3.0;
            for bary in &TRIANGLE_QUAD {
                let uq: f64 = (0..3).map(|i| bary[i] * u[tri[i]]).sum();
                let vq: f64 = (0..3).map(|i| bary[i] * v[tri[i]]).sum();
                for i in 0..3 {
                    out[tri[i]] += w * bary[i] * uq * vq;
                }
            }
        }
        out
    }

    /// `||field - c||_{L2}` with `c` sampled at the quadrature points.
    pub fn l2_distance(&self, field: &NodalField, c: &ScalarCoefficient) -> f64 {
        let v = field.values();
        let mut s = 0.0;
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let qp = self.quad_points(t);
            let w = self.areas[t] / 3.0;
            for (q, bary) in TRIANGLE_QUAD.iter().enumerate() {
                let fq: f64 = (0..3).map(|i| bary[i] * v[tri[i]]).sum();
                let d = fq - c.eval(tri, bary, qp[q]);
                s += w * d * d;
            }
        }
        s.sqrt()
    }

    /// `(u, v)_{L2}` via the consistent mass matrix.
    pub fn l2_inner(&self, u: &NodalField, v: &NodalField) -> f64 {
        let mu = sparse::matvec(&self.mass, u.values()).expect("length checked by caller");
        sparse::dot_unchecked(&mu, v.values())
    }

    pub fn l2_norm(&self, u: &NodalField) -> f64 {
        self.l2_inner(u, u).max(0.0).sqrt()
    }

    /// `M u` with the consistent mass matrix.
    pub fn mass_times(&self, u: &NodalField) -> Vec<f64> {
        sparse::matvec(&self.mass, u.values()).expect("length checked by caller")
    }
}

/// Area and gradients of the barycentric basis functions.
pub fn barycentric_gradients(v: &[Point; 3]) -> (f64, [[f64; 2]; 3]) {
    let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    let g = [
        [(v[1][1] - v[2][1]) / det, (v[2][0] - v[1][0]) / det],
        [(v[2][1] - v[0][1]) / det, (v[0][0] - v[2][0]) / det],
        [(v[0][1] - v[1][1]) / det, (v[1][0] - v[0][0]) / det],
    ];
    (0.5 * det, g)
}

/// Element stiffness `sum_q w_q alpha(x_q) grad phi_j . grad phi_i` with `alpha` given at
/// the three edge-midpoint quadrature points.
pub fn local_stiffness(area: f64, grads: &[[f64; 2]; 3], alpha_q: &[[[f64; 2]; 2]; 3]) -> [[f64; 3]; 3] {
    let mut a = [[0.0; 2]; 2];
    for m in alpha_q {
        for r in 0..2 {
            for s in 0..2 {
                a[r][s] += m[r][s] / 3.0;
            }
        }
    }
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let gj = grads[j];
            let agj = [a[0][0] * gj[0] + a[0][1] * gj[1], a[1][0] * gj[0] + a[1][1] * gj[1]];
            k[i][j] = area * (grads[i][0] * agj[0] + grads[i][1] * agj[1]);
        }
    }
    k
}

/// Element reaction block `sum_q w_q beta(x_q) phi_i phi_j`.
pub fn local_reaction(area: f64, beta_q: &[f64; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    let w = area / 3.0;
    for (q, bary) in TRIANGLE_QUAD.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += w * beta_q[q] * bary[i] * bary[j];
            }
        }
    }
    m
}

/// Boundary-edge block `sum_q w_q sigma(x_q) phi_i phi_j` with two-point Gauss.
pub fn local_edge_mass(length: f64, sigma_q: &[f64; 2]) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for (q, &s) in edge_quad().iter().enumerate() {
        let phi = [1.0 - s, s];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += 0.5 * length * sigma_q[q] * phi[i] * phi[j];
            }
        }
    }
    m
}

/// Assembles `A_pq = [phi_q, phi_p]_{(alpha, beta, sigma)}`.
pub fn assemble_stiffness(
    space: &FemSpace,
    alpha: &MatrixCoefficient,
    beta: &ScalarCoefficient,
    sigma: &ScalarCoefficient,
) -> Result<CsrMatrix> {
    space.check_beta(beta)?;
    let mut vals = space.diffusion_values(alpha, sigma)?;
    for (v, r) in vals.iter_mut().zip(space.reaction_values(beta)) {
        *v += r;
    }
    Ok(space.pattern().with_values(vals))
}

/// `b_p = (f, phi_p) + sum_e (flux_e, phi_p)_e`.
pub fn assemble_load(space: &FemSpace, f: &ScalarCoefficient, flux: &EdgeFlux) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    flux.check_len(mesh)?;
    f.check_nodal(mesh.node_count())?;
    let mut b = vec![0.0; mesh.node_count()];
    if !f.is_zero() {
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let qp = space.quad_points(t);
            let w = space.area(t) / 3.0;
            for (q, bary) in TRIANGLE_QUAD.iter().enumerate() {
                let fq = f.eval(tri, bary, qp[q]);
                if !fq.is_finite() {
                    return Err(Error::InvalidCoefficient(format!("non-finite source at {:?}", qp[q])));
                }
                for i in 0..3 {
                    b[tri[i]] += w * fq * bary[i];
                }
            }
        }
    }
    for (e, &j) in mesh.boundary_edges().iter().zip(flux.values()) {
        if j == 0.0 {
            continue;
        }
        if !j.is_finite() {
            return Err(Error::InvalidCoefficient("non-finite boundary flux".into()));
        }
        let half = 0.5 * mesh.edge_length(e) * j;
        b[e.nodes[0]] += half;
        b[e.nodes[1]] += half;
    }
    Ok(b)
}

/// Reduced system over the free nodes after eliminating Dirichlet constraints.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Reconstructs a full nodal vector from a reduced solution.
#[derive(Debug, Clone)]
pub struct Lifting {
    n: usize,
    free: Vec<usize>,
    constrained: Vec<(usize, f64)>,
}

impl Lifting {
    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn reconstruct(&self, reduced: &[f64]) -> Result<NodalField> {
        if reduced.len() != self.free.len() {
            return Err(Error::DimensionMismatch { expected: self.free.len(), found: reduced.len() });
        }
        let mut full = vec![0.0; self.n];
        for (&i, &v) in self.free.iter().zip(reduced) {
            full[i] = v;
        }
        for &(i, v) in &self.constrained {
            full[i] = v;
        }
        Ok(NodalField::new(full))
    }

    /// Restricts a full vector to the free nodes.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }
}

/// Eliminates `x[constrained[k]] = values[k]`, moving the lifting to the right-hand side.
pub fn apply_dirichlet(a: &CsrMatrix, b: &[f64], constrained: &[usize], values: &[f64]) -> Result<(ReducedSystem, Lifting)> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    if constrained.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: constrained.len(), found: values.len() });
    }
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for (&i, &v) in constrained.iter().zip(values) {
        if i >= n {
            return Err(Error::UnknownNode(i));
        }
        if fixed[i].is_some() {
            return Err(Error::DuplicateConstraint(i));
        }
        fixed[i] = Some(v);
    }
    let mut reduced_index = vec![usize::MAX; n];
    let mut free = Vec::with_capacity(n - constrained.len());
    for i in 0..n {
        if fixed[i].is_none() {
            reduced_index[i] = free.len();
            free.push(i);
        }
    }
    let m = free.len();
    let mut row_ptr = Vec::with_capacity(m + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    let mut rhs = Vec::with_capacity(m);
    for &i in &free {
        let mut r = b[i];
        for (c, v) in a.row(i) {
            match fixed[c] {
                Some(g) => r -= v * g,
                None => {
                    col_idx.push(reduced_index[c]);
                    vals.push(v);
                }
            }
        }
        rhs.push(r);
        row_ptr.push(col_idx.len());
    }
    let triplets: Vec<(usize, usize, f64)> = (0..m)
        .flat_map(|r| (row_ptr[r]..row_ptr[r + 1]).map(move |k| (r, k)))
        .map(|(r, k)| (r, col_idx[k], vals[k]))
        .collect();
    let matrix = CsrMatrix::from_triplets(m, &triplets)?;
    let constrained = constrained.iter().copied().zip(values.iter().copied()).collect();
    Ok((ReducedSystem { matrix, rhs }, Lifting { n, free, constrained }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_square_mesh, Side};

    #[test]
    fn single_triangle_blocks() {
        let h = 0.37;
        // right-angle vertex first
        let v = [[0.0, 0.0], [h, 0.0], [0.0, h]];
        let (area, g) = barycentric_gradients(&v);
        assert!((area - h * h / 2.0).abs() < 1e-15);
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let k = local_stiffness(area, &g, &[id; 3]);
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expect[i][j]).abs() < 1e-12);
            }
        }
        let m = local_reaction(area, &[1.0; 3]);
        for i in 0..3 {
            for j in 0..3 {
                let e = h * h / 24.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m[i][j] - e).abs() < 1e-12);
            }
        }
        let l = 1.7;
        let e = local_edge_mass(l, &[1.0, 1.0]);
        assert!((e[0][0] - l / 3.0).abs() < 1e-12 && (e[0][1] - l / 6.0).abs() < 1e-12);
    }

    #[test]
    fn load_partition_of_unity() {
        let space = FemSpace::new(build_square_mesh(4).unwrap());
        let mesh = space.mesh();
        let zero = assemble_load(&space, &0.0.into(), &EdgeFlux::zeros(mesh)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let one = assemble_load(&space, &1.0.into(), &EdgeFlux::zeros(mesh)).unwrap();
        assert!((one.iter().sum::<f64>() - 4.0).abs() < 1e-12);
        let flux = EdgeFlux::from_fn(mesh, |_, s| if s == Side::Bottom { 1.0 } else { 0.0 });
        let b = assemble_load(&space, &0.0.into(), &flux).unwrap();
        assert!((b.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_coefficients() {
        let space = FemSpace::new(build_square_mesh(2).unwrap());
        let id = MatrixCoefficient::identity();
        assert!(assemble_stiffness(&space, &id, &0.0.into(), &0.0.into()).is_err());
        assert!(assemble_stiffness(&space, &id, &1.0.into(), &(-1.0).into()).is_err());
        let bad = MatrixCoefficient::Constant([[1.0, 2.0], [2.0, 1.0]]);
        assert!(assemble_stiffness(&space, &bad, &1.0.into(), &0.0.into()).is_err());
        let nonsym = MatrixCoefficient::Constant([[1.0, 0.2], [0.0, 1.0]]);
        assert!(assemble_stiffness(&space, &nonsym, &1.0.into(), &0.0.into()).is_err());
        let short = ScalarCoefficient::Nodal(NodalField::new(vec![1.0; 3]));
        assert!(matches!(
            assemble_stiffness(&space, &id, &short, &0.0.into()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dirichlet_all_and_none() {
        let space = FemSpace::new(build_square_mesh(2).unwrap());
        let a = assemble_stiffness(&space, &MatrixCoefficient::identity(), &1.0.into(), &0.0.into()).unwrap();
        let b = vec![1.0; 9];
        let all: Vec<usize> = (0..9).collect();
        let vals: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
        let (red, lift) = apply_dirichlet(&a, &b, &all, &vals).unwrap();
        assert_eq!(red.matrix.dim(), 0);
        assert_eq!(lift.reconstruct(&[]).unwrap().values(), &vals[..]);
        let (red, lift) = apply_dirichlet(&a, &b, &[], &[]).unwrap();
        assert_eq!(red.matrix, a);
        assert_eq!(red.rhs, b);
        assert_eq!(lift.free_nodes().len(), 9);
        assert!(matches!(apply_dirichlet(&a, &b, &[9], &[0.0]), Err(Error::UnknownNode(9))));
        assert!(matches!(apply_dirichlet(&a, &b, &[1, 1], &[0.0, 0.0]), Err(Error::DuplicateConstraint(1))));
    }

    #[test]
    fn mass_matrix_integrates_constants() {
        let space = FemSpace::new(build_square_mesh(5).unwrap());
        let one = NodalField::constant(space.node_count(), 1.0);
        assert!((space.l2_inner(&one, &one) - 4.0).abs() < 1e-12);
        assert!((space.l2_distance(&one, &0.0.into()) - 2.0).abs() < 1e-12);
    }
}
