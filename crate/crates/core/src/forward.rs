//! State, adjoint and sensitivity solves.
//!
//! * Neumann state: `[u, phi] = (f, phi) + (j, phi)_boundary` for all P1 `phi`.
//! * Mixed state: same form without the flux on the observation boundary,
//!   with `u = g` imposed there.
//! * Dirichlet state: `u = g` on the whole boundary.
//! * Adjoints: the stiffness operator with source `(residual, phi)`, free on the
//!   boundary (Neumann) or vanishing on the observation boundary (mixed).

use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, assemble_load, EdgeFlux, FemSpace, MatrixCoefficient, NodalField, ScalarCoefficient,
};
use crate::mesh::{boundary_nodes, BoundaryRegion};
use crate::sparse::{self, CsrMatrix, DEFAULT_REL_TOL};

/// Known data of the elliptic problem apart from the reaction coefficient.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub alpha: MatrixCoefficient,
    pub sigma: ScalarCoefficient,
    pub source: ScalarCoefficient,
}

/// Boundary Cauchy data: a flux on every boundary edge (measured on the
/// observation boundary, known elsewhere) and a trace on the observation nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    pub flux: EdgeFlux,
    /// One value per node of `boundary_nodes(mesh, region)`, in that order.
    pub trace: Vec<f64>,
    pub region: BoundaryRegion,
}

impl CauchyData {
    pub fn check(&self, space: &FemSpace) -> Result<()> {
        self.flux.check_len(space.mesh())?;
        let n = boundary_nodes(space.mesh(), &self.region).len();
        if self.trace.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.trace.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Neumann,
    Mixed,
}

/// Assembly cache for one mesh and one set of known coefficients.
///
/// The diffusion part of the stiffness matrix and the source load do not depend on
/// the reaction coefficient and are built once.
#[derive(Debug, Clone)]
pub struct ForwardModel<'a> {
    space: &'a FemSpace,
    coeffs: Coefficients,
    diffusion: Vec<f64>,
    source_load: Vec<f64>,
    rel_tol: f64,
}

impl<'a> ForwardModel<'a> {
    pub fn new(space: &'a FemSpace, coeffs: Coefficients) -> Result<Self> {
        let diffusion = space.diffusion_values(&coeffs.alpha, &coeffs.sigma)?;
        let source_load = assemble_load(space, &coeffs.source, &EdgeFlux::zeros(space.mesh()))?;
        Ok(Self { space, coeffs, diffusion, source_load, rel_tol: DEFAULT_REL_TOL })
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn space(&self) -> &'a FemSpace {
        self.space
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    /// Stiffness matrix of `[., .]_{(alpha, beta, sigma)}`.
    pub fn stiffness(&self, beta: &ScalarCoefficient) -> Result<CsrMatrix> {
        self.space.check_beta(beta)?;
        let mut vals = self.diffusion.clone();
        for (v, r) in vals.iter_mut().zip(self.space.reaction_values(beta)) {
            *v += r;
        }
        Ok(self.space.pattern().with_values(vals))
    }

    fn load(&self, flux: &EdgeFlux) -> Result<Vec<f64>> {
        let mut b = assemble_load(self.space, &ScalarCoefficient::Constant(0.0), flux)?;
        for (b, s) in b.iter_mut().zip(&self.source_load) {
            *b += s;
        }
        Ok(b)
    }

    fn solve_constrained(&self, k: &CsrMatrix, rhs: &[f64], nodes: &[usize], values: &[f64]) -> Result<NodalField> {
        let (reduced, lifting) = apply_dirichlet(k, rhs, nodes, values)?;
        let x = sparse::solve_spd(&reduced.matrix, &reduced.rhs, self.rel_tol)?;
        lifting.reconstruct(&x)
    }

    /// Neumann state with flux `flux` on every boundary edge.
    pub fn neumann(&self, k: &CsrMatrix, flux: &EdgeFlux) -> Result<NodalField> {
        let b = self.load(flux)?;
        Ok(NodalField::new(sparse::solve_spd(k, &b, self.rel_tol)?))
    }

    /// Mixed state: `u = trace` on `region`, flux on the remaining edges.
    pub fn mixed(&self, k: &CsrMatrix, flux: &EdgeFlux, region: &BoundaryRegion, trace: &[f64]) -> Result<NodalField> {
        let mesh = self.space.mesh();
        let nodes = boundary_nodes(mesh, region);
        if trace.len() != nodes.len() {
            return Err(Error::DimensionMismatch { expected: nodes.len(), found: trace.len() });
        }
        let b = self.load(&flux.without(mesh, region))?;
        self.solve_constrained(k, &b, &nodes, trace)
    }

    /// Dirichlet state with `trace` given on `boundary_nodes(mesh, all sides)`.
    pub fn dirichlet(&self, k: &CsrMatrix, trace: &[f64]) -> Result<NodalField> {
        let all = BoundaryRegion::all();
        self.mixed(k, &EdgeFlux::zeros(self.space.mesh()), &all, trace)
    }

    pub fn adjoint_neumann(&self, k: &CsrMatrix, residual: &NodalField) -> Result<NodalField> {
        residual.check_len(self.space.node_count())?;
        let b = self.space.mass_times(residual);
        Ok(NodalField::new(sparse::solve_spd(k, &b, self.rel_tol)?))
    }

    pub fn adjoint_mixed(&self, k: &CsrMatrix, region: &BoundaryRegion, residual: &NodalField) -> Result<NodalField> {
        residual.check_len(self.space.node_count())?;
        let b = self.space.mass_times(residual);
        let nodes = boundary_nodes(self.space.mesh(), region);
        let zeros = vec![0.0; nodes.len()];
        self.solve_constrained(k, &b, &nodes, &zeros)
    }

    /// Derivative of the `kind` state at `beta` in direction `kappa`, given the state
    /// `base` at `beta`: `[D, phi] = -(kappa base, phi)`, with `D = 0` on `region` for
    /// the mixed kind.
    pub fn directional_derivative(
        &self,
        k: &CsrMatrix,
        kappa: &NodalField,
        base: &NodalField,
        kind: StateKind,
        region: &BoundaryRegion,
    ) -> Result<NodalField> {
        let n = self.space.node_count();
        kappa.check_len(n)?;
        base.check_len(n)?;
        let b: Vec<f64> = self.space.product_load(kappa, base).into_iter().map(|v| -v).collect();
        match kind {
            StateKind::Neumann => Ok(NodalField::new(sparse::solve_spd(k, &b, self.rel_tol)?)),
            StateKind::Mixed => {
                let nodes = boundary_nodes(self.space.mesh(), region);
                let zeros = vec![0.0; nodes.len()];
                self.solve_constrained(k, &b, &nodes, &zeros)
            }
        }
    }
}

pub fn solve_neumann(
    space: &FemSpace,
    coeffs: &Coefficients,
    beta: &ScalarCoefficient,
    flux: &EdgeFlux,
) -> Result<NodalField> {
    let model = ForwardModel::new(space, coeffs.clone())?;
    model.neumann(&model.stiffness(beta)?, flux)
}

pub fn solve_mixed(
    space: &FemSpace,
    coeffs: &Coefficients,
    beta: &ScalarCoefficient,
    flux: &EdgeFlux,
    region: &BoundaryRegion,
    trace: &[f64],
) -> Result<NodalField> {
    let model = ForwardModel::new(space, coeffs.clone())?;
    model.mixed(&model.stiffness(beta)?, flux, region, trace)
}

pub fn solve_dirichlet(
    space: &FemSpace,
    coeffs: &Coefficients,
    beta: &ScalarCoefficient,
    trace: &[f64],
) -> Result<NodalField> {
    let model = ForwardModel::new(space, coeffs.clone())?;
    model.dirichlet(&model.stiffness(beta)?, trace)
}

pub fn solve_adjoint_neumann(
    space: &FemSpace,
    coeffs: &Coefficients,
    beta: &ScalarCoefficient,
    residual: &NodalField,
) -> Result<NodalField> {
    let model = ForwardModel::new(space, coeffs.clone())?;
    model.adjoint_neumann(&model.stiffness(beta)?, residual)
}

pub fn solve_adjoint_mixed(
    space: &FemSpace,
    coeffs: &Coefficients,
    beta: &ScalarCoefficient,
    region: &BoundaryRegion,
    residual: &NodalField,
) -> Result<NodalField> {
    let model = ForwardModel::new(space, coeffs.clone())?;
    model.adjoint_mixed(&model.stiffness(beta)?, region, residual)
}

pub fn directional_derivative(
    space: &FemSpace,
    coeffs: &Coefficients,
    beta: &ScalarCoefficient,
    kappa: &NodalField,
    base: &NodalField,
    kind: StateKind,
    region: &BoundaryRegion,
) -> Result<NodalField> {
    let model = ForwardModel::new(space, coeffs.clone())?;
    model.directional_derivative(&model.stiffness(beta)?, kappa, base, kind, region)
}

/// Nodal values on `boundary_nodes(mesh, region)`.
pub fn trace(space: &FemSpace, field: &NodalField, region: &BoundaryRegion) -> Vec<f64> {
    boundary_nodes(space.mesh(), region).into_iter().map(|i| field.values()[i]).collect()
}

/// Writes one `x y value` line per node with 17 significant digits.
pub fn write_field<W: Write>(space: &FemSpace, field: &NodalField, mut w: W) -> std::io::Result<()> {
    for (p, v) in space.mesh().nodes().iter().zip(field.values()) {
        writeln!(w, "{:.16e} {:.16e} {:.16e}", p[0], p[1], v)?;
    }
    Ok(())
}
