//! Tikhonov-regularized output least squares for the reaction coefficient.
//!
//! The cost is
//! `J(beta) = (1/I) sum_i ||N_i(beta) - M_i(beta)||^2 + rho ||beta - beta_prior||^2`
//! with `N_i` the Neumann state and `M_i` the mixed state of measurement `i`.
//! Its L2 gradient (up to the factor 2 common to both terms) is
//! `(1/I) sum_i (M_i A_{M,i} - N_i A_{N,i}) + rho (beta - beta_prior)`,
//! and it is minimized over the box `[lower, upper]` by gradient projection with
//! an Armijo-type step rule.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FemSpace, NodalField, ScalarCoefficient};
use crate::forward::{CauchyData, Coefficients, ForwardModel};
use crate::mesh::{build_square_mesh, prolongate, prolongate_to, BoundaryRegion, Point, Side};
use crate::sparse::{self, CsrMatrix};

/// How the product terms of the gradient are turned into a nodal field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientRepresentation {
    /// P1 field `G` with `(G, kappa)_{L2}` equal to the derivative of the discrete
    /// cost in every P1 direction `kappa` (mass-matrix solve on the products).
    #[default]
    L2Projection,
    /// Pointwise products of nodal values.
    NodalProduct,
}

/// Parameters of the gradient projection iteration that do not depend on the level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    pub lower: f64,
    pub upper: f64,
    /// Initial step size; halvings persist across iterations.
    pub mu0: f64,
    pub tau: f64,
    /// `tau1 = tau1_factor * h`
    pub tau1_factor: f64,
    /// `tau2 = tau2_factor * h`
    pub tau2_factor: f64,
    pub max_iter: usize,
    pub min_mu: f64,
    pub gradient: GradientRepresentation,
    /// Relative residual tolerance of the linear solves.
    pub solver_rel_tol: f64,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            lower: 0.05,
            upper: 10.0,
            mu0: 0.75,
            tau: 1e-4,
            tau1_factor: 1e-3,
            tau2_factor: 1e-2,
            max_iter: 600,
            min_mu: 1e-16,
            gradient: GradientRepresentation::L2Projection,
            solver_rel_tol: sparse::DEFAULT_REL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub prior: NodalField,
    pub lower: f64,
    pub upper: f64,
    pub mu0: f64,
    pub tau: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub max_iter: usize,
    pub min_mu: f64,
    pub gradient: GradientRepresentation,
}

impl SolverConfig {
    pub fn new(space: &FemSpace, rho: f64, prior: NodalField, params: &AlgorithmParams) -> Self {
        let h = space.mesh().mesh_size();
        Self {
            rho,
            prior,
            lower: params.lower,
            upper: params.upper,
            mu0: params.mu0,
            tau: params.tau,
            tau1: params.tau1_factor * h,
            tau2: params.tau2_factor * h,
            max_iter: params.max_iter,
            min_mu: params.min_mu,
            gradient: params.gradient,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho must be non-negative");
        }
        if !(self.lower > 0.0 && self.lower <= self.upper && self.upper.is_finite()) {
            return bad("bounds must satisfy 0 < lower <= upper");
        }
        if !(self.mu0 > 0.0 && self.mu0 < 1.0) {
            return bad("mu0 must lie in (0,1)");
        }
        if !(self.tau > 0.0 && self.tau1 > 0.0 && self.tau2 > 0.0) {
            return bad("tau, tau1, tau2 must be positive");
        }
        self.prior.check_len(n)
    }
}

/// Measurements sharing one mesh and one observation boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    data: Vec<CauchyData>,
}

impl MeasurementSet {
    pub fn new(data: Vec<CauchyData>) -> Result<Self> {
        let Some(first) = data.first() else {
            return Err(Error::InvalidConfig("at least one measurement is required".into()));
        };
        if data.iter().any(|d| d.region != first.region) {
            return Err(Error::InvalidConfig("all measurements must share the observation boundary".into()));
        }
        Ok(Self { data })
    }

    pub fn single(data: CauchyData) -> Self {
        Self { data: vec![data] }
    }

    pub fn region(&self) -> BoundaryRegion {
        self.data[0].region
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CauchyData> {
        self.data.iter()
    }

    pub fn as_slice(&self) -> &[CauchyData] {
        &self.data
    }
}

/// One accepted iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// Cost at `beta_k`.
    pub cost: f64,
    /// `||grad J(beta_k)||_{L2}`
    pub grad_norm: f64,
    /// Step size accepted for `beta_k -> beta_{k+1}`.
    pub mu: f64,
    pub q: f64,
    pub halvings: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub beta: NodalField,
    pub log: Vec<IterationRecord>,
    pub stop: StopReason,
    pub initial_grad_norm: f64,
    pub final_grad_norm: f64,
    pub final_cost: f64,
}

impl InversionResult {
    pub fn iterations(&self) -> usize {
        self.log.len()
    }
}

/// Writes the iteration log as CSV with header `k,J,grad_norm,mu,Q,halvings`.
pub fn write_log_csv<W: Write>(log: &[IterationRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "k,J,grad_norm,mu,Q,halvings")?;
    for r in log {
        writeln!(w, "{},{:.16e},{:.16e},{:.16e},{:.16e},{}", r.k, r.cost, r.grad_norm, r.mu, r.q, r.halvings)?;
    }
    Ok(())
}

/// Componentwise clamp to `[lower, upper]`.
pub fn project(field: &NodalField, lower: f64, upper: f64) -> NodalField {
    field.map(|v| v.max(lower).min(upper))
}

/// States of every measurement at one coefficient.
#[derive(Debug, Clone)]
pub struct StateEvaluation {
    pub beta: NodalField,
    pub stiffness: CsrMatrix,
    /// `(N_i, M_i)` per measurement.
    pub states: Vec<(NodalField, NodalField)>,
    pub misfit: f64,
    pub cost: f64,
}

/// Cost, gradient and iteration for one level.
pub struct InverseProblem<'a> {
    model: ForwardModel<'a>,
    data: MeasurementSet,
    config: SolverConfig,
}

impl<'a> InverseProblem<'a> {
    pub fn new(model: ForwardModel<'a>, data: MeasurementSet, config: SolverConfig) -> Result<Self> {
        let space = model.space();
        config.validate(space.node_count())?;
        for d in data.iter() {
            d.check(space)?;
        }
        Ok(Self { model, data, config })
    }

    pub fn model(&self) -> &ForwardModel<'a> {
        &self.model
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn data(&self) -> &MeasurementSet {
        &self.data
    }

    fn space(&self) -> &'a FemSpace {
        self.model.space()
    }

    /// Solves the Neumann and mixed states of every measurement at `beta`.
    pub fn evaluate(&self, beta: &NodalField) -> Result<StateEvaluation> {
        let space = self.space();
        beta.check_len(space.node_count())?;
        let k = self.model.stiffness(&ScalarCoefficient::Nodal(beta.clone()))?;
        let states = self
            .data
            .as_slice()
            .par_iter()
            .map(|d| {
                let n = self.model.neumann(&k, &d.flux)?;
                let m = self.model.mixed(&k, &d.flux, &d.region, &d.trace)?;
                Ok((n, m))
            })
            .collect::<Result<Vec<_>>>()?;
        let misfit = states.iter().map(|(n, m)| space.l2_norm(&n.sub(m)).powi(2)).sum::<f64>() / states.len() as f64;
        let reg = space.l2_norm(&beta.sub(&self.config.prior)).powi(2);
        let cost = misfit + self.config.rho * reg;
        Ok(StateEvaluation { beta: beta.clone(), stiffness: k, states, misfit, cost })
    }

    pub fn cost(&self, beta: &NodalField) -> Result<f64> {
        Ok(self.evaluate(beta)?.cost)
    }

    /// Misfit part of the gradient, `(1/I) sum_i (M_i A_{M,i} - N_i A_{N,i})`.
    pub fn misfit_gradient(&self, eval: &StateEvaluation) -> Result<NodalField> {
        let space = self.space();
        let region = self.data.region();
        let n = space.node_count();
        let terms = eval
            .states
            .par_iter()
            .map(|(nst, mst)| {
                let r = nst.sub(mst);
                let an = self.model.adjoint_neumann(&eval.stiffness, &r)?;
                let am = self.model.adjoint_mixed(&eval.stiffness, &region, &r)?;
                Ok(match self.config.gradient {
                    GradientRepresentation::L2Projection => {
                        let pm = space.product_load(mst, &am);
                        let pn = space.product_load(nst, &an);
                        pm.iter().zip(&pn).map(|(a, b)| a - b).collect::<Vec<f64>>()
                    }
                    GradientRepresentation::NodalProduct => (0..n)
                        .map(|i| mst.values()[i] * am.values()[i] - nst.values()[i] * an.values()[i])
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let inv = 1.0 / terms.len() as f64;
        let mut avg = vec![0.0; n];
        for t in &terms {
            for (a, v) in avg.iter_mut().zip(t) {
                *a += v;
            }
        }
        avg.iter_mut().for_each(|a| *a *= inv);
        match self.config.gradient {
            GradientRepresentation::L2Projection => {
                Ok(NodalField::new(sparse::solve_spd(space.mass(), &avg, self.model.rel_tol())?))
            }
            GradientRepresentation::NodalProduct => Ok(NodalField::new(avg)),
        }
    }

    /// Gradient from a state evaluation.
    pub fn gradient_at(&self, eval: &StateEvaluation) -> Result<NodalField> {
        let mis = self.misfit_gradient(eval)?;
        let reg = eval.beta.sub(&self.config.prior);
        Ok(mis.axpy(self.config.rho, &reg))
    }

    pub fn gradient(&self, beta: &NodalField) -> Result<NodalField> {
        self.gradient_at(&self.evaluate(beta)?)
    }

    /// `||beta - P((1/rho)(N A_N - M A_M) + beta_prior)||_{L2}`.
    pub fn optimality_residual(&self, beta: &NodalField) -> Result<f64> {
        if !(self.config.rho > 0.0) {
            return Err(Error::InvalidConfig("optimality residual requires rho > 0".into()));
        }
        let eval = self.evaluate(beta)?;
        let mis = self.misfit_gradient(&eval)?;
        let fixed = self.config.prior.axpy(-1.0 / self.config.rho, &mis);
        let p = project(&fixed, self.config.lower, self.config.upper);
        Ok(self.space().l2_norm(&beta.sub(&p)))
    }

    /// Gradient projection with the Armijo-type rule
    /// `Q = J(beta_k) - J(beta_hat) + tau mu ||beta_hat - beta_k||^2 >= 0`.
    pub fn gradient_projection(&self, beta0: &NodalField) -> Result<InversionResult> {
        let cfg = &self.config;
        let space = self.space();
        if beta0.values().iter().any(|&v| v < cfg.lower || v > cfg.upper) {
            return Err(Error::InvalidConfig("initial coefficient violates the bounds".into()));
        }
        let mut current = self.evaluate(beta0)?;
        let mut grad = self.gradient_at(&current)?;
        let g0 = space.l2_norm(&grad);
        let mut mu = cfg.mu0;
        let mut log = Vec::new();
        let mut gnorm = g0;
        let stop = loop {
            let k = log.len();
            if gnorm - cfg.tau1 - cfg.tau2 * g0 <= 0.0 {
                break StopReason::Tolerance;
            }
            if k >= cfg.max_iter {
                break StopReason::MaxIterations;
            }
            let mut halvings = 0u32;
            let (trial, q) = loop {
                let candidate = project(&current.beta.axpy(-mu, &grad), cfg.lower, cfg.upper);
                let eval = self.evaluate(&candidate)?;
                let step = space.l2_norm(&candidate.sub(&current.beta)).powi(2);
                let q = current.cost - eval.cost + cfg.tau * mu * step;
                if q >= 0.0 {
                    break (eval, q);
                }
                mu *= 0.5;
                halvings += 1;
                if mu < cfg.min_mu {
                    return Err(Error::StepStall { iteration: k, mu });
                }
            };
            log.push(IterationRecord { k, cost: current.cost, grad_norm: gnorm, mu, q, halvings });
            current = trial;
            grad = self.gradient_at(&current)?;
            gnorm = space.l2_norm(&grad);
        };
        Ok(InversionResult {
            beta: current.beta,
            log,
            stop,
            initial_grad_norm: g0,
            final_grad_norm: gnorm,
            final_cost: current.cost,
        })
    }
}

/// Directional derivative from a gradient field compared with a central difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    /// `2 (G, kappa)_{L2}`
    pub analytic: f64,
    pub finite_difference: f64,
    /// `|analytic - fd| / max(1, |fd|)`
    pub error: f64,
    /// `|analytic - fd| / |fd|`
    pub relative_error: f64,
}

/// Checks `grad` against `(J(beta + t kappa) - J(beta - t kappa)) / (2t)` for each direction.
pub fn gradient_check(
    problem: &InverseProblem<'_>,
    beta: &NodalField,
    grad: &NodalField,
    directions: &[NodalField],
    step: f64,
) -> Result<Vec<GradientCheck>> {
    let space = problem.space();
    grad.check_len(space.node_count())?;
    directions
        .iter()
        .map(|kappa| {
            kappa.check_len(space.node_count())?;
            let analytic = 2.0 * space.l2_inner(grad, kappa);
            let plus = problem.cost(&beta.axpy(step, kappa))?;
            let minus = problem.cost(&beta.axpy(-step, kappa))?;
            let fd = (plus - minus) / (2.0 * step);
            let diff = (analytic - fd).abs();
            Ok(GradientCheck {
                analytic,
                finite_difference: fd,
                error: diff / fd.abs().max(1.0),
                relative_error: diff / fd.abs(),
            })
        })
        .collect()
}

/// Everything the multilevel driver needs on one level.
pub struct LevelSetup {
    pub coefficients: Coefficients,
    pub data: MeasurementSet,
    pub rho: f64,
}

/// Result of one level of a multilevel run.
pub struct LevelOutcome {
    pub level: usize,
    pub space: FemSpace,
    pub setup: LevelSetup,
    pub initial: NodalField,
    pub result: InversionResult,
}

/// Coarse-to-fine continuation: each level starts from, and regularizes towards,
/// the prolongated result of the previous level. The first level uses the constant
/// `initial_value` for both.
pub fn multilevel_run<F>(
    levels: &[usize],
    initial_value: f64,
    params: &AlgorithmParams,
    mut setup: F,
) -> Result<Vec<LevelOutcome>>
where
    F: FnMut(&FemSpace) -> Result<LevelSetup>,
{
    if levels.is_empty() {
        return Err(Error::InvalidConfig("no levels given".into()));
    }
    for w in levels.windows(2) {
        if w[1] != 2 * w[0] {
            return Err(Error::NonNestedLevels { coarse: w[0], fine: w[1] });
        }
    }
    let mut outcomes: Vec<LevelOutcome> = Vec::with_capacity(levels.len());
    for &level in levels {
        let space = FemSpace::new(build_square_mesh(level)?);
        let start = match outcomes.last() {
            None => NodalField::constant(space.node_count(), initial_value),
            Some(prev) => prolongate(prev.space.mesh(), &prev.result.beta, space.mesh())?,
        };
        let level_setup = setup(&space)?;
        let result = {
            let model = ForwardModel::new(&space, level_setup.coefficients.clone())?.with_rel_tol(params.solver_rel_tol);
            let config = SolverConfig::new(&space, level_setup.rho, start.clone(), params);
            let problem = InverseProblem::new(model, level_setup.data.clone(), config)?;
            problem.gradient_projection(&start)?
        };
        outcomes.push(LevelOutcome { level, space, setup: level_setup, initial: start, result });
    }
    Ok(outcomes)
}

/// Boundary data given pointwise, so it can be sampled on any mesh.
pub struct PointwiseData<'f> {
    pub flux: &'f (dyn Fn(Point, Side) -> f64 + Sync),
    pub trace: &'f (dyn Fn(Point) -> f64 + Sync),
    pub region: BoundaryRegion,
}

/// Estimates `||N(beta) - N_h(beta)|| + ||M(beta) - M_h(beta)||` by standing in
/// reference-level solutions for the exact ones. A nodal `beta` lives on the
/// coarse mesh and is prolongated for the reference solve.
pub fn discretization_error_estimate(
    coeffs: &Coefficients,
    beta: &ScalarCoefficient,
    data: &PointwiseData<'_>,
    coarse_level: usize,
    reference_level: usize,
) -> Result<f64> {
    if reference_level == coarse_level {
        build_square_mesh(coarse_level)?;
        return Ok(0.0);
    }
    let ratio = reference_level / coarse_level.max(1);
    if coarse_level == 0 || !reference_level.is_multiple_of(coarse_level) || !ratio.is_power_of_two() || ratio < 4 {
        return Err(Error::NonNestedLevels { coarse: coarse_level, fine: reference_level });
    }
    let solve = |space: &FemSpace, beta: &ScalarCoefficient| -> Result<(NodalField, NodalField)> {
        let mesh = space.mesh();
        let model = ForwardModel::new(space, coeffs.clone())?;
        let k = model.stiffness(beta)?;
        let flux = crate::fem::EdgeFlux::from_fn(mesh, data.flux);
        let trace: Vec<f64> = crate::mesh::boundary_nodes(mesh, &data.region)
            .into_iter()
            .map(|i| (data.trace)(mesh.node(i)))
            .collect();
        Ok((model.neumann(&k, &flux)?, model.mixed(&k, &flux, &data.region, &trace)?))
    };
    let coarse = FemSpace::new(build_square_mesh(coarse_level)?);
    let reference = FemSpace::new(build_square_mesh(reference_level)?);
    let ref_beta = match beta {
        ScalarCoefficient::Nodal(v) => ScalarCoefficient::Nodal(prolongate_to(coarse.mesh(), v, reference_level)?),
        other => other.clone(),
    };
    let (nc, mc) = solve(&coarse, beta)?;
    let (nr, mr) = solve(&reference, &ref_beta)?;
    let nc = prolongate_to(coarse.mesh(), &nc, reference_level)?;
    let mc = prolongate_to(coarse.mesh(), &mc, reference_level)?;
    Ok(reference.l2_norm(&nr.sub(&nc)) + reference.l2_norm(&mr.sub(&mc)))
}
