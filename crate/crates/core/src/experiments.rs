//! Benchmark problem on (-1,1)^2, synthetic data, error metrics and the
//! four example studies.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{EdgeFlux, FemSpace, MatrixCoefficient, NodalField, ScalarCoefficient};
use crate::forward::{trace, CauchyData, Coefficients, ForwardModel};
use crate::inverse::{gradient_check, multilevel_run, write_log_csv, GradientCheck, GradientRepresentation, InverseProblem, SolverConfig, AlgorithmParams, IterationRecord, LevelOutcome, LevelSetup, MeasurementSet, StopReason};
use crate::mesh::{boundary_nodes, BoundaryRegion, Mesh, Point, Side};

pub const BETA_LOWER: f64 = 0.05;
pub const BETA_UPPER: f64 = 10.0;
/// Constant initial guess and prior on the coarsest level.
pub const INITIAL_BETA: f64 = 1.5;

pub fn in_source_square(p: Point) -> bool {
    p[0].abs() <= 0.5 && p[1].abs() <= 0.5
}

pub fn in_alpha11_square(p: Point) -> bool {
    p[0].abs() <= 0.75 && p[1].abs() <= 0.75
}

pub fn in_alpha12_diamond(p: Point) -> bool {
    p[0].abs() + p[1].abs() <= 0.75
}

pub fn in_alpha22_disc(p: Point) -> bool {
    p[0] * p[0] + p[1] * p[1] <= 9.0 / 16.0
}

pub fn in_inclusion(p: Point) -> bool {
    4.0 * p[0] * p[0] + 9.0 * p[1] * p[1] <= 1.0
}

pub fn source(p: Point) -> f64 {
    if in_source_square(p) {
        1.5
    } else {
        -0.5
    }
}

pub fn diffusion(p: Point) -> [[f64; 2]; 2] {
    let a11 = if in_alpha11_square(p) { 2.0 } else { 1.0 };
    let a12 = if in_alpha12_diamond(p) { 1.0 } else { 0.0 };
    let a22 = if in_alpha22_disc(p) { 3.0 } else { 2.0 };
    [[a11, a12], [a12, a22]]
}

/// Exact reaction coefficient: 3 on the elliptic inclusion, 1 elsewhere.
pub fn beta_true(p: Point) -> f64 {
    if in_inclusion(p) {
        3.0
    } else {
        1.0
    }
}

/// Nodal interpolant of the exact coefficient; exact data are generated with it so
/// that it reproduces them without discretization mismatch.
pub fn beta_true_interpolant(mesh: &Mesh) -> NodalField {
    NodalField::interpolate(mesh, beta_true)
}

pub fn catalog_coefficients() -> Coefficients {
    Coefficients {
        alpha: MatrixCoefficient::function(diffusion),
        sigma: ScalarCoefficient::Constant(0.0),
        source: ScalarCoefficient::function(source),
    }
}

pub fn beta_true_coefficient() -> ScalarCoefficient {
    ScalarCoefficient::function(beta_true)
}

/// Flux constants `(A, B, C, D)` on the bottom and left sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxTuple(pub [f64; 4]);

impl FluxTuple {
    pub const DEFAULT: FluxTuple = FluxTuple([1.0, -2.0, 3.0, -4.0]);

    /// Boundary flux at a point of `side`. Right and top carry the fixed data
    /// `4 / -3` and `2 / -1`.
    pub fn flux(&self, p: Point, side: Side) -> f64 {
        let [a, b, c, d] = self.0;
        match side {
            Side::Bottom => {
                if p[0] > 0.0 {
                    a
                } else {
                    b
                }
            }
            Side::Left => {
                if p[1] <= 0.0 {
                    c
                } else {
                    d
                }
            }
            Side::Right => {
                if p[1] <= 0.0 {
                    4.0
                } else {
                    -3.0
                }
            }
            Side::Top => {
                if p[0] > 0.0 {
                    2.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn edge_flux(&self, mesh: &Mesh) -> EdgeFlux {
        EdgeFlux::from_fn(mesh, |p, s| self.flux(p, s))
    }
}

impl fmt::Display for FluxTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "({a},{b},{c},{d})")
    }
}

/// Exact data generated with the same discretization as the inversion.
#[derive(Debug, Clone)]
pub struct ExactData {
    pub state: NodalField,
    /// Exact flux on every boundary edge.
    pub flux: EdgeFlux,
    /// Trace of `state` on the observation nodes.
    pub trace: Vec<f64>,
    pub region: BoundaryRegion,
}

impl ExactData {
    pub fn cauchy(&self) -> CauchyData {
        CauchyData { flux: self.flux.clone(), trace: self.trace.clone(), region: self.region }
    }
}

pub fn synthesize_exact(space: &FemSpace, tuple: FluxTuple, region: BoundaryRegion) -> Result<ExactData> {
    let model = ForwardModel::new(space, catalog_coefficients())?;
    let k = model.stiffness(&ScalarCoefficient::Nodal(beta_true_interpolant(space.mesh())))?;
    let flux = tuple.edge_flux(space.mesh());
    let state = model.neumann(&k, &flux)?;
    let trace = trace(space, &state, &region);
    Ok(ExactData { state, flux, trace, region })
}

/// ChaCha8 stream mapped to the open interval (-1, 1):
/// `r = 2 ((x >> 11) + 0.5) 2^-53 - 1` for each 64-bit output `x`.
pub struct NoiseStream(ChaCha8Rng);

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_symmetric(&mut self) -> f64 {
        let x = self.0.next_u64();
        2.0 * (((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)) - 1.0
    }
}

/// Combines a run seed with a level and a measurement index.
pub fn derive_seed(seed: u64, level: usize, index: usize) -> u64 {
    let mut z = seed ^ (level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One noisy Cauchy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub data: CauchyData,
    pub delta: f64,
    pub theta: f64,
    pub seed: u64,
}

/// Observation edges ordered by midpoint, lexicographic in `(x2, x1)`.
fn observation_edges(mesh: &Mesh, region: &BoundaryRegion) -> Vec<usize> {
    let mut edges = mesh.region_edges(region);
    edges.sort_by(|&a, &b| {
        let pa = mesh.edge_midpoint(&mesh.boundary_edges()[a]);
        let pb = mesh.edge_midpoint(&mesh.boundary_edges()[b]);
        pa[1].total_cmp(&pb[1]).then(pa[0].total_cmp(&pb[0]))
    });
    edges
}

/// Perturbs the flux on every observation edge and the trace at every observation
/// node by `theta * r` with `r` uniform in (-1,1); edges are drawn first.
pub fn add_noise(space: &FemSpace, exact: &ExactData, theta: f64, seed: u64) -> Result<Measurement> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise amplitude must be non-negative, got {theta}")));
    }
    let mesh = space.mesh();
    let region = exact.region;
    let mut rng = NoiseStream::new(seed);
    let mut flux = exact.flux.clone();
    let mut flux_sq = 0.0;
    for e in observation_edges(mesh, &region) {
        let d = theta * rng.next_symmetric();
        flux.values_mut()[e] += d;
        flux_sq += mesh.edge_length(&mesh.boundary_edges()[e]) * d * d;
    }
    let nodes = boundary_nodes(mesh, &region);
    let mut perturbation = vec![0.0; mesh.node_count()];
    let mut trace = exact.trace.clone();
    for (t, &i) in trace.iter_mut().zip(&nodes) {
        let d = theta * rng.next_symmetric();
        *t += d;
        perturbation[i] = d;
    }
    // boundary mass norm of the P1 perturbation along the observation edges
    let mut trace_sq = 0.0;
    for e in mesh.region_edges(&region) {
        let edge = &mesh.boundary_edges()[e];
        let (a, b) = (perturbation[edge.nodes[0]], perturbation[edge.nodes[1]]);
        trace_sq += mesh.edge_length(edge) / 3.0 * (a * a + a * b + b * b);
    }
    let delta = flux_sq.sqrt() + trace_sq.sqrt();
    Ok(Measurement { data: CauchyData { flux, trace, region }, delta, theta, seed })
}

/// Regularization parameter schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RhoRule {
    /// `0.001 sqrt(h)`
    Sqrt,
    /// `factor * h^2`
    H2(f64),
    Fixed(f64),
}

impl RhoRule {
    pub fn rho(&self, level: usize) -> f64 {
        let h = 8f64.sqrt() / level as f64;
        match *self {
            RhoRule::Sqrt => 1e-3 * h.sqrt(),
            RhoRule::H2(c) => c * h * h,
            RhoRule::Fixed(r) => r,
        }
    }
}

impl FromStr for RhoRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(RhoRule::Sqrt),
            "h2" => Ok(RhoRule::H2(1.0)),
            "h2e-1" => Ok(RhoRule::H2(1e-1)),
            "h2e-2" => Ok(RhoRule::H2(1e-2)),
            "h2e-3" => Ok(RhoRule::H2(1e-3)),
            other => match other.strip_prefix("fixed:").map(str::parse::<f64>) {
                Some(Ok(v)) if v >= 0.0 => Ok(RhoRule::Fixed(v)),
                _ => Err(Error::UnknownSchedule(other.to_string())),
            },
        }
    }
}

impl fmt::Display for RhoRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RhoRule::Sqrt => f.write_str("sqrt"),
            RhoRule::H2(1.0) => f.write_str("h2"),
            RhoRule::H2(c) => write!(f, "h2e{}", c.log10().round() as i32),
            RhoRule::Fixed(r) => write!(f, "fixed:{r}"),
        }
    }
}

impl From<RhoRule> for String {
    fn from(r: RhoRule) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for RhoRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Noise amplitude schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ThetaRule {
    /// `h sqrt(10 rho)`
    Ex1,
    /// `1e-2 h sqrt(rho)`
    Ex2,
    /// `h sqrt(10 rho) / 2`
    Ex3,
    Fixed(f64),
}

impl ThetaRule {
    pub fn theta(&self, level: usize, rho: f64) -> f64 {
        let h = 8f64.sqrt() / level as f64;
        match *self {
            ThetaRule::Ex1 => h * (10.0 * rho).sqrt(),
            ThetaRule::Ex2 => 1e-2 * h * rho.sqrt(),
            ThetaRule::Ex3 => 0.5 * h * (10.0 * rho).sqrt(),
            ThetaRule::Fixed(t) => t,
        }
    }
}

impl FromStr for ThetaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex1" => Ok(ThetaRule::Ex1),
            "ex2" => Ok(ThetaRule::Ex2),
            "ex3" => Ok(ThetaRule::Ex3),
            "ex4" => Ok(ThetaRule::Fixed(0.2)),
            "none" => Ok(ThetaRule::Fixed(0.0)),
            other => match other.strip_prefix("fixed:").map(str::parse::<f64>) {
                Some(Ok(v)) if v >= 0.0 => Ok(ThetaRule::Fixed(v)),
                _ => Err(Error::UnknownSchedule(other.to_string())),
            },
        }
    }
}

impl fmt::Display for ThetaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ThetaRule::Ex1 => f.write_str("ex1"),
            ThetaRule::Ex2 => f.write_str("ex2"),
            ThetaRule::Ex3 => f.write_str("ex3"),
            ThetaRule::Fixed(t) => write!(f, "fixed:{t}"),
        }
    }
}

impl From<ThetaRule> for String {
    fn from(r: ThetaRule) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for ThetaRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

pub fn rho_schedule(kind: &str, level: usize) -> Result<f64> {
    Ok(kind.parse::<RhoRule>()?.rho(level))
}

pub fn theta_schedule(kind: &str, level: usize, rho: f64) -> Result<f64> {
    Ok(kind.parse::<ThetaRule>()?.theta(level, rho))
}

/// The four reported L2 errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub beta: f64,
    pub neumann: f64,
    pub mixed: f64,
    pub dirichlet: f64,
}

impl ErrorMetrics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.beta, self.neumann, self.mixed, self.dirichlet]
    }
}

/// Errors of a reconstruction `beta` against the exact coefficient and states.
/// With several measurements the state errors are averaged over them.
pub fn error_metrics(
    space: &FemSpace,
    beta: &NodalField,
    pairs: &[(&ExactData, &CauchyData)],
) -> Result<ErrorMetrics> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("error metrics need at least one measurement".into()));
    }
    let model = ForwardModel::new(space, catalog_coefficients())?;
    let k = model.stiffness(&ScalarCoefficient::Nodal(beta.clone()))?;
    let k_true = model.stiffness(&ScalarCoefficient::Nodal(beta_true_interpolant(space.mesh())))?;
    let all = BoundaryRegion::all();
    let all_nodes = boundary_nodes(space.mesh(), &all);
    let (mut en, mut em, mut ed) = (0.0, 0.0, 0.0);
    for (exact, data) in pairs {
        let region = data.region;
        let n = model.neumann(&k, &data.flux)?;
        en += space.l2_norm(&n.sub(&exact.state));
        let m = model.mixed(&k, &data.flux, &region, &data.trace)?;
        let m_true = model.mixed(&k_true, &exact.flux, &region, &exact.trace)?;
        em += space.l2_norm(&m.sub(&m_true));
        let full_exact = trace(space, &exact.state, &all);
        let obs = boundary_nodes(space.mesh(), &region);
        let mut noisy = full_exact.clone();
        for (slot, node) in all_nodes.iter().enumerate() {
            if let Ok(pos) = obs.binary_search(node) {
                noisy[slot] = data.trace[pos];
            }
        }
        let d = model.dirichlet(&k, &noisy)?;
        let d_true = model.dirichlet(&k_true, &full_exact)?;
        ed += space.l2_norm(&d.sub(&d_true));
    }
    let inv = 1.0 / pairs.len() as f64;
    Ok(ErrorMetrics {
        beta: space.l2_distance(beta, &beta_true_coefficient()),
        neumann: en * inv,
        mixed: em * inv,
        dirichlet: ed * inv,
    })
}

/// Experimental orders of convergence between consecutive entries and their mean.
pub fn eoc(errors: &[f64], mesh_sizes: &[f64]) -> Result<(Vec<f64>, f64)> {
    if errors.len() != mesh_sizes.len() {
        return Err(Error::DimensionMismatch { expected: errors.len(), found: mesh_sizes.len() });
    }
    if errors.len() < 2 {
        return Err(Error::InvalidConfig("EOC needs at least two refinement levels".into()));
    }
    if let Some(&e) = errors.iter().find(|&&e| !(e > 0.0)) {
        return Err(Error::NonPositiveError(e));
    }
    let steps: Vec<f64> = errors
        .windows(2)
        .zip(mesh_sizes.windows(2))
        .map(|(e, h)| (e[0].ln() - e[1].ln()) / (h[0].ln() - h[1].ln()))
        .collect();
    let defined: Vec<f64> = steps.iter().copied().filter(|v| v.is_finite()).collect();
    let mean = if defined.is_empty() { f64::NAN } else { defined.iter().sum::<f64>() / defined.len() as f64 };
    Ok((steps, mean))
}

/// Permutations of `values` by lexicographic order of position permutations.
pub fn permutations(values: &[f64]) -> Vec<Vec<f64>> {
    fn rec(rest: &mut Vec<usize>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        for k in 0..rest.len() {
            let v = rest.remove(k);
            cur.push(v);
            rec(rest, cur, out);
            cur.pop();
            rest.insert(k, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut (0..values.len()).collect(), &mut Vec::new(), &mut out);
    out.into_iter().map(|p| p.into_iter().map(|i| values[i]).collect()).collect()
}

/// Flux tuples used for `count` simultaneous measurements.
pub fn measurement_tuples(count: usize) -> Result<Vec<FluxTuple>> {
    let base = FluxTuple::DEFAULT.0;
    let list: Vec<FluxTuple> = match count {
        1 => vec![FluxTuple::DEFAULT],
        2..=6 => permutations(&base[..3]).into_iter().map(|p| FluxTuple([p[0], p[1], p[2], base[3]])).collect(),
        7..=24 => permutations(&base).into_iter().map(|p| FluxTuple([p[0], p[1], p[2], p[3]])).collect(),
        _ => return Err(Error::InvalidConfig(format!("unsupported measurement count {count} (1..=24)"))),
    };
    Ok(list.into_iter().take(count).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExampleId {
    /// Observation on the bottom side, `rho = 0.001 sqrt(h)`.
    BottomObservation = 1,
    /// Four `rho = c h^2` rules.
    RegularizationSweep = 2,
    /// Observation on bottom and left.
    BottomLeftObservation = 3,
    /// Several measurements with fixed noise amplitude.
    MultipleMeasurements = 4,
}

impl ExampleId {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for ExampleId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(ExampleId::BottomObservation),
            2 => Ok(ExampleId::RegularizationSweep),
            3 => Ok(ExampleId::BottomLeftObservation),
            4 => Ok(ExampleId::MultipleMeasurements),
            _ => Err(Error::InvalidConfig(format!("unknown example {v} (expected 1-4)"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExampleOverrides {
    pub levels: Option<Vec<usize>>,
    pub max_iter: Option<usize>,
    pub rho_rule: Option<RhoRule>,
    pub rho_rules: Option<Vec<RhoRule>>,
    pub theta_rule: Option<ThetaRule>,
    pub gamma: Option<BoundaryRegion>,
    pub measurement_counts: Option<Vec<usize>>,
    pub params: Option<AlgorithmParams>,
}

/// Settings of one multilevel study.
#[derive(Debug, Clone)]
pub struct StudySettings {
    pub levels: Vec<usize>,
    pub rho: RhoRule,
    pub theta: ThetaRule,
    pub gamma: BoundaryRegion,
    pub tuples: Vec<FluxTuple>,
    pub seed: u64,
    pub params: AlgorithmParams,
}

/// Per-level summary of a multilevel study.
#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub h: f64,
    pub rho: f64,
    pub theta: f64,
    /// Mean noise level over the measurements.
    pub delta: f64,
    pub errors: ErrorMetrics,
    pub iterations: usize,
    pub stop: StopReason,
    pub initial_grad_norm: f64,
    pub final_grad_norm: f64,
    pub final_cost: f64,
}

pub struct StudyResult {
    pub levels: Vec<LevelReport>,
    pub outcomes: Vec<LevelOutcome>,
    pub exact: Vec<Vec<ExactData>>,
}

impl StudyResult {
    pub fn finest(&self) -> &LevelReport {
        self.levels.last().expect("at least one level")
    }

    pub fn logs(&self) -> impl Iterator<Item = (usize, &[IterationRecord])> {
        self.outcomes.iter().map(|o| (o.level, o.result.log.as_slice()))
    }
}

/// Runs the multilevel protocol: exact and noisy data are regenerated on every level.
pub fn run_study(settings: &StudySettings) -> Result<StudyResult> {
    let mut exact_per_level = Vec::new();
    let mut meta = Vec::new();
    let outcomes = multilevel_run(&settings.levels, INITIAL_BETA, &settings.params, |space| {
        let level = space.mesh().level();
        let rho = settings.rho.rho(level);
        let theta = settings.theta.theta(level, rho);
        let mut exact = Vec::new();
        let mut data = Vec::new();
        let mut delta = 0.0;
        for (i, tuple) in settings.tuples.iter().enumerate() {
            let ex = synthesize_exact(space, *tuple, settings.gamma)?;
            let m = add_noise(space, &ex, theta, derive_seed(settings.seed, level, i))?;
            delta += m.delta;
            data.push(m.data);
            exact.push(ex);
        }
        meta.push((rho, theta, delta / settings.tuples.len() as f64));
        exact_per_level.push(exact);
        Ok(LevelSetup { coefficients: catalog_coefficients(), data: MeasurementSet::new(data)?, rho })
    })?;
    let mut levels = Vec::new();
    for ((o, exact), (rho, theta, delta)) in outcomes.iter().zip(&exact_per_level).zip(&meta) {
        let pairs: Vec<_> = exact.iter().zip(o.setup.data.iter()).collect();
        let errors = error_metrics(&o.space, &o.result.beta, &pairs)?;
        levels.push(LevelReport {
            level: o.level,
            h: o.space.mesh().mesh_size(),
            rho: *rho,
            theta: *theta,
            delta: *delta,
            errors,
            iterations: o.result.iterations(),
            stop: o.result.stop,
            initial_grad_norm: o.result.initial_grad_norm,
            final_grad_norm: o.result.final_grad_norm,
            final_cost: o.result.final_cost,
        });
    }
    Ok(StudyResult { levels, outcomes, exact: exact_per_level })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Real(v) if v.is_nan() => f.write_str("--"),
            Cell::Real(v) => write!(f, "{v:.4e}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Nodal values with their coordinates, written as `x y value` lines.
#[derive(Debug, Clone)]
pub struct FieldDump {
    pub name: String,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

impl FieldDump {
    pub fn new(name: impl Into<String>, space: &FemSpace, field: &NodalField) -> Self {
        Self { name: name.into(), points: space.mesh().nodes().to_vec(), values: field.values().to_vec() }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (p, v) in self.points.iter().zip(&self.values) {
            s.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", p[0], p[1], v));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    /// `None` for a plain inversion run.
    pub example: Option<u8>,
    pub seed: u64,
    pub levels: Vec<usize>,
    pub gamma: String,
    pub rho_rules: Vec<String>,
    pub theta_rule: String,
    pub tuples: Vec<Vec<[f64; 4]>>,
    pub params: AlgorithmParams,
}

pub struct Report {
    pub tables: Vec<Table>,
    pub logs: Vec<(String, Vec<IterationRecord>)>,
    pub fields: Vec<FieldDump>,
    pub manifest: Manifest,
    /// One summary per multilevel study, in table order.
    pub studies: Vec<(String, Vec<LevelReport>)>,
}

fn error_cells(e: &ErrorMetrics) -> Vec<Cell> {
    e.as_array().into_iter().map(Cell::Real).collect()
}

fn level_table(name: &str, levels: &[LevelReport]) -> Table {
    let mut t = Table::new(name, &["level", "h", "rho", "delta", "L2_beta", "L2_N", "L2_M", "L2_D"]);
    for l in levels {
        let mut row = vec![Cell::Int(l.level as i64), Cell::Real(l.h), Cell::Real(l.rho), Cell::Real(l.delta)];
        row.extend(error_cells(&l.errors));
        t.rows.push(row);
    }
    t
}

fn eoc_table(name: &str, levels: &[LevelReport]) -> Result<Table> {
    let mut t = Table::new(name, &["level", "EOC_L2_beta", "EOC_L2_N", "EOC_L2_M", "EOC_L2_D"]);
    let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
    let mut cols = Vec::new();
    for k in 0..4 {
        let errs: Vec<f64> = levels.iter().map(|l| l.errors.as_array()[k]).collect();
        cols.push(eoc(&errs, &hs)?);
    }
    t.rows.push(std::iter::once(Cell::Int(levels[0].level as i64)).chain((0..4).map(|_| Cell::Real(f64::NAN))).collect());
    for (i, l) in levels.iter().enumerate().skip(1) {
        let mut row = vec![Cell::Int(l.level as i64)];
        row.extend(cols.iter().map(|(steps, _)| Cell::Real(steps[i - 1])));
        t.rows.push(row);
    }
    let mut mean = vec![Cell::Text("mean".into())];
    mean.extend(cols.iter().map(|(_, m)| Cell::Real(*m)));
    t.rows.push(mean);
    Ok(t)
}

fn iterations_table(name: &str, levels: &[LevelReport]) -> Table {
    let mut t = Table::new(name, &["level", "iterations", "stop", "grad_norm_initial", "grad_norm_final", "J_final"]);
    for l in levels {
        t.rows.push(vec![
            Cell::Int(l.level as i64),
            Cell::Int(l.iterations as i64),
            Cell::Text(match l.stop {
                StopReason::Tolerance => "tolerance".into(),
                StopReason::MaxIterations => "max-iterations".into(),
            }),
            Cell::Real(l.initial_grad_norm),
            Cell::Real(l.final_grad_norm),
            Cell::Real(l.final_cost),
        ]);
    }
    t
}

fn finest_fields(prefix: &str, study: &StudyResult) -> Vec<FieldDump> {
    let o = study.outcomes.last().expect("at least one level");
    let exact_beta = NodalField::interpolate(o.space.mesh(), beta_true);
    vec![
        FieldDump::new(format!("{prefix}beta"), &o.space, &o.result.beta),
        FieldDump::new(format!("{prefix}beta_error"), &o.space, &o.result.beta.sub(&exact_beta)),
    ]
}

#[derive(Debug, Clone)]
pub struct GradientCheckOptions {
    pub level: usize,
    pub seed: u64,
    pub directions: usize,
    pub rho: RhoRule,
    pub theta: ThetaRule,
    pub gamma: BoundaryRegion,
    pub step: f64,
    pub gradient: GradientRepresentation,
    pub tuple: FluxTuple,
    /// Evaluate at the interpolated exact coefficient instead of a random one.
    pub at_truth: bool,
    pub solver_rel_tol: f64,
    /// Flips the sign of the gradient before comparing; a working check must fail.
    pub negate_gradient: bool,
}

#[derive(Debug, Clone)]
pub struct GradientCheckReport {
    /// `||grad J||_{L2}` at the evaluation point.
    pub gradient_norm: f64,
    pub checks: Vec<GradientCheck>,
}

impl Default for GradientCheckOptions {
    fn default() -> Self {
        Self {
            level: 4,
            seed: 1,
            directions: 10,
            rho: RhoRule::Sqrt,
            theta: ThetaRule::Ex1,
            gamma: BoundaryRegion::new(&[Side::Bottom]).expect("non-empty"),
            step: 1e-5,
            gradient: GradientRepresentation::L2Projection,
            tuple: FluxTuple::DEFAULT,
            at_truth: false,
            solver_rel_tol: crate::sparse::DEFAULT_REL_TOL,
            negate_gradient: false,
        }
    }
}

/// Gradient check on the benchmark problem with noisy data, at a random
/// coefficient in `[1, 3]` (or the exact one) along random directions in `[-1, 1]`.
pub fn run_gradient_check(opts: &GradientCheckOptions) -> Result<GradientCheckReport> {
    let space = FemSpace::new(crate::mesh::build_square_mesh(opts.level)?);
    let n = space.node_count();
    let rho = opts.rho.rho(opts.level);
    let exact = synthesize_exact(&space, opts.tuple, opts.gamma)?;
    let data = add_noise(&space, &exact, opts.theta.theta(opts.level, rho), derive_seed(opts.seed, opts.level, 0))?;
    let params = AlgorithmParams { gradient: opts.gradient, ..AlgorithmParams::default() };
    let config = SolverConfig::new(&space, rho, NodalField::constant(n, INITIAL_BETA), &params);
    let model = ForwardModel::new(&space, catalog_coefficients())?.with_rel_tol(opts.solver_rel_tol);
    let problem = InverseProblem::new(model, MeasurementSet::single(data.data), config)?;
    let mut rng = NoiseStream::new(derive_seed(opts.seed, opts.level, usize::MAX));
    let random_beta = NodalField::new((0..n).map(|_| 2.0 + rng.next_symmetric()).collect());
    let beta = if opts.at_truth { beta_true_interpolant(space.mesh()) } else { random_beta };
    let directions: Vec<NodalField> =
        (0..opts.directions).map(|_| NodalField::new((0..n).map(|_| rng.next_symmetric()).collect())).collect();
    let mut grad = problem.gradient(&beta)?;
    let gradient_norm = space.l2_norm(&grad);
    if opts.negate_gradient {
        grad = grad.scale(-1.0);
    }
    Ok(GradientCheckReport { gradient_norm, checks: gradient_check(&problem, &beta, &grad, &directions, opts.step)? })
}

type Outputs = (Vec<Table>, Vec<(String, Vec<IterationRecord>)>, Vec<FieldDump>);

fn study_outputs(prefix: &str, study: &StudyResult) -> Result<Outputs> {
    let mut tables = vec![level_table(&format!("{prefix}_errors"), &study.levels)];
    if study.levels.len() >= 2 {
        tables.push(eoc_table(&format!("{prefix}_eoc"), &study.levels)?);
    }
    tables.push(iterations_table(&format!("{prefix}_iterations"), &study.levels));
    let logs = study.logs().map(|(level, log)| (format!("{prefix}_log_l{level}"), log.to_vec())).collect();
    Ok((tables, logs, finest_fields(&format!("{prefix}_"), study)))
}

/// Single multilevel inversion on the benchmark problem.
pub fn run_inversion(settings: &StudySettings) -> Result<Report> {
    let study = run_study(settings)?;
    let (tables, logs, fields) = study_outputs("invert", &study)?;
    let manifest = Manifest {
        example: None,
        seed: settings.seed,
        levels: settings.levels.clone(),
        gamma: settings.gamma.to_string(),
        rho_rules: vec![settings.rho.to_string()],
        theta_rule: settings.theta.to_string(),
        tuples: vec![settings.tuples.iter().map(|t| t.0).collect()],
        params: settings.params.clone(),
    };
    Ok(Report { tables, logs, fields, manifest, studies: vec![("invert".into(), study.levels)] })
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Report {
    /// Writes tables (`<name>.csv`), logs, field dumps (`<name>.txt`) and
    /// `manifest.json` into `dir`, creating it if needed. Returns the written paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
            let path = dir.join(name);
            write_atomic(&path, &bytes)?;
            written.push(path);
            Ok(())
        };
        for t in &self.tables {
            put(format!("{}.csv", t.name), t.to_csv().into_bytes())?;
        }
        for (name, log) in &self.logs {
            let mut buf = Vec::new();
            write_log_csv(log, &mut buf)?;
            put(format!("{name}.csv"), buf)?;
        }
        for f in &self.fields {
            put(format!("{}.txt", f.name), f.to_text().into_bytes())?;
        }
        let mut json = serde_json::to_vec_pretty(&self.manifest)?;
        json.push(b'\n');
        put("manifest.json".into(), json)?;
        Ok(written)
    }
}

pub const DEFAULT_LEVELS: [usize; 5] = [4, 8, 16, 32, 64];

/// Runs one of the four studies.
pub fn run_example(id: ExampleId, seed: u64, overrides: &ExampleOverrides) -> Result<Report> {
    let levels = overrides.levels.clone().unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let mut params = overrides.params.clone().unwrap_or_default();
    if let Some(m) = overrides.max_iter {
        params.max_iter = m;
    }
    let bottom = BoundaryRegion::new(&[Side::Bottom])?;
    let bottom_left = BoundaryRegion::new(&[Side::Bottom, Side::Left])?;
    let (default_gamma, default_theta) = match id {
        ExampleId::BottomObservation => (bottom, ThetaRule::Ex1),
        ExampleId::RegularizationSweep => (bottom, ThetaRule::Ex2),
        ExampleId::BottomLeftObservation => (bottom_left, ThetaRule::Ex3),
        ExampleId::MultipleMeasurements => (bottom_left, ThetaRule::Fixed(0.2)),
    };
    let gamma = overrides.gamma.unwrap_or(default_gamma);
    let theta = overrides.theta_rule.unwrap_or(default_theta);
    let rho_rules: Vec<RhoRule> = match id {
        ExampleId::RegularizationSweep => overrides
            .rho_rules
            .clone()
            .unwrap_or_else(|| vec![RhoRule::H2(1.0), RhoRule::H2(1e-1), RhoRule::H2(1e-2), RhoRule::H2(1e-3)]),
        _ => vec![overrides.rho_rule.unwrap_or(RhoRule::Sqrt)],
    };
    let counts: Vec<usize> = match id {
        ExampleId::MultipleMeasurements => overrides.measurement_counts.clone().unwrap_or_else(|| vec![1, 6, 16]),
        _ => vec![1],
    };
    let tuple_sets = counts.iter().map(|&c| measurement_tuples(c)).collect::<Result<Vec<_>>>()?;
    let settings = |rho: RhoRule, tuples: Vec<FluxTuple>| StudySettings {
        levels: levels.clone(),
        rho,
        theta,
        gamma,
        tuples,
        seed,
        params: params.clone(),
    };

    let mut tables = Vec::new();
    let mut logs = Vec::new();
    let mut fields = Vec::new();
    let mut studies = Vec::new();
    match id {
        ExampleId::BottomObservation | ExampleId::BottomLeftObservation => {
            let study = run_study(&settings(rho_rules[0], tuple_sets[0].clone()))?;
            let prefix = format!("example{}", id.number());
            let (t, l, f) = study_outputs(&prefix, &study)?;
            tables.extend(t);
            logs.extend(l);
            fields.extend(f);
            studies.push((prefix, study.levels.clone()));
        }
        ExampleId::RegularizationSweep => {
            let mut t = Table::new("example2_regularization", &["rule", "rho", "delta", "L2_beta", "L2_N", "L2_M", "L2_D"]);
            for rule in &rho_rules {
                let study = run_study(&settings(*rule, tuple_sets[0].clone()))?;
                let f = study.finest();
                let mut row = vec![Cell::Text(rule.to_string()), Cell::Real(f.rho), Cell::Real(f.delta)];
                row.extend(error_cells(&f.errors));
                t.rows.push(row);
                tables.push(iterations_table(&format!("example2_{rule}_iterations"), &study.levels));
                for (level, log) in study.logs() {
                    logs.push((format!("example2_{rule}_log_l{level}"), log.to_vec()));
                }
                fields.extend(finest_fields(&format!("example2_{rule}_"), &study));
                studies.push((format!("example2_{rule}"), study.levels.clone()));
            }
            tables.insert(0, t);
        }
        ExampleId::MultipleMeasurements => {
            let mut t = Table::new("example4_measurements", &["I", "iterations", "delta", "L2_beta", "L2_N", "L2_M", "L2_D"]);
            for (count, tuples) in counts.iter().zip(&tuple_sets) {
                let study = run_study(&settings(rho_rules[0], tuples.clone()))?;
                let f = study.finest();
                let mut row = vec![Cell::Int(*count as i64), Cell::Int(f.iterations as i64), Cell::Real(f.delta)];
                row.extend(error_cells(&f.errors));
                t.rows.push(row);
                tables.push(iterations_table(&format!("example4_I{count}_iterations"), &study.levels));
                for (level, log) in study.logs() {
                    logs.push((format!("example4_I{count}_log_l{level}"), log.to_vec()));
                }
                fields.extend(finest_fields(&format!("example4_I{count}_"), &study));
                studies.push((format!("example4_I{count}"), study.levels.clone()));
            }
            tables.insert(0, t);
        }
    }
    let manifest = Manifest {
        example: Some(id.number()),
        seed,
        levels: levels.clone(),
        gamma: gamma.to_string(),
        rho_rules: rho_rules.iter().map(|r| r.to_string()).collect(),
        theta_rule: theta.to_string(),
        tuples: tuple_sets.iter().map(|s| s.iter().map(|t| t.0).collect()).collect(),
        params,
    };
    Ok(Report { tables, logs, fields, manifest, studies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_square_mesh;

    #[test]
    fn schedules_match_reported_values() {
        assert!((rho_schedule("sqrt", 4).unwrap() - 8.4090e-4).abs() < 5e-9);
        assert!((rho_schedule("sqrt", 64).unwrap() - 2.1022e-4).abs() < 5e-9);
        assert!((rho_schedule("h2", 64).unwrap() - 1.9531e-3).abs() < 5e-8);
        assert!((rho_schedule("h2e-3", 64).unwrap() - 1.9531e-6).abs() < 5e-11);
        assert!(matches!(rho_schedule("cubic", 4), Err(Error::UnknownSchedule(_))));
        assert!(matches!(theta_schedule("ex9", 4, 1.0), Err(Error::UnknownSchedule(_))));
        let rho = rho_schedule("sqrt", 8).unwrap();
        let h = 8f64.sqrt() / 8.0;
        assert_eq!(theta_schedule("ex1", 8, rho).unwrap(), h * (10.0 * rho).sqrt());
        assert_eq!(theta_schedule("ex3", 8, rho).unwrap(), 0.5 * h * (10.0 * rho).sqrt());
        assert_eq!(theta_schedule("ex4", 8, rho).unwrap(), 0.2);
        for s in ["sqrt", "h2", "h2e-1", "h2e-2", "h2e-3", "fixed:0.5"] {
            assert_eq!(s.parse::<RhoRule>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn exact_fluxes() {
        let mesh = build_square_mesh(4).unwrap();
        let flux = FluxTuple([1.0, -2.0, 3.0, -4.0]).edge_flux(&mesh);
        for (e, v) in mesh.boundary_edges().iter().zip(flux.values()) {
            let m = mesh.edge_midpoint(e);
            let expect = match e.side {
                Side::Bottom => if m[0] > 0.0 { 1.0 } else { -2.0 },
                Side::Left => if m[1] <= 0.0 { 3.0 } else { -4.0 },
                Side::Right => if m[1] <= 0.0 { 4.0 } else { -3.0 },
                Side::Top => if m[0] > 0.0 { 2.0 } else { -1.0 },
            };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn noise_stream_range_and_determinism() {
        let mut a = NoiseStream::new(42);
        let mut b = NoiseStream::new(42);
        for _ in 0..1000 {
            let x = a.next_symmetric();
            assert!(x > -1.0 && x < 1.0);
            assert_eq!(x.to_bits(), b.next_symmetric().to_bits());
        }
        assert_ne!(derive_seed(1, 4, 0), derive_seed(1, 8, 0));
        assert_ne!(derive_seed(1, 4, 0), derive_seed(1, 4, 1));
    }

    #[test]
    fn eoc_reference_values() {
        // mesh sizes of levels 4 and 8, shown as 0.7071 and 0.3536
        let h = [8f64.sqrt() / 4.0, 8f64.sqrt() / 8.0];
        let (steps, mean) = eoc(&[1.2185, 0.5989], &h).unwrap();
        assert!((steps[0] - 1.0247).abs() < 1e-4);
        assert_eq!(mean, steps[0]);
        assert_eq!(eoc(&[0.3, 0.3], &[0.5, 0.25]).unwrap().0[0], 0.0);
        assert!((eoc(&[0.4, 0.2], &[0.5, 0.25]).unwrap().0[0] - 1.0).abs() < 1e-15);
        assert!(matches!(eoc(&[0.4, 0.0], &[0.5, 0.25]), Err(Error::NonPositiveError(_))));
        assert!(eoc(&[0.4], &[0.5]).is_err());
    }

    #[test]
    fn measurement_tuple_sets() {
        assert_eq!(measurement_tuples(1).unwrap(), vec![FluxTuple::DEFAULT]);
        let six = measurement_tuples(6).unwrap();
        assert_eq!(six.len(), 6);
        assert_eq!(six[0], FluxTuple::DEFAULT);
        assert!(six.iter().all(|t| t.0[3] == -4.0));
        let sixteen = measurement_tuples(16).unwrap();
        assert_eq!(sixteen.len(), 16);
        assert_eq!(sixteen[0], FluxTuple::DEFAULT);
        assert_eq!(sixteen[1], FluxTuple([1.0, -2.0, -4.0, 3.0]));
        assert_eq!(permutations(&[1.0, 2.0, 3.0, 4.0]).len(), 24);
        assert!(measurement_tuples(25).is_err());
    }

    #[test]
    fn table_formatting() {
        let mut t = Table::new("t", &["level", "h"]);
        t.rows.push(vec![Cell::Int(4), Cell::Real(0.70710678)]);
        t.rows.push(vec![Cell::Text("mean".into()), Cell::Real(f64::NAN)]);
        assert_eq!(t.to_csv(), "level,h\n4,7.0711e-1\nmean,--\n");
    }

    #[test]
    fn example_ids() {
        assert!(ExampleId::try_from(5).is_err());
        assert_eq!(ExampleId::try_from(3).unwrap(), ExampleId::BottomLeftObservation);
    }
}
