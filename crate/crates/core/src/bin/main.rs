//! Command line front end: forward solves, gradient checks, inversions and the
//! example studies on the benchmark problem.
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use reaction_inverse::experiments::{
    self, run_example, run_gradient_check, run_inversion, write_atomic, ExampleId, ExampleOverrides, FluxTuple,
    GradientCheckOptions, Report, RhoRule, StudySettings, ThetaRule,
};
use reaction_inverse::forward::{trace, write_field, ForwardModel};
use reaction_inverse::{AlgorithmParams, BoundaryRegion, Error, FemSpace, NodalField, Result, ScalarCoefficient};

const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(version, about = "Reaction coefficient reconstruction from boundary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Neumann, mixed and Dirichlet problems for a given coefficient.
    Forward {
        #[command(flatten)]
        common: Common,
        /// Constant value or field dump; defaults to the exact coefficient.
        #[arg(long)]
        beta: Option<String>,
    },
    /// Compare the adjoint gradient with central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Number of random directions.
        #[arg(long)]
        directions: Option<usize>,
        /// Evaluate at the interpolated exact coefficient.
        #[arg(long)]
        at_truth: bool,
        #[arg(long, hide = true)]
        flip_gradient_sign: bool,
    },
    /// Multilevel inversion with noisy data.
    Invert(Common),
    /// Reproduce one of the four example studies.
    Example {
        /// Example number (1-4).
        number: u8,
        #[command(flatten)]
        common: Common,
        /// Measurement counts for example 4, e.g. `1,6,16`.
        #[arg(long = "I", value_delimiter = ',')]
        measurements: Option<Vec<usize>>,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Single refinement level (intervals per side).
    #[arg(long)]
    level: Option<usize>,
    /// Comma separated levels, each twice the previous one.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// `sqrt`, `h2`, `h2e-1`, `h2e-2`, `h2e-3` or `fixed:<value>`.
    #[arg(long)]
    rho_rule: Option<String>,
    /// `ex1`, `ex2`, `ex3`, `ex4`, `none` or `fixed:<value>`.
    #[arg(long)]
    theta_rule: Option<String>,
    /// Observation boundary, e.g. `bottom` or `bottom,left`.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Boundary flux values `A,B,C,D`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    tuple: Option<Vec<f64>>,
    /// Relative residual tolerance of the linear solves.
    #[arg(long)]
    solver_tol: Option<f64>,
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    level: Option<usize>,
    levels: Option<Vec<usize>>,
    seed: Option<u64>,
    rho_rule: Option<String>,
    theta_rule: Option<String>,
    gamma: Option<String>,
    out: Option<PathBuf>,
    max_iter: Option<usize>,
    tuple: Option<Vec<f64>>,
    solver_tol: Option<f64>,
    beta: Option<String>,
    directions: Option<usize>,
    #[serde(rename = "I")]
    measurements: Option<Vec<usize>>,
}

/// Flags merged over the optional config file.
struct Settings {
    level: Option<usize>,
    levels: Option<Vec<usize>>,
    seed: u64,
    rho_rule: Option<RhoRule>,
    theta_rule: Option<ThetaRule>,
    gamma: Option<BoundaryRegion>,
    out: PathBuf,
    max_iter: Option<usize>,
    tuple: FluxTuple,
    solver_tol: Option<f64>,
    beta: Option<String>,
    directions: Option<usize>,
    measurements: Option<Vec<usize>>,
}

impl Settings {
    fn resolve(
        c: Common,
        beta: Option<String>,
        directions: Option<usize>,
        measurements: Option<Vec<usize>>,
    ) -> Result<Self> {
        let file = match &c.config {
            Some(path) => serde_json::from_str::<FileConfig>(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
            None => FileConfig::default(),
        };
        let rho_rule = c.rho_rule.or(file.rho_rule).map(|s| s.parse()).transpose()?;
        let theta_rule = c.theta_rule.or(file.theta_rule).map(|s| s.parse()).transpose()?;
        let gamma = c.gamma.or(file.gamma).map(|s| s.parse()).transpose()?;
        let tuple = match c.tuple.or(file.tuple) {
            None => FluxTuple::DEFAULT,
            Some(v) => FluxTuple(
                v.try_into().map_err(|_| Error::InvalidConfig("tuple needs exactly four values".into()))?,
            ),
        };
        let solver_tol = c.solver_tol.or(file.solver_tol);
        if let Some(t) = solver_tol {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!("solver tolerance {t} must lie in (0, 1)")));
            }
        }
        Ok(Self {
            level: c.level.or(file.level),
            levels: c.levels.or(file.levels),
            seed: c.seed.or(file.seed).unwrap_or(1),
            rho_rule,
            theta_rule,
            gamma,
            out: c.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            max_iter: c.max_iter.or(file.max_iter),
            tuple,
            solver_tol,
            beta: beta.or(file.beta),
            directions: directions.or(file.directions),
            measurements: measurements.or(file.measurements),
        })
    }

    /// `--levels` wins over `--level`.
    fn level_list(&self, default: &[usize]) -> Vec<usize> {
        match (&self.levels, self.level) {
            (Some(l), _) => l.clone(),
            (None, Some(l)) => vec![l],
            (None, None) => default.to_vec(),
        }
    }

    fn single_level(&self, default: usize) -> Result<usize> {
        match self.level_list(&[default]).as_slice() {
            [l] => Ok(*l),
            _ => Err(Error::InvalidConfig("this command takes a single level".into())),
        }
    }
}

fn forward(s: &Settings) -> Result<()> {
    let level = s.single_level(8)?;
    let gamma = s.gamma.unwrap_or(BoundaryRegion::new(&[reaction_inverse::Side::Bottom])?);
    let space = FemSpace::new(reaction_inverse::build_square_mesh(level)?);
    let mut model = ForwardModel::new(&space, experiments::catalog_coefficients())?;
    if let Some(t) = s.solver_tol {
        model = model.with_rel_tol(t);
    }
    let beta = match &s.beta {
        None => experiments::beta_true_interpolant(space.mesh()),
        Some(source) => read_beta(source, space.node_count())?,
    };
    let k = model.stiffness(&ScalarCoefficient::Nodal(beta.clone()))?;
    let flux = s.tuple.edge_flux(space.mesh());
    let neumann = model.neumann(&k, &flux)?;
    let mixed = model.mixed(&k, &flux, &gamma, &trace(&space, &neumann, &gamma))?;
    let dirichlet = model.dirichlet(&k, &trace(&space, &neumann, &BoundaryRegion::all()))?;
    std::fs::create_dir_all(&s.out)?;
    let mut mesh_dump = Vec::new();
    space.mesh().write_dump(&mut mesh_dump)?;
    write_atomic(&s.out.join("mesh.txt"), &mesh_dump)?;
    for (name, field) in [("beta", &beta), ("neumann", &neumann), ("mixed", &mixed), ("dirichlet", &dirichlet)] {
        let mut buf = Vec::new();
        write_field(&space, field, &mut buf)?;
        write_atomic(&s.out.join(format!("{name}.txt")), &buf)?;
    }
    println!(
        "level {level}: {} nodes, |N - M| = {:.4e}, |N - D| = {:.4e}",
        space.node_count(),
        space.l2_norm(&neumann.sub(&mixed)),
        space.l2_norm(&neumann.sub(&dirichlet))
    );
    println!("wrote {}", s.out.display());
    Ok(())
}

/// A constant value or a field dump whose last column holds the nodal values.
fn read_beta(source: &str, nodes: usize) -> Result<NodalField> {
    if let Ok(v) = source.parse::<f64>() {
        return Ok(NodalField::constant(nodes, v));
    }
    let text = std::fs::read_to_string(source)?;
    let values = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .last()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidConfig(format!("{source}: malformed line '{l}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != nodes {
        return Err(Error::InvalidConfig(format!("{source}: {} values for {nodes} nodes", values.len())));
    }
    Ok(NodalField::new(values))
}

fn gradcheck(s: &Settings, at_truth: bool, flip: bool) -> Result<bool> {
    let defaults = GradientCheckOptions::default();
    let opts = GradientCheckOptions {
        level: s.single_level(defaults.level)?,
        seed: s.seed,
        directions: s.directions.unwrap_or(defaults.directions),
        rho: s.rho_rule.unwrap_or(defaults.rho),
        theta: s.theta_rule.unwrap_or(defaults.theta),
        gamma: s.gamma.unwrap_or(defaults.gamma),
        tuple: s.tuple,
        at_truth,
        solver_rel_tol: s.solver_tol.unwrap_or(defaults.solver_rel_tol),
        negate_gradient: flip,
        ..defaults
    };
    let report = run_gradient_check(&opts)?;
    let checks = &report.checks;
    println!("gradient norm {:.6e}", report.gradient_norm);
    let mut csv = String::from("direction,analytic,finite_difference,error,relative_error\n");
    let mut ok = true;
    println!("{:>3} {:>14} {:>14} {:>10}", "k", "analytic", "central diff", "error");
    for (i, c) in checks.iter().enumerate() {
        ok &= c.error <= GRADIENT_TOLERANCE;
        println!("{i:>3} {:>14.6e} {:>14.6e} {:>10.2e}", c.analytic, c.finite_difference, c.error);
        csv.push_str(&format!(
            "{i},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            c.analytic, c.finite_difference, c.error, c.relative_error
        ));
    }
    std::fs::create_dir_all(&s.out)?;
    write_atomic(&s.out.join("gradcheck.csv"), csv.as_bytes())?;
    println!("gradient check {}", if ok { "passed" } else { "FAILED" });
    Ok(ok)
}

fn params(s: &Settings) -> AlgorithmParams {
    let mut p = AlgorithmParams::default();
    if let Some(m) = s.max_iter {
        p.max_iter = m;
    }
    if let Some(t) = s.solver_tol {
        p.solver_rel_tol = t;
    }
    p
}

fn print_report(report: &Report, out: &Path) -> Result<()> {
    for t in &report.tables {
        println!("{}", t.name);
        print!("{}", t.to_csv());
        println!();
    }
    let files = report.write_to(out)?;
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn invert(s: &Settings) -> Result<()> {
    let settings = StudySettings {
        levels: s.level_list(&[4, 8, 16]),
        rho: s.rho_rule.unwrap_or(RhoRule::Sqrt),
        theta: s.theta_rule.unwrap_or(ThetaRule::Ex1),
        gamma: s.gamma.unwrap_or(BoundaryRegion::new(&[reaction_inverse::Side::Bottom])?),
        tuples: vec![s.tuple],
        seed: s.seed,
        params: params(s),
    };
    print_report(&run_inversion(&settings)?, &s.out)
}

fn example(number: u8, s: &Settings) -> Result<()> {
    let id = ExampleId::try_from(number)?;
    let overrides = ExampleOverrides {
        levels: s.levels.clone().or(s.level.map(|l| vec![l])),
        max_iter: s.max_iter,
        rho_rule: s.rho_rule,
        rho_rules: s.rho_rule.map(|r| vec![r]),
        theta_rule: s.theta_rule,
        gamma: s.gamma,
        measurement_counts: s.measurements.clone(),
        params: (s.max_iter.is_some() || s.solver_tol.is_some()).then(|| params(s)),
    };
    print_report(&run_example(id, s.seed, &overrides)?, &s.out)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Forward { common, beta } => forward(&Settings::resolve(common, beta, None, None)?).map(|_| true),
        Command::Gradcheck { common, directions, at_truth, flip_gradient_sign } => {
            gradcheck(&Settings::resolve(common, None, directions, None)?, at_truth, flip_gradient_sign)
        }
        Command::Invert(c) => invert(&Settings::resolve(c, None, None, None)?).map(|_| true),
        Command::Example { number, common, measurements } => {
            example(number, &Settings::resolve(common, None, None, measurements)?).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
