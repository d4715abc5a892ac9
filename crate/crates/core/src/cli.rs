//! Command-line front end: one subcommand per solver operation. Results go to
//! a CSV file (or stdout) and a `key = value` manifest next to it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::discretize::{
    assemble, default_truncation, truncate, DiscreteSystem, DiscretizeError, TruncationPolicy, DEFAULT_MESH,
};
use crate::graph::{build_graph, GraphError, MetricGraph};
use crate::io::{csv_string, parse_graph_file, Cell, IoError, Manifest};
use crate::multiplicity::{enumerate_branches, normalized_family, BranchReport, MultiplicityError, NewtonOptions};
use crate::shooting::{
    check_bifurcation, mass_frequency_curve, solve_star_delta, star_linear_ground_state, BifurcationOptions,
    ShootingError,
};
use crate::spectral::{default_eps_zero, negative_spectrum_with, EigenOptions, SpectralError};
use crate::variational::{
    detect_threshold, detect_threshold_adaptive, minimize_fixed_mass, minimize_global, minimize_global_adaptive,
    tau_curve, MinimizeOptions, ThresholdOptions, VariationalError,
};

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const INPUT: i32 = 3;
    pub const GRAPH: i32 = 4;
    pub const NUMERICAL: i32 = 5;
    pub const OUT_OF_RANGE: i32 = 6;
    pub const IO: i32 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("input: {0}")]
    Input(IoError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("vertex condition: {0}")]
    Condition(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Input(_) => exit::INPUT,
            CliError::Graph(_) | CliError::Condition(_) => exit::GRAPH,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::OutOfRange(_) => exit::OUT_OF_RANGE,
            CliError::Io(_) => exit::IO,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io(_) | IoError::Csv(_) | IoError::Arity { .. } => CliError::Io(e.to_string()),
            _ => CliError::Input(e),
        }
    }
}

impl From<DiscretizeError> for CliError {
    fn from(e: DiscretizeError) -> Self {
        match e {
            DiscretizeError::InvalidCondition { .. } => CliError::Condition(e.to_string()),
            DiscretizeError::Linalg(_) | DiscretizeError::SystemMismatch => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Discretize(d) => d.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<VariationalError> for CliError {
    fn from(e: VariationalError) -> Self {
        use VariationalError as V;
        match e {
            V::Discretize(d) => d.into(),
            V::Spectral(s) => s.into(),
            V::NonPositiveMass(_) | V::InvalidGrid => CliError::Usage(e.to_string()),
            V::SupercriticalExponent(_) | V::NoBoundState(_) | V::InvalidBracket { .. } | V::NoSignChange { .. } => {
                CliError::OutOfRange(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ShootingError> for CliError {
    fn from(e: ShootingError) -> Self {
        use ShootingError as S;
        match e {
            S::NoConvergence | S::Quadrature(_) | S::InsufficientSamples { .. } => CliError::Numerical(e.to_string()),
            S::NoEdges => CliError::Usage(e.to_string()),
            _ => CliError::OutOfRange(e.to_string()),
        }
    }
}

impl From<MultiplicityError> for CliError {
    fn from(e: MultiplicityError) -> Self {
        use MultiplicityError as M;
        match e {
            M::Discretize(d) => d.into(),
            M::Spectral(s) => s.into(),
            M::FrequencyOutOfRange { .. } | M::InvalidFrequency(_) | M::NonPositiveMass(_) => {
                CliError::OutOfRange(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qgnls", about = "Stationary states of the defocusing NLS on metric graphs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// Output CSV path; the manifest goes to `<out>.manifest.txt`. Without it
    /// the CSV is printed to stdout and the manifest to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized starting vectors.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent sub-solves.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args, Clone)]
struct GraphArgs {
    /// Graph description file (JSON).
    #[arg(long)]
    graph: PathBuf,
    /// Override the exponent from the graph file.
    #[arg(long)]
    p: Option<f64>,
    /// Mesh size.
    #[arg(long, default_value_t = DEFAULT_MESH)]
    h: f64,
    /// Truncation length of infinite edges (default 40).
    #[arg(long = "L")]
    l: Option<f64>,
    /// Solver tolerance (defaults depend on the subcommand).
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Clone)]
struct StarArgs {
    /// Number of half-line edges.
    #[arg(long = "E")]
    edges: usize,
    /// Delta strength at the vertex; negative is attractive.
    #[arg(long)]
    alpha: f64,
    /// Nonlinearity exponent.
    #[arg(long)]
    p: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Clone)]
struct OmegaGrid {
    #[arg(long)]
    omega_min: f64,
    #[arg(long)]
    omega_max: f64,
    #[arg(long)]
    omega_steps: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Negative eigenvalues of the discrete Hamiltonian.
    #[command(allow_negative_numbers = true)]
    Spectrum {
        #[command(flatten)]
        g: GraphArgs,
        /// Report this many lowest eigenvalues instead of the negative ones.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Energy minimizer at fixed mass.
    #[command(allow_negative_numbers = true)]
    Groundstate {
        #[command(flatten)]
        g: GraphArgs,
        /// L² norm of the minimizer.
        #[arg(long)]
        mu: f64,
        /// Also write the profile as `edge,x,psi`.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Energy level and multiplier along a mass grid.
    #[command(allow_negative_numbers = true)]
    Taucurve {
        #[command(flatten)]
        g: GraphArgs,
        #[arg(long)]
        mu_min: f64,
        #[arg(long)]
        mu_max: f64,
        #[arg(long)]
        mu_steps: usize,
    },
    /// Mass where the multiplier changes sign.
    #[command(allow_negative_numbers = true)]
    Threshold {
        #[command(flatten)]
        g: GraphArgs,
        #[arg(long)]
        mu_lo: f64,
        #[arg(long)]
        mu_hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        mu_tol: f64,
        /// Double the truncation length until the estimate settles.
        #[arg(long)]
        adaptive: bool,
        /// Stop doubling once μ_1 moves by less than this.
        #[arg(long, default_value_t = 0.02)]
        tail_tol: f64,
        #[arg(long, default_value_t = 3)]
        max_doublings: usize,
    },
    /// Unconstrained energy minimum.
    #[command(allow_negative_numbers = true)]
    Globalmin {
        #[command(flatten)]
        g: GraphArgs,
        /// Double the truncation length until the minimizer's mass settles.
        #[arg(long)]
        adaptive: bool,
        /// Stop doubling once the mass moves by less than this.
        #[arg(long, default_value_t = 0.01)]
        tail_tol: f64,
        #[arg(long, default_value_t = 3)]
        max_doublings: usize,
    },
    /// Exact stationary state on a star with a delta vertex.
    #[command(allow_negative_numbers = true)]
    Shoot {
        #[command(flatten)]
        s: StarArgs,
        /// Frequency in (0, (α/E)²).
        #[arg(long)]
        omega: f64,
    },
    /// Mass against frequency on a star.
    #[command(allow_negative_numbers = true)]
    Masscurve {
        #[command(flatten)]
        s: StarArgs,
        #[command(flatten)]
        grid: OmegaGrid,
    },
    /// Small-amplitude asymptotics of the mass curve.
    #[command(allow_negative_numbers = true)]
    Bifurcate {
        #[command(flatten)]
        s: StarArgs,
        #[command(flatten)]
        grid: OmegaGrid,
        /// Fit window as a fraction of |l_H|.
        #[arg(long, default_value_t = 0.1)]
        window: f64,
    },
    /// Stationary states at fixed frequency seeded by negative eigenpairs.
    #[command(allow_negative_numbers = true)]
    Branches {
        #[command(flatten)]
        g: GraphArgs,
        /// Frequency in (0, −λ_1).
        #[arg(long)]
        omega: f64,
    },
    /// Stationary states at fixed mass seeded by negative eigenpairs.
    #[command(allow_negative_numbers = true)]
    Normalized {
        #[command(flatten)]
        g: GraphArgs,
        #[arg(long)]
        mu: f64,
    },
}

fn linspace(a: f64, b: f64, n: usize) -> Result<Vec<f64>, CliError> {
    match n {
        0 => Err(CliError::Usage("grid needs at least one step".into())),
        1 => Ok(vec![a]),
        _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
    }
}

struct Output {
    schema: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    manifest: Manifest,
}

impl Output {
    fn new(manifest: Manifest, schema: &[&'static str]) -> Self {
        Self { schema: schema.to_vec(), rows: Vec::new(), manifest }
    }
}

fn base_manifest(command: &str, common: &Common) -> Manifest {
    let mut m = Manifest::new();
    m.set("command", command)
        .set("version", env!("CARGO_PKG_VERSION"))
        .set("seed", common.seed)
        .set("jobs", common.jobs);
    m
}

fn load_graph(g: &GraphArgs) -> Result<MetricGraph, CliError> {
    let mut graph = build_graph(&parse_graph_file(&g.graph)?)?;
    if let Some(p) = g.p {
        graph = graph.with_exponent(p)?;
    }
    Ok(graph)
}

fn load_system(g: &GraphArgs, m: &mut Manifest) -> Result<(MetricGraph, DiscreteSystem), CliError> {
    let graph = load_graph(g)?;
    let l = g.l.unwrap_or_else(|| default_truncation(None));
    let sys = assemble(&truncate(&graph, TruncationPolicy::Fixed(l))?, g.h)?;
    m.set("graph", g.graph.display())
        .set("p", graph.p())
        .set("h", g.h)
        .set("L", l)
        .set("truncation_far_end", "dirichlet")
        .set("dofs", sys.dim());
    Ok((graph, sys))
}

fn eigen_opts(c: &Common) -> EigenOptions {
    EigenOptions { seed: c.seed, ..Default::default() }
}

fn minimize_opts(g: &GraphArgs, m: &mut Manifest) -> MinimizeOptions {
    let mut o = MinimizeOptions::default();
    if let Some(t) = g.tol {
        o.tol = t;
    }
    m.set("min_tol", o.tol)
        .set("min_max_iter", o.max_iter)
        .set("min_armijo", o.armijo)
        .set("min_newton_switch", o.newton_switch);
    o
}

fn newton_opts(g: &GraphArgs, m: &mut Manifest) -> NewtonOptions {
    let mut o = NewtonOptions { jobs: g.common.jobs.max(1), ..Default::default() };
    if let Some(t) = g.tol {
        o.tol = t;
    }
    m.set("newton_tol", o.tol).set("newton_max_iter", o.max_iter).set("dedup_tol", o.dedup_tol);
    o
}

fn spectral_manifest(m: &mut Manifest, sys: &DiscreteSystem, e: &EigenOptions) {
    m.set("eig_tol", e.tol).set("eig_max_iter", e.max_iter).set("eps_zero", default_eps_zero(sys.h()));
}

fn branch_rows(out: &mut Output, rep: &BranchReport) {
    for (i, s) in rep.states.iter().enumerate() {
        out.rows.push(vec![
            (i + 1).into(),
            s.seed_index.map_or(Cell::Text(String::new()), |j| (j + 1).into()),
            s.omega.into(),
            s.action.into(),
            s.energy.into(),
            s.mass.into(),
            s.newton_residual.into(),
        ]);
    }
    out.manifest.set("states", rep.states.len()).set("seed_failures", rep.failures.len());
    for f in &rep.failures {
        out.manifest.set(&format!("failure_seed_{}_{}", f.seed_index + 1, f.sign), &f.reason);
    }
}

const BRANCH_SCHEMA: [&str; 7] = ["index", "seed", "omega", "action", "energy", "mass", "newton_residual"];

fn execute(cmd: Command) -> Result<(Output, Option<PathBuf>), CliError> {
    match cmd {
        Command::Spectrum { g, count } => {
            let mut m = base_manifest("spectrum", &g.common);
            let (_, sys) = load_system(&g, &mut m)?;
            let eo = eigen_opts(&g.common);
            spectral_manifest(&mut m, &sys, &eo);
            let mut out;
            if let Some(n) = count {
                let (pairs, res) = crate::spectral::lowest_eigenpairs(&sys, n, &eo)?;
                m.set("count", n).set("max_residual", res.iter().cloned().fold(0.0, f64::max));
                out = Output::new(m, &["j", "lambda"]);
                for (j, (l, _)) in pairs.iter().enumerate() {
                    out.rows.push(vec![(j + 1).into(), (*l).into()]);
                }
            } else {
                let spec = negative_spectrum_with(&sys, None, &eo)?;
                m.set("l_h", spec.l_h).set("k_negative", spec.k_negative);
                out = Output::new(m, &["j", "lambda"]);
                for (j, (l, _)) in spec.eigenpairs.iter().enumerate() {
                    out.rows.push(vec![(j + 1).into(), (*l).into()]);
                }
            }
            Ok((out, g.common.out))
        }
        Command::Groundstate { g, mu, profile } => {
            let mut m = base_manifest("groundstate", &g.common);
            let (_, sys) = load_system(&g, &mut m)?;
            let o = minimize_opts(&g, &mut m);
            m.set("mu", mu);
            let gs = minimize_fixed_mass(&sys, mu, None, &o)?;
            m.set("iterations", gs.iterations).set("nehari_residual", gs.nehari_residual);
            for w in &gs.warnings {
                m.set("warning", format!("{w:?}"));
            }
            if let Some(path) = &profile {
                let mut rows = Vec::new();
                for (e, edge) in sys.graph().edges().iter().enumerate() {
                    for (x, v) in sys.edge_nodes(e).into_iter().zip(sys.edge_values(e, &gs.psi)) {
                        rows.push(vec![Cell::Text(edge.id.clone()), x.into(), v.into()]);
                    }
                }
                std::fs::write(path, csv_string(&rows, &["edge", "x", "psi"])?)
                    .map_err(|e| CliError::Io(e.to_string()))?;
                m.set("profile", path.display());
            }
            let mut out = Output::new(m, &["mu", "tau", "omega", "grad_residual", "boundary_mass_fraction"]);
            out.rows.push(vec![
                gs.mu.into(),
                gs.tau.into(),
                gs.omega.into(),
                gs.grad_residual.into(),
                gs.boundary_mass_fraction.into(),
            ]);
            Ok((out, g.common.out))
        }
        Command::Taucurve { g, mu_min, mu_max, mu_steps } => {
            let mut m = base_manifest("taucurve", &g.common);
            let (_, sys) = load_system(&g, &mut m)?;
            let o = minimize_opts(&g, &mut m);
            m.set("mu_min", mu_min).set("mu_max", mu_max).set("mu_steps", mu_steps).set("warm_start", "rescaled");
            let grid = linspace(mu_min, mu_max, mu_steps)?;
            let curve = tau_curve(&sys, &grid, &o)?;
            let mut out = Output::new(m, &["mu", "tau", "omega", "grad_residual", "boundary_mass_fraction"]);
            for r in &curve.rows {
                if let Some(e) = &r.error {
                    out.manifest.set(&format!("row_error_mu_{}", r.mu), e);
                }
                out.rows.push(vec![
                    r.mu.into(),
                    r.tau.into(),
                    r.omega.into(),
                    r.grad_residual.into(),
                    r.boundary_mass_fraction.into(),
                ]);
            }
            Ok((out, g.common.out))
        }
        Command::Threshold { g, mu_lo, mu_hi, mu_tol, adaptive, tail_tol, max_doublings } => {
            let mut m = base_manifest("threshold", &g.common);
            let minimize = minimize_opts(&g, &mut m);
            let opts = ThresholdOptions { mu_tol, minimize };
            m.set("mu_lo", mu_lo).set("mu_hi", mu_hi).set("mu_tol", mu_tol).set("adaptive", adaptive);
            let (est, l) = if adaptive {
                let graph = load_graph(&g)?;
                let l0 = g.l.unwrap_or_else(|| default_truncation(None));
                m.set("graph", g.graph.display())
                    .set("p", graph.p())
                    .set("h", g.h)
                    .set("L_initial", l0)
                    .set("tail_tol", tail_tol)
                    .set("max_doublings", max_doublings);
                let out = detect_threshold_adaptive(&graph, g.h, (mu_lo, mu_hi), l0, tail_tol, max_doublings, &opts)?;
                for (li, mu1) in &out.history {
                    m.set(&format!("history_L_{li}"), mu1);
                }
                m.set("adaptive_converged", out.converged);
                (out.value, out.truncation)
            } else {
                let (_, sys) = load_system(&g, &mut m)?;
                let l = g.l.unwrap_or_else(|| default_truncation(None));
                (detect_threshold(&sys, (mu_lo, mu_hi), &opts)?, l)
            };
            for n in &est.notes {
                m.set("note", n);
            }
            m.set("method", "omega_crossing");
            let mut out =
                Output::new(m, &["mu1", "mu_lo", "mu_hi", "omega_lo", "omega_hi", "boundary_mass_fraction_hi", "L"]);
            out.rows.push(vec![
                est.mu1.into(),
                est.bracket.0.into(),
                est.bracket.1.into(),
                est.omega_lo.into(),
                est.omega_hi.into(),
                est.boundary_mass_hi.into(),
                l.into(),
            ]);
            Ok((out, g.common.out))
        }
        Command::Globalmin { g, adaptive, tail_tol, max_doublings } => {
            let mut m = base_manifest("globalmin", &g.common);
            let o = minimize_opts(&g, &mut m);
            m.set("init", "bottom eigenvector at the energy-minimizing amplitude").set("adaptive", adaptive);
            let (gm, l) = if adaptive {
                let graph = load_graph(&g)?;
                let l0 = g.l.unwrap_or_else(|| default_truncation(None));
                m.set("graph", g.graph.display())
                    .set("p", graph.p())
                    .set("h", g.h)
                    .set("L_initial", l0)
                    .set("tail_tol", tail_tol)
                    .set("max_doublings", max_doublings);
                let out = minimize_global_adaptive(&graph, g.h, l0, tail_tol, max_doublings, &o)?;
                for (li, mass) in &out.history {
                    m.set(&format!("history_L_{li}"), mass);
                }
                m.set("adaptive_converged", out.converged);
                (out.value, out.truncation)
            } else {
                let (_, sys) = load_system(&g, &mut m)?;
                (minimize_global(&sys, None, &o)?, g.l.unwrap_or_else(|| default_truncation(None)))
            };
            m.set("iterations", gm.iterations);
            let mut out = Output::new(m, &["tau_min", "mass", "grad_residual", "L"]);
            out.rows.push(vec![gm.tau_min.into(), gm.mass.into(), gm.grad_residual.into(), l.into()]);
            Ok((out, g.common.out))
        }
        Command::Shoot { s, omega } => {
            let mut m = base_manifest("shoot", &s.common);
            m.set("E", s.edges).set("alpha", s.alpha).set("p", s.p).set("omega", omega).set("quad_tol", 1e-12);
            let sol = solve_star_delta(s.edges, s.alpha, s.p, omega)?;
            m.set("matching_iterations", sol.iterations);
            let mut out = Output::new(m, &["omega", "shift", "vertex_value", "mass", "mass_squared", "flux_residual"]);
            out.rows.push(vec![
                sol.omega.into(),
                sol.shifts[0].into(),
                sol.vertex_value.into(),
                sol.total_mass.into(),
                sol.mass_squared().into(),
                sol.flux_residual.into(),
            ]);
            Ok((out, s.common.out))
        }
        Command::Masscurve { s, grid } => {
            let mut m = base_manifest("masscurve", &s.common);
            m.set("E", s.edges)
                .set("alpha", s.alpha)
                .set("p", s.p)
                .set("omega_min", grid.omega_min)
                .set("omega_max", grid.omega_max)
                .set("omega_steps", grid.omega_steps)
                .set("quad_tol", 1e-12);
            let ws = linspace(grid.omega_min, grid.omega_max, grid.omega_steps)?;
            let curve = mass_frequency_curve(s.edges, s.alpha, s.p, &ws)?;
            let mut out = Output::new(m, &["omega", "mass_squared"]);
            out.rows = curve.into_iter().map(|(w, m2)| vec![w.into(), m2.into()]).collect();
            Ok((out, s.common.out))
        }
        Command::Bifurcate { s, grid, window } => {
            let mut m = base_manifest("bifurcate", &s.common);
            let opts = BifurcationOptions { window, ..Default::default() };
            m.set("E", s.edges)
                .set("alpha", s.alpha)
                .set("p", s.p)
                .set("omega_min", grid.omega_min)
                .set("omega_max", grid.omega_max)
                .set("omega_steps", grid.omega_steps)
                .set("window", opts.window)
                .set("min_samples", opts.min_samples)
                .set("slope_tol", opts.slope_tol)
                .set("ratio_tol", opts.ratio_tol);
            let ws = linspace(grid.omega_min, grid.omega_max, grid.omega_steps)?;
            let curve = mass_frequency_curve(s.edges, s.alpha, s.p, &ws)?;
            let (l_h, g0) = star_linear_ground_state(s.edges, s.alpha, s.p);
            m.set("l_h", l_h).set("phi0_lp1", g0);
            let rep = check_bifurcation(&curve, l_h, g0, s.p, &opts)?;
            let mut out = Output::new(m, &["expected_slope", "slope", "ratio_closest", "window_samples", "pass"]);
            out.rows.push(vec![
                rep.expected_slope.into(),
                rep.slope.into(),
                rep.ratio_closest.into(),
                rep.window_samples.into(),
                Cell::Text(rep.pass.to_string()),
            ]);
            Ok((out, s.common.out))
        }
        Command::Branches { g, omega } => {
            let mut m = base_manifest("branches", &g.common);
            let (_, sys) = load_system(&g, &mut m)?;
            let eo = eigen_opts(&g.common);
            spectral_manifest(&mut m, &sys, &eo);
            let no = newton_opts(&g, &mut m);
            m.set("omega", omega);
            let spec = negative_spectrum_with(&sys, None, &eo)?;
            m.set("l_h", spec.l_h).set("k_negative", spec.k_negative);
            let rep = enumerate_branches(&sys, omega, &spec, &no)?;
            let mut out = Output::new(m, &BRANCH_SCHEMA);
            branch_rows(&mut out, &rep);
            Ok((out, g.common.out))
        }
        Command::Normalized { g, mu } => {
            let mut m = base_manifest("normalized", &g.common);
            let (_, sys) = load_system(&g, &mut m)?;
            let eo = eigen_opts(&g.common);
            spectral_manifest(&mut m, &sys, &eo);
            let no = newton_opts(&g, &mut m);
            m.set("mu", mu);
            let spec = negative_spectrum_with(&sys, None, &eo)?;
            m.set("l_h", spec.l_h).set("k_negative", spec.k_negative);
            let rep = normalized_family(&sys, mu, &spec, &no)?;
            let mut out = Output::new(m, &BRANCH_SCHEMA);
            branch_rows(&mut out, &rep);
            out.manifest.set("smallness_violated", rep.smallness_violated);
            if rep.smallness_violated {
                eprintln!("warning: a converged multiplier is not positive; mass outside the small-mass regime");
            }
            Ok((out, g.common.out))
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.txt");
    PathBuf::from(s)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command).and_then(|(out, path)| emit(out, path.as_deref())) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn emit(out: Output, path: Option<&Path>) -> Result<(), CliError> {
    let text = csv_string(&out.rows, &out.schema)?;
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            let mut m = out.manifest;
            m.set("csv", p.display());
            let mp = manifest_path(p);
            m.write(&mp).map_err(|e| CliError::Io(format!("{}: {e}", mp.display())))?;
        }
        None => {
            print!("{text}");
            eprint!("{}", out.manifest.render());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.2, 1.8, 5).unwrap(), vec![0.2, 0.6000000000000001, 1.0, 1.4000000000000001, 1.8]);
        assert_eq!(linspace(1.0, 2.0, 1).unwrap(), vec![1.0]);
        assert!(linspace(1.0, 2.0, 0).is_err());
    }

    #[test]
    fn manifest_sits_next_to_csv() {
        assert_eq!(manifest_path(Path::new("/tmp/a.csv")), PathBuf::from("/tmp/a.csv.manifest.txt"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["qgnls", "nosuchcommand"]), exit::USAGE);
        assert_eq!(run(["qgnls", "shoot", "--E", "2"]), exit::USAGE);
    }

    #[test]
    fn out_of_range_frequency_exits_six() {
        let code = run(["qgnls", "shoot", "--E", "2", "--alpha", "-2", "--p", "3", "--omega", "1.0"]);
        assert_eq!(code, exit::OUT_OF_RANGE);
    }
}
