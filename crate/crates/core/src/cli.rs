//! Batch front-end: JSON run configurations, solver dispatch and CSV output.
//!
//! ```text
//! renewalq simulate <config> [--out file] [--threads n]
//! renewalq compare  <config> <solver-a> <solver-b> [--tol x] [--threads n]
//! renewalq validate <config>
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure,
//! 4 tolerance exceeded or failed validation.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::channels::{certify_cptp, jump_superop, liouvillian, relaxation_semigroup, LindbladGenerator, SuperOperator};
use crate::collisional::{
    cptp_certify_dynamics, laplace_solve, markov_limit_generator, mc_collisional_on_grid, series_solve, volterra_solve,
    CollisionalModel, DeterministicSolver, IntercollisionFamily, LaplaceInversionConfig, DYNAMICS_CP_TOL, DYNAMICS_TP_TOL,
    MODEL_CPTP_TOL,
};
use crate::error::Error;
use crate::grid::TimeGrid;
use crate::lindblad_traj::{dyson_series, mc_average_on_grid};
use crate::qmatrix::{hermiticity_defect, mat_exp, trace, trace_distance_ops, ComplexMatrix, DensityMatrix, C64};
use crate::renewal::{Direction, TabulatedDensity, WaitingTime, TABULATED_NORM_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

/// Tolerance on the Hermiticity of configured Hamiltonians, states and observables.
pub const CONFIG_HERMITIAN_TOL: f64 = 1e-10;

/// Square matrix as rows of `[re, im]` pairs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct MatrixConfig(pub Vec<Vec<[f64; 2]>>);

impl MatrixConfig {
    pub fn to_matrix(&self, field: &str) -> Result<ComplexMatrix, String> {
        let n = self.0.len();
        if n == 0 {
            return Err(format!("{field}: matrix is empty"));
        }
        if let Some((r, row)) = self.0.iter().enumerate().find(|(_, row)| row.len() != n) {
            return Err(format!("{field}: row {r} has {} entries, expected {n}", row.len()));
        }
        if self.0.iter().flatten().flatten().any(|x| !x.is_finite()) {
            return Err(format!("{field}: entries must be finite"));
        }
        Ok(ComplexMatrix::from_fn(n, n, |r, c| C64::new(self.0[r][c][0], self.0[r][c][1])))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Collisional { family: FamilyConfig, collision: CollisionConfig, wait: WaitConfig },
    Lindblad {
        #[serde(default)]
        hamiltonian: Option<MatrixConfig>,
        #[serde(default)]
        jump_ops: Vec<MatrixConfig>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilyConfig {
    Identity,
    Semigroup {
        #[serde(default)]
        hamiltonian: Option<MatrixConfig>,
        #[serde(default)]
        jump_ops: Vec<MatrixConfig>,
    },
    /// Superoperator matrices on `t_i = i·dt`.
    Tabulated { dt: f64, maps: Vec<MatrixConfig> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CollisionConfig {
    Identity,
    Unitary { matrix: MatrixConfig },
    Kraus { ops: Vec<MatrixConfig> },
    Superoperator { matrix: MatrixConfig },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaitConfig {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Tabulated { dt: f64, values: Vec<f64> },
    /// Two-column CSV `(t, f)`; relative paths resolve against the config file.
    TabulatedCsv { path: PathBuf },
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Series,
    Volterra,
    Laplace,
    Mc,
    Dyson,
    McLindblad,
    Expm,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Series => "series",
            Self::Volterra => "volterra",
            Self::Laplace => "laplace",
            Self::Mc => "mc",
            Self::Dyson => "dyson",
            Self::McLindblad => "mc-lindblad",
            Self::Expm => "expm",
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_max: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub direction: Direction,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0, direction: Direction::Reverse }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Series cut-off; chosen from the waiting-time tail when absent.
    pub series_n_max: Option<usize>,
    pub dyson_n_max: usize,
    pub talbot_nodes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { series_n_max: None, dyson_n_max: 4, talbot_nodes: LaplaceInversionConfig::default().nodes }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub matrix: MatrixConfig,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub observables: Vec<ObservableConfig>,
    pub density_entries: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { observables: Vec::new(), density_entries: true }
    }
}

/// A complete run description as read from JSON.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub initial_state: MatrixConfig,
    pub solver: SolverKind,
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub options: SolverOptions,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl RunConfig {
    /// Parse JSON, reporting the failing field path with line and column.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            format!("{path}: {inner}")
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text)
    }
}

/// Dynamics described by a configuration.
#[derive(Clone, Debug)]
pub enum Model {
    Collisional(CollisionalModel),
    Lindblad(LindbladGenerator),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Self::Collisional(m) => m.dim(),
            Self::Lindblad(g) => g.dim(),
        }
    }
}

/// A validated configuration ready to run.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub model: Model,
    pub rho0: DensityMatrix,
    pub grid: TimeGrid,
    pub solver: SolverKind,
    pub mc: McConfig,
    pub options: SolverOptions,
    pub observables: Vec<(String, ComplexMatrix)>,
    pub density_entries: bool,
}

/// Whether to reject invalid channels and densities while building a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strictness {
    Strict,
    Lenient,
}

fn hermitian(m: &MatrixConfig, field: &str, dim: usize) -> Result<ComplexMatrix, String> {
    let mat = m.to_matrix(field)?;
    if mat.nrows() != dim {
        return Err(format!("{field}: dimension {} does not match the initial state ({dim})", mat.nrows()));
    }
    let defect = hermiticity_defect(&mat);
    if defect > CONFIG_HERMITIAN_TOL {
        return Err(format!("{field}: matrix is not Hermitian (defect {defect:e})"));
    }
    Ok(mat)
}

fn generator(
    hamiltonian: &Option<MatrixConfig>,
    jump_ops: &[MatrixConfig],
    field: &str,
    dim: usize,
) -> Result<LindbladGenerator, String> {
    let h = match hamiltonian {
        Some(m) => hermitian(m, &format!("{field}.hamiltonian"), dim)?,
        None => ComplexMatrix::zeros(dim, dim),
    };
    let ops = jump_ops
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let f = format!("{field}.jump_ops[{k}]");
            let mat = m.to_matrix(&f)?;
            if mat.nrows() != dim {
                return Err(format!("{f}: dimension {} does not match the initial state ({dim})", mat.nrows()));
            }
            Ok(mat)
        })
        .collect::<Result<Vec<_>, String>>()?;
    LindbladGenerator::new(h, ops).map_err(|e| format!("{field}: {e}"))
}

fn superoperator(m: &MatrixConfig, field: &str, dim: usize) -> Result<SuperOperator, String> {
    let mat = m.to_matrix(field)?;
    if mat.nrows() != dim * dim {
        return Err(format!("{field}: superoperator must be {0}×{0} for dimension {dim}", dim * dim));
    }
    SuperOperator::from_matrix(mat).map_err(|e| format!("{field}: {e}"))
}

fn wait_time(cfg: &WaitConfig, base: &Path, strictness: Strictness) -> Result<WaitingTime, String> {
    let field = "model.wait";
    let tab = |t: Result<TabulatedDensity, Error>| t.map(WaitingTime::Tabulated).map_err(|e| format!("{field}: {e}"));
    let build = |dt: f64, values: Vec<f64>| match strictness {
        Strictness::Strict => TabulatedDensity::new(dt, values),
        Strictness::Lenient => TabulatedDensity::new_unnormalized(dt, values),
    };
    match cfg {
        WaitConfig::Exponential { rate } => WaitingTime::exponential(*rate).map_err(|e| format!("{field}.rate: {e}")),
        WaitConfig::Erlang { shape, rate } => WaitingTime::erlang(*shape, *rate).map_err(|e| format!("{field}: {e}")),
        WaitConfig::Tabulated { dt, values } => tab(build(*dt, values.clone())),
        WaitConfig::TabulatedCsv { path } => {
            let full = if path.is_absolute() { path.clone() } else { base.join(path) };
            let loaded = match strictness {
                Strictness::Strict => TabulatedDensity::from_csv_path(&full),
                Strictness::Lenient => TabulatedDensity::from_csv_path_unnormalized(&full),
            }
            .map_err(|e| format!("{field}.path ({}): {e}", full.display()))?;
            Ok(WaitingTime::Tabulated(loaded))
        }
    }
}

impl PreparedRun {
    /// Check and assemble a configuration. `base` resolves relative data paths.
    pub fn build(cfg: &RunConfig, base: &Path, strictness: Strictness) -> Result<Self, String> {
        let grid = TimeGrid::new(cfg.grid.t_max, cfg.grid.steps).map_err(|e| e.to_string())?;
        let state = cfg.initial_state.to_matrix("initial_state")?;
        let dim = state.nrows();
        let rho0 = DensityMatrix::with_tol(state, 1e-8).map_err(|e| format!("initial_state: {e}"))?;
        let model = match &cfg.model {
            ModelConfig::Lindblad { hamiltonian, jump_ops } => Model::Lindblad(generator(hamiltonian, jump_ops, "model", dim)?),
            ModelConfig::Collisional { family, collision, wait } => {
                let family = match family {
                    FamilyConfig::Identity => IntercollisionFamily::identity(dim),
                    FamilyConfig::Semigroup { hamiltonian, jump_ops } => {
                        IntercollisionFamily::semigroup(generator(hamiltonian, jump_ops, "model.family", dim)?)
                    }
                    FamilyConfig::Tabulated { dt, maps } => {
                        let maps = maps
                            .iter()
                            .enumerate()
                            .map(|(k, m)| superoperator(m, &format!("model.family.maps[{k}]"), dim))
                            .collect::<Result<Vec<_>, _>>()?;
                        match strictness {
                            Strictness::Strict => IntercollisionFamily::tabulated(*dt, maps).map_err(|e| format!("model.family: {e}"))?,
                            Strictness::Lenient => {
                                if maps.len() < 2 || !(*dt > 0.0) {
                                    return Err("model.family: need a positive dt and at least two maps".into());
                                }
                                IntercollisionFamily::Tabulated { dt: *dt, maps }
                            }
                        }
                    }
                };
                let collision = match collision {
                    CollisionConfig::Identity => SuperOperator::identity(dim),
                    CollisionConfig::Unitary { matrix } => {
                        let u = matrix.to_matrix("model.collision.matrix")?;
                        if u.nrows() != dim {
                            return Err(format!("model.collision.matrix: dimension {} does not match {dim}", u.nrows()));
                        }
                        SuperOperator::conjugation(&u)
                    }
                    CollisionConfig::Kraus { ops } => {
                        let ops = ops
                            .iter()
                            .enumerate()
                            .map(|(k, m)| m.to_matrix(&format!("model.collision.ops[{k}]")))
                            .collect::<Result<Vec<_>, _>>()?;
                        SuperOperator::from_kraus(&ops, dim).map_err(|e| format!("model.collision.ops: {e}"))?
                    }
                    CollisionConfig::Superoperator { matrix } => superoperator(matrix, "model.collision.matrix", dim)?,
                };
                let wait = wait_time(wait, base, strictness)?;
                let built = match strictness {
                    Strictness::Strict => CollisionalModel::new(family, collision, wait),
                    Strictness::Lenient => CollisionalModel::new_unchecked(family, collision, wait),
                };
                Model::Collisional(built.map_err(|e| format!("model.collision: {e}"))?)
            }
        };
        if model.dim() != dim {
            return Err(format!("initial_state: dimension {dim} does not match the model ({})", model.dim()));
        }
        let observables = cfg
            .outputs
            .observables
            .iter()
            .enumerate()
            .map(|(k, o)| Ok((o.name.clone(), hermitian(&o.matrix, &format!("outputs.observables[{k}].matrix"), dim)?)))
            .collect::<Result<Vec<_>, String>>()?;
        if cfg.mc.samples == 0 {
            return Err("mc.samples must be at least 1".into());
        }
        LaplaceInversionConfig::new(cfg.options.talbot_nodes).map_err(|e| format!("options.talbot_nodes: {e}"))?;
        Ok(Self {
            model,
            rho0,
            grid,
            solver: cfg.solver,
            mc: cfg.mc,
            options: cfg.options,
            observables,
            density_entries: cfg.outputs.density_entries,
        })
    }

    /// States at every grid time computed with `solver`.
    pub fn solve(&self, solver: SolverKind) -> Result<Vec<ComplexMatrix>, CliError> {
        let times = self.grid.times();
        let mismatch = || {
            CliError::Config(format!(
                "solver: '{}' does not apply to a {} model",
                solver.name(),
                match self.model {
                    Model::Collisional(_) => "collisional",
                    Model::Lindblad(_) => "lindblad",
                }
            ))
        };
        let solved = match (&self.model, solver) {
            (Model::Collisional(m), SolverKind::Series) => {
                series_solve(m, &self.rho0, &self.grid, self.options.series_n_max).map(|s| s.states)
            }
            (Model::Collisional(m), SolverKind::Volterra) => volterra_solve(m, &self.rho0, &self.grid).map(|s| s.states),
            (Model::Collisional(m), SolverKind::Laplace) => {
                let cfg = LaplaceInversionConfig { nodes: self.options.talbot_nodes };
                laplace_solve(m, &self.rho0, &times, &cfg).map(|s| s.states)
            }
            (Model::Collisional(m), SolverKind::Mc) => {
                mc_collisional_on_grid(m, &self.rho0, &times, self.mc.samples, self.mc.seed, self.mc.direction)
            }
            (Model::Collisional(m), SolverKind::Expm) => match markov_limit_generator(m) {
                Ok(gen) => propagate_exp(gen.matrix(), &self.rho0, &times),
                Err(e) => return Err(CliError::Config(format!("solver: expm needs the Markov limit ({e})"))),
            },
            (Model::Lindblad(g), SolverKind::Dyson) => dyson_series(g, &self.rho0, &self.grid, self.options.dyson_n_max),
            (Model::Lindblad(g), SolverKind::McLindblad) => mc_average_on_grid(g, &self.rho0, &times, self.mc.samples, self.mc.seed),
            (Model::Lindblad(g), SolverKind::Expm) => propagate_exp(liouvillian(g).matrix(), &self.rho0, &times),
            _ => return Err(mismatch()),
        };
        solved.map_err(CliError::Solver)
    }
}

fn propagate_exp(generator: &ComplexMatrix, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<ComplexMatrix>, Error> {
    let d = rho0.dim();
    let v0 = nalgebra::DVector::from_column_slice(rho0.matrix().as_slice());
    times
        .iter()
        .map(|&t| {
            let v = mat_exp(&generator.scale(t))? * &v0;
            Ok(ComplexMatrix::from_column_slice(d, d, v.as_slice()))
        })
        .collect()
}

/// Failure categories, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(Error),
    Tolerance(String),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Solver(_) | Self::Output(_) => EXIT_SOLVER,
            Self::Tolerance(_) => EXIT_TOLERANCE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Solver(e) => write!(f, "solver error: {e}"),
            Self::Tolerance(m) => write!(f, "{m}"),
            Self::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

/// Float formatting used in all CSV output (17 significant digits).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV header for a prepared run.
pub fn csv_header(run: &PreparedRun) -> Vec<String> {
    let mut header = vec!["time".to_string()];
    if run.density_entries {
        let d = run.model.dim();
        for i in 0..d {
            for j in 0..d {
                header.push(format!("r_{i}{j}_re"));
                header.push(format!("r_{i}{j}_im"));
            }
        }
    }
    header.extend(run.observables.iter().map(|(name, _)| name.clone()));
    header
}

/// Write the time series of `states` as CSV.
pub fn write_csv<W: Write>(run: &PreparedRun, states: &[ComplexMatrix], out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let err = |e: csv::Error| CliError::Output(e.to_string());
    w.write_record(csv_header(run)).map_err(err)?;
    for (i, s) in states.iter().enumerate() {
        let mut row = vec![fmt_float(run.grid.time(i))];
        if run.density_entries {
            let d = s.nrows();
            for r in 0..d {
                for c in 0..d {
                    row.push(fmt_float(s[(r, c)].re));
                    row.push(fmt_float(s[(r, c)].im));
                }
            }
        }
        row.extend(run.observables.iter().map(|(_, o)| fmt_float(trace(&(o * s)).re)));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Output(e.to_string()))
}

#[derive(Debug, Parser)]
#[command(name = "renewalq", version, about = "Open quantum system dynamics from JSON run configurations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured solver and write the time series as CSV.
    Simulate {
        config: PathBuf,
        /// Output file (standard output when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for Monte Carlo solvers.
        #[arg(long, env = "RENEWALQ_THREADS")]
        threads: Option<usize>,
    },
    /// Trace distance between two solvers at every grid time.
    Compare {
        config: PathBuf,
        solver_a: SolverKind,
        solver_b: SolverKind,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, env = "RENEWALQ_THREADS")]
        threads: Option<usize>,
    },
    /// Certify the channels, waiting time and reconstructed dynamics of a config.
    Validate { config: PathBuf },
}

fn load(path: &Path, strictness: Strictness) -> Result<PreparedRun, CliError> {
    let cfg = RunConfig::from_path(path).map_err(CliError::Config)?;
    let base = path.parent().unwrap_or(Path::new("."));
    PreparedRun::build(&cfg, base, strictness).map_err(CliError::Config)
}

fn with_threads<T>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("threads: {e}")))?;
    Ok(pool.install(job))
}

fn simulate(config: &Path, out: Option<&Path>, threads: Option<usize>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let run = load(config, Strictness::Strict)?;
    let states = with_threads(threads, || run.solve(run.solver))??;
    match out {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::Output(format!("{}: {e}", p.display())))?;
            write_csv(&run, &states, BufWriter::new(file))
        }
        None => write_csv(&run, &states, stdout),
    }
}

fn compare(
    config: &Path,
    a: SolverKind,
    b: SolverKind,
    tol: f64,
    threads: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let run = load(config, Strictness::Strict)?;
    let (sa, sb) = with_threads(threads, || (run.solve(a), run.solve(b)))?;
    let (sa, sb) = (sa?, sb?);
    let distances = sa.iter().zip(&sb).map(|(x, y)| trace_distance_ops(x, y)).collect::<Result<Vec<_>, _>>().map_err(CliError::Solver)?;
    let io = |e: std::io::Error| CliError::Output(e.to_string());
    writeln!(stdout, "time,trace_distance").map_err(io)?;
    for (i, d) in distances.iter().enumerate() {
        writeln!(stdout, "{},{}", fmt_float(run.grid.time(i)), fmt_float(*d)).map_err(io)?;
    }
    let max = distances.iter().copied().fold(0.0, f64::max);
    writeln!(stdout, "max_distance={}", fmt_float(max)).map_err(io)?;
    if max < tol || max == 0.0 {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!("max_distance {max:e} exceeds tolerance {tol:e}")))
    }
}

/// One line of a validation report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

/// Number of evenly spaced grid times at which dynamics are certified.
pub const VALIDATION_SAMPLES: usize = 5;

/// Checks run by `validate`.
pub fn validation_checks(run: &PreparedRun) -> Vec<Check> {
    let steps = run.grid.steps();
    let samples: Vec<f64> =
        (1..=VALIDATION_SAMPLES).map(|k| run.grid.time((k * steps).div_ceil(VALIDATION_SAMPLES))).collect();
    let mut checks = Vec::new();
    let cptp = |name: String, s: &SuperOperator, checks: &mut Vec<Check>| {
        let rep = certify_cptp(s, MODEL_CPTP_TOL);
        checks.push(Check::new(format!("{name} CP"), rep.is_cp, format!("min Choi eigenvalue {:.3e}", rep.min_choi_eigenvalue)));
        checks.push(Check::new(format!("{name} TP"), rep.is_tp, format!("trace defect {:.3e}", rep.tp_defect)));
    };
    match &run.model {
        Model::Lindblad(g) => {
            let rep = certify_cptp(&jump_superop(g), MODEL_CPTP_TOL);
            checks.push(Check::new("jump map CP", rep.is_cp, format!("min Choi eigenvalue {:.3e}", rep.min_choi_eigenvalue)));
            let l = liouvillian(g);
            for &t in &samples {
                match mat_exp(&l.matrix().scale(t)).and_then(SuperOperator::from_matrix) {
                    Ok(s) => cptp(format!("semigroup at t={t}"), &s, &mut checks),
                    Err(e) => checks.push(Check::new(format!("semigroup at t={t}"), false, e.to_string())),
                }
                let relax_ok = relaxation_semigroup(g, t).map(|r| {
                    let rep = certify_cptp(&r, MODEL_CPTP_TOL);
                    (rep.is_cp, rep.min_choi_eigenvalue)
                });
                match relax_ok {
                    Ok((cp, min)) => {
                        checks.push(Check::new(format!("relaxation at t={t} CP"), cp, format!("min Choi eigenvalue {min:.3e}")))
                    }
                    Err(e) => checks.push(Check::new(format!("relaxation at t={t} CP"), false, e.to_string())),
                }
            }
        }
        Model::Collisional(m) => {
            cptp("collision".into(), m.collision(), &mut checks);
            match m.family() {
                IntercollisionFamily::Tabulated { maps, .. } => {
                    for (k, s) in maps.iter().enumerate() {
                        cptp(format!("family node {k}"), s, &mut checks);
                    }
                }
                family @ IntercollisionFamily::Semigroup { .. } => {
                    for &t in &samples {
                        match family.at(t) {
                            Ok(s) => cptp(format!("family at t={t}"), &s, &mut checks),
                            Err(e) => checks.push(Check::new(format!("family at t={t}"), false, e.to_string())),
                        }
                    }
                }
            }
            let wait = m.wait();
            let mass = match wait {
                WaitingTime::Tabulated(tab) => tab.mass(),
                _ => 1.0,
            };
            checks.push(Check::new(
                "waiting-time normalization",
                (mass - 1.0).abs() <= TABULATED_NORM_TOL,
                format!("integral of f = {mass:.9}"),
            ));
            let g0 = wait.survival(0.0).unwrap_or(f64::NAN);
            checks.push(Check::new("survival g(0) = 1", (g0 - 1.0).abs() <= 1e-12, format!("g(0) = {g0}")));
            match cptp_certify_dynamics(m, DeterministicSolver::Volterra, &run.grid, &samples) {
                Ok(reports) => {
                    for (t, rep) in samples.iter().zip(reports) {
                        checks.push(Check::new(
                            format!("dynamics at t={t} CP"),
                            rep.is_cp,
                            format!("min Choi eigenvalue {:.3e} (tolerance {DYNAMICS_CP_TOL:e})", rep.min_choi_eigenvalue),
                        ));
                        checks.push(Check::new(
                            format!("dynamics at t={t} TP"),
                            rep.is_tp,
                            format!("trace defect {:.3e} (tolerance {DYNAMICS_TP_TOL:e})", rep.tp_defect),
                        ));
                    }
                }
                Err(e) => checks.push(Check::new("dynamics", false, e.to_string())),
            }
        }
    }
    checks
}

fn validate(config: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let run = load(config, Strictness::Lenient)?;
    let checks = validation_checks(&run);
    let io = |e: std::io::Error| CliError::Output(e.to_string());
    for c in &checks {
        writeln!(stdout, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail).map_err(io)?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!("{failed} of {} checks failed", checks.len())))
    }
}

/// Run the command line `args` (including the program name), writing results
/// to `stdout` and diagnostics to `stderr`; returns the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, out, threads } => simulate(config, out.as_deref(), *threads, stdout),
        Command::Compare { config, solver_a, solver_b, tol, threads } => compare(config, *solver_a, *solver_b, *tol, *threads, stdout),
        Command::Validate { config } => validate(config, stdout),
    };
    let _ = stdout.flush();
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SZ_MODEL: &str = r#"{
        "model": {
            "type": "collisional",
            "family": {"type": "identity"},
            "collision": {"type": "unitary", "matrix": [[[1,0],[0,0]],[[0,0],[-1,0]]]},
            "wait": {"type": "erlang", "shape": 2, "rate": 1.0}
        },
        "initial_state": [[[0.5,0],[0.5,0]],[[0.5,0],[0.5,0]]],
        "solver": "volterra",
        "grid": {"t_max": 1.0, "steps": 100}
    }"#;

    #[test]
    fn parse_errors_name_the_field() {
        let bad = SZ_MODEL.replace("\"rate\": 1.0", "\"rate\": \"fast\"");
        let err = RunConfig::from_json(&bad).unwrap_err();
        assert!(err.contains("model.wait") || err.contains("model"), "{err}");
        assert!(err.contains("line"), "{err}");

        let cfg = RunConfig::from_json(&SZ_MODEL.replace("\"steps\": 100", "\"steps\": 0")).unwrap();
        let err = PreparedRun::build(&cfg, Path::new("."), Strictness::Strict).unwrap_err();
        assert!(err.contains("grid.steps"), "{err}");
    }

    #[test]
    fn header_lists_entries_then_observables() {
        let mut cfg = RunConfig::from_json(SZ_MODEL).unwrap();
        cfg.outputs.observables.push(ObservableConfig {
            name: "sx".into(),
            matrix: MatrixConfig(vec![vec![[0.0, 0.0], [1.0, 0.0]], vec![[1.0, 0.0], [0.0, 0.0]]]),
        });
        let run = PreparedRun::build(&cfg, Path::new("."), Strictness::Strict).unwrap();
        assert_eq!(
            csv_header(&run),
            ["time", "r_00_re", "r_00_im", "r_01_re", "r_01_im", "r_10_re", "r_10_im", "r_11_re", "r_11_im", "sx"]
        );
    }

    #[test]
    fn non_hermitian_observable_is_rejected() {
        let mut cfg = RunConfig::from_json(SZ_MODEL).unwrap();
        cfg.outputs.observables.push(ObservableConfig {
            name: "bad".into(),
            matrix: MatrixConfig(vec![vec![[0.0, 0.0], [1.0, 0.0]], vec![[0.0, 0.0], [0.0, 0.0]]]),
        });
        let err = PreparedRun::build(&cfg, Path::new("."), Strictness::Strict).unwrap_err();
        assert!(err.contains("outputs.observables[0]"), "{err}");
    }

    #[test]
    fn solver_model_mismatch_is_a_config_error() {
        let cfg = RunConfig::from_json(SZ_MODEL).unwrap();
        let run = PreparedRun::build(&cfg, Path::new("."), Strictness::Strict).unwrap();
        let err = run.solve(SolverKind::Dyson).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert_eq!(run.solve(SolverKind::Expm).unwrap_err().exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn float_format_has_seventeen_digits() {
        let s = fmt_float(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
    }
}
