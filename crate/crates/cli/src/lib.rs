//! Command-line front end for the relaxed ℓ-MGD solver.
//!
//! `rmgd solve`, `rmgd experiment`, `rmgd bounds` and `rmgd verify`, or
//! `rmgd --config run.json` where the JSON object mirrors the flags:
//! `{"command": "solve", "problem": "fletcher", "ell": "0,0.5", "max_iter": 2}`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use relaxed_mgd::experiment::{
    bounds_table, counterexample_table, log_grid, run_grid, write_counterexample_table, write_experiment, write_json,
    GridSpec, OmegaSpec, RunSummary,
};
use relaxed_mgd::plot::{Chart, Series};
use relaxed_mgd::problems::{
    dense_random, diagonal_spectrum, fletcher_counterexample, from_matrix_market, parse_libsvm, random_spd,
    regularized_ls, sparse_random, ProblemInstance,
};
use relaxed_mgd::verify::{run_verify, Suite, VerifyOptions};
use relaxed_mgd::{Ell, SolverConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] relaxed_mgd::Error),
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    /// 2 for bad input (usage, invalid arguments, missing or malformed files), 1 otherwise.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_)
            | CliError::Core(relaxed_mgd::Error::Io { .. })
            | CliError::Core(relaxed_mgd::Error::Parse { .. })
            | CliError::Core(relaxed_mgd::Error::InvalidArgument(_)) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "rmgd",
    version,
    about = "Relaxed l-minimal gradient descent for SPD quadratics"
)]
pub struct Cli {
    /// JSON run specification; replaces the subcommand and its flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem for each requested ℓ.
    Solve(SolveArgs),
    /// Run a named experiment grid with repeated trials.
    Experiment(ExperimentArgs),
    /// Tabulate the iteration complexity bounds over a tolerance grid.
    Bounds(BoundsArgs),
    /// Run the invariant battery.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemKind {
    Fletcher,
    Diag,
    Dense,
    Sparse,
    Spd,
    Libsvm,
    Mm,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Problem source.
    #[arg(long, value_enum, default_value = "fletcher")]
    pub problem: ProblemKind,
    /// Dimension for generated problems.
    #[arg(long)]
    pub n: Option<usize>,
    /// Rows of the dense factor.
    #[arg(long)]
    pub m: Option<usize>,
    /// Nonzeros per row of the sparse factor.
    #[arg(long, default_value_t = 10)]
    pub nnz: usize,
    /// Condition number for `spd`.
    #[arg(long, default_value_t = 100.0)]
    pub kappa: f64,
    /// LIBSVM file for `libsvm`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Ridge parameter for `libsvm`.
    #[arg(long, default_value_t = 1e-6)]
    pub lambda: f64,
    /// Matrix Market file for `mm`.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Dense right-hand side for `mm` (default b = A·1).
    #[arg(long)]
    pub rhs: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated ℓ values (e.g. 0,0.5,1 or 5/2).
    #[arg(long, default_value = "0")]
    pub ell: String,
    /// Fixed relaxation in (0, 2) or `random`.
    #[arg(long, default_value = "1")]
    pub omega: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Restart period q.
    #[arg(long)]
    pub restart: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Counterexample,
    Diagonal,
    Dense,
    Sparse,
    Libsvm,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    pub name: ExperimentKind,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub nnz: usize,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub lambda: f64,
    /// Comma-separated ℓ values.
    #[arg(long)]
    pub ells: Option<String>,
    /// Comma-separated relaxations, `random` allowed.
    #[arg(long)]
    pub omegas: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub restart: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reduced sizes for quick runs (dense 300x200, sparse n = 10^4).
    #[arg(long)]
    pub desk_scale: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long, default_value_t = 1000.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1e5)]
    pub f0gap: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value = "0,0.5,1,1.5,2,2.5,3,3.5,4,4.5,5,5.5,6,6.5,7,7.5,8")]
    pub ells: String,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_min: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps_max: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Restrict to these suites (repeatable).
    #[arg(long)]
    pub suite: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturb the cached vectors; the recursion oracle must then fail.
    #[arg(long)]
    pub inject_drift: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Entry point shared by the binary and the tests. `args[0]` is the program name.
pub fn run(args: &[String]) -> CliResult<ExitCode> {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(ExitCode::SUCCESS);
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    let command = match (cli.config, cli.command) {
        (Some(path), None) => load_config(&path)?,
        (None, Some(c)) => c,
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--config replaces the subcommand; give one or the other".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Usage(
                "missing subcommand (solve, experiment, bounds, verify)".into(),
            ))
        }
    };
    match command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::Bounds(a) => cmd_bounds(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
    .map(|()| ExitCode::SUCCESS)
}

/// Turns a JSON run specification into the equivalent argument list.
pub fn config_to_args(spec: &Value) -> CliResult<Vec<String>> {
    let obj = spec
        .as_object()
        .ok_or_else(|| CliError::Usage("run specification must be a JSON object".into()))?;
    let command = obj
        .get("command")
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Usage("run specification needs a \"command\" string".into()))?;
    let mut args = vec!["rmgd".to_string(), command.to_string()];
    if let Some(name) = obj.get("name").and_then(Value::as_str) {
        args.push(name.to_string());
    }
    for (key, value) in obj {
        if key == "command" || key == "name" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Bool(true) => args.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for item in items {
                    args.push(flag.clone());
                    args.push(scalar_text(item)?);
                }
            }
            other => {
                args.push(flag);
                args.push(scalar_text(other)?);
            }
        }
    }
    Ok(args)
}

fn scalar_text(v: &Value) -> CliResult<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(CliError::Usage(format!(
            "unsupported value in run specification: {other}"
        ))),
    }
}

fn load_config(path: &Path) -> CliResult<Command> {
    let text = fs::read_to_string(path).map_err(|e| relaxed_mgd::Error::io(path, e))?;
    let spec: Value = serde_json::from_str(&text).map_err(|e| relaxed_mgd::Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let args = config_to_args(&spec)?;
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Usage(e.to_string()))?;
    cli.command
        .ok_or_else(|| CliError::Usage("run specification names no command".into()))
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> relaxed_mgd::Result<T>) -> CliResult<Vec<T>> {
    let items = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| f(t.trim()))
        .collect::<relaxed_mgd::Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("empty list '{s}'")));
    }
    Ok(items)
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, what: &str) -> CliResult<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| CliError::Usage(format!("{what} needs {flag}")))
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

pub fn build_problem(p: &ProblemArgs, seed: u64) -> CliResult<ProblemInstance> {
    Ok(match p.problem {
        ProblemKind::Fletcher => fletcher_counterexample(),
        ProblemKind::Diag => diagonal_spectrum(p.n.unwrap_or(1000), seed)?,
        ProblemKind::Dense => {
            let n = p.n.unwrap_or(200);
            dense_random(p.m.unwrap_or(3 * n / 2), n, seed)?
        }
        ProblemKind::Sparse => sparse_random(p.n.unwrap_or(10_000), p.nnz, seed)?,
        ProblemKind::Spd => random_spd(p.n.unwrap_or(50), 1.0, p.kappa, seed)?,
        ProblemKind::Libsvm => {
            let path = require(&p.data, "--data", "the libsvm problem")?;
            let mut inst = regularized_ls(&parse_libsvm(path)?, p.lambda, seed)?;
            inst.label = file_label(path);
            inst
        }
        ProblemKind::Mm => {
            let path = require(&p.matrix, "--matrix", "the mm problem")?;
            from_matrix_market(path, p.rhs.as_deref(), seed)?
        }
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| relaxed_mgd::Error::io(dir, e).into())
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    problem: relaxed_mgd::problems::ProblemMetadata,
    runs: Vec<RunSummary>,
}

pub fn cmd_solve(a: &SolveArgs) -> CliResult<()> {
    let ells = parse_list(&a.ell, Ell::parse)?;
    let omega = OmegaSpec::parse(&a.omega)?;
    let problem = build_problem(&a.problem, a.seed)?;
    ensure_dir(&a.out)?;
    let mut runs = Vec::new();
    for ell in ells {
        let config = SolverConfig {
            ell,
            relaxation: omega.mode(a.seed),
            tol_gnorm_sq: a.tol,
            max_iter: a.max_iter,
            restart_period: a.restart,
            trace_stride: a.stride,
        };
        let result = problem.solve(&config)?;
        let path = a
            .out
            .join(format!("trace_{}_{}_{}.csv", problem.label, ell, omega.label()));
        let file = fs::File::create(&path).map_err(|e| relaxed_mgd::Error::io(&path, e))?;
        result.trace.write_csv(std::io::BufWriter::new(file))?;
        let summary = RunSummary::from_result(&problem.label, ell, omega.label(), 0, a.seed, &result);
        println!(
            "{} ell={} omega={}: {:?} after {} iterations, |g|^2 = {:.3e}, matvecs = {}",
            problem.label,
            ell,
            omega.label(),
            summary.status,
            summary.iterations,
            summary.gnorm_sq_final,
            summary.matvecs.algorithmic
        );
        runs.push(summary);
    }
    let summary = SolveSummary {
        problem: problem.metadata()?,
        runs,
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    Ok(())
}

struct ExperimentDefaults {
    grid: GridSpec,
    trials: usize,
}

fn experiment_defaults(kind: ExperimentKind) -> ExperimentDefaults {
    let (tol, max_iter, trials) = match kind {
        ExperimentKind::Counterexample => (f64::MIN_POSITIVE, 5, 1),
        ExperimentKind::Diagonal => (1e-8, 1000, 10),
        ExperimentKind::Dense => (1e-6, 50_000, 100),
        ExperimentKind::Sparse => (1e-6, 5000, 10),
        ExperimentKind::Libsvm => (1e-9, 20_000, 1),
    };
    let mut grid = GridSpec::standard(tol, max_iter);
    if kind == ExperimentKind::Counterexample {
        grid.omegas = vec![OmegaSpec::Fixed(1.0)];
    }
    ExperimentDefaults { grid, trials }
}

pub fn cmd_experiment(a: &ExperimentArgs) -> CliResult<()> {
    let d = experiment_defaults(a.name);
    let mut grid = d.grid;
    if let Some(s) = &a.ells {
        grid.ells = parse_list(s, Ell::parse)?;
    }
    if let Some(s) = &a.omegas {
        grid.omegas = parse_list(s, OmegaSpec::parse)?;
    }
    if let Some(t) = a.tol {
        grid.tol_gnorm_sq = t;
    }
    if let Some(m) = a.max_iter {
        grid.max_iter = m;
    }
    grid.restart_period = a.restart.or(grid.restart_period);
    grid.trace_stride = a.stride.unwrap_or(grid.trace_stride);
    let trials = a.trials.unwrap_or(d.trials);

    let (name, runs) = match a.name {
        ExperimentKind::Counterexample => {
            ensure_dir(&a.out)?;
            let rows = counterexample_table(grid.max_iter)?;
            write_counterexample_table(&a.out.join("table_counterexample.csv"), &rows)?;
            let mut chart = Chart::new("counterexample: f(x_k)", "iteration k", "f(x_k)");
            for (i, l) in ["0", "0.5", "1"].iter().enumerate() {
                chart.push(Series::new(
                    format!("l={l}"),
                    rows.iter().map(|r| (r.k as f64, r.fvals[i])).collect(),
                ));
            }
            chart.push(Series::new("SD bound", rows.iter().map(|r| (r.k as f64, r.sd_bound)).collect()).dashed());
            chart.write(a.out.join("counterexample_fvals.svg"))?;
            (
                "counterexample",
                run_grid(&grid, trials, a.seed, |_| Ok(fletcher_counterexample()))?,
            )
        }
        ExperimentKind::Diagonal => {
            let n = a.n.unwrap_or(1000);
            (
                "diagonal",
                run_grid(&grid, trials, a.seed, |s| diagonal_spectrum(n, s))?,
            )
        }
        ExperimentKind::Dense => {
            let n = a.n.unwrap_or(if a.desk_scale { 200 } else { 1000 });
            let m = a.m.unwrap_or(3 * n / 2);
            let trials = a.trials.unwrap_or(if a.desk_scale { 10 } else { trials });
            ("dense", run_grid(&grid, trials, a.seed, |s| dense_random(m, n, s))?)
        }
        ExperimentKind::Sparse => {
            let n = a.n.unwrap_or(if a.desk_scale { 10_000 } else { 1_000_000 });
            let nnz = a.nnz;
            ("sparse", run_grid(&grid, trials, a.seed, |s| sparse_random(n, nnz, s))?)
        }
        ExperimentKind::Libsvm => {
            let path = require(&a.data, "--data", "the libsvm experiment")?;
            let data = parse_libsvm(path)?;
            let label = file_label(path);
            let lambda = a.lambda;
            let runs = run_grid(&grid, trials, a.seed, |s| {
                let mut p = regularized_ls(&data, lambda, s)?;
                p.label = label.clone();
                Ok(p)
            })?;
            ("libsvm", runs)
        }
    };
    let trials_run = runs.iter().map(|r| r.trial + 1).max().unwrap_or(0);
    let summary = write_experiment(&a.out, name, &grid, trials_run, a.seed, &runs)?;
    for r in &summary.runs {
        println!(
            "{} trial {} ell={} omega={}: {:?} after {} iterations",
            r.label, r.trial, r.ell, r.omega, r.status, r.iterations
        );
    }
    println!("wrote {} files to {}", summary.files.len(), a.out.display());
    Ok(())
}

pub fn cmd_bounds(a: &BoundsArgs) -> CliResult<()> {
    let ells = parse_list(&a.ells, Ell::parse)?;
    let eps = log_grid(a.eps_min, a.eps_max, a.points)?;
    let table = bounds_table(a.kappa, a.f0gap, a.omega, &ells, &eps)?;
    ensure_dir(&a.out)?;
    table.write_csv(&a.out.join("bounds.csv"))?;
    table.chart().write(a.out.join("bounds.svg"))?;
    write_json(&a.out.join("bounds.json"), &table)?;
    println!("wrote bounds for {} tolerances to {}", eps.len(), a.out.display());
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    let suites = if a.suite.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.suite
            .iter()
            .map(|s| Suite::parse(s))
            .collect::<relaxed_mgd::Result<_>>()?
    };
    let report = run_verify(&VerifyOptions {
        suites,
        trials: a.trials,
        seed: a.seed,
        inject_drift: a.inject_drift,
    })?;
    ensure_dir(&a.out)?;
    write_json(&a.out.join("verify.json"), &report)?;
    let mut failing = Vec::new();
    for c in &report.checks {
        println!(
            "{:<12} {} trials={} violations={} worst={:.3e} tol={:.0e}",
            c.suite.name(),
            if c.passed { "PASS" } else { "FAIL" },
            c.trials,
            c.violations,
            c.worst,
            c.tolerance
        );
        for f in &c.failures {
            println!("    seed {}: {:.3e} ({})", f.seed, f.value, f.detail);
        }
        if !c.passed {
            let seeds: Vec<String> = c.failures.iter().map(|f| f.seed.to_string()).collect();
            failing.push(format!("{} (seeds {})", c.suite.name(), seeds.join(", ")));
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failing.join("; ")))
    }
}
