//! Grid experiments over `(ℓ, ω)` with seeded repetitions, plus the
//! complexity-bound sweep.
//!
//! Trial `i` uses seed `base_seed + i` for its problem instance. Random
//! relaxation draws from an independent stream derived from that seed.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::MatvecCounters;
use crate::plot::{Chart, Series};
use crate::problems::{fletcher_counterexample, ProblemInstance};
use crate::solver::{Ell, RelaxationMode, SolveResult, SolveStatus, SolverConfig};
use crate::theory::{complexity_k, complexity_khat, rate2_fgap_bound, SpectralBounds};

/// One column of the relaxation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaSpec {
    Fixed(f64),
    Random,
}

impl OmegaSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("random") {
            return Ok(OmegaSpec::Random);
        }
        let w: f64 = s
            .parse()
            .map_err(|_| Error::invalid(format!("omega must be a number or 'random', got '{s}'")))?;
        if !(w > 0.0 && w < 2.0) {
            return Err(Error::invalid(format!("omega must lie in (0, 2), got {w}")));
        }
        Ok(OmegaSpec::Fixed(w))
    }

    pub fn label(&self) -> String {
        match self {
            OmegaSpec::Fixed(w) => format!("{w}"),
            OmegaSpec::Random => "random".into(),
        }
    }

    pub fn mode(&self, trial_seed: u64) -> RelaxationMode {
        match *self {
            OmegaSpec::Fixed(omega) => RelaxationMode::Fixed { omega },
            OmegaSpec::Random => RelaxationMode::RandomUniform {
                seed: omega_seed(trial_seed),
            },
        }
    }
}

/// Seed of the relaxation stream for a trial; decorrelated from the
/// problem stream by a splitmix64 finalizer.
pub fn omega_seed(trial_seed: u64) -> u64 {
    let mut z = trial_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ells: Vec<Ell>,
    pub omegas: Vec<OmegaSpec>,
    pub tol_gnorm_sq: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub restart_period: Option<usize>,
    #[serde(default = "one")]
    pub trace_stride: usize,
}

fn one() -> usize {
    1
}

impl GridSpec {
    /// ℓ ∈ {0, ½, 1} × ω ∈ {1, 0.95, random}.
    pub fn standard(tol_gnorm_sq: f64, max_iter: usize) -> Self {
        Self {
            ells: vec![Ell::from_two_ell(0), Ell::from_two_ell(1), Ell::from_two_ell(2)],
            omegas: vec![OmegaSpec::Fixed(1.0), OmegaSpec::Fixed(0.95), OmegaSpec::Random],
            tol_gnorm_sq,
            max_iter,
            restart_period: None,
            trace_stride: 1,
        }
    }

    pub fn cells(&self) -> Vec<(Ell, OmegaSpec)> {
        self.ells
            .iter()
            .flat_map(|&e| self.omegas.iter().map(move |&w| (e, w)))
            .collect()
    }

    pub fn config(&self, ell: Ell, omega: OmegaSpec, trial_seed: u64) -> SolverConfig {
        SolverConfig {
            ell,
            relaxation: omega.mode(trial_seed),
            tol_gnorm_sq: self.tol_gnorm_sq,
            max_iter: self.max_iter,
            restart_period: self.restart_period,
            trace_stride: self.trace_stride,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub trial: usize,
    pub seed: u64,
    pub ell: Ell,
    pub omega: OmegaSpec,
    pub problem_label: String,
    pub result: SolveResult,
}

impl TrialRun {
    /// `trace_<label>_<ell>_<omega>.csv`; multi-trial runs carry the trial in the label.
    pub fn trace_file_name(&self, trials: usize) -> String {
        let label = if trials > 1 {
            format!("{}-t{}", self.problem_label, self.trial)
        } else {
            self.problem_label.clone()
        };
        format!("trace_{label}_{}_{}.csv", self.ell, self.omega.label())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub ell: Ell,
    pub omega: String,
    pub trial: usize,
    pub seed: u64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub restarts: usize,
    pub matvecs: MatvecCounters,
    pub expected_algorithmic_matvecs: u64,
    pub gnorm_sq_final: f64,
    pub fgap_final: Option<f64>,
    pub gnorm_w_sq_final: Option<f64>,
    pub breakdown: Option<String>,
}

impl RunSummary {
    pub fn from_result(label: &str, ell: Ell, omega: String, trial: usize, seed: u64, r: &SolveResult) -> Self {
        let last = r.trace.last();
        Self {
            label: label.to_string(),
            ell,
            omega,
            trial,
            seed,
            status: r.status,
            iterations: r.iterations,
            restarts: r.restarts,
            matvecs: r.matvecs,
            expected_algorithmic_matvecs: r.expected_algorithmic_matvecs(),
            gnorm_sq_final: r.gnorm_sq_final,
            fgap_final: last.and_then(|t| t.fgap),
            gnorm_w_sq_final: last.and_then(|t| t.gnorm_w_sq),
            breakdown: r.breakdown.clone(),
        }
    }
}

impl From<&TrialRun> for RunSummary {
    fn from(t: &TrialRun) -> Self {
        RunSummary::from_result(&t.problem_label, t.ell, t.omega.label(), t.trial, t.seed, &t.result)
    }
}

/// Builds one problem per trial and runs every grid cell on it. Work runs
/// in parallel; the output order is `(trial, cell)` regardless.
pub fn run_grid<F>(grid: &GridSpec, trials: usize, base_seed: u64, make_problem: F) -> Result<Vec<TrialRun>>
where
    F: Fn(u64) -> Result<ProblemInstance> + Sync,
{
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if grid.ells.is_empty() || grid.omegas.is_empty() {
        return Err(Error::invalid("experiment grid is empty"));
    }
    let problems: Vec<ProblemInstance> = (0..trials)
        .into_par_iter()
        .map(|t| make_problem(base_seed + t as u64))
        .collect::<Result<_>>()?;
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = (0..trials)
        .flat_map(|t| (0..cells.len()).map(move |c| (t, c)))
        .collect();
    jobs.par_iter()
        .map(|&(t, c)| {
            let (ell, omega) = cells[c];
            let seed = base_seed + t as u64;
            let problem = &problems[t];
            let result = problem.solve(&grid.config(ell, omega, seed))?;
            Ok(TrialRun {
                trial: t,
                seed,
                ell,
                omega,
                problem_label: problem.label.clone(),
                result,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanPoint {
    pub k: usize,
    pub mean_fgap: Option<f64>,
    pub mean_gnorm2_sq: f64,
}

/// Mean over runs at every recorded `k`. A run that has stopped contributes
/// its final value from then on.
pub fn mean_curve(results: &[&SolveResult]) -> Vec<MeanPoint> {
    let mut ks: Vec<usize> = results
        .iter()
        .flat_map(|r| r.trace.records.iter().map(|t| t.k))
        .collect();
    ks.sort_unstable();
    ks.dedup();
    let n = results.len() as f64;
    ks.into_iter()
        .map(|k| {
            let mut fsum = Some(0.0);
            let mut gsum = 0.0;
            for r in results {
                let recs = &r.trace.records;
                let i = recs.partition_point(|t| t.k <= k).max(1) - 1;
                let rec = &recs[i];
                gsum += rec.gnorm2_sq;
                fsum = fsum.zip(rec.fgap).map(|(a, b)| a + b);
            }
            MeanPoint {
                k,
                mean_fgap: fsum.map(|s| s / n),
                mean_gnorm2_sq: gsum / n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub trials: usize,
    pub base_seed: u64,
    pub grid: GridSpec,
    pub runs: Vec<RunSummary>,
    pub files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

/// Writes per-run traces, `mean_<name>.csv`, `<name>.svg` and `summary.json`.
pub fn write_experiment(
    dir: &Path,
    name: &str,
    grid: &GridSpec,
    trials: usize,
    base_seed: u64,
    runs: &[TrialRun],
) -> Result<ExperimentSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for run in runs {
        let path = dir.join(run.trace_file_name(trials));
        run.result.trace.write_csv(create(&path)?)?;
        files.push(path);
    }

    let use_fgap = runs
        .iter()
        .all(|r| r.result.trace.records.iter().all(|t| t.fgap.is_some()));
    let mut chart = Chart::new(
        format!("{name}: mean over {trials} trial(s)"),
        "iteration k",
        if use_fgap { "f(x_k) - f*" } else { "||g_k||^2" },
    );
    let mean_path = dir.join(format!("mean_{name}.csv"));
    let mut w = csv::Writer::from_writer(create(&mean_path)?);
    w.write_record(["ell", "omega", "k", "mean_fgap", "mean_gnorm2_sq"])?;
    for (ell, omega) in grid.cells() {
        let cell: Vec<&SolveResult> = runs
            .iter()
            .filter(|r| r.ell == ell && r.omega == omega)
            .map(|r| &r.result)
            .collect();
        if cell.is_empty() {
            continue;
        }
        let curve = mean_curve(&cell);
        for p in &curve {
            w.write_record([
                ell.to_string(),
                omega.label(),
                p.k.to_string(),
                p.mean_fgap.map(|v| format!("{v:e}")).unwrap_or_default(),
                format!("{:e}", p.mean_gnorm2_sq),
            ])?;
        }
        let points = curve
            .iter()
            .map(|p| {
                (
                    p.k as f64,
                    if use_fgap {
                        p.mean_fgap.unwrap_or(f64::NAN)
                    } else {
                        p.mean_gnorm2_sq
                    },
                )
            })
            .collect();
        let series = Series::new(format!("l={ell}, w={}", omega.label()), points);
        chart.push(if matches!(omega, OmegaSpec::Random) {
            series.dashed()
        } else {
            series
        });
    }
    w.flush().map_err(|e| Error::io(&mean_path, e))?;
    files.push(mean_path);

    let svg = dir.join(format!("{name}.svg"));
    chart.write(&svg)?;
    files.push(svg);

    let summary = ExperimentSummary {
        experiment: name.to_string(),
        trials,
        base_seed,
        grid: grid.clone(),
        runs: runs.iter().map(RunSummary::from).collect(),
        files: Vec::new(),
    };
    let summary_path = dir.join("summary.json");
    files.push(summary_path.clone());
    let summary = ExperimentSummary { files, ..summary };
    write_json(&summary_path, &summary)?;
    Ok(summary)
}

/// One row of the counterexample table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub k: usize,
    /// `f(x_k)` for ℓ = 0, ½, 1 (unrelaxed).
    pub fvals: [f64; 3],
    /// Steepest-descent bound `c(1)^k (f(x_0) - f*)`.
    pub sd_bound: f64,
}

/// Function values of the first `iterations` iterates on the Fletcher
/// problem for ℓ ∈ {0, ½, 1}, next to the steepest-descent bound.
pub fn counterexample_table(iterations: usize) -> Result<Vec<CounterexampleRow>> {
    let p = fletcher_counterexample();
    let bounds = p.spectrum.expect("exact spectrum");
    let f0gap = p.objective(&p.x0)? - p.fstar.unwrap_or(0.0);
    let mut columns = Vec::new();
    for two_ell in 0..3 {
        let cfg = SolverConfig::new(
            Ell::from_two_ell(two_ell),
            RelaxationMode::fixed(1.0),
            f64::MIN_POSITIVE,
            iterations,
        );
        let r = p.solve(&cfg)?;
        columns.push(r.trace.records.iter().map(|t| t.fval).collect::<Vec<_>>());
    }
    (0..=iterations)
        .map(|k| {
            let at = |c: &Vec<f64>| c.get(k).copied().unwrap_or(f64::NAN);
            Ok(CounterexampleRow {
                k,
                fvals: [at(&columns[0]), at(&columns[1]), at(&columns[2])],
                sd_bound: rate2_fgap_bound(k, 1.0, 0, &bounds, f0gap)?,
            })
        })
        .collect()
}

pub fn write_counterexample_table(path: &Path, rows: &[CounterexampleRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["k", "f_ell_0", "f_ell_0.5", "f_ell_1", "sd_bound"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.fvals[0].to_string(),
            r.fvals[1].to_string(),
            r.fvals[2].to_string(),
            r.sd_bound.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `n` points log-spaced from `hi` down to `lo`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || n < 2 {
        return Err(Error::invalid(format!("bad grid [{lo}, {hi}] with {n} points")));
    }
    let (a, b) = (hi.log10(), lo.log10());
    Ok((0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsRow {
    pub epsilon: f64,
    pub k: f64,
    /// `K̂` per requested ℓ, in input order.
    pub khat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsTable {
    pub kappa: f64,
    pub f0gap: f64,
    pub omega: f64,
    pub ells: Vec<Ell>,
    pub rows: Vec<BoundsRow>,
}

pub fn bounds_table(kappa: f64, f0gap: f64, omega: f64, ells: &[Ell], eps: &[f64]) -> Result<BoundsTable> {
    let b = SpectralBounds::from_kappa(kappa)?;
    let rows = eps
        .iter()
        .map(|&e| {
            Ok(BoundsRow {
                epsilon: e,
                k: complexity_k(e, omega, &b, f0gap)?,
                khat: ells
                    .iter()
                    .map(|l| complexity_khat(e, omega, l.two_ell(), &b, f0gap))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundsTable {
        kappa,
        f0gap,
        omega,
        ells: ells.to_vec(),
        rows,
    })
}

impl BoundsTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(create(path)?);
        let mut header = vec!["epsilon".to_string(), "K".to_string()];
        header.extend(self.ells.iter().map(|l| format!("Khat_ell_{l}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![format!("{:e}", r.epsilon), r.k.to_string()];
            rec.extend(r.khat.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn chart(&self) -> Chart {
        let mut c = Chart::new(
            format!(
                "complexity bounds, kappa={}, f0-f*={}, w={}",
                self.kappa, self.f0gap, self.omega
            ),
            "epsilon",
            "iterations",
        );
        c.log_x = true;
        c.log_y = false;
        c.push(Series::new("K", self.rows.iter().map(|r| (r.epsilon, r.k)).collect()).dashed());
        for (i, l) in self.ells.iter().enumerate() {
            c.push(Series::new(
                format!("Khat, l={l}"),
                self.rows.iter().map(|r| (r.epsilon, r.khat[i])).collect(),
            ));
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::diagonal_spectrum;

    #[test]
    fn omega_spec_parsing() {
        assert_eq!(OmegaSpec::parse("random").unwrap(), OmegaSpec::Random);
        assert_eq!(OmegaSpec::parse("0.95").unwrap(), OmegaSpec::Fixed(0.95));
        assert!(OmegaSpec::parse("2").is_err());
        assert!(OmegaSpec::parse("x").is_err());
    }

    #[test]
    fn grid_is_deterministic_and_ordered() {
        let grid = GridSpec::standard(1e-6, 200);
        let make = |s| diagonal_spectrum(50, s);
        let a = run_grid(&grid, 2, 7, make).unwrap();
        let b = run_grid(&grid, 2, 7, make).unwrap();
        assert_eq!(a.len(), 18);
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            assert_eq!(
                (x.trial, x.ell, x.omega),
                (i / 9, grid.cells()[i % 9].0, grid.cells()[i % 9].1)
            );
            assert_eq!(x.result.trace.records, y.result.trace.records);
            assert_eq!(x.result.matvecs.algorithmic, x.result.expected_algorithmic_matvecs());
        }
    }

    #[test]
    fn mean_curve_carries_final_values() {
        let p = diagonal_spectrum(20, 1).unwrap();
        let short = p
            .solve(&SolverConfig::new(
                Ell::from_two_ell(0),
                RelaxationMode::fixed(1.0),
                1e-30,
                3,
            ))
            .unwrap();
        let long = p
            .solve(&SolverConfig::new(
                Ell::from_two_ell(0),
                RelaxationMode::fixed(1.0),
                1e-30,
                6,
            ))
            .unwrap();
        let m = mean_curve(&[&short, &long]);
        assert_eq!(m.len(), 7);
        let s3 = short.trace.records[3].gnorm2_sq;
        let l5 = long.trace.records[5].gnorm2_sq;
        assert!((m[5].mean_gnorm2_sq - 0.5 * (s3 + l5)).abs() <= 1e-15 * s3.max(l5));
        assert!(m.iter().all(|p| p.mean_fgap.is_some()));
    }

    #[test]
    fn counterexample_rows() {
        let rows = counterexample_table(2).unwrap();
        assert!((rows[0].fvals[0] - 1.1).abs() < 1e-15);
        assert!((rows[1].sd_bound - 0.7364).abs() < 5e-5);
        assert!((rows[2].sd_bound - 0.4929).abs() < 5e-5);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-8, 0.1, 8).unwrap();
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[7] - 1e-8).abs() < 1e-20);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn omega_seed_differs_from_trial_seed() {
        assert_ne!(omega_seed(0), 0);
        assert_ne!(omega_seed(1), omega_seed(2));
    }
}
