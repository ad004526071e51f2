//! Grid sweeps, the noise table and the timing table.

use std::path::{Path, PathBuf};

use orthorecover::eval::{default_threshold, recovery_errors, TrialResult};
use orthorecover::problem::{add_noise, generate_instance};
use orthorecover::{NoiseSpec, SolverKind};
use rayon::prelude::*;

use crate::config::SweepConfig;
use crate::BenchError;

pub const DATA_HEADER: [&str; 15] = [
    "solver",
    "K",
    "D",
    "N",
    "sigma",
    "trial",
    "seed",
    "err_V1",
    "err_mean",
    "err_max",
    "success",
    "iterations",
    "converged",
    "objective",
    "runtime_seconds",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "solver",
    "K",
    "D",
    "N",
    "sigma",
    "trials",
    "mean_err",
    "median_err",
    "success_rate",
    "mean_runtime_seconds",
];

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Instance seed for one trial, a hash of the base seed and the cell
/// coordinates. Independent of execution order.
pub fn trial_seed(base: u64, k: usize, d: usize, n: usize, sigma: f64, trial: usize) -> u64 {
    [k as u64, d as u64, n as u64, sigma.to_bits(), trial as u64]
        .into_iter()
        .fold(mix(base), |h, x| mix(h ^ mix(x.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

/// Seed of the noise draw for a trial whose instance used `seed`.
pub fn noise_seed(seed: u64) -> u64 {
    mix(seed ^ 0x6e6f_6973_65)
}

/// One `(K, D, N, sigma)` grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub solver: String,
    pub cell: Cell,
    pub trials: usize,
    pub mean_err: f64,
    pub median_err: f64,
    pub success_rate: f64,
    pub mean_runtime_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Ordered by cell, then trial, then solver as configured.
    pub rows: Vec<TrialResult>,
    /// Ordered by cell, then solver.
    pub summaries: Vec<Summary>,
}

impl SweepOutcome {
    pub fn summary(&self, solver: SolverKind, cell: Cell) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.solver == solver.name() && s.cell == cell)
    }

    pub fn rows_for(&self, solver: SolverKind, cell: Cell) -> impl Iterator<Item = &TrialResult> {
        self.rows.iter().filter(move |r| {
            r.solver == solver.name() && r.k == cell.k && r.d == cell.d && r.n == cell.n && r.sigma == cell.sigma
        })
    }
}

pub fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &d in &cfg.d {
        for n in cfg.n_grid(d) {
            for &sigma in &cfg.sigma {
                out.push(Cell { k: cfg.k, d, n, sigma });
            }
        }
    }
    out
}

/// Runs every selected solver on one shared noisy instance.
fn run_trial(cfg: &SweepConfig, cell: Cell, trial: usize) -> Result<Vec<TrialResult>, BenchError> {
    let seed = trial_seed(cfg.seed, cell.k, cell.d, cell.n, cell.sigma, trial);
    let (clean, truth) = generate_instance(cell.k, cell.n, cell.d, seed)?;
    let spec = NoiseSpec {
        sigma: cell.sigma,
        target: cfg.noise,
    };
    let inst = add_noise(&clean, &spec, noise_seed(seed));
    let threshold = cfg
        .threshold
        .unwrap_or_else(|| default_threshold(cell.sigma, cell.d));
    cfg.solvers
        .iter()
        .map(|&kind| {
            let (estimate, report) = kind.run(&inst, &cfg.options)?;
            let errors = recovery_errors(&estimate, &truth)?;
            Ok(TrialResult::new(kind.name(), &inst, trial, seed, errors, &report, threshold))
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn summarize(cfg: &SweepConfig, cell_list: &[Cell], rows: &[TrialResult]) -> Vec<Summary> {
    let per_cell = cfg.trials * cfg.solvers.len();
    let mut out = Vec::new();
    for (cell, chunk) in cell_list.iter().zip(rows.chunks(per_cell)) {
        for kind in &cfg.solvers {
            let mine: Vec<&TrialResult> = chunk.iter().filter(|r| r.solver == kind.name()).collect();
            let count = mine.len() as f64;
            let mut errs: Vec<f64> = mine.iter().map(|r| r.mean_error).collect();
            out.push(Summary {
                solver: kind.name().to_string(),
                cell: *cell,
                trials: mine.len(),
                mean_err: errs.iter().sum::<f64>() / count,
                median_err: median(&mut errs),
                success_rate: mine.iter().filter(|r| r.success).count() as f64 / count,
                mean_runtime_seconds: mine.iter().map(|r| r.runtime_seconds).sum::<f64>() / count,
            });
        }
    }
    out
}

/// Runs the sweep in memory. Trials run on `cfg.workers` threads; results
/// are collected in grid order so the output does not depend on scheduling.
pub fn execute(cfg: &SweepConfig) -> Result<SweepOutcome, BenchError> {
    cfg.validate()?;
    let cell_list = cells(cfg);
    let jobs: Vec<(Cell, usize)> = cell_list
        .iter()
        .flat_map(|&c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BenchError::Invalid(e.to_string()))?;
    let per_job: Vec<Vec<TrialResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, trial)| run_trial(cfg, cell, trial))
            .collect::<Result<_, _>>()
    })?;
    let rows: Vec<TrialResult> = per_job.into_iter().flatten().collect();
    let summaries = summarize(cfg, &cell_list, &rows);
    Ok(SweepOutcome { rows, summaries })
}

/// `results.csv` becomes `results.summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    with_suffix(out, "summary")
}

pub(crate) fn with_suffix(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, BenchError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    csv::Writer::from_path(path).map_err(|e| BenchError::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<(), BenchError> {
    w.flush().map_err(|e| BenchError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |e| BenchError::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Shortest decimal that parses back to the same `f64`, switching to
/// exponent notation for very small or large magnitudes.
pub fn float(x: f64) -> String {
    format!("{x:?}")
}

pub fn data_record(r: &TrialResult) -> Vec<String> {
    vec![
        r.solver.clone(),
        r.k.to_string(),
        r.d.to_string(),
        r.n.to_string(),
        float(r.sigma),
        r.trial.to_string(),
        r.seed.to_string(),
        float(r.errors.first().copied().unwrap_or(f64::NAN)),
        float(r.mean_error),
        float(r.max_error),
        r.success.to_string(),
        r.iterations.to_string(),
        r.converged.to_string(),
        float(r.objective),
        float(r.runtime_seconds),
    ]
}

pub fn write_data(path: &Path, rows: &[TrialResult]) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(DATA_HEADER).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(data_record(r)).map_err(csv_err(path))?;
    }
    finish(w, path)
}

pub fn write_summary(path: &Path, summaries: &[Summary]) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(path))?;
    for s in summaries {
        w.write_record([
            s.solver.clone(),
            s.cell.k.to_string(),
            s.cell.d.to_string(),
            s.cell.n.to_string(),
            float(s.cell.sigma),
            s.trials.to_string(),
            float(s.mean_err),
            float(s.median_err),
            float(s.success_rate),
            float(s.mean_runtime_seconds),
        ])
        .map_err(csv_err(path))?;
    }
    finish(w, path)
}

/// Runs the sweep and writes `cfg.out` plus its `.summary.csv` companion.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, BenchError> {
    let outcome = execute(cfg)?;
    write_data(&cfg.out, &outcome.rows)?;
    write_summary(&summary_path(&cfg.out), &outcome.summaries)?;
    Ok(outcome)
}

/// Noise-table defaults: `K = 3`, `D = 10`, `N in {12, 16, 22}`,
/// `sigma in {0.01, 0.1}`, all solvers, 50 trials.
pub fn noise_table_config() -> SweepConfig {
    SweepConfig {
        k: 3,
        d: vec![10],
        n: vec![12, 16, 22],
        sigma: vec![0.01, 0.1],
        out: PathBuf::from("noise_table.csv"),
        ..SweepConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct NoiseTable {
    pub solvers: Vec<SolverKind>,
    /// `(N, sigma, mean error per solver)` in grid order.
    pub rows: Vec<(usize, f64, Vec<f64>)>,
    pub outcome: SweepOutcome,
}

impl NoiseTable {
    pub fn from_outcome(solvers: &[SolverKind], outcome: SweepOutcome) -> Self {
        let mut rows = Vec::new();
        let mut seen: Vec<Cell> = Vec::new();
        for s in &outcome.summaries {
            if !seen.contains(&s.cell) {
                seen.push(s.cell);
            }
        }
        for cell in seen {
            let means = solvers
                .iter()
                .map(|&kind| outcome.summary(kind, cell).map_or(f64::NAN, |s| s.mean_err))
                .collect();
            rows.push((cell.n, cell.sigma, means));
        }
        Self {
            solvers: solvers.to_vec(),
            rows,
            outcome,
        }
    }

    pub fn mean(&self, solver: SolverKind, n: usize, sigma: f64) -> Option<f64> {
        let col = self.solvers.iter().position(|&s| s == solver)?;
        self.rows
            .iter()
            .find(|(rn, rs, _)| *rn == n && *rs == sigma)
            .map(|(_, _, m)| m[col])
    }

    pub fn write(&self, path: &Path) -> Result<(), BenchError> {
        let mut w = writer(path)?;
        let mut header = vec!["N".to_string(), "sigma".to_string()];
        header.extend(self.solvers.iter().map(|s| s.name().to_string()));
        w.write_record(&header).map_err(csv_err(path))?;
        for (n, sigma, means) in &self.rows {
            let mut rec = vec![n.to_string(), float(*sigma)];
            rec.extend(means.iter().map(|&m| float(m)));
            w.write_record(&rec).map_err(csv_err(path))?;
        }
        finish(w, path)
    }
}

/// Table of mean errors per `(N, sigma)` row and solver column, written to
/// `cfg.out`; the per-trial rows go to `<out>.trials.csv`.
pub fn run_noise_table(cfg: &SweepConfig) -> Result<NoiseTable, BenchError> {
    let outcome = execute(cfg)?;
    write_data(&with_suffix(&cfg.out, "trials"), &outcome.rows)?;
    let table = NoiseTable::from_outcome(&cfg.solvers, outcome);
    table.write(&cfg.out)?;
    Ok(table)
}

/// Timing defaults: the `K = 3, D = 10, N = 15, sigma = 0.1` cell, 20 trials.
pub fn timing_config() -> SweepConfig {
    SweepConfig {
        k: 3,
        d: vec![10],
        n: vec![15],
        sigma: vec![0.1],
        trials: 20,
        out: PathBuf::from("timing.csv"),
        ..SweepConfig::default()
    }
}

/// Mean solve time per solver and cell, written as
/// `solver,K,D,N,sigma,trials,mean_runtime_seconds`. Only the solve call is
/// timed.
pub fn run_timing(cfg: &SweepConfig) -> Result<Vec<Summary>, BenchError> {
    let outcome = execute(cfg)?;
    let path = cfg.out.as_path();
    let mut w = writer(path)?;
    w.write_record(["solver", "K", "D", "N", "sigma", "trials", "mean_runtime_seconds"])
        .map_err(csv_err(path))?;
    for s in &outcome.summaries {
        w.write_record([
            s.solver.clone(),
            s.cell.k.to_string(),
            s.cell.d.to_string(),
            s.cell.n.to_string(),
            float(s.cell.sigma),
            s.trials.to_string(),
            float(s.mean_runtime_seconds),
        ])
        .map_err(csv_err(path))?;
    }
    finish(w, path)?;
    Ok(outcome.summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_coordinate() {
        let base = trial_seed(1, 3, 10, 11, 0.0, 0);
        assert_eq!(base, trial_seed(1, 3, 10, 11, 0.0, 0));
        for other in [
            trial_seed(2, 3, 10, 11, 0.0, 0),
            trial_seed(1, 4, 10, 11, 0.0, 0),
            trial_seed(1, 3, 9, 11, 0.0, 0),
            trial_seed(1, 3, 10, 12, 0.0, 0),
            trial_seed(1, 3, 10, 11, 0.1, 0),
            trial_seed(1, 3, 10, 11, 0.0, 1),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn summary_path_keeps_extension() {
        assert_eq!(summary_path(Path::new("a/b.csv")), PathBuf::from("a/b.summary.csv"));
        assert_eq!(summary_path(Path::new("runs")), PathBuf::from("runs.summary.csv"));
    }
}
