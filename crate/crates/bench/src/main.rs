use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orthorecover::eval::{classify_success, default_threshold, recovery_errors, TrialResult};
use orthorecover::problem::{add_noise, generate_instance, load_instance, save_instance};
use orthorecover::{NoiseSpec, NoiseTarget, SolverOptions};
use orthorecover_bench::config::parse_solvers;
use orthorecover_bench::sweep::{noise_table_config, summary_path, timing_config};
use orthorecover_bench::{
    emit_plot, run_noise_table, run_sweep, run_timing, AxesSpec, BenchError, Metric, SweepConfig,
};

#[derive(Parser)]
#[command(name = "orthobench", version, about = "Orthogonal matrix recovery benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance (with its ground truth) to a file.
    Generate(GenerateArgs),
    /// Solve one instance file and print errors and solver reports.
    Solve(SolveArgs),
    /// Run a grid sweep and write per-trial and summary CSVs.
    Sweep(GridArgs),
    /// Mean errors per (N, sigma) row and solver column.
    NoiseTable(GridArgs),
    /// Mean solve time per solver.
    Timing(GridArgs),
    /// Render SVG panels and gnuplot data from a sweep CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short = 'k', long, default_value_t = 3)]
    k: usize,
    #[arg(short = 'n', long)]
    n: usize,
    #[arg(short = 'd', long)]
    d: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Add noise to every X_i instead of only X_K.
    #[arg(long)]
    noise_all: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file as written by `generate`.
    input: PathBuf,
    #[arg(long, default_value = "SDP")]
    solver: String,
    #[arg(long)]
    threshold: Option<f64>,
    /// Config file whose `sdp.*` / `grad.*` keys override solver options.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated solver names.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(short = 'k', long)]
    k: Option<usize>,
    /// Comma-separated list.
    #[arg(short = 'd', long)]
    d: Option<String>,
    /// Comma-separated list.
    #[arg(short = 'n', long)]
    n: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep data or summary CSV.
    input: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// err_mean, err_V1 or success.
    #[arg(long, default_value = "err_mean")]
    metric: String,
    #[arg(long)]
    log_y: bool,
}

impl GridArgs {
    fn resolve(&self, mut cfg: SweepConfig) -> Result<SweepConfig, BenchError> {
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("solvers", self.solver.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
            ("threshold", self.threshold.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("d", self.d.clone()),
            ("n", self.n.clone()),
            ("sigma", self.sigma.clone()),
            ("trials", self.trials.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                cfg.set(key, &value)
                    .map_err(|msg| BenchError::Invalid(format!("--{key}: {msg}")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn generate(args: &GenerateArgs) -> Result<(), BenchError> {
    let (clean, truth) = generate_instance(args.k, args.n, args.d, args.seed)?;
    let target = if args.noise_all {
        NoiseTarget::All
    } else {
        NoiseTarget::Observation
    };
    let spec = NoiseSpec {
        sigma: args.sigma,
        target,
    };
    let inst = add_noise(&clean, &spec, orthorecover_bench::sweep::noise_seed(args.seed));
    save_instance(&inst, Some(&truth), &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<(), BenchError> {
    let (inst, truth) = load_instance(&args.input)?;
    let options = match &args.config {
        Some(path) => SweepConfig::from_file(path)?.options,
        None => SolverOptions::default(),
    };
    let solvers = parse_solvers(&args.solver).map_err(BenchError::Invalid)?;
    println!(
        "instance K={} N={} D={} sigma={}",
        inst.k(),
        inst.n(),
        inst.d(),
        inst.sigma
    );
    for kind in solvers {
        let (estimate, report) = kind.run(&inst, &options)?;
        println!("[{kind}]");
        println!(
            "  iterations {}  converged {}  objective {:e}  residual {:e}  time {:.4}s",
            report.iterations,
            report.converged,
            report.objective,
            inst.residual(&estimate),
            report.runtime_seconds
        );
        if let Some(gap) = report.optimality_gap {
            println!("  optimality gap {gap:e}");
        }
        for w in &report.warnings {
            println!("  warning: {w}");
        }
        match &truth {
            Some(truth) => {
                let errors = recovery_errors(&estimate, truth)?;
                let threshold = args
                    .threshold
                    .unwrap_or_else(|| default_threshold(inst.sigma, inst.d()));
                let row = TrialResult::new(kind.name(), &inst, 0, inst.seed, errors, &report, threshold);
                let listed: Vec<String> = row.errors.iter().map(|e| format!("{e:.3e}")).collect();
                println!("  errors [{}]", listed.join(", "));
                println!(
                    "  success {} (threshold {threshold:e})",
                    classify_success(&row, threshold)
                );
            }
            None => {
                for (i, v) in estimate.matrices().iter().enumerate() {
                    println!("  V{} = {v}", i + 1);
                }
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Generate(args) => generate(&args),
        Command::Solve(args) => solve(&args),
        Command::Sweep(args) => {
            let cfg = args.resolve(SweepConfig::default())?;
            let outcome = run_sweep(&cfg)?;
            for s in &outcome.summaries {
                println!(
                    "{:>6} D={:<3} N={:<3} sigma={:<6} mean_err={:.3e} success={:.2}",
                    s.solver, s.cell.d, s.cell.n, s.cell.sigma, s.mean_err, s.success_rate
                );
            }
            println!(
                "wrote {} and {}",
                cfg.out.display(),
                summary_path(&cfg.out).display()
            );
            Ok(())
        }
        Command::NoiseTable(args) => {
            let cfg = args.resolve(noise_table_config())?;
            let table = run_noise_table(&cfg)?;
            let names: Vec<&str> = table.solvers.iter().map(|s| s.name()).collect();
            println!("{:>4} {:>6} {}", "N", "sigma", names.iter().map(|n| format!("{n:>9}")).collect::<String>());
            for (n, sigma, means) in &table.rows {
                let cols: String = means.iter().map(|m| format!("{m:>9.4}")).collect();
                println!("{n:>4} {sigma:>6} {cols}");
            }
            println!("wrote {}", cfg.out.display());
            Ok(())
        }
        Command::Timing(args) => {
            let cfg = args.resolve(timing_config())?;
            for s in run_timing(&cfg)? {
                println!(
                    "{:>6} K={} D={} N={} sigma={} mean {:.4}s over {} trials",
                    s.solver, s.cell.k, s.cell.d, s.cell.n, s.cell.sigma, s.mean_runtime_seconds, s.trials
                );
            }
            println!("wrote {}", cfg.out.display());
            Ok(())
        }
        Command::Plot(args) => {
            let metric = Metric::parse(&args.metric)
                .ok_or_else(|| BenchError::Invalid(format!("unknown metric `{}`", args.metric)))?;
            let axes = AxesSpec {
                metric,
                log_y: args.log_y,
            };
            for path in emit_plot(&args.input, &args.out, axes)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
