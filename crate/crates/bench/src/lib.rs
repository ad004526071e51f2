//! Monte-Carlo harness around the `orthorecover` solvers: grid sweeps with
//! per-trial CSV output, the noisy error table, timing and SVG plots.

pub mod config;
pub mod plot;
pub mod sweep;

use std::path::PathBuf;

pub use config::SweepConfig;
pub use plot::{emit_plot, AxesSpec, Metric};
pub use sweep::{run_noise_table, run_sweep, run_timing, NoiseTable, SweepOutcome};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    #[error("malformed CSV {}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },

    #[error(transparent)]
    Solver(#[from] orthorecover::Error),
}
