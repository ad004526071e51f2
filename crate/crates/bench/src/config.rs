//! Sweep configuration and its `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! solvers = SDP, C-LS+, LS
//! k = 3
//! d = 10
//! n = 8, 9, 10, 11, 12
//! sigma = 0, 0.01
//! trials = 50
//! seed = 1
//! threshold = 1e-3
//! out = results/sweep.csv
//! workers = 4
//! noise = observation
//! sdp.max_iter = 20000
//! ```
//!
//! `n` may be omitted, in which case each `D` gets the grid `D-2 ..= 2D+4`.
//! Solver overrides: `sdp.rho`, `sdp.max_iter`, `sdp.tol_primal`,
//! `sdp.tol_dual`, `sdp.adaptive_rho`, `sdp.relaxation`, `sdp.polish`,
//! `sdp.polish_every`, `sdp.tol_gap`, `grad.max_iter`, `grad.tol`,
//! `grad.acceleration`, `grad.step` (`fixed` or `backtracking`).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use orthorecover::baselines::StepRule;
use orthorecover::{NoiseTarget, SolverKind, SolverOptions};

use crate::BenchError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub solvers: Vec<SolverKind>,
    pub k: usize,
    pub d: Vec<usize>,
    /// Empty means the default grid per `D`.
    pub n: Vec<usize>,
    pub sigma: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// `None` uses `default_threshold(sigma, D)` per cell.
    pub threshold: Option<f64>,
    pub out: PathBuf,
    pub workers: usize,
    pub noise: NoiseTarget,
    pub options: SolverOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            solvers: SolverKind::ALL.to_vec(),
            k: 3,
            d: vec![10],
            n: Vec::new(),
            sigma: vec![0.0],
            trials: 50,
            seed: 1,
            threshold: None,
            out: PathBuf::from("sweep.csv"),
            workers: 1,
            noise: NoiseTarget::Observation,
            options: SolverOptions::default(),
        }
    }
}

/// `D-2 ..= 2D+4`, clipped below at 1.
pub fn default_n_grid(d: usize) -> Vec<usize> {
    (d.saturating_sub(2).max(1)..=2 * d + 4).collect()
}

impl SweepConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    /// Parses the `key = value` format on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<(), BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.apply(&text)
    }

    /// Overrides fields from `key = value` lines, then validates.
    pub fn apply(&mut self, text: &str) -> Result<(), BenchError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| BenchError::Config {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|msg| BenchError::Config { line: idx + 1, msg })?;
        }
        self.validate()
    }

    /// Applies one setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let sdp = &mut self.options.sdp;
        let grad = &mut self.options.grad;
        match key.to_ascii_lowercase().as_str() {
            "solvers" | "solver" => self.solvers = parse_solvers(value)?,
            "k" => self.k = scalar(key, value)?,
            "d" => self.d = list(key, value)?,
            "n" => self.n = list(key, value)?,
            "sigma" => self.sigma = list(key, value)?,
            "trials" => self.trials = scalar(key, value)?,
            "seed" => self.seed = scalar(key, value)?,
            "threshold" => self.threshold = Some(scalar(key, value)?),
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = scalar(key, value)?,
            "noise" => {
                self.noise = match value.to_ascii_lowercase().as_str() {
                    "observation" => NoiseTarget::Observation,
                    "all" => NoiseTarget::All,
                    _ => return Err(format!("noise must be `observation` or `all`, got `{value}`")),
                }
            }
            "sdp.rho" => sdp.rho = scalar(key, value)?,
            "sdp.max_iter" => sdp.max_iter = scalar(key, value)?,
            "sdp.tol_primal" => sdp.tol_primal = scalar(key, value)?,
            "sdp.tol_dual" => sdp.tol_dual = scalar(key, value)?,
            "sdp.adaptive_rho" => sdp.adaptive_rho = scalar(key, value)?,
            "sdp.relaxation" => sdp.relaxation = scalar(key, value)?,
            "sdp.polish" => sdp.polish = scalar(key, value)?,
            "sdp.polish_every" => sdp.polish_every = scalar(key, value)?,
            "sdp.tol_gap" => sdp.tol_gap = scalar(key, value)?,
            "grad.max_iter" => grad.max_iter = scalar(key, value)?,
            "grad.tol" => grad.tol = scalar(key, value)?,
            "grad.acceleration" => grad.acceleration = scalar(key, value)?,
            "grad.step" => {
                grad.step = match value.to_ascii_lowercase().as_str() {
                    "fixed" => StepRule::Fixed,
                    "backtracking" => StepRule::Backtracking,
                    _ => return Err(format!("grad.step must be `fixed` or `backtracking`, got `{value}`")),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Invalid(msg));
        if self.solvers.is_empty() {
            return bad("solver list is empty".into());
        }
        if self.k < 3 {
            return bad(format!("K must be at least 3, got {}", self.k));
        }
        if self.d.is_empty() || self.d.contains(&0) {
            return bad("D list must be non-empty and positive".into());
        }
        if self.n.contains(&0) {
            return bad("N values must be positive".into());
        }
        if self.sigma.is_empty() || self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("sigma list must be non-empty and non-negative".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0) {
                return bad(format!("threshold must be positive, got {t}"));
            }
        }
        self.options
            .sdp
            .validate()
            .map_err(|e| BenchError::Invalid(e.to_string()))
    }

    /// `N` values used for a given `D`.
    pub fn n_grid(&self, d: usize) -> Vec<usize> {
        if self.n.is_empty() {
            default_n_grid(d)
        } else {
            self.n.clone()
        }
    }
}

pub fn parse_solvers(value: &str) -> Result<Vec<SolverKind>, String> {
    let mut out = Vec::new();
    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind: SolverKind = name.parse().map_err(|e: orthorecover::Error| e.to_string())?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err("no solvers given".into());
    }
    Ok(out)
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse `{value}` for `{key}`"))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}
