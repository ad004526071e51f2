//! Error metrics, success classification and the exhaustive `D = 1` oracle.

use crate::error::{Error, Result};
use crate::matprims::{frob, Mat};
use crate::problem::{OrthogonalSet, ProblemInstance};
use crate::report::SolverReport;

/// Default clean-instance success threshold on `max_i ||V_i_hat - V_i||_F`.
pub const CLEAN_THRESHOLD: f64 = 1e-3;

/// `1e-3` for clean instances, `10 sigma sqrt(D)` for noisy ones.
pub fn default_threshold(sigma: f64, d: usize) -> f64 {
    if sigma == 0.0 {
        CLEAN_THRESHOLD
    } else {
        10.0 * sigma * (d as f64).sqrt()
    }
}

/// Per-matrix `||V_i_hat - V_i||_F`. No alignment is applied: extraction
/// already fixes the global orthogonal ambiguity.
pub fn recovery_errors(estimate: &OrthogonalSet, truth: &OrthogonalSet) -> Result<Vec<f64>> {
    if estimate.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} matrices, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    estimate
        .matrices()
        .iter()
        .zip(truth.matrices())
        .map(|(a, b)| {
            if a.shape() != b.shape() {
                return Err(Error::Dimension(format!(
                    "estimate block is {}x{}, truth block is {}x{}",
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols()
                )));
            }
            Ok(frob(&(a - b)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub solver: String,
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub trial: usize,
    pub seed: u64,
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub max_error: f64,
    pub threshold: f64,
    pub success: bool,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub runtime_seconds: f64,
}

impl TrialResult {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        solver: impl Into<String>,
        inst: &ProblemInstance,
        trial: usize,
        seed: u64,
        errors: Vec<f64>,
        report: &SolverReport,
        threshold: f64,
    ) -> Self {
        let mean_error = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
        let max_error = errors.iter().copied().fold(0.0, f64::max);
        let mut out = Self {
            solver: solver.into(),
            k: inst.k(),
            d: inst.d(),
            n: inst.n(),
            sigma: inst.sigma,
            trial,
            seed,
            errors,
            mean_error,
            max_error,
            threshold,
            success: false,
            iterations: report.iterations,
            converged: report.converged,
            objective: report.objective,
            runtime_seconds: report.runtime_seconds,
        };
        out.success = classify_success(&out, threshold);
        out
    }
}

/// Success iff every per-matrix error is at most `threshold`.
pub fn classify_success(result: &TrialResult, threshold: f64) -> bool {
    result.errors.iter().all(|&e| e <= threshold)
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub solution: OrthogonalSet,
    /// `min_s ||X_K - sum_i s_i X_i||_F`.
    pub residual: f64,
    /// False when another sign vector attains the same residual.
    pub unique: bool,
}

/// Largest `K` the oracle will enumerate (`2^{K-1}` sign vectors).
pub const ORACLE_MAX_K: usize = 12;

/// Exhaustive minimization over `O(1)^{K-1} = {+1, -1}^{K-1}`.
pub fn brute_force_oracle(inst: &ProblemInstance) -> Result<OracleResult> {
    if inst.d() != 1 {
        return Err(Error::Dimension(format!(
            "the sign oracle needs D = 1, got D = {}",
            inst.d()
        )));
    }
    let k = inst.k();
    if k > ORACLE_MAX_K {
        return Err(Error::InvalidSize(format!(
            "the sign oracle enumerates at most K = {ORACLE_MAX_K}, got K = {k}"
        )));
    }
    let regressors = inst.regressors();
    let scale = frob(&inst.stacked()).max(f64::MIN_POSITIVE);
    let residual_of = |mask: usize| {
        let mut r = inst.observation().clone();
        for (i, x) in regressors.iter().enumerate() {
            if mask >> i & 1 == 1 {
                r += x;
            } else {
                r -= x;
            }
        }
        frob(&r)
    };
    // bit i set means s_i = -1
    let mut residuals: Vec<(usize, f64)> = (0..1usize << (k - 1)).map(|m| (m, residual_of(m))).collect();
    residuals.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mask, residual) = residuals[0];
    let unique = residuals
        .get(1)
        .is_none_or(|(_, r)| r - residual > 1e-9 * scale);
    let signs = (0..k - 1)
        .map(|i| Mat::from_element(1, 1, if mask >> i & 1 == 1 { -1.0 } else { 1.0 }))
        .collect();
    Ok(OracleResult {
        solution: OrthogonalSet::new(signs),
        residual,
        unique,
    })
}
