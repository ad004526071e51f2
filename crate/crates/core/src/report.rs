/// Convergence diagnostics shared by every solver.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Final objective in the solver's own formulation, e.g. `tr(CH)` for the
    /// SDP and `||X_K - sum X_i V_i||_F^2` for LS.
    pub objective: f64,
    /// Wall time of the solve call. Always zero on `wasm32`, which has no
    /// monotonic clock in `std`.
    pub runtime_seconds: f64,
    pub converged: bool,
    /// Certified bound on the distance to the optimal objective, when the
    /// solver produced one.
    pub optimality_gap: Option<f64>,
    pub warnings: Vec<String>,
}

impl SolverReport {
    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
