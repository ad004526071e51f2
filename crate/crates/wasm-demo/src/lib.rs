//! Browser bindings: recover a random instance, trace a success-rate curve
//! over `N`, and polar-round a 2x2 matrix.
//!
//! The plain functions are usable from Rust; the `wasm_bindgen` exports wrap
//! them and turn errors into JS exceptions.

use orthorecover::eval::{default_threshold, recovery_errors};
use orthorecover::matprims::polar_round;
use orthorecover::problem::{add_noise, assemble_cost, generate_instance};
use orthorecover::sdp::{extract_solution, solve_sdp, SdpOptions};
use orthorecover::{Mat, NoiseSpec, SolverKind, SolverOptions};
use wasm_bindgen::prelude::*;

/// Largest `K * D` accepted, to keep the page responsive.
pub const MAX_SIZE: usize = 60;

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Recovery {
    size: usize,
    gram: Vec<f64>,
    errors: Vec<f64>,
    iterations: usize,
    objective: f64,
    certified: bool,
    rank: usize,
}

#[wasm_bindgen]
impl Recovery {
    /// Side length `K * D` of the Gram matrix.
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Absolute entries of the relaxed Gram matrix, row-major.
    #[wasm_bindgen(getter)]
    pub fn gram(&self) -> Vec<f64> {
        self.gram.clone()
    }

    /// `||V_i_hat - V_i||_F` per unknown.
    #[wasm_bindgen(getter)]
    pub fn errors(&self) -> Vec<f64> {
        self.errors.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter)]
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Whether the solver returned an optimality certificate.
    #[wasm_bindgen(getter)]
    pub fn certified(&self) -> bool {
        self.certified
    }

    /// Numerical rank of the Gram matrix.
    #[wasm_bindgen(getter)]
    pub fn rank(&self) -> usize {
        self.rank
    }
}

fn check_size(k: usize, n: usize, d: usize) -> Result<(), String> {
    if k < 3 || n == 0 || d == 0 {
        return Err(format!("need K >= 3, N >= 1, D >= 1 (got K={k}, N={n}, D={d})"));
    }
    if k * d > MAX_SIZE {
        return Err(format!("K * D = {} exceeds the demo limit {MAX_SIZE}", k * d));
    }
    Ok(())
}

/// Solves the relaxation for a random instance and reports the Gram matrix
/// together with the recovery errors.
pub fn recover_random(k: usize, n: usize, d: usize, sigma: f64, seed: u64) -> Result<Recovery, String> {
    check_size(k, n, d)?;
    if !(sigma >= 0.0) {
        return Err(format!("sigma must be >= 0, got {sigma}"));
    }
    let (clean, truth) = generate_instance(k, n, d, seed).map_err(|e| e.to_string())?;
    let inst = add_noise(&clean, &NoiseSpec::observation(sigma), seed.wrapping_add(1));
    let (gram, report) = solve_sdp(&assemble_cost(&inst), &SdpOptions::default()).map_err(|e| e.to_string())?;
    let extraction = extract_solution(&gram);
    let errors = recovery_errors(&extraction.solution, &truth).map_err(|e| e.to_string())?;
    let size = k * d;
    Ok(Recovery {
        size,
        gram: (0..size * size).map(|i| gram.h[(i / size, i % size)].abs()).collect(),
        errors,
        iterations: report.iterations,
        objective: report.objective,
        certified: report.optimality_gap.is_some(),
        rank: extraction.numerical_rank,
    })
}

/// Clean-instance success rate for each `N` in `n_min..=n_max`.
pub fn success_curve(
    solver: &str,
    k: usize,
    d: usize,
    n_min: usize,
    n_max: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let kind: SolverKind = solver.parse().map_err(|e: orthorecover::Error| e.to_string())?;
    check_size(k, n_max.max(1), d)?;
    if n_min == 0 || n_min > n_max || trials == 0 {
        return Err("need 1 <= n_min <= n_max and trials >= 1".into());
    }
    let opts = SolverOptions::default();
    let threshold = default_threshold(0.0, d);
    (n_min..=n_max)
        .map(|n| {
            let mut hits = 0;
            for t in 0..trials {
                let s = seed.wrapping_mul(1_000_003).wrapping_add((n * 10_007 + t) as u64);
                let (inst, truth) = generate_instance(k, n, d, s).map_err(|e| e.to_string())?;
                let (est, _) = kind.run(&inst, &opts).map_err(|e| e.to_string())?;
                let errs = recovery_errors(&est, &truth).map_err(|e| e.to_string())?;
                if errs.iter().all(|&e| e <= threshold) {
                    hits += 1;
                }
            }
            Ok(hits as f64 / trials as f64)
        })
        .collect()
}

/// Nearest orthogonal matrix to `[[a, b], [c, d]]`, row-major.
pub fn polar_round_2x2(a: f64, b: f64, c: f64, d: f64) -> Result<Vec<f64>, String> {
    let z = Mat::from_row_slice(2, 2, &[a, b, c, d]);
    let q = polar_round(&z).map_err(|e| e.to_string())?.matrix;
    Ok(vec![q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]])
}

#[wasm_bindgen(js_name = recoverRandom)]
pub fn recover_random_js(k: usize, n: usize, d: usize, sigma: f64, seed: u32) -> Result<Recovery, JsError> {
    recover_random(k, n, d, sigma, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = successCurve)]
pub fn success_curve_js(
    solver: &str,
    k: usize,
    d: usize,
    n_min: usize,
    n_max: usize,
    trials: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    success_curve(solver, k, d, n_min, n_max, trials, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = polarRound2x2)]
pub fn polar_round_2x2_js(a: f64, b: f64, c: f64, d: f64) -> Result<Vec<f64>, JsError> {
    polar_round_2x2(a, b, c, d).map_err(|e| JsError::new(&e))
}
