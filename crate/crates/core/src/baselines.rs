//! Least-squares comparison solvers.
//!
//! * LS: unconstrained regression of `X_K` on `(X_1, ..., X_{K-1})`.
//! * C-LS: the same objective over the unit operator-norm ball.
//! * LS+: `min tr(C H^2)` over symmetric `H` with identity diagonal blocks.
//! * C-LS+: LS+ with every block constrained to `||H_ij|| <= 1`.
//!
//! LS and C-LS round each block with `polar_round`; LS+ and C-LS+ read
//! `V_i = f(-H_iK)`, matching the block layout of the homogenized Gram matrix.

use crate::matprims::{
    self, block, frob, polar_round, set_block, set_identity_diagonal_blocks, spectral_ball_project,
    sym_eig_unchecked, Mat,
};
use crate::problem::{hstack, OrthogonalSet, ProblemInstance};
use crate::report::{SolverReport, Stopwatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Constant step `1 / L` with `L` the gradient Lipschitz constant.
    Fixed,
    /// Start from `1 / L` and double `L` until the quadratic upper bound holds.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradOptions {
    pub max_iter: usize,
    pub step: StepRule,
    /// Relative stopping tolerance. Projected-gradient solvers stop once an
    /// accepted step decreases the objective by at most
    /// `tol * (f + eps * scale)`, so clean instances run until the objective
    /// reaches roundoff; the LS+ conjugate-gradient path stops once the
    /// projected gradient shrinks by this factor.
    pub tol: f64,
    /// FISTA momentum for C-LS / C-LS+, conjugate directions for LS+.
    pub acceleration: bool,
    /// Keep every accepted objective value in `SolveTrace::history`.
    pub record_history: bool,
}

impl Default for GradOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            step: StepRule::Fixed,
            tol: 1e-10,
            acceleration: true,
            record_history: false,
        }
    }
}

/// Result of a baseline solve together with the raw iterate and objective
/// history (empty unless `record_history` is set).
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub solution: OrthogonalSet,
    pub report: SolverReport,
    pub iterate: Mat,
    pub history: Vec<f64>,
}

fn round_blocks(blocks: impl Iterator<Item = Mat>, report: &mut SolverReport) -> OrthogonalSet {
    let matrices = blocks
        .enumerate()
        .map(|(i, b)| {
            let r = polar_round(&b).expect("blocks are square");
            if r.rank_deficient {
                report.warn(format!("rounding of V{} was rank deficient", i + 1));
            }
            r.matrix
        })
        .collect();
    OrthogonalSet::new(matrices)
}

fn vertical_blocks(stack: &Mat, count: usize, d: usize) -> impl Iterator<Item = Mat> + '_ {
    (0..count).map(move |i| stack.rows(i * d, d).into_owned())
}

/// Minimal-norm least squares, one column of `X_K` at a time through a
/// shared pseudoinverse of `A = (X_1, ..., X_{K-1})`.
pub fn solve_ls(inst: &ProblemInstance) -> (OrthogonalSet, SolverReport) {
    let clock = Stopwatch::start();
    let (k, d) = (inst.k(), inst.d());
    let a = hstack(inst.regressors());
    let unknowns = a.ncols();
    let dec = matprims::svd_unchecked(&a);
    let cutoff = matprims::RANK_TOL * dec.max_singular() * (a.nrows().max(unknowns) as f64);
    let rank = dec.singulars.iter().filter(|&&s| s > cutoff).count();

    // V = R S^+ L^T X_K
    let mut projected = dec.left.tr_mul(inst.observation());
    for (i, s) in dec.singulars.iter().enumerate() {
        let inv = if *s > cutoff { 1.0 / s } else { 0.0 };
        projected.row_mut(i).scale_mut(inv);
    }
    let stack = &dec.right * projected;

    let mut report = SolverReport {
        iterations: 1,
        converged: true,
        ..SolverReport::default()
    };
    if rank < unknowns {
        report.warn(format!(
            "regression is rank deficient (rank {rank} < {unknowns}); using the minimal-norm solution"
        ));
    }
    report.objective = frob(&(&a * &stack - inst.observation())).powi(2);
    let solution = round_blocks(vertical_blocks(&stack, k - 1, d), &mut report);
    report.runtime_seconds = clock.seconds();
    (solution, report)
}

/// Smooth convex objective over a closed convex set with an exact projection.
trait ProjectedProblem {
    fn objective(&self, x: &Mat) -> f64;
    fn gradient(&self, x: &Mat) -> Mat;
    fn project(&self, x: &Mat) -> Mat;
    /// Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;
    /// Objective magnitude used to make the decrease test scale-free.
    fn scale(&self) -> f64;
}

struct ApgOutcome {
    x: Mat,
    objective: f64,
    iterations: usize,
    converged: bool,
    step_norm: f64,
    history: Vec<f64>,
}

/// Monotone FISTA with restart on rejected steps. Only steps that do not
/// increase the objective are accepted, so the recorded history is
/// nonincreasing.
fn accelerated_projected_gradient(
    problem: &impl ProjectedProblem,
    x0: Mat,
    opts: &GradOptions,
) -> ApgOutcome {
    let mut x = problem.project(&x0);
    let mut fx = problem.objective(&x);
    let mut y = x.clone();
    let mut momentum = false;
    let mut t = 1.0f64;
    let mut lip = problem.lipschitz().max(f64::MIN_POSITIVE);
    let scale = problem.scale();
    let mut history = if opts.record_history { vec![fx] } else { Vec::new() };
    let mut step_norm = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let g = problem.gradient(&y);
        let fy = if opts.step == StepRule::Backtracking {
            problem.objective(&y)
        } else {
            0.0
        };
        let mut z = problem.project(&(&y - &g / lip));
        let mut fz = problem.objective(&z);
        if opts.step == StepRule::Backtracking {
            loop {
                let diff = &z - &y;
                let bound = fy + g.dot(&diff) + 0.5 * lip * diff.norm_squared();
                if fz <= bound + 1e-12 * fy.abs() || lip > 1e300 {
                    break;
                }
                lip *= 2.0;
                z = problem.project(&(&y - &g / lip));
                fz = problem.objective(&z);
            }
        }
        step_norm = lip * frob(&(&z - &y));

        if fz <= fx {
            let decrease = fx - fz;
            let previous = fx;
            // gradient restart: drop momentum that points uphill
            if (&y - &z).dot(&(&z - &x)) > 0.0 {
                t = 1.0;
            }
            let t_next = if opts.acceleration {
                0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
            } else {
                1.0
            };
            y = if opts.acceleration {
                &z + (&z - &x) * ((t - 1.0) / t_next)
            } else {
                z.clone()
            };
            momentum = opts.acceleration;
            x = z;
            fx = fz;
            t = t_next;
            if opts.record_history {
                history.push(fx);
            }
            if decrease <= opts.tol * (previous + f64::EPSILON * scale) {
                converged = true;
                break;
            }
        } else if momentum {
            // restart from the last accepted point
            y = x.clone();
            t = 1.0;
            momentum = false;
        } else {
            // a plain projected step from x cannot decrease further
            converged = true;
            break;
        }
    }
    ApgOutcome {
        x,
        objective: fx,
        iterations,
        converged,
        step_norm,
        history,
    }
}

fn finish_report(out: &ApgOutcome, report: &mut SolverReport, max_iter: usize) {
    report.iterations = out.iterations;
    report.objective = out.objective;
    report.dual_residual = out.step_norm;
    report.converged = out.converged;
    if !out.converged {
        report.warn(format!("stopped at max_iter={max_iter} without convergence"));
    }
}

/// `||A V - X_K||_F^2` over a stack of `K - 1` blocks in the unit
/// operator-norm ball.
struct ConstrainedRegression {
    gram: Mat,
    rhs: Mat,
    target_sq: f64,
    lipschitz: f64,
    d: usize,
}

impl ProjectedProblem for ConstrainedRegression {
    fn objective(&self, v: &Mat) -> f64 {
        // tr(V^T G V) - 2 tr(V^T B) + ||X_K||^2
        let gv = &self.gram * v;
        (v.dot(&gv) - 2.0 * v.dot(&self.rhs) + self.target_sq).max(0.0)
    }

    fn gradient(&self, v: &Mat) -> Mat {
        (&self.gram * v - &self.rhs) * 2.0
    }

    fn project(&self, v: &Mat) -> Mat {
        let count = v.nrows() / self.d;
        let mut out = v.clone();
        for i in 0..count {
            let b = spectral_ball_project(&v.rows(i * self.d, self.d).into_owned());
            out.rows_mut(i * self.d, self.d).copy_from(&b);
        }
        out
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn scale(&self) -> f64 {
        self.target_sq
    }
}

/// C-LS with the trace of the iterations.
pub fn solve_cls_traced(inst: &ProblemInstance, opts: &GradOptions) -> SolveTrace {
    let clock = Stopwatch::start();
    let (k, d) = (inst.k(), inst.d());
    let a = hstack(inst.regressors());
    let gram = a.tr_mul(&a);
    let lipschitz = 2.0 * sym_eig_unchecked(&gram).max_value();
    let problem = ConstrainedRegression {
        rhs: a.tr_mul(inst.observation()),
        gram,
        target_sq: inst.observation().norm_squared(),
        lipschitz,
        d,
    };
    let out = accelerated_projected_gradient(&problem, Mat::zeros((k - 1) * d, d), opts);
    let mut report = SolverReport::default();
    finish_report(&out, &mut report, opts.max_iter);
    let solution = round_blocks(vertical_blocks(&out.x, k - 1, d), &mut report);
    report.runtime_seconds = clock.seconds();
    SolveTrace {
        solution,
        report,
        iterate: out.x,
        history: out.history,
    }
}

pub fn solve_cls(inst: &ProblemInstance, opts: &GradOptions) -> (OrthogonalSet, SolverReport) {
    let t = solve_cls_traced(inst, opts);
    (t.solution, t.report)
}

/// `tr(C H^2) = tr(H C H)` over symmetric `H` with identity diagonal blocks,
/// optionally with `||H_ij|| <= 1` on every off-diagonal block.
struct BlockQuadratic {
    c: Mat,
    /// `X = (X_1, ..., X_K)` with `C = X^T X`; the objective is evaluated as
    /// `||X H||_F^2`, which keeps its relative accuracy near zero.
    x: Mat,
    d: usize,
    spectral: bool,
    lipschitz: f64,
    trace: f64,
}

impl BlockQuadratic {
    fn new(x: Mat, d: usize, spectral: bool) -> Self {
        let c = matprims::symmetrize(&x.tr_mul(&x));
        let lipschitz = 2.0 * sym_eig_unchecked(&c).max_value();
        let trace = c.trace();
        Self {
            c,
            x,
            d,
            spectral,
            lipschitz,
            trace,
        }
    }

    /// Symmetric part with diagonal blocks zeroed: projection of a direction
    /// onto the tangent space of the affine constraint set.
    fn tangent(&self, m: &Mat) -> Mat {
        let mut out = matprims::symmetrize(m);
        let k = out.nrows() / self.d;
        for i in 0..k {
            out.view_mut((i * self.d, i * self.d), (self.d, self.d)).fill(0.0);
        }
        out
    }
}

impl ProjectedProblem for BlockQuadratic {
    fn objective(&self, h: &Mat) -> f64 {
        (&self.x * h).norm_squared()
    }

    fn gradient(&self, h: &Mat) -> Mat {
        let ch = &self.c * h;
        &ch + ch.transpose()
    }

    /// Exact projection: average `M_ij` with `M_ji^T`, reset diagonal blocks
    /// to `I`, and clip the singular values of each off-diagonal block.
    fn project(&self, m: &Mat) -> Mat {
        let mut h = matprims::symmetrize(m);
        set_identity_diagonal_blocks(&mut h, self.d);
        if self.spectral {
            let k = h.nrows() / self.d;
            for i in 0..k {
                for j in i + 1..k {
                    let b = spectral_ball_project(&block(&h, i, j, self.d));
                    set_block(&mut h, j, i, &b.transpose());
                    set_block(&mut h, i, j, &b);
                }
            }
        }
        h
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn scale(&self) -> f64 {
        self.trace
    }
}

/// Conjugate gradient for LS+ on the affine set `{H = H^T, H_ii = I}`.
/// The objective is an exact quadratic there, so CG with exact line search
/// decreases it monotonically.
fn lsplus_conjugate_gradient(problem: &BlockQuadratic, h0: Mat, opts: &GradOptions) -> ApgOutcome {
    let mut h = problem.project(&h0);
    let mut f = problem.objective(&h);
    let mut history = if opts.record_history { vec![f] } else { Vec::new() };
    let mut r = -problem.tangent(&problem.gradient(&h));
    let r0 = frob(&r);
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let restart_every = h.nrows() * h.nrows();
    let mut iterations = 0;
    let mut converged = r0 == 0.0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let cp = &problem.c * &p;
        // Hessian action: CP + PC, already symmetric with the right pattern
        // after projection
        let ap = problem.tangent(&(&cp + cp.transpose()));
        let curvature = p.dot(&ap);
        if curvature <= 0.0 {
            converged = true;
            break;
        }
        let alpha = rr / curvature;
        let candidate = &h + &p * alpha;
        let f_next = problem.objective(&candidate);
        if f_next > f {
            // rounding has taken over
            converged = true;
            break;
        }
        h = candidate;
        f = f_next;
        if opts.record_history {
            history.push(f);
        }
        if iterations % restart_every == 0 {
            r = -problem.tangent(&problem.gradient(&h));
            p = r.clone();
            rr = r.norm_squared();
        } else {
            r -= &ap * alpha;
            let rr_next = r.norm_squared();
            p = &r + &p * (rr_next / rr);
            rr = rr_next;
        }
        if rr.sqrt() <= opts.tol * r0 {
            converged = true;
        }
    }
    ApgOutcome {
        x: h,
        objective: f,
        iterations,
        converged,
        step_norm: rr.sqrt(),
        history,
    }
}

fn read_homogenized_blocks(h: &Mat, k: usize, d: usize) -> impl Iterator<Item = Mat> + '_ {
    (0..k - 1).map(move |i| -block(h, i, k - 1, d))
}

fn solve_block_quadratic(
    inst: &ProblemInstance,
    opts: &GradOptions,
    spectral: bool,
    h0: Option<Mat>,
) -> SolveTrace {
    let clock = Stopwatch::start();
    let (k, d) = (inst.k(), inst.d());
    let problem = BlockQuadratic::new(inst.stacked(), d, spectral);
    let start = h0.unwrap_or_else(|| Mat::identity(k * d, k * d));
    let out = if !spectral && opts.acceleration {
        lsplus_conjugate_gradient(&problem, start, opts)
    } else {
        accelerated_projected_gradient(&problem, start, opts)
    };
    let mut report = SolverReport::default();
    finish_report(&out, &mut report, opts.max_iter);
    let solution = round_blocks(read_homogenized_blocks(&out.x, k, d), &mut report);
    report.runtime_seconds = clock.seconds();
    SolveTrace {
        solution,
        report,
        iterate: out.x,
        history: out.history,
    }
}

/// LS+ from a caller-supplied starting matrix (projected first).
pub fn solve_lsplus_from(inst: &ProblemInstance, opts: &GradOptions, h0: Mat) -> SolveTrace {
    solve_block_quadratic(inst, opts, false, Some(h0))
}

pub fn solve_lsplus_traced(inst: &ProblemInstance, opts: &GradOptions) -> SolveTrace {
    solve_block_quadratic(inst, opts, false, None)
}

pub fn solve_lsplus(inst: &ProblemInstance, opts: &GradOptions) -> (OrthogonalSet, SolverReport) {
    let t = solve_lsplus_traced(inst, opts);
    (t.solution, t.report)
}

pub fn solve_clsplus_from(inst: &ProblemInstance, opts: &GradOptions, h0: Mat) -> SolveTrace {
    solve_block_quadratic(inst, opts, true, Some(h0))
}

pub fn solve_clsplus_traced(inst: &ProblemInstance, opts: &GradOptions) -> SolveTrace {
    solve_block_quadratic(inst, opts, true, None)
}

pub fn solve_clsplus(inst: &ProblemInstance, opts: &GradOptions) -> (OrthogonalSet, SolverReport) {
    let t = solve_clsplus_traced(inst, opts);
    (t.solution, t.report)
}

/// Exact projection onto the C-LS+ feasible set.
pub fn project_clsplus(m: &Mat, d: usize) -> Mat {
    BlockQuadratic {
        c: Mat::zeros(0, 0),
        x: Mat::zeros(0, 0),
        d,
        spectral: true,
        lipschitz: 0.0,
        trace: 0.0,
    }
    .project(m)
}
