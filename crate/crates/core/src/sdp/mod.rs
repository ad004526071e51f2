//! Semidefinite relaxation of the homogenized problem
//!
//! ```text
//!     minimize tr(C H)   subject to  H >= 0,  H_ii = I  (i = 1..K)
//! ```
//!
//! solved by an ADMM splitting between the PSD cone and the affine set of
//! symmetric matrices with identity diagonal blocks, followed by the
//! factor-and-round extraction `V_i = f(-U_i U_K^T)`.
//!
//! The relaxation is very flat around its minimizer when `N` is close to
//! `D + 1`, where plain ADMM needs far more iterations than are practical.
//! At increasingly spaced iterations the current iterate is rounded and
//! refined on `O(D)^{K-1}`, once per determinant pattern, and, when its
//! numerical rank `r > D` has stopped changing, also refined as a rank-`r`
//! factor. Each candidate is checked against a dual lower bound and the
//! first certified one is returned.

mod polish;

use crate::error::{Error, Result};
use crate::matprims::{
    self, frob, polar_round, psd_project_unchecked, set_identity_diagonal_blocks, sym_eig_unchecked,
    Mat,
};
use crate::problem::{assemble_cost, CostMatrix, OrthogonalSet, ProblemInstance};
use crate::report::{SolverReport, Stopwatch};

/// Symmetric `KD x KD` matrix with `D x D` block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGram {
    pub k: usize,
    pub d: usize,
    pub h: Mat,
}

impl BlockGram {
    pub fn block(&self, i: usize, j: usize) -> Mat {
        matprims::block(&self.h, i, j, self.d)
    }

    /// `max_i ||H_ii - I||_F`.
    pub fn diagonal_defect(&self) -> f64 {
        let eye = Mat::identity(self.d, self.d);
        (0..self.k)
            .map(|i| frob(&(self.block(i, i) - &eye)))
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        sym_eig_unchecked(&self.h).min_value()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOptions {
    /// Initial ADMM penalty, relative to the cost normalized to unit Frobenius norm.
    pub rho: f64,
    pub max_iter: usize,
    /// Stop when `||Z - H||_F <= tol_primal * (1 + ||H||_F)`.
    pub tol_primal: f64,
    /// Stop when `rho ||H - H_prev||_F <= tol_dual * (1 + ||C||_F)`, measured
    /// in the units of `C`.
    pub tol_dual: f64,
    /// Double or halve `rho` when one residual exceeds the other tenfold.
    pub adaptive_rho: bool,
    /// Over-relaxation factor in `(0, 2)`; `1` is plain ADMM.
    pub relaxation: f64,
    /// Try low-rank polishing with an optimality certificate.
    pub polish: bool,
    /// Iterations before the first polishing attempt; later attempts are
    /// spaced by `max(polish_every, it / 2)`.
    pub polish_every: usize,
    /// Accept a polished point once its certified optimality gap is at most
    /// `tol_gap * (1 + tr C)`.
    pub tol_gap: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 50_000,
            tol_primal: 1e-7,
            tol_dual: 1e-7,
            adaptive_rho: true,
            relaxation: 1.0,
            polish: true,
            polish_every: 50,
            tol_gap: 1e-10,
        }
    }
}

impl SdpOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.tol_primal > 0.0 && self.tol_dual > 0.0 && self.tol_gap > 0.0)
            || self.polish_every == 0
            || !(self.relaxation > 0.0 && self.relaxation < 2.0)
        {
            return Err(Error::InvalidSize(
                "rho, tolerances and polish_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Eigenvalues below this fraction of the largest one are not counted in
/// the numerical rank.
const RANK_FRACTION: f64 = 1e-6;

/// Eigenvalues above this fraction of the largest one set the rank of the
/// higher-rank polishing start.
const RANK_PROBE: f64 = 1e-3;

/// Residual ratio that triggers a penalty update.
const RHO_RATIO: f64 = 10.0;

/// Minimum number of iterations between two penalty updates.
const RHO_COOLDOWN: usize = 10;

/// Solves the relaxation with identity-initialized ADMM.
///
/// Iterates `Z = P_psd(H - W - C/rho)`, `H = P_aff(Z + W)`,
/// `W = W + Z - H` on the cost scaled to unit norm. Hitting `max_iter` is
/// reported through `converged = false`, never as an error.
pub fn solve_sdp(cost: &CostMatrix, opts: &SdpOptions) -> Result<(BlockGram, SolverReport)> {
    opts.validate()?;
    let clock = Stopwatch::start();
    let (k, d) = (cost.k, cost.d);
    let n = k * d;

    let trace = cost.trace();
    let min_eig = sym_eig_unchecked(&cost.c).min_value();
    if min_eig < -1e-8 * trace.max(f64::MIN_POSITIVE) && min_eig < -1e-12 {
        return Err(Error::NotPsd { min_eig, trace });
    }

    let c_norm = frob(&cost.c);
    let scale = if c_norm > 0.0 { c_norm } else { 1.0 };
    let c = &cost.c / scale;

    let mut rho = opts.rho;
    let mut h = Mat::identity(n, n);
    let mut w = Mat::zeros(n, n);
    let mut report = SolverReport::default();
    let mut last_update = 0;
    let factor = opts.polish.then(|| polish::cost_factor(&cost.c));
    let gap_tol = opts.tol_gap * (1.0 + trace.max(0.0));
    let mut certified: Option<polish::Polished> = None;
    let mut next_polish = opts.polish_every;
    let mut last_rank = 0;
    let mut try_polish = |h: &Mat| {
        let l = factor.as_ref()?;
        let (u, values) = FactorMatrix::from_gram(&BlockGram { k, d, h: h.clone() });
        let largest = values.first().copied().unwrap_or(0.0);
        let rank = values.iter().filter(|&&v| v > RANK_PROBE * largest).count();
        let mut starts = polish::component_starts(&rounding_targets(&u));
        let settled = rank == last_rank;
        last_rank = rank;
        if rank > d && settled {
            starts.push(polish::factor_start(&u.u, k, d, rank.min(k * d)));
        }
        starts
            .into_iter()
            .map(|start| polish::polish(&cost.c, l, start, d))
            .find(|p| p.gap <= gap_tol)
    };

    for it in 1..=opts.max_iter {
        let shifted = &h - &w - &c / rho;
        let (z, _) = psd_project_unchecked(&shifted);

        let relaxed = &z * opts.relaxation + &h * (1.0 - opts.relaxation);
        let mut h_next = matprims::symmetrize(&(&relaxed + &w));
        set_identity_diagonal_blocks(&mut h_next, d);

        w += &relaxed - &h_next;

        let primal = frob(&(&z - &h_next)) / (1.0 + frob(&h_next));
        // dual residual in units of the normalized cost, whose norm is one
        let dual = rho * frob(&(&h_next - &h)) / 2.0;
        h = h_next;

        report.iterations = it;
        report.primal_residual = primal;
        report.dual_residual = dual;

        let admm_done = primal <= opts.tol_primal && dual <= opts.tol_dual;
        if admm_done || it >= next_polish || it == opts.max_iter {
            next_polish = it + opts.polish_every.max(it / 2);
            if let Some(p) = try_polish(&h) {
                certified = Some(p);
                report.converged = true;
                break;
            }
        }
        if admm_done {
            report.converged = true;
            break;
        }

        if opts.adaptive_rho && it - last_update >= RHO_COOLDOWN {
            if primal > RHO_RATIO * dual {
                rho *= 2.0;
                w /= 2.0;
                last_update = it;
            } else if dual > RHO_RATIO * primal {
                rho /= 2.0;
                w *= 2.0;
                last_update = it;
            }
        }
    }

    if !report.converged {
        report.warn(format!(
            "ADMM stopped at max_iter={} (primal {:.2e}, dual {:.2e})",
            opts.max_iter, report.primal_residual, report.dual_residual
        ));
    }
    if let Some(p) = certified {
        h = p.gram;
        report.primal_residual = 0.0;
        report.optimality_gap = Some(p.gap);
    }
    report.objective = cost.objective(&h);
    report.runtime_seconds = clock.seconds();
    Ok((BlockGram { k, d, h }, report))
}

/// `KD x r` factor with `D`-row blocks `U_1, ..., U_K`.
#[derive(Debug, Clone)]
pub struct FactorMatrix {
    pub k: usize,
    pub d: usize,
    pub u: Mat,
}

impl FactorMatrix {
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn block(&self, i: usize) -> Mat {
        self.u.rows(i * self.d, self.d).into_owned()
    }

    /// `H = U U^T` factor of a block Gram matrix over its full clipped
    /// eigenspectrum (`r = KD`).
    pub fn from_gram(gram: &BlockGram) -> (Self, Vec<f64>) {
        let eig = sym_eig_unchecked(&gram.h);
        let mut u = eig.vectors.clone();
        for (j, lambda) in eig.values.iter().enumerate() {
            u.column_mut(j).scale_mut(lambda.max(0.0).sqrt());
        }
        (
            Self {
                k: gram.k,
                d: gram.d,
                u,
            },
            eig.values,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub solution: OrthogonalSet,
    pub factor: FactorMatrix,
    /// Eigenvalues of `H` above `1e-6` of the largest.
    pub numerical_rank: usize,
    pub warnings: Vec<String>,
}

/// `V_i = f(-U_i U_K^T)` from the clipped factorization of `h`, with the
/// indices of blocks whose rounding was rank deficient.
fn round_factor(factor: &FactorMatrix) -> (OrthogonalSet, Vec<usize>) {
    let anchor = factor.block(factor.k - 1);
    let mut degenerate = Vec::new();
    let matrices = (0..factor.k - 1)
        .map(|i| {
            let z = -(factor.block(i) * anchor.transpose());
            let rounded = polar_round(&z).expect("blocks are square");
            if rounded.rank_deficient {
                degenerate.push(i);
            }
            rounded.matrix
        })
        .collect();
    (OrthogonalSet::new(matrices), degenerate)
}

/// The matrices `-U_i U_K^T` that get rounded, for `i < K`.
fn rounding_targets(factor: &FactorMatrix) -> Vec<Mat> {
    let anchor = factor.block(factor.k - 1);
    (0..factor.k - 1)
        .map(|i| -(factor.block(i) * anchor.transpose()))
        .collect()
}

/// Rounds a block Gram matrix to orthogonal matrices `V_i = f(-U_i U_K^T)`.
pub fn extract_solution(gram: &BlockGram) -> Extraction {
    let (factor, values) = FactorMatrix::from_gram(gram);
    let largest = values.first().copied().unwrap_or(0.0).max(0.0);
    let numerical_rank = values
        .iter()
        .filter(|&&v| v > RANK_FRACTION * largest.max(1.0))
        .count();

    let (solution, degenerate) = round_factor(&factor);
    let mut warnings: Vec<String> = degenerate
        .iter()
        .map(|i| format!("rounding of V{} was rank deficient", i + 1))
        .collect();
    if numerical_rank > gram.d {
        warnings.push(format!(
            "relaxation returned rank {numerical_rank} > D = {}",
            gram.d
        ));
    }
    Extraction {
        solution,
        factor,
        numerical_rank,
        warnings,
    }
}

/// `||U^T P_{L1-perp}||_F`: distance of the factor from the block-consensus
/// subspace `{(v, v, ..., v)}`. Zero iff all blocks `U_i` coincide.
pub fn consensus_deviation(factor: &FactorMatrix) -> f64 {
    let k = factor.k;
    let mut mean = Mat::zeros(factor.d, factor.rank());
    for i in 0..k {
        mean += factor.block(i);
    }
    mean /= k as f64;
    (0..k)
        .map(|i| frob(&(factor.block(i) - &mean)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Full pipeline: cost assembly, relaxation, extraction.
pub fn recover(
    inst: &ProblemInstance,
    opts: &SdpOptions,
) -> Result<(OrthogonalSet, SolverReport)> {
    let clock = Stopwatch::start();
    let cost = assemble_cost(inst);
    let (gram, mut report) = solve_sdp(&cost, opts)?;
    let extraction = extract_solution(&gram);
    report.warnings.extend(extraction.warnings);
    report.runtime_seconds = clock.seconds();
    Ok((extraction.solution, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matprims::{random_orthogonal, rng_from_seed};
    use crate::problem::generate_instance;

    #[test]
    fn zero_cost_gives_feasible_point() {
        let cost = CostMatrix::from_matrix(Mat::zeros(6, 6), 3, 2).unwrap();
        let (gram, report) = solve_sdp(&cost, &SdpOptions::default()).unwrap();
        assert!(report.converged);
        assert!(gram.diagonal_defect() <= 1e-9);
        assert!(gram.min_eigenvalue() >= -1e-9);
        assert!(report.objective.abs() <= 1e-12);
    }

    #[test]
    fn rejects_indefinite_cost() {
        let mut c = Mat::identity(3, 3);
        c[(2, 2)] = -1.0;
        let cost = CostMatrix::from_matrix(c, 3, 1).unwrap();
        assert!(matches!(
            solve_sdp(&cost, &SdpOptions::default()),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn iteration_cap_is_reported_not_raised() {
        let (inst, _) = generate_instance(3, 11, 4, 3).unwrap();
        let opts = SdpOptions {
            max_iter: 3,
            polish: false,
            ..SdpOptions::default()
        };
        let (_, report) = solve_sdp(&assemble_cost(&inst), &opts).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 3);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn scalar_instance_matches_sign_enumeration() {
        let (inst, truth) = generate_instance(3, 2, 1, 21).unwrap();
        let cost = assemble_cost(&inst);
        let (gram, report) = solve_sdp(&cost, &SdpOptions::default()).unwrap();
        assert!(report.objective <= 1e-6, "objective {}", report.objective);

        // brute force over the sign patterns (s1, s2) with s3 = -1
        let best = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .into_iter()
            .min_by(|a, b| {
                let r = |s: &(f64, f64)| {
                    frob(&(inst.xs()[0].clone() * s.0 + &inst.xs()[1] * s.1 - &inst.xs()[2]))
                };
                r(a).total_cmp(&r(b))
            })
            .unwrap();
        let u = [best.0, best.1, -1.0];
        for i in 0..3 {
            for j in 0..3 {
                assert!((gram.h[(i, j)] - u[i] * u[j]).abs() < 1e-5);
            }
        }
        let ext = extract_solution(&gram);
        assert_eq!(ext.numerical_rank, 1);
        assert_eq!(ext.solution.matrices()[0][(0, 0)], truth.matrices()[0][(0, 0)]);
        assert_eq!(ext.solution.matrices()[1][(0, 0)], truth.matrices()[1][(0, 0)]);
    }

    #[test]
    fn all_identity_gram_rounds_to_minus_identity() {
        let d = 3;
        let gram = BlockGram {
            k: 3,
            d,
            h: Mat::from_fn(3 * d, 3 * d, |r, c| if r % d == c % d { 1.0 } else { 0.0 }),
        };
        let ext = extract_solution(&gram);
        for v in ext.solution.matrices() {
            assert!(frob(&(v + Mat::identity(d, d))) <= 1e-10);
        }
        assert_eq!(ext.numerical_rank, d);
    }

    #[test]
    fn rank_d_gram_from_known_set_is_recovered() {
        let mut rng = rng_from_seed(4);
        let set = OrthogonalSet::new((0..4).map(|_| random_orthogonal(5, &mut rng)).collect());
        let gram = BlockGram {
            k: 5,
            d: 5,
            h: set.homogenized_gram(),
        };
        let ext = extract_solution(&gram);
        assert_eq!(ext.numerical_rank, 5);
        for (a, b) in ext.solution.matrices().iter().zip(set.matrices()) {
            assert!(frob(&(a - b)) <= 1e-8);
        }
        assert!(ext.warnings.is_empty());
    }

    #[test]
    fn scalar_rank_one_signs() {
        let u = [1.0, -1.0, 1.0];
        let gram = BlockGram {
            k: 3,
            d: 1,
            h: Mat::from_fn(3, 3, |r, c| u[r] * u[c]),
        };
        let ext = extract_solution(&gram);
        assert_eq!(ext.solution.matrices()[0][(0, 0)], -1.0);
        assert_eq!(ext.solution.matrices()[1][(0, 0)], 1.0);
    }

    #[test]
    fn consensus_deviation_examples() {
        let same = FactorMatrix {
            k: 3,
            d: 2,
            u: Mat::from_fn(6, 4, |r, c| ((r % 2) * 4 + c) as f64),
        };
        assert!(consensus_deviation(&same) <= 1e-15);

        let e1 = FactorMatrix {
            k: 3,
            d: 1,
            u: Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
        };
        assert!((consensus_deviation(&e1) - (2.0f64 / 3.0).sqrt()).abs() <= 1e-15);
    }
}
