//! Low-rank polishing of relaxation iterates.
//!
//! A feasible point of the relaxation is written `H = U U^T` with `U` made
//! of `D x r` blocks `U_i` with orthonormal rows. The last block is fixed
//! to `(-I, 0)`, which removes the rotation freedom `U -> U Q`. For
//! `r = D` the free blocks are the unknown matrices themselves.
//! Levenberg-Marquardt on `||L U||_F^2` (with `L^T L = C`) drives the
//! objective down locally, and the block-diagonal multiplier
//! `Lambda_i = sym((C H)_ii)` gives the lower bound
//!
//! ```text
//!     tr(C H') >= tr(C H) + KD * min(0, lambda_min(C - blkdiag(Lambda)))
//! ```
//!
//! for every feasible `H'`, so a nonnegative `lambda_min` certifies `H` as
//! a global minimizer of the relaxation.

use crate::matprims::{self, sym_eig_unchecked, Mat};

/// Levenberg-Marquardt iterations per polishing attempt.
const MAX_STEPS: usize = 40;

/// Rejected damping increases before a step is abandoned.
const MAX_REJECTIONS: usize = 12;

/// Blocks beyond this count only get single-block component flips.
const MAX_FULL_FLIPS: usize = 4;

pub(crate) struct Polished {
    pub gram: Mat,
    /// Upper bound on `tr(C H) - min tr(C H')` over the feasible set.
    pub gap: f64,
}

/// Square-root factor `L` with `L^T L = C`, keeping positive eigenvalues only.
pub(crate) fn cost_factor(c: &Mat) -> Mat {
    let eig = sym_eig_unchecked(c);
    let floor = eig.max_value().max(0.0) * 1e-14;
    let rows: Vec<usize> = (0..eig.values.len()).filter(|&j| eig.values[j] > floor).collect();
    let mut l = Mat::zeros(rows.len().max(1), c.nrows());
    for (r, &j) in rows.iter().enumerate() {
        let s = eig.values[j].sqrt();
        for col in 0..c.nrows() {
            l[(r, col)] = s * eig.vectors[(col, j)];
        }
    }
    l
}

/// `(-I, 0)`, the fixed last block.
fn anchor(d: usize, r: usize) -> Mat {
    let mut a = Mat::zeros(d, r);
    for j in 0..d {
        a[(j, j)] = -1.0;
    }
    a
}

fn stack(blocks: &[Mat], d: usize) -> Mat {
    let r = blocks[0].ncols();
    let mut u = Mat::zeros((blocks.len() + 1) * d, r);
    for (i, b) in blocks.iter().chain(std::iter::once(&anchor(d, r))).enumerate() {
        u.rows_mut(i * d, d).copy_from(b);
    }
    u
}

/// Nearest matrix with orthonormal rows.
fn row_polar(m: &Mat) -> Mat {
    let dec = matprims::svd_unchecked(m);
    &dec.left * dec.right.transpose()
}

/// Orthonormal basis of the orthogonal complement of the row space of a
/// block with orthonormal rows.
fn row_complement(u: &Mat) -> Mat {
    let (d, r) = u.shape();
    let projector = Mat::identity(r, r) - u.transpose() * u;
    let eig = sym_eig_unchecked(&projector);
    eig.vectors.columns(0, r - d).into_owned()
}

/// Starting blocks for refinement, one per connected component of
/// `O(D)^{K-1}` worth trying, cheapest rounding first.
///
/// Refinement at `r = D` never leaves the determinant class of its start,
/// so besides `f(Z_i)` each block may use `U diag(1, ..., 1, -1) V^T`, the
/// nearest orthogonal matrix of the opposite determinant, at extra cost
/// `2 s_min`.
pub(crate) fn component_starts(targets: &[Mat]) -> Vec<Vec<Mat>> {
    let options: Vec<(Mat, Mat, f64)> = targets
        .iter()
        .map(|z| {
            let dec = matprims::svd_unchecked(z);
            let same = &dec.left * dec.right.transpose();
            let mut left = dec.left.clone();
            let last = left.ncols() - 1;
            left.column_mut(last).neg_mut();
            let flipped = left * dec.right.transpose();
            let cost = 2.0 * dec.singulars.last().copied().unwrap_or(0.0);
            (same, flipped, cost)
        })
        .collect();
    let m = options.len();
    let patterns: Vec<u32> = if m <= MAX_FULL_FLIPS {
        (0..1u32 << m).collect()
    } else {
        std::iter::once(0).chain((0..m).map(|i| 1u32 << i)).collect()
    };
    let mut scored: Vec<(f64, u32)> = patterns
        .into_iter()
        .map(|p| {
            let cost = (0..m).filter(|i| p >> i & 1 == 1).map(|i| options[i].2).sum();
            (cost, p)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored
        .into_iter()
        .map(|(_, p)| {
            (0..m)
                .map(|i| {
                    if p >> i & 1 == 1 {
                        options[i].1.clone()
                    } else {
                        options[i].0.clone()
                    }
                })
                .collect()
        })
        .collect()
}

/// Rank-`r` starting blocks from the leading `r` columns of a factor `U`
/// of an iterate: each block is pushed to orthonormal rows, then the whole
/// factor is rotated so that the last block becomes `(-I, 0)`.
pub(crate) fn factor_start(u: &Mat, k: usize, d: usize, r: usize) -> Vec<Mat> {
    let blocks: Vec<Mat> = (0..k)
        .map(|i| row_polar(&u.view((i * d, 0), (d, r)).into_owned()))
        .collect();
    let last = &blocks[k - 1];
    let mut q = Mat::zeros(r, r);
    q.columns_mut(0, d).copy_from(&(-last.transpose()));
    if r > d {
        q.columns_mut(d, r - d).copy_from(&row_complement(last));
    }
    blocks[..k - 1].iter().map(|b| b * &q).collect()
}

/// Damped Riemannian Newton refinement of `tr(U^T C U)` with the
/// retraction `U_i <- polar(U_i + Omega_i U_i + B_i N_i^T)`, `Omega_i` skew
/// and `N_i` spanning the complement of the row space of `U_i`.
///
/// On tangent directions the Hessian is `2 <Delta, S Delta>` with
/// `S = C - blkdiag(Lambda)`, the matrix whose smallest eigenvalue the
/// certificate checks. Objective values are computed as `||L U||_F^2`.
pub(crate) fn refine(c: &Mat, l: &Mat, start: Vec<Mat>, d: usize) -> Vec<Mat> {
    let r = start[0].ncols();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|a| (a + 1..d).map(move |b| (a, b)))
        .collect();
    let per_block = pairs.len() + d * (r - d);
    if per_block == 0 {
        return start;
    }
    let free = start.len();
    let n = (free + 1) * d;
    let unknowns = free * per_block;
    let mut blocks = start;
    let mut f = (l * stack(&blocks, d)).norm_squared();
    let mut mu = 0.0;

    for _ in 0..MAX_STEPS {
        if f == 0.0 {
            break;
        }
        let u = stack(&blocks, d);
        let cu = c * &u;
        let complements: Vec<Mat> = blocks.iter().map(row_complement).collect();

        // tangent basis, each column a vectorized n x r direction
        let mut basis = Mat::zeros(n * r, unknowns);
        for (i, (ui, ni)) in blocks.iter().zip(&complements).enumerate() {
            let base = i * per_block;
            for (q, &(a, b)) in pairs.iter().enumerate() {
                let mut col = basis.column_mut(base + q);
                for j in 0..r {
                    col[j * n + i * d + a] = ui[(b, j)];
                    col[j * n + i * d + b] = -ui[(a, j)];
                }
            }
            for p in 0..d {
                for q in 0..r - d {
                    let mut col = basis.column_mut(base + pairs.len() + p * (r - d) + q);
                    for j in 0..r {
                        col[j * n + i * d + p] = ni[(j, q)];
                    }
                }
            }
        }

        let lambdas: Vec<Mat> = (0..free)
            .map(|i| {
                let ui = u.rows(i * d, d);
                matprims::symmetrize(&(cu.rows(i * d, d) * ui.transpose()))
            })
            .collect();
        let mut s_basis = Mat::zeros(n * r, unknowns);
        for j in 0..r {
            let slab = basis.rows(j * n, n);
            let mut out = c * slab;
            for (i, lambda) in lambdas.iter().enumerate() {
                let part = lambda * slab.rows(i * d, d);
                let mut view = out.rows_mut(i * d, d);
                view -= part;
            }
            s_basis.rows_mut(j * n, n).copy_from(&out);
        }
        let grad = basis.tr_mul(&Mat::from_column_slice(n * r, 1, cu.as_slice())) * 2.0;
        let hess = matprims::symmetrize(&(basis.tr_mul(&s_basis) * 2.0));
        let scale = (hess.trace().abs() / unknowns as f64).max(f64::MIN_POSITIVE);
        if mu == 0.0 {
            mu = 1e-10 * scale;
        }

        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..MAX_REJECTIONS {
            let mut damped = hess.clone();
            for j in 0..unknowns {
                damped[(j, j)] += mu;
            }
            let Some(chol) = damped.cholesky() else {
                mu = (mu * 10.0).max(1e-8 * scale);
                continue;
            };
            let step = -chol.solve(&grad);
            let trial: Vec<Mat> = blocks
                .iter()
                .zip(&complements)
                .enumerate()
                .map(|(i, (ui, ni))| {
                    let base = i * per_block;
                    let mut omega = Mat::zeros(d, d);
                    for (q, &(a, b)) in pairs.iter().enumerate() {
                        omega[(a, b)] += step[base + q];
                        omega[(b, a)] -= step[base + q];
                    }
                    let mut shift = Mat::zeros(d, r - d);
                    for p in 0..d {
                        for q in 0..r - d {
                            shift[(p, q)] = step[base + pairs.len() + p * (r - d) + q];
                        }
                    }
                    row_polar(&(ui + omega * ui + shift * ni.transpose()))
                })
                .collect();
            let trial_f = (l * stack(&trial, d)).norm_squared();
            if trial_f < f {
                stalled = f - trial_f <= 1e-13 * f;
                blocks = trial;
                f = trial_f;
                mu = (mu / 4.0).max(1e-14 * scale);
                accepted = true;
                break;
            }
            mu = (mu * 4.0).max(1e-8 * scale);
        }
        if !accepted || stalled {
            break;
        }
    }
    blocks
}

/// Certified optimality gap of the feasible point `U U^T`.
pub(crate) fn certify(c: &Mat, blocks: &[Mat], d: usize) -> Polished {
    let u = stack(blocks, d);
    let gram = matprims::symmetrize(&(&u * u.transpose()));
    let ch = c * &gram;
    let k = c.nrows() / d;
    let mut slack = c.clone();
    for i in 0..k {
        let lambda = matprims::symmetrize(&matprims::block(&ch, i, i, d));
        let mut view = slack.view_mut((i * d, i * d), (d, d));
        view -= lambda;
    }
    let min_eig = sym_eig_unchecked(&slack).min_value();
    let gap = (k * d) as f64 * (-min_eig).max(0.0);
    Polished { gram, gap }
}

/// Refines a start and certifies the result.
pub(crate) fn polish(c: &Mat, l: &Mat, start: Vec<Mat>, d: usize) -> Polished {
    certify(c, &refine(c, l, start, d), d)
}
