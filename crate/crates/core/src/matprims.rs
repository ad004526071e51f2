//! Dense matrix primitives: symmetric eigendecomposition, SVD, and the exact
//! projections and roundings the solvers are assembled from.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Randomness comes from a seeded
//! ChaCha8 stream; Gaussian draws use the ziggurat sampler of `rand_distr`
//! (`StandardNormal`), filled in row-major order.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Platform-stable seeded generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative symmetry tolerance accepted by [`sym_eig`] and [`psd_project`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Singular values at or below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Eigendecomposition `S = Q diag(values) Q^T` with values sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl SymEig {
    pub fn reconstruct(&self) -> Mat {
        reconstruct_scaled(&self.vectors, &self.values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

/// Thin SVD `Z = left diag(singulars) right^T`, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub left: Mat,
    pub singulars: Vec<f64>,
    pub right: Mat,
}

impl Svd {
    pub fn reconstruct(&self) -> Mat {
        let mut scaled = self.left.clone();
        for (j, s) in self.singulars.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.right.transpose()
    }
}

/// Output of [`polar_round`]: the nearest orthogonal matrix, plus a flag set
/// when the input was numerically rank deficient and the answer is not unique.
#[derive(Debug, Clone)]
pub struct Rounded {
    pub matrix: Mat,
    pub rank_deficient: bool,
}

pub fn frob(m: &Mat) -> f64 {
    m.norm()
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &Mat) -> f64 {
    frob(&(m - m.transpose())) / frob(m).max(1.0)
}

fn check_symmetric(s: &Mat) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if !is_finite(s) {
        return Err(Error::NonFinite);
    }
    let asym = asymmetry(s);
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric(asym));
    }
    Ok(())
}

/// `Q diag(w) Q^T`.
pub(crate) fn reconstruct_scaled(q: &Mat, w: &[f64]) -> Mat {
    let mut scaled = q.clone();
    for (j, x) in w.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*x);
    }
    let out = scaled * q.transpose();
    symmetrize(&out)
}

/// Eigendecomposition of a matrix that is symmetric by construction; the
/// input is symmetrized before factoring and no validation is done.
pub(crate) fn sym_eig_unchecked(s: &Mat) -> SymEig {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(s));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    SymEig { values, vectors }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn sym_eig(s: &Mat) -> Result<SymEig> {
    check_symmetric(s)?;
    Ok(sym_eig_unchecked(s))
}

pub fn svd(z: &Mat) -> Result<Svd> {
    if z.is_empty() {
        return Err(Error::Dimension("empty matrix".into()));
    }
    if !is_finite(z) {
        return Err(Error::NonFinite);
    }
    Ok(svd_unchecked(z))
}

fn faer_svd(z: &Mat) -> Option<Svd> {
    let (rows, cols) = z.shape();
    let dense = faer::Mat::<f64>::from_fn(rows, cols, |r, c| z[(r, c)]);
    let dec = dense.thin_svd().ok()?;
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    let rank = rows.min(cols);
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    Some(Svd {
        left: Mat::from_fn(rows, rank, |r, c| u[(r, order[c])]),
        singulars: order.iter().map(|&i| s[i]).collect(),
        right: Mat::from_fn(cols, rank, |r, c| v[(r, order[c])]),
    })
}

pub(crate) fn svd_unchecked(z: &Mat) -> Svd {
    // nalgebra's bidiagonal SVD can lose accuracy on clustered singular
    // values, so the decomposition is delegated to faer. faer occasionally
    // reports no convergence on exactly paired singular values; the
    // transpose usually goes through.
    if let Some(dec) = faer_svd(z) {
        return dec;
    }
    if let Some(t) = faer_svd(&z.transpose()) {
        return Svd {
            left: t.right,
            singulars: t.singulars,
            right: t.left,
        };
    }
    let dec = z.clone().svd(true, true);
    let (u, vt) = (dec.u.expect("requested"), dec.v_t.expect("requested"));
    let rank = dec.singular_values.len();
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    Svd {
        left: Mat::from_fn(z.nrows(), rank, |r, c| u[(r, order[c])]),
        singulars: order.iter().map(|&i| dec.singular_values[i]).collect(),
        right: Mat::from_fn(z.ncols(), rank, |r, c| vt[(order[c], r)]),
    }
}

/// Nearest orthogonal matrix `U_Z V_Z^T` in Frobenius norm.
///
/// Rank-deficient inputs still get `U_Z V_Z^T`, which is one of several
/// nearest orthogonal matrices; `rank_deficient` is set in that case.
pub fn polar_round(z: &Mat) -> Result<Rounded> {
    if z.nrows() != z.ncols() {
        return Err(Error::Dimension(format!(
            "polar rounding needs a square matrix, got {}x{}",
            z.nrows(),
            z.ncols()
        )));
    }
    let dec = svd(z)?;
    let largest = dec.max_singular();
    let smallest = dec.singulars.last().copied().unwrap_or(0.0);
    let rank_deficient = largest == 0.0 || smallest <= RANK_TOL * largest;
    Ok(Rounded {
        matrix: &dec.left * dec.right.transpose(),
        rank_deficient,
    })
}

impl Svd {
    pub fn max_singular(&self) -> f64 {
        self.singulars.first().copied().unwrap_or(0.0)
    }
}

/// Frobenius-nearest positive semidefinite matrix: negative eigenvalues are
/// clipped to zero.
pub fn psd_project(s: &Mat) -> Result<Mat> {
    check_symmetric(s)?;
    Ok(psd_project_unchecked(s).0)
}

/// PSD projection of a symmetric-by-construction matrix. Also returns the
/// eigendecomposition it was computed from.
pub(crate) fn psd_project_unchecked(s: &Mat) -> (Mat, SymEig) {
    let eig = sym_eig_unchecked(s);
    let clipped: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    (reconstruct_scaled(&eig.vectors, &clipped), eig)
}

/// Frobenius-nearest point of the unit operator-norm ball: singular values
/// are clipped at one.
pub fn spectral_ball_project(m: &Mat) -> Mat {
    let dec = svd_unchecked(m);
    if dec.max_singular() <= 1.0 {
        return m.clone();
    }
    let clipped = Svd {
        singulars: dec.singulars.iter().map(|s| s.min(1.0)).collect(),
        ..dec
    };
    clipped.reconstruct()
}

pub fn operator_norm(m: &Mat) -> f64 {
    svd_unchecked(m).max_singular()
}

/// `n x d` matrix of independent standard normal draws, filled row by row.
pub fn random_gaussian<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Mat {
    let entries: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    Mat::from_row_slice(n, d, &entries)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of Q flipped so that R has a positive diagonal.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat {
    let g = random_gaussian(d, d, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// The `(i, j)` block of size `d x d`.
pub fn block(m: &Mat, i: usize, j: usize, d: usize) -> Mat {
    m.view((i * d, j * d), (d, d)).into_owned()
}

pub fn set_block(m: &mut Mat, i: usize, j: usize, b: &Mat) {
    let d = b.nrows();
    m.view_mut((i * d, j * d), (d, b.ncols())).copy_from(b);
}

/// `m` with every diagonal `d x d` block overwritten by the identity.
pub(crate) fn set_identity_diagonal_blocks(m: &mut Mat, d: usize) {
    let k = m.nrows() / d;
    for i in 0..k {
        m.view_mut((i * d, i * d), (d, d)).fill_with_identity();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = rng_from_seed(seed);
        symmetrize(&random_gaussian(n, n, &mut rng))
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&Mat::identity(3, 3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn eig_diagonal_sorted_with_axis_vectors() {
        let e = sym_eig(&mat(2, 2, &[-1.0, 0.0, 0.0, 2.0])).unwrap();
        assert_relative_eq!(e.values[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(e.values[1], -1.0, epsilon = 1e-14);
        assert_relative_eq!(e.vectors[(1, 0)].abs(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.vectors[(0, 1)].abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_random_reconstruction() {
        let s = random_symmetric(5, 11);
        let e = sym_eig(&s).unwrap();
        let qtq = e.vectors.transpose() * &e.vectors;
        assert!(frob(&(qtq - Mat::identity(5, 5))) <= 1e-10);
        assert!(frob(&(&s - e.reconstruct())) <= 1e-8 * (1.0 + frob(&s)));
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(
            sym_eig(&Mat::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            sym_eig(&mat(2, 2, &[1.0, 2.0, 0.0, 1.0])),
            Err(Error::Asymmetric(_))
        ));
    }

    #[test]
    fn svd_examples() {
        let s = svd(&Mat::identity(2, 2)).unwrap();
        assert_eq!(s.singulars, vec![1.0, 1.0]);
        let s = svd(&mat(2, 2, &[0.0, 0.0, 0.0, 3.0])).unwrap();
        assert_relative_eq!(s.singulars[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(s.singulars[1], 0.0, epsilon = 1e-14);
        let s = svd(&mat(2, 1, &[3.0, 4.0])).unwrap();
        assert_eq!(s.singulars.len(), 1);
        assert_relative_eq!(s.singulars[0], 5.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_factors_orthonormal() {
        let mut rng = rng_from_seed(3);
        let z = random_gaussian(6, 4, &mut rng);
        let s = svd(&z).unwrap();
        let k = s.singulars.len();
        assert!(frob(&(s.left.transpose() * &s.left - Mat::identity(k, k))) <= 1e-10);
        assert!(frob(&(s.right.transpose() * &s.right - Mat::identity(k, k))) <= 1e-10);
        assert!(frob(&(&z - s.reconstruct())) <= 1e-8 * (1.0 + frob(&z)));
    }

    #[test]
    fn polar_round_examples() {
        let r = polar_round(&Mat::identity(4, 4)).unwrap();
        assert!(frob(&(r.matrix - Mat::identity(4, 4))) <= 1e-14);
        assert!(!r.rank_deficient);

        let r = polar_round(&mat(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        assert!(frob(&(r.matrix - Mat::identity(2, 2))) <= 1e-14);

        let r = polar_round(&mat(2, 2, &[0.0, -2.0, 1.0, 0.0])).unwrap();
        let expected = mat(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(frob(&(r.matrix - expected)) <= 1e-14);
    }

    #[test]
    fn polar_round_flags_rank_deficiency() {
        let r = polar_round(&mat(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(r.rank_deficient);
        let qtq = r.matrix.transpose() * &r.matrix;
        assert!(frob(&(qtq - Mat::identity(2, 2))) <= 1e-10);

        let r = polar_round(&Mat::zeros(3, 3)).unwrap();
        assert!(r.rank_deficient);
        assert!(polar_round(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn psd_project_examples() {
        let p = psd_project(&mat(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        assert!(frob(&(p - mat(2, 2, &[1.0, 0.0, 0.0, 0.0]))) <= 1e-14);

        let p = psd_project(&mat(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!(frob(&(p - Mat::from_element(2, 2, 0.5))) <= 1e-14);

        let mut rng = rng_from_seed(5);
        let g = random_gaussian(4, 4, &mut rng);
        let psd = &g * g.transpose();
        let p = psd_project(&psd).unwrap();
        assert!(frob(&(p - &psd)) <= 1e-9);
    }

    #[test]
    fn spectral_ball_examples() {
        let mut rng = rng_from_seed(8);
        let q = random_orthogonal(3, &mut rng);
        assert!(frob(&(spectral_ball_project(&q) - &q)) <= 1e-12);

        let p = spectral_ball_project(&mat(2, 2, &[3.0, 0.0, 0.0, 0.5]));
        assert!(frob(&(p - mat(2, 2, &[1.0, 0.0, 0.0, 0.5]))) <= 1e-14);

        let p = spectral_ball_project(&(&q * 2.0));
        assert!(frob(&(p - &q)) <= 1e-12);
    }

    #[test]
    fn gaussian_deterministic_and_seed_sensitive() {
        let a = random_gaussian(4, 3, &mut rng_from_seed(42));
        let b = random_gaussian(4, 3, &mut rng_from_seed(42));
        let c = random_gaussian(4, 3, &mut rng_from_seed(43));
        assert_eq!(a, b);
        assert!(a.iter().zip(c.iter()).any(|(x, y)| x != y));
    }

    #[test]
    fn gaussian_moments() {
        let g = random_gaussian(100, 100, &mut rng_from_seed(1));
        let n = g.len() as f64;
        let mean = g.sum() / n;
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn orthogonal_scalar_is_sign() {
        for seed in 0..20 {
            let q = random_orthogonal(1, &mut rng_from_seed(seed));
            assert_eq!(q[(0, 0)].abs(), 1.0);
        }
    }

    #[test]
    fn orthogonal_haar_trace_mean() {
        let mut rng = rng_from_seed(99);
        let mut sum = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let q = random_orthogonal(2, &mut rng);
            assert!(frob(&(q.transpose() * &q - Mat::identity(2, 2))) <= 1e-10);
            sum += q.trace();
        }
        let mean = sum / draws as f64;
        assert!(mean.abs() < 0.05, "trace mean {mean}");
    }

    #[test]
    fn block_helpers() {
        let mut m = Mat::zeros(4, 4);
        set_block(&mut m, 1, 0, &Mat::from_element(2, 2, 3.0));
        assert_eq!(block(&m, 1, 0, 2), Mat::from_element(2, 2, 3.0));
        set_identity_diagonal_blocks(&mut m, 2);
        assert_eq!(block(&m, 1, 1, 2), Mat::identity(2, 2));
    }
}
