//! Problem instances `X_K = sum_i X_i V_i`, their generation, noise, the
//! block Gram cost matrix and the text instance format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matprims::{self, frob, random_gaussian, random_orthogonal, rng_from_seed, Mat};

/// Known matrices `X_1, ..., X_K` (each `N x D`), with the last one being the
/// observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    k: usize,
    n: usize,
    d: usize,
    xs: Vec<Mat>,
    pub sigma: f64,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn new(xs: Vec<Mat>, sigma: f64, seed: u64) -> Result<Self> {
        let k = xs.len();
        if k < 3 {
            return Err(Error::InvalidSize(format!("need K >= 3 matrices, got {k}")));
        }
        let (n, d) = xs[0].shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidSize("matrices must be non-empty".into()));
        }
        for (i, x) in xs.iter().enumerate() {
            if x.shape() != (n, d) {
                return Err(Error::Dimension(format!(
                    "X{} is {}x{}, expected {n}x{d}",
                    i + 1,
                    x.nrows(),
                    x.ncols()
                )));
            }
            if !matprims::is_finite(x) {
                return Err(Error::NonFinite);
            }
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidSize(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            k,
            n,
            d,
            xs,
            sigma,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// All `K` matrices, observation last.
    pub fn xs(&self) -> &[Mat] {
        &self.xs
    }

    /// The observed right-hand side `X_K`.
    pub fn observation(&self) -> &Mat {
        &self.xs[self.k - 1]
    }

    /// `X_1, ..., X_{K-1}`.
    pub fn regressors(&self) -> &[Mat] {
        &self.xs[..self.k - 1]
    }

    /// `(X_1, ..., X_K)` as one `N x KD` matrix.
    pub fn stacked(&self) -> Mat {
        hstack(&self.xs)
    }

    /// `||X_K - sum_i X_i V_i||_F`.
    pub fn residual(&self, set: &OrthogonalSet) -> f64 {
        let mut r = self.observation().clone();
        for (x, v) in self.regressors().iter().zip(set.matrices()) {
            r -= x * v;
        }
        frob(&r)
    }
}

pub(crate) fn hstack(blocks: &[Mat]) -> Mat {
    let n = blocks[0].nrows();
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(n, total);
    let mut col = 0;
    for b in blocks {
        out.view_mut((0, col), (n, b.ncols())).copy_from(b);
        col += b.ncols();
    }
    out
}

/// `K - 1` orthogonal `D x D` matrices: ground truth or a recovered solution.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalSet(Vec<Mat>);

impl OrthogonalSet {
    /// Wraps matrices without checking orthogonality. Recovered sets pass
    /// through `polar_round` so they are orthogonal by construction.
    pub fn new(matrices: Vec<Mat>) -> Self {
        Self(matrices)
    }

    /// Wraps matrices after checking `V^T V = I` within `1e-8`.
    pub fn checked(matrices: Vec<Mat>) -> Result<Self> {
        let set = Self(matrices);
        if set.max_orthogonality_defect() > 1e-8 {
            return Err(Error::Dimension("matrices are not orthogonal".into()));
        }
        Ok(set)
    }

    pub fn matrices(&self) -> &[Mat] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0.first().map_or(0, |m| m.nrows())
    }

    /// `max_i ||V_i^T V_i - I||_F`.
    pub fn max_orthogonality_defect(&self) -> f64 {
        self.0
            .iter()
            .map(|v| {
                if !v.is_square() {
                    return f64::INFINITY;
                }
                let d = v.nrows();
                frob(&(v.transpose() * v - Mat::identity(d, d)))
            })
            .fold(0.0, f64::max)
    }

    /// Block Gram matrix of the homogenized solution `(V_1, ..., V_{K-1}, -I)`:
    /// `H_ij = Vbar_i Vbar_j^T`, so `H_iK = -V_i`.
    pub fn homogenized_gram(&self) -> Mat {
        let d = self.dim();
        let mut stacked: Vec<Mat> = self.0.iter().map(|v| v.transpose()).collect();
        stacked.push(-Mat::identity(d, d));
        let w = hstack(&stacked);
        w.transpose() * w
    }
}

/// Which matrices receive additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseTarget {
    /// Only the observation `X_K`.
    #[default]
    Observation,
    /// Every `X_i`.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub target: NoiseTarget,
}

impl NoiseSpec {
    pub fn observation(sigma: f64) -> Self {
        Self {
            sigma,
            target: NoiseTarget::Observation,
        }
    }

    pub fn all(sigma: f64) -> Self {
        Self {
            sigma,
            target: NoiseTarget::All,
        }
    }
}

/// Gram cost `C = X^T X` with blocks `C_ij = X_i^T X_j`, `X = (X_1, ..., X_K)`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub k: usize,
    pub d: usize,
    pub c: Mat,
}

impl CostMatrix {
    pub fn block(&self, i: usize, j: usize) -> Mat {
        matprims::block(&self.c, i, j, self.d)
    }

    pub fn trace(&self) -> f64 {
        self.c.trace()
    }

    /// `tr(C H)`.
    pub fn objective(&self, h: &Mat) -> f64 {
        self.c.component_mul(h).sum()
    }

    /// Wraps an explicit cost, checking shape and symmetry.
    pub fn from_matrix(c: Mat, k: usize, d: usize) -> Result<Self> {
        if c.nrows() != k * d || c.ncols() != k * d {
            return Err(Error::Dimension(format!(
                "cost is {}x{}, expected {2}x{2}",
                c.nrows(),
                c.ncols(),
                k * d
            )));
        }
        let asym = matprims::asymmetry(&c);
        if asym > matprims::SYMMETRY_TOL {
            return Err(Error::Asymmetric(asym));
        }
        Ok(Self {
            k,
            d,
            c: matprims::symmetrize(&c),
        })
    }
}

/// Random instance: Gaussian `X_1..X_{K-1}`, Haar `V_1..V_{K-1}` and
/// `X_K = sum_i X_i V_i`.
pub fn generate_instance(
    k: usize,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<(ProblemInstance, OrthogonalSet)> {
    if k < 3 || n == 0 || d == 0 {
        return Err(Error::InvalidSize(format!(
            "need K >= 3, N >= 1, D >= 1 (got K={k}, N={n}, D={d})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut xs: Vec<Mat> = (0..k - 1).map(|_| random_gaussian(n, d, &mut rng)).collect();
    let vs: Vec<Mat> = (0..k - 1).map(|_| random_orthogonal(d, &mut rng)).collect();
    let mut xk = Mat::zeros(n, d);
    for (x, v) in xs.iter().zip(&vs) {
        xk += x * v;
    }
    xs.push(xk);
    let inst = ProblemInstance::new(xs, 0.0, seed)?;
    Ok((inst, OrthogonalSet::new(vs)))
}

/// Adds independent `N(0, sigma^2)` entries to the targeted matrices.
pub fn add_noise(inst: &ProblemInstance, spec: &NoiseSpec, seed: u64) -> ProblemInstance {
    let mut out = inst.clone();
    if spec.sigma == 0.0 {
        return out;
    }
    let mut rng = rng_from_seed(seed);
    let k = out.k;
    let range = match spec.target {
        NoiseTarget::Observation => k - 1..k,
        NoiseTarget::All => 0..k,
    };
    for i in range {
        let noise = random_gaussian(out.n, out.d, &mut rng) * spec.sigma;
        out.xs[i] += noise;
    }
    out.sigma = spec.sigma;
    out
}

pub fn assemble_cost(inst: &ProblemInstance) -> CostMatrix {
    let x = inst.stacked();
    let c = x.tr_mul(&x);
    CostMatrix {
        k: inst.k,
        d: inst.d,
        c: matprims::symmetrize(&c),
    }
}

const MAGIC: &str = "ODMP1";

/// Serializes an instance (and optional ground truth) to the text format:
/// header `ODMP1 K N D sigma seed`, then `X i` blocks, then optional `V i`
/// blocks. Numbers use the shortest representation that round-trips.
pub fn format_instance(inst: &ProblemInstance, truth: Option<&OrthogonalSet>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MAGIC} {} {} {} {} {}",
        inst.k, inst.n, inst.d, inst.sigma, inst.seed
    );
    let write_block = |out: &mut String, tag: char, i: usize, m: &Mat| {
        let _ = writeln!(out, "{tag} {}", i + 1);
        for r in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    };
    for (i, x) in inst.xs.iter().enumerate() {
        write_block(&mut out, 'X', i, x);
    }
    if let Some(set) = truth {
        for (i, v) in set.matrices().iter().enumerate() {
            write_block(&mut out, 'V', i, v);
        }
    }
    out
}

pub fn save_instance(
    inst: &ProblemInstance,
    truth: Option<&OrthogonalSet>,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, format_instance(inst, truth))?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<(ProblemInstance, Option<OrthogonalSet>)> {
    parse_instance(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if !line.trim().is_empty() {
                return Some((i + 1, line.trim()));
            }
        }
        None
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, s: Option<&str>) -> Result<T> {
    let s = s.ok_or_else(|| parse_err(line, format!("missing header field `{name}`")))?;
    s.parse()
        .map_err(|_| parse_err(line, format!("invalid value `{s}` for `{name}`")))
}

fn parse_block(
    lines: &mut Lines<'_>,
    tag: &str,
    index: usize,
    rows: usize,
    cols: usize,
) -> Result<Mat> {
    let name = format!("{tag} {index}");
    let (ln, head) = lines
        .next()
        .ok_or_else(|| parse_err(lines.last, format!("missing block `{name}`")))?;
    let mut parts = head.split_whitespace();
    if parts.next() != Some(tag) || parts.next().and_then(|s| s.parse::<usize>().ok()) != Some(index)
    {
        return Err(parse_err(ln, format!("expected block header `{name}`, found `{head}`")));
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, row) = lines
            .next()
            .ok_or_else(|| parse_err(lines.last, format!("block `{name}` is truncated")))?;
        let values: Vec<f64> = row
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(ln, format!("invalid number `{s}` in block `{name}`")))
            })
            .collect::<Result<_>>()?;
        if values.len() != cols {
            return Err(parse_err(
                ln,
                format!("block `{name}` row has {} entries, expected {cols}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(ln, format!("non-finite entry in block `{name}`")));
        }
        entries.extend(values);
    }
    Ok(Mat::from_row_slice(rows, cols, &entries))
}

pub fn parse_instance(text: &str) -> Result<(ProblemInstance, Option<OrthogonalSet>)> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(parse_err(ln, format!("header must start with `{MAGIC}`")));
    }
    let k: usize = parse_field(ln, "K", fields.next())?;
    let n: usize = parse_field(ln, "N", fields.next())?;
    let d: usize = parse_field(ln, "D", fields.next())?;
    let sigma: f64 = parse_field(ln, "sigma", fields.next())?;
    let seed: u64 = parse_field(ln, "seed", fields.next())?;
    if fields.next().is_some() {
        return Err(parse_err(ln, "trailing fields in header"));
    }
    if k < 3 || n == 0 || d == 0 {
        return Err(parse_err(ln, format!("invalid sizes K={k} N={n} D={d}")));
    }
    let xs = (1..=k)
        .map(|i| parse_block(&mut lines, "X", i, n, d))
        .collect::<Result<Vec<_>>>()?;
    let inst = ProblemInstance::new(xs, sigma, seed).map_err(|e| parse_err(ln, e.to_string()))?;

    let truth = if lines.clone_peek_is_empty() {
        None
    } else {
        let vs = (1..k)
            .map(|i| parse_block(&mut lines, "V", i, d, d))
            .collect::<Result<Vec<_>>>()?;
        if let Some((ln, extra)) = lines.next() {
            return Err(parse_err(ln, format!("unexpected trailing content `{extra}`")));
        }
        Some(OrthogonalSet::new(vs))
    };
    Ok((inst, truth))
}

impl Lines<'_> {
    fn clone_peek_is_empty(&self) -> bool {
        self.inner.clone().all(|(_, l)| l.trim().is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_instance_uses_signs() {
        let (inst, truth) = generate_instance(3, 2, 1, 17).unwrap();
        for v in truth.matrices() {
            assert_eq!(v[(0, 0)].abs(), 1.0);
        }
        let x = inst.xs();
        let expected = &x[0] * truth.matrices()[0][(0, 0)] + &x[1] * truth.matrices()[1][(0, 0)];
        assert!(frob(&(expected - &x[2])) <= 1e-15);
    }

    #[test]
    fn generated_instances_satisfy_system() {
        for seed in 0..10 {
            let (inst, truth) = generate_instance(4, 7, 3, seed).unwrap();
            let r = inst.residual(&truth);
            assert!(r <= 1e-12 * frob(inst.observation()).max(1.0), "residual {r}");
            assert!(truth.max_orthogonality_defect() <= 1e-10);
        }
    }

    #[test]
    fn table_setting_dimensions() {
        let (inst, truth) = generate_instance(3, 22, 10, 0).unwrap();
        assert!(inst.xs().iter().all(|x| x.shape() == (22, 10)));
        assert_eq!(truth.len(), 2);
        assert!(truth.matrices().iter().all(|v| v.shape() == (10, 10)));
    }

    #[test]
    fn invalid_sizes_rejected() {
        assert!(generate_instance(2, 5, 2, 0).is_err());
        assert!(generate_instance(3, 0, 2, 0).is_err());
        assert!(generate_instance(3, 5, 0, 0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance(3, 5, 3, 9).unwrap();
        let b = generate_instance(3, 5, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_is_identity() {
        let (inst, _) = generate_instance(3, 5, 3, 1).unwrap();
        assert_eq!(add_noise(&inst, &NoiseSpec::observation(0.0), 4), inst);
    }

    #[test]
    fn noise_targets() {
        let (inst, _) = generate_instance(3, 22, 10, 1).unwrap();
        let noisy = add_noise(&inst, &NoiseSpec::observation(0.01), 4);
        assert_eq!(noisy.sigma, 0.01);
        assert_eq!(noisy.xs()[0], inst.xs()[0]);
        assert_eq!(noisy.xs()[1], inst.xs()[1]);
        assert_ne!(noisy.xs()[2], inst.xs()[2]);

        let noisy = add_noise(&inst, &NoiseSpec::all(0.01), 4);
        assert!(noisy.xs().iter().zip(inst.xs()).all(|(a, b)| a != b));
    }

    #[test]
    fn noise_energy_matches_expectation() {
        let (inst, _) = generate_instance(3, 22, 10, 2).unwrap();
        let sigma = 0.1;
        let trials = 100;
        let mean: f64 = (0..trials)
            .map(|s| {
                let noisy = add_noise(&inst, &NoiseSpec::observation(sigma), s);
                frob(&(noisy.observation() - inst.observation())).powi(2)
            })
            .sum::<f64>()
            / trials as f64;
        let expected = sigma * sigma * 22.0 * 10.0;
        assert!((mean / expected - 1.0).abs() < 0.2, "mean {mean} vs {expected}");
    }

    #[test]
    fn cost_of_identities() {
        let i = Mat::identity(3, 3);
        let inst = ProblemInstance::new(vec![i.clone(), i.clone(), i.clone()], 0.0, 0).unwrap();
        let c = assemble_cost(&inst);
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(c.block(a, b), i);
            }
        }
    }

    #[test]
    fn cost_is_symmetric_psd() {
        for seed in 0..50 {
            let (inst, _) = generate_instance(3, 6, 4, seed).unwrap();
            let c = assemble_cost(&inst);
            assert_eq!(c.c, c.c.transpose());
            let e = matprims::sym_eig(&c.c).unwrap();
            assert!(e.min_value() >= -1e-8 * c.trace());
        }
    }

    #[test]
    fn cost_with_all_identity_gram() {
        let (inst, _) = generate_instance(3, 6, 4, 3).unwrap();
        let c = assemble_cost(&inst);
        let d = inst.d();
        let ones = Mat::from_fn(3 * d, 3 * d, |r, col| if r % d == col % d { 1.0 } else { 0.0 });
        let sum: Mat = inst.xs().iter().fold(Mat::zeros(6, d), |acc, x| acc + x);
        let lhs = c.objective(&ones);
        let rhs = frob(&sum).powi(2);
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
    }

    #[test]
    fn homogenized_truth_annihilates_stacked_system() {
        let (inst, truth) = generate_instance(4, 9, 3, 5).unwrap();
        let d = inst.d();
        let mut blocks: Vec<Mat> = truth.matrices().iter().map(|v| -v).collect();
        blocks.push(Mat::identity(d, d));
        let mut sum = Mat::zeros(inst.n(), d);
        for (x, v) in inst.xs().iter().zip(&blocks) {
            sum += x * v;
        }
        assert!(frob(&sum) <= 1e-10 * frob(&inst.stacked()));

        let h = truth.homogenized_gram();
        let c = assemble_cost(&inst);
        assert!(c.objective(&h).abs() <= 1e-10 * c.trace());
    }

    #[test]
    fn format_round_trip() {
        let (inst, truth) = generate_instance(3, 4, 2, 12).unwrap();
        let noisy = add_noise(&inst, &NoiseSpec::observation(0.3), 1);
        let (back, t) = parse_instance(&format_instance(&noisy, Some(&truth))).unwrap();
        assert_eq!(back, noisy);
        assert_eq!(t.unwrap(), truth);

        let (back, t) = parse_instance(&format_instance(&inst, None)).unwrap();
        assert_eq!(back, inst);
        assert!(t.is_none());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.txt");
        let (inst, truth) = generate_instance(3, 5, 3, 2).unwrap();
        save_instance(&inst, Some(&truth), &path).unwrap();
        let (back, t) = load_instance(&path).unwrap();
        assert_eq!(back, inst);
        assert_eq!(t.unwrap(), truth);
    }

    #[test]
    fn hand_written_file_parses() {
        let text = "ODMP1 3 2 1 0 7\nX 1\n1\n2\nX 2\n3\n4\nX 3\n4\n6\n";
        let (inst, truth) = parse_instance(text).unwrap();
        assert_eq!((inst.k(), inst.n(), inst.d()), (3, 2, 1));
        assert_eq!(inst.seed, 7);
        assert_eq!(inst.observation()[(1, 0)], 6.0);
        assert!(truth.is_none());
    }

    #[test]
    fn truncated_file_names_missing_block() {
        let text = "ODMP1 3 2 1 0 7\nX 1\n1\n2\nX 2\n3\n4\n";
        let err = parse_instance(text).unwrap_err().to_string();
        assert!(err.contains("X 3"), "{err}");

        let text = "ODMP1 3 2 1 0 7\nX 1\n1\n2\nX 2\n3\n";
        let err = parse_instance(text).unwrap_err().to_string();
        assert!(err.contains("X 2"), "{err}");
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(parse_instance("").is_err());
        assert!(parse_instance("ODMP2 3 2 1 0 7").is_err());
        assert!(parse_instance("ODMP1 3 2 1 0").is_err());
        let bad_row = "ODMP1 3 2 1 0 7\nX 1\n1 5\n2\nX 2\n3\n4\nX 3\n4\n6\n";
        assert!(parse_instance(bad_row).is_err());
        let nan = "ODMP1 3 2 1 0 7\nX 1\nNaN\n2\nX 2\n3\n4\nX 3\n4\n6\n";
        assert!(parse_instance(nan).is_err());
        let partial_truth = "ODMP1 3 2 1 0 7\nX 1\n1\n2\nX 2\n3\n4\nX 3\n4\n6\nV 1\n1\n";
        assert!(parse_instance(partial_truth).unwrap_err().to_string().contains("V 2"));
    }
}
