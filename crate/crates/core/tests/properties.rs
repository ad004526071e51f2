use orthorecover::eval::{brute_force_oracle, recovery_errors};
use orthorecover::matprims::{
    block, frob, operator_norm, polar_round, psd_project, random_gaussian, random_orthogonal,
    rng_from_seed, spectral_ball_project, svd, sym_eig,
};
use orthorecover::problem::{add_noise, assemble_cost, generate_instance, NoiseSpec};
use orthorecover::sdp::{consensus_deviation, recover, solve_sdp, FactorMatrix, SdpOptions};
use orthorecover::{Mat, ProblemInstance};
use proptest::prelude::*;

fn identity_defect(q: &Mat) -> f64 {
    frob(&(q.transpose() * q - Mat::identity(q.ncols(), q.ncols())))
}

fn random_symmetric(n: usize, seed: u64) -> Mat {
    let g = random_gaussian(n, n, &mut rng_from_seed(seed));
    (&g + g.transpose()) * 0.5
}

/// Right-multiplies `X_i` by `U_i` for `i < K`, leaving `X_K` alone.
fn rotate_regressors(inst: &ProblemInstance, us: &[Mat]) -> ProblemInstance {
    let mut xs: Vec<Mat> = inst.xs().to_vec();
    for (x, u) in xs.iter_mut().zip(us) {
        *x = &*x * u;
    }
    ProblemInstance::new(xs, inst.sigma, inst.seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polar_round_is_orthogonal_and_idempotent(seed in any::<u64>(), d in 1usize..8) {
        let z = random_gaussian(d, d, &mut rng_from_seed(seed));
        let q = polar_round(&z).unwrap().matrix;
        prop_assert!(identity_defect(&q) <= 1e-10);
        let again = polar_round(&q).unwrap().matrix;
        prop_assert!(frob(&(again - &q)) <= 1e-9);
    }

    #[test]
    fn polar_round_beats_sampled_orthogonal(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = rng_from_seed(seed);
        let z = random_gaussian(d, d, &mut rng);
        let best = frob(&(&z - polar_round(&z).unwrap().matrix));
        for _ in 0..100 {
            let q = random_orthogonal(d, &mut rng);
            prop_assert!(best <= frob(&(&z - q)) + 1e-9);
        }
    }

    #[test]
    fn product_bounds_hold(seed in any::<u64>(), m in 1usize..7, n in 1usize..7, extra in 0usize..4) {
        let mut rng = rng_from_seed(seed);
        let a = random_gaussian(m, n, &mut rng);
        let b = random_gaussian(n, n + extra, &mut rng);
        let s = svd(&b).unwrap().singulars;
        let (lo, hi) = (s[n - 1] * frob(&a), s[0] * frob(&a));
        let p = frob(&(&a * &b));
        let tol = 1e-9 * hi.max(1.0);
        prop_assert!(lo - tol <= p && p <= hi + tol, "{lo} <= {p} <= {hi}");
    }

    #[test]
    fn psd_projection_is_nearest(seed in any::<u64>(), n in 1usize..8) {
        let s = random_symmetric(n, seed);
        let p = psd_project(&s).unwrap();
        prop_assert!(sym_eig(&p).unwrap().min_value() >= -1e-9);
        prop_assert!(frob(&(psd_project(&p).unwrap() - &p)) <= 1e-9);
        let dist = frob(&(&s - &p));
        let mut rng = rng_from_seed(seed ^ 0x5eed);
        for _ in 0..50 {
            let g = random_gaussian(n, n, &mut rng);
            let candidate = &g * g.transpose();
            prop_assert!(dist <= frob(&(&s - candidate)) + 1e-9);
        }
        // variational inequality <S - P, Q - P> <= 0 for Q in the cone
        let g = random_gaussian(n, n, &mut rng);
        let q = &g * g.transpose();
        prop_assert!((&s - &p).dot(&(q - &p)) <= 1e-9 * (1.0 + frob(&s).powi(2)));
    }

    #[test]
    fn spectral_ball_projection_is_nearest(seed in any::<u64>(), n in 1usize..6, scale in 0.1f64..4.0) {
        let mut rng = rng_from_seed(seed);
        let m = random_gaussian(n, n, &mut rng) * scale;
        let p = spectral_ball_project(&m);
        prop_assert!(operator_norm(&p) <= 1.0 + 1e-9);
        prop_assert!(frob(&(spectral_ball_project(&p) - &p)) <= 1e-9);
        let dist = frob(&(&m - &p));
        for _ in 0..50 {
            let g = random_gaussian(n, n, &mut rng);
            let candidate = &g / operator_norm(&g).max(1.0);
            prop_assert!(dist <= frob(&(&m - candidate)) + 1e-9);
        }
    }

    #[test]
    fn objective_matches_factor_norm(seed in any::<u64>(), d in 1usize..5, r in 1usize..6) {
        let (inst, _) = generate_instance(3, d + 3, d, seed).unwrap();
        let inst = add_noise(&inst, &NoiseSpec::all(0.3), seed.wrapping_add(1));
        let cost = assemble_cost(&inst);
        let u = random_gaussian(3 * d, r, &mut rng_from_seed(seed.wrapping_add(2)));
        let h = &u * u.transpose();
        let x = inst.stacked();
        let gap = (cost.objective(&h) - frob(&(&x * &u)).powi(2)).abs();
        prop_assert!(gap <= 1e-8 * (1.0 + frob(&x).powi(2)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sdp_output_is_block_contractive(seed in any::<u64>(), d in 1usize..4, sigma in 0.0f64..0.3) {
        let k = 3;
        let (inst, _) = generate_instance(k, d + 2, d, seed).unwrap();
        let inst = add_noise(&inst, &NoiseSpec::observation(sigma), seed.wrapping_add(1));
        let (gram, _) = solve_sdp(&assemble_cost(&inst), &SdpOptions::default()).unwrap();
        for i in 0..k {
            for j in 0..k {
                prop_assert!(operator_norm(&block(&gram.h, i, j, d)) <= 1.0 + 1e-8);
            }
        }
    }

    #[test]
    fn recovery_commutes_with_right_rotation(seed in any::<u64>(), d in 2usize..4, sigma in 0.0f64..0.2) {
        let (inst, _) = generate_instance(3, 2 * d, d, seed).unwrap();
        let inst = add_noise(&inst, &NoiseSpec::observation(sigma), seed.wrapping_add(1));
        let mut rng = rng_from_seed(seed.wrapping_add(2));
        let us: Vec<Mat> = (0..2).map(|_| random_orthogonal(d, &mut rng)).collect();

        let opts = SdpOptions::default();
        let (base, _) = recover(&inst, &opts).unwrap();
        let (rotated, _) = recover(&rotate_regressors(&inst, &us), &opts).unwrap();
        for (i, u) in us.iter().enumerate() {
            let expected = u.transpose() * &base.matrices()[i];
            let err = frob(&(&rotated.matrices()[i] - expected));
            prop_assert!(err <= 1e-6, "V{} moved by {err}", i + 1);
        }
    }

    #[test]
    fn zero_objective_carries_over_to_squared_gram(seed in any::<u64>(), d in 1usize..4) {
        let (inst, _) = generate_instance(3, d + 2, d, seed).unwrap();
        let (gram, report) = solve_sdp(&assemble_cost(&inst), &SdpOptions::default()).unwrap();
        let eps = report.objective.max(0.0);
        prop_assume!(eps <= 1e-6);
        let lambda_max = sym_eig(&gram.h).unwrap().max_value();
        let lsplus = frob(&(inst.stacked() * &gram.h)).powi(2);
        prop_assert!(lsplus <= eps * lambda_max + 1e-12 * (1.0 + frob(&inst.stacked()).powi(2)));
    }
}

#[test]
fn svd_is_accurate_on_clustered_spectra() {
    // near-orthogonal blocks have all singular values close to one
    let mut rng = rng_from_seed(11);
    for d in [5, 10, 20] {
        let q = random_orthogonal(d, &mut rng);
        let z = &q + random_gaussian(d, d, &mut rng) * 1e-7;
        let dec = svd(&z).unwrap();
        assert!(frob(&(dec.reconstruct() - &z)) <= 1e-12 * d as f64);
        assert!(identity_defect(&dec.left) <= 1e-12 * d as f64);
        assert!(identity_defect(&dec.right) <= 1e-12 * d as f64);
    }
}

#[test]
fn svd_survives_exactly_paired_singular_values() {
    // a polishing iterate on which a direct faer SVD reports no convergence
    let entries: Vec<f64> = include_str!("data/paired_singular_values.txt")
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    let z = Mat::from_column_slice(10, 10, &entries);
    let dec = svd(&z).unwrap();
    assert!(frob(&(dec.reconstruct() - &z)) <= 1e-12);
    assert!(identity_defect(&dec.left) <= 1e-12);
    assert!(identity_defect(&polar_round(&z).unwrap().matrix) <= 1e-12);
}

#[test]
fn consensus_deviation_bounds_the_residual() {
    let (k, d) = (3, 3);
    let (inst, _) = generate_instance(k, 5, d, 4).unwrap();
    let x = inst.stacked();
    let r = k * d;
    let mut rng = rng_from_seed(5);
    let mut envelope = f64::INFINITY;
    for _ in 0..1000 {
        // feasible factor: every block has orthonormal rows
        let mut u = Mat::zeros(k * d, r);
        for i in 0..k {
            let q = random_orthogonal(r, &mut rng);
            u.rows_mut(i * d, d).copy_from(&q.rows(0, d));
        }
        let factor = FactorMatrix { k, d, u };
        let dev = consensus_deviation(&factor);
        if dev > 0.0 {
            envelope = envelope.min(frob(&(&x * &factor.u)) / dev.powi(2));
        }
    }
    assert!(envelope.is_finite() && envelope > 0.0, "fitted constant {envelope}");
}

#[test]
fn scalar_solutions_match_the_sign_oracle() {
    let mut checked = 0;
    for seed in 0..100 {
        let (inst, truth) = generate_instance(3, 2, 1, seed).unwrap();
        let oracle = brute_force_oracle(&inst).unwrap();
        if !oracle.unique {
            continue;
        }
        checked += 1;
        let (sdp, _) = recover(&inst, &SdpOptions::default()).unwrap();
        let ls = orthorecover::baselines::solve_ls(&inst).0;
        for est in [&sdp, &ls] {
            assert_eq!(recovery_errors(est, &oracle.solution).unwrap(), vec![0.0, 0.0]);
        }
        assert!(recovery_errors(&oracle.solution, &truth).unwrap().iter().all(|&e| e == 0.0));
    }
    assert!(checked >= 90);
}
