use proptest::prelude::*;

use rkhs_kit::adaptive::{KlmsState, KrlsState, OnlineFilter};
use rkhs_kit::conditional::{domain_partition, within_domain_permutation};
use rkhs_kit::embeddings::{deflection, deflection_detector, mmd_sq};
use rkhs_kit::faer::Mat;
use rkhs_kit::finite_rkhs::{kernel_from_spanning_set, min_norm_linear_solve, solve_via_frame, InnerProductSubspace};
use rkhs_kit::independence::{hsic_batch, permutation_threshold, sparse_hsic};
use rkhs_kit::kbr::{preimage, PreimageOptions};
use rkhs_kit::kernels::{center_gram, gram_matrix, rkhs_distance_sq, Centering};
use rkhs_kit::rng::stream_rng;
use rkhs_kit::KernelSpec;

fn points(dim: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, dim), 2..max_len)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat<f64>> {
    prop::collection::vec(-2.0..2.0f64, rows * cols).prop_map(move |v| Mat::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

fn min_eigenvalue(m: &Mat<f64>) -> f64 {
    let eig = m.self_adjoint_eigen(rkhs_kit::faer::Side::Lower).unwrap();
    let s = eig.S();
    (0..m.nrows()).map(|i| s[i]).fold(f64::INFINITY, f64::min)
}

fn gaussian(dim: usize) -> KernelSpec {
    KernelSpec::gaussian(dim, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_gram_is_psd(xs in points(2, 20)) {
        let g = gram_matrix(&gaussian(2), &xs).unwrap();
        for i in 0..xs.len() {
            prop_assert!((g[(i, i)] - 1.0).abs() < 1e-15);
            for j in 0..xs.len() {
                prop_assert_eq!(g[(i, j)], g[(j, i)]);
            }
        }
        prop_assert!(min_eigenvalue(&g) > -1e-10);
    }

    #[test]
    fn gaussian_distance_is_bounded(x in prop::collection::vec(-5.0..5.0f64, 3), y in prop::collection::vec(-5.0..5.0f64, 3)) {
        let d = rkhs_distance_sq(&gaussian(3), &x, &y).unwrap();
        prop_assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn centered_gram_rows_sum_to_zero(xs in points(1, 15)) {
        let c = center_gram(gram_matrix(&gaussian(1), &xs).unwrap().as_ref(), Centering::Both).unwrap();
        for i in 0..xs.len() {
            let s: f64 = (0..xs.len()).map(|j| c[(i, j)]).sum();
            prop_assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn subspace_kernel_reproduces(basis in matrix(4, 2), alpha in prop::collection::vec(-1.0..1.0f64, 4)) {
        let space = InnerProductSubspace::euclidean(basis.clone());
        prop_assume!(space.is_ok());
        let space = space.unwrap();
        prop_assume!(min_eigenvalue(&space.gram_of_basis().to_owned()) > 1e-3);
        let kernel = kernel_from_spanning_set(&space).unwrap();
        // f = K α lies in the subspace, so ⟨f, K(·, i)⟩ = f_i
        let f = kernel.element(&alpha);
        for i in 0..4 {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            prop_assert!((kernel.inner(&alpha, &e) - f[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn min_norm_solution_is_feasible_and_consistent(a in matrix(3, 6), b in prop::collection::vec(-1.0..1.0f64, 3)) {
        let aat = &a * a.transpose();
        prop_assume!(min_eigenvalue(&aat) > 1e-2);
        let x = min_norm_linear_solve(a.as_ref(), &b).unwrap();
        let y = solve_via_frame(a.as_ref(), &b).unwrap();
        for i in 0..3 {
            let ax: f64 = (0..6).map(|j| a[(i, j)] * x[j]).sum();
            prop_assert!((ax - b[i]).abs() < 1e-9);
        }
        for j in 0..6 {
            prop_assert!((x[j] - y[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn mmd_is_nonnegative_and_zero_on_self(p in points(2, 12), q in points(2, 12)) {
        let spec = gaussian(2);
        prop_assert!(mmd_sq(&spec, &p, &q).unwrap() > -1e-12);
        prop_assert!(mmd_sq(&spec, &p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn optimal_detector_dominates(seed in 0u64..1000, f in prop::collection::vec(-1.0..1.0f64, 3)) {
        prop_assume!(f.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let (sigma, mu0, mu1) = rkhs_kit::experiments::random_detection_problem(3, seed);
        let det = deflection_detector(&mu0, &mu1, sigma.as_ref(), 0.0).unwrap();
        prop_assert!(deflection(&f, &mu0, &mu1, sigma.as_ref()) <= det.max_deflection * (1.0 + 1e-10));
    }

    #[test]
    fn hsic_is_nonnegative_and_permutation_invariant(xs in points(1, 15), shift in 0usize..15) {
        let n = xs.len();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] * x[0]]).collect();
        let spec = gaussian(1);
        let h = hsic_batch(gram_matrix(&spec, &xs).unwrap().as_ref(), gram_matrix(&spec, &ys).unwrap().as_ref()).unwrap();
        prop_assert!(h > -1e-12);
        let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let xp: Vec<_> = order.iter().map(|&i| xs[i].clone()).collect();
        let yp: Vec<_> = order.iter().map(|&i| ys[i].clone()).collect();
        let hp = hsic_batch(gram_matrix(&spec, &xp).unwrap().as_ref(), gram_matrix(&spec, &yp).unwrap().as_ref()).unwrap();
        prop_assert!((h - hp).abs() < 1e-12);
    }

    #[test]
    fn sparse_dictionary_is_bounded(xs in points(1, 40), mu in 0.3..1.0f64) {
        let d = sparse_hsic(&gaussian(1), &gaussian(1), &xs, &xs, mu).unwrap();
        prop_assert!(!d.is_empty() && d.len() <= xs.len());
        prop_assert_eq!(d.counts().iter().sum::<u64>() as usize, xs.len());
    }

    #[test]
    fn threshold_lies_within_null(mut null in prop::collection::vec(-10.0..10.0f64, 1..200), level in 0.01..1.0f64) {
        let lo = null.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = null.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let t = permutation_threshold(&mut null, level).unwrap();
        prop_assert!(lo <= t && t <= hi);
    }

    #[test]
    fn domain_permutation_stays_in_domain(zs in prop::collection::vec(-3.0..3.0f64, 8..60), domains in 1usize..4, seed in 0u64..100) {
        let pts: Vec<[f64; 1]> = zs.iter().map(|&z| [z]).collect();
        let parts = domain_partition(&pts, domains).unwrap();
        let mut owner = vec![usize::MAX; zs.len()];
        for (d, part) in parts.iter().enumerate() {
            for &i in part {
                prop_assert_eq!(owner[i], usize::MAX);
                owner[i] = d;
            }
        }
        prop_assert!(owner.iter().all(|&d| d != usize::MAX));
        let perm = within_domain_permutation(&parts, zs.len(), &mut stream_rng(seed, 0));
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..zs.len()).collect::<Vec<_>>());
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(owner[i], owner[p]);
        }
    }

    #[test]
    fn preimage_of_single_atom_is_the_atom(x in prop::collection::vec(-3.0..3.0f64, 2)) {
        let p = preimage(std::slice::from_ref(&x), &[1.0], &gaussian(2), &PreimageOptions::default()).unwrap();
        for (a, b) in p.point.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn klms_dictionary_respects_coherence(xs in points(2, 50), threshold in 0.2..0.9f64) {
        let spec = gaussian(2);
        let mut f = KlmsState::new(spec, threshold, 0.1, 0.01, &xs[0], 0.0).unwrap();
        for x in &xs[1..] {
            f.update(x, x[0]).unwrap();
        }
        let dict = f.dictionary();
        for i in 0..dict.len() {
            for j in 0..i {
                prop_assert!(spec.eval(&dict[i], &dict[j]).unwrap() <= threshold + 1e-12);
            }
        }
    }

    #[test]
    fn krls_interpolates_dictionary_targets_without_noise(xs in points(1, 30)) {
        // distinct well-separated inputs with a tight threshold: every sample enters
        let mut grid: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 0.5);
        prop_assume!(grid.len() >= 2);
        let target = |x: f64| (2.0 * x).sin();
        let mut f = KrlsState::new(gaussian(1), 1e-6, &[grid[0]], target(grid[0])).unwrap();
        for &x in &grid[1..] {
            f.update(&[x], target(x)).unwrap();
        }
        prop_assert_eq!(f.dictionary_len(), grid.len());
        for &x in &grid {
            prop_assert!((f.predict(&[x]).unwrap() - target(x)).abs() < 1e-6);
        }
    }
}
