use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use siga::convergence::{certify, damping_bounds, rho_shift_dense};
use siga::linalg::{hermitian_defect, hermitian_eigenvalues, CMatrix, RVector};
use siga::linmodel::{exact_posterior, random_instance, random_unit_modulus_matrix, random_unit_modulus_vector};
use siga::siga::{nu_step, output_marginals, Siga};

/// Prior variances, noise level, N and damping for the map `g~`.
fn map_params() -> impl Strategy<Value = (Vec<f64>, f64, usize, f64)> {
    (2usize..12).prop_flat_map(|m| {
        (
            prop::collection::vec(0.1f64..5.0, m),
            0.01f64..2.0,
            (m + 1)..(4 * m + 2),
            0.05f64..=1.0,
        )
    })
}

fn g_tilde(nu: &RVector, d: &RVector, s2: f64, n: usize, damping: f64) -> RVector {
    nu_step(nu, damping, d, s2, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn map_is_monotone((d, s2, n, damping) in map_params(), u in prop::collection::vec(0.0f64..1.0, 12), gap in prop::collection::vec(0.001f64..1.0, 12)) {
        let m = d.len();
        let dv = RVector::from_vec(d);
        let g_min = -(n as f64 - 1.0) / s2;
        let hi = RVector::from_fn(m, |i, _| g_min * u[i] * 0.9);
        let lo = RVector::from_fn(m, |i, _| hi[i] - gap[i] * 0.1 * (-g_min));
        let (g_lo, g_hi) = (g_tilde(&lo, &dv, s2, n, damping), g_tilde(&hi, &dv, s2, n, damping));
        for i in 0..m {
            prop_assert!(g_lo[i] < g_hi[i], "component {}: {} !< {}", i, g_lo[i], g_hi[i]);
        }
    }

    #[test]
    fn map_is_strictly_scalable((d, s2, n, damping) in map_params(), u in prop::collection::vec(0.01f64..1.0, 12), alpha in 0.01f64..0.99) {
        let m = d.len();
        let dv = RVector::from_vec(d);
        let g_min = -(n as f64 - 1.0) / s2;
        let nu = RVector::from_fn(m, |i, _| g_min * u[i]);
        let lhs = g_tilde(&(&nu * alpha), &dv, s2, n, damping);
        let rhs = g_tilde(&nu, &dv, s2, n, damping) * alpha;
        for i in 0..m {
            prop_assert!(lhs[i] < rhs[i], "component {}: {} !< {}", i, lhs[i], rhs[i]);
        }
    }

    #[test]
    fn map_stays_inside_bounds((d, s2, n, damping) in map_params(), u in prop::collection::vec(0.0f64..=1.0, 12)) {
        let m = d.len();
        let dv = RVector::from_vec(d);
        let g_min = -(n as f64 - 1.0) / s2;
        let nu = RVector::from_fn(m, |i, _| g_min * u[i]);
        let g = g_tilde(&nu, &dv, s2, n, damping);
        for i in 0..m {
            prop_assert!(g[i] > g_min && g[i] < 0.0, "component {}: {} outside ({}, 0)", i, g[i], g_min);
        }
    }

    #[test]
    fn trajectory_stays_negative_and_finite(seed in any::<u64>(), damping in 0.05f64..=1.0, start in 0.0f64..=1.0) {
        let (model, _) = random_instance(20, 8, 1.0, 0.3, seed).unwrap();
        let nu0 = RVector::from_element(8, model.g_min() * start);
        let mut siga = Siga::new(&model, damping, nu0, siga::linalg::CVector::zeros(8)).unwrap();
        for _ in 0..30 {
            siga.step().unwrap();
            prop_assert!(siga.nu().iter().all(|v| *v < 0.0 && v.is_finite()));
            let (_, _, _, sigma0) = output_marginals(siga.theta(), siga.nu(), model.d(), model.n());
            prop_assert!(sigma0.iter().all(|s| *s > 0.0));
        }
    }

    #[test]
    fn shift_never_exceeds_rank_one_value(seed in any::<u64>(), n in 2usize..16, m in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_unit_modulus_matrix(&mut rng, n, m);
        let worst = (n * m - n) as f64;
        let rho = rho_shift_dense(&a);
        prop_assert!(rho <= worst * (1.0 + 1e-12) + 1e-9);
        let b = damping_bounds(rho, n, m, None);
        prop_assert!(b.worst <= b.general * (1.0 + 1e-12));
    }

    #[test]
    fn rank_one_attains_the_worst_case(seed in any::<u64>(), n in 2usize..16, m in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unit_modulus_vector(&mut rng, n);
        let v = random_unit_modulus_vector(&mut rng, m);
        let a = &u * v.adjoint();
        let worst = (n * m - n) as f64;
        prop_assert!((rho_shift_dense(&a) - worst).abs() <= 1e-9 * worst.max(1.0));
    }

    #[test]
    fn dropping_columns_cannot_raise_the_top_eigenvalue(seed in any::<u64>(), mask in prop::collection::vec(any::<bool>(), 14)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_unit_modulus_matrix(&mut rng, 10, 14);
        let keep: Vec<usize> = (0..14).filter(|&j| mask[j]).collect();
        prop_assume!(!keep.is_empty());
        let sub = CMatrix::from_fn(10, keep.len(), |i, j| a[(i, keep[j])]);
        let top = |x: &CMatrix| *hermitian_eigenvalues(&x.ad_mul(x)).last().unwrap();
        prop_assert!(top(&sub) <= top(&a) * (1.0 + 1e-12));
    }

    #[test]
    fn conditioning_shrinks_every_marginal(seed in any::<u64>(), n in 2usize..20, m in 2usize..10, s2 in 0.01f64..3.0, pv in 0.1f64..4.0) {
        let (model, _) = random_instance(n, m, pv, s2, seed).unwrap();
        let post = exact_posterior(&model).unwrap();
        prop_assert!(hermitian_defect(&post.sigma) <= 1e-12 * post.sigma.norm());
        let eig = hermitian_eigenvalues(&post.sigma);
        prop_assert!(eig[0] > 0.0);
        for (v, d) in post.marginal_variances().iter().zip(model.d().iter()) {
            prop_assert!(*v <= *d * (1.0 + 1e-12));
        }
    }

    #[test]
    fn certified_instances_keep_lambda_below_beta_over_n(seed in any::<u64>(), m in 2usize..12, extra in 1usize..30, s2 in 0.05f64..1.0) {
        let (model, _) = random_instance(m + extra, m, 1.0, s2, seed).unwrap();
        let cert = certify(&model, 0.9 * 2.0 / m as f64).unwrap();
        prop_assert!(cert.certified);
        prop_assert!(cert.lemma_checks.lambda_below_beta_over_n.pass);
        prop_assert!(cert.lemma_checks.bstar_spectrum_range.pass);
        prop_assert!(cert.lemma_checks.affine_spectrum.pass);
    }
}
