mod common;

use common::{section3, spec_with_error, stable_spec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use varme_core::linalg::min_eigenvalue;
use varme_core::tsmodel::{stationary_autocov, stationary_mean};
use varme_core::{simulate, simulate_path, ErrorSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn autocovariances_are_transposes_at_negative_lags(spec in stable_spec(3, 3), hmax in 0usize..6) {
        let set = stationary_autocov(&spec, hmax).unwrap();
        for h in 0..=hmax as isize {
            let diff = (set.gamma(-h) - set.gamma(h).transpose()).abs().max();
            prop_assert!(diff <= 1e-12 * (1.0 + set.gamma(0).abs().max()));
        }
    }

    #[test]
    fn yule_walker_recursion_holds(spec in stable_spec(3, 3)) {
        let set = stationary_autocov(&spec, spec.r() + 2).unwrap();
        prop_assert!(set.yule_walker_residual(&spec) <= 1e-8);
    }

    #[test]
    fn stacked_gamma_is_symmetric_psd(spec in stable_spec(3, 3)) {
        let g = stationary_autocov(&spec, spec.r()).unwrap().big_gamma(0);
        prop_assert!((&g - g.transpose()).abs().max() <= 1e-10 * g.trace());
        prop_assert!(min_eigenvalue(&g) >= -1e-10 * g.trace());
    }

    #[test]
    fn latent_path_ignores_measurement_error((spec, err) in spec_with_error(3, 2), seed in any::<u64>()) {
        let (clean, _) = simulate(&spec, &ErrorSpec::zero(spec.p()), 40, seed, 5).unwrap();
        let (latent, observed) = simulate(&spec, &err, 40, seed, 5).unwrap();
        prop_assert_eq!(clean.values(), latent.values());
        if err.is_zero() {
            prop_assert_eq!(latent.values(), observed.values());
        }
    }
}

#[test]
fn seeded_simulation_is_reproducible() {
    let (spec, err) = section3(0.2, -0.2);
    let a = simulate_path(&spec, &err, 300, 11, 0).unwrap();
    let b = simulate_path(&spec, &err, 300, 11, 0).unwrap();
    assert_eq!(a.observed.values(), b.observed.values());
    assert_eq!(a.innovations, b.innovations);
}

#[test]
fn long_path_mean_and_autocovariance_match_stationary_values() {
    let (spec, err) = section3(0.2, -0.2);
    let n = 1_000_000;
    let path = simulate_path(&spec, &err, n, 7, 1000).unwrap();
    let z = path.latent.values();
    let mu = stationary_mean(&spec).unwrap();
    let set = stationary_autocov(&spec, 1).unwrap();
    let mean = z.row_mean().transpose();
    for i in 0..2 {
        let col: Vec<f64> = z.column(i).iter().copied().collect();
        let se = varme_core::asymptotics_oracle::batch_means_se(&col, 200);
        assert!(
            (mean[i] - mu[i]).abs() <= 3.0 * se,
            "mean {i}: {} vs {} (se {se})",
            mean[i],
            mu[i]
        );
    }
    let centered = DMatrix::from_fn(n, 2, |t, j| z[(t, j)] - mean[j]);
    for h in 0..=1usize {
        let a = centered.rows(h, n - h);
        let b = centered.rows(0, n - h);
        let emp = a.transpose() * b / (n - h) as f64;
        let exact = set.gamma(h as isize);
        for (e, x) in emp.iter().zip(exact.iter()) {
            assert!(
                (e - x).abs() <= 0.01 * exact.abs().max(),
                "lag {h}: {emp} vs {exact}"
            );
        }
    }
}
