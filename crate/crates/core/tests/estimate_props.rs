mod common;

use common::{section3, spec_with_error, stable_spec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use varme_core::estimate::ols_probability_limit;
use varme_core::{fit_corrected, fit_usual, simulate, ErrorSpec, TimeSeriesMatrix};

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max() / a.abs().max().max(b.abs().max()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zero_noise_correction_is_the_usual_fit((spec, err) in spec_with_error(3, 2), seed in any::<u64>()) {
        let (_, observed) = simulate(&spec, &err, 120, seed, 20).unwrap();
        let u = fit_usual(&observed, spec.r()).unwrap();
        let c = fit_corrected(&observed, spec.r(), &ErrorSpec::zero(spec.p())).unwrap();
        prop_assert!(max_rel(&u.b_hat, &c.b_hat) <= 1e-10);
        prop_assert!(max_rel(&u.sigma_hat, &c.sigma_hat) <= 1e-10);
        let (ua, ca) = (DMatrix::from_column_slice(spec.p(), 1, u.a_hat.as_slice()), DMatrix::from_column_slice(spec.p(), 1, c.a_hat.as_slice()));
        prop_assert!(max_rel(&ua, &ca) <= 1e-10);
    }

    #[test]
    fn usual_fit_is_equivariant_under_relabelling(
        spec in stable_spec(3, 2),
        seed in any::<u64>(),
        t in prop::collection::vec(-1.0..1.0f64, 9),
    ) {
        let p = spec.p();
        let pm = DMatrix::from_row_slice(p, p, &t[..p * p]) + DMatrix::identity(p, p) * 1.5;
        prop_assume!(pm.determinant().abs() > 0.2);
        let (_, observed) = simulate(&spec, &ErrorSpec::zero(p), 150, seed, 20).unwrap();
        let moved = TimeSeriesMatrix::unnamed(observed.values() * pm.transpose()).unwrap();
        let base = fit_usual(&observed, spec.r()).unwrap();
        let fit = fit_usual(&moved, spec.r()).unwrap();
        let pinv = pm.clone().try_inverse().unwrap();
        for j in 1..=spec.r() {
            let expected = &pm * base.block(j) * &pinv;
            prop_assert!((fit.block(j) - &expected).abs().max() <= 1e-8 * (1.0 + expected.abs().max()));
        }
    }

    #[test]
    fn residuals_follow_their_definition((spec, err) in spec_with_error(3, 3), seed in any::<u64>()) {
        prop_assume!(!err.is_zero());
        let (_, observed) = simulate(&spec, &err, 200, seed, 20).unwrap();
        let Ok(fit) = fit_corrected(&observed, spec.r(), &err) else { return Ok(()); };
        let (p, r) = (spec.p(), spec.r());
        let z = observed.values();
        for (i, t) in (r..observed.n()).enumerate() {
            let lagged = DVector::from_fn(p * r, |k, _| z[(t - 1 - k / p, k % p)]);
            let expected = z.row(t).transpose() - &fit.a_hat - &fit.b_hat * lagged;
            prop_assert_eq!(fit.residuals.row(i).transpose(), expected);
        }
    }
}

#[test]
fn zero_noise_limit_is_the_true_coefficients() {
    let (spec, _) = section3(0.2, -0.2);
    let plim = ols_probability_limit(&spec, &ErrorSpec::zero(2)).unwrap();
    assert!((plim - spec.coefficients()).abs().max() <= 1e-12);
}

#[test]
fn usual_fit_on_long_path_reaches_its_limit() {
    let (spec, err) = section3(0.2, -0.2);
    let (_, observed) = simulate(&spec, &err, 1_000_000, 3, 1000).unwrap();
    let fit = fit_usual(&observed, 1).unwrap();
    let plim = ols_probability_limit(&spec, &err).unwrap();
    assert!(
        (&fit.b_hat - &plim).abs().max() <= 0.01,
        "{} vs {plim}",
        fit.b_hat
    );
}
