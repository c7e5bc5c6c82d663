use nalgebra::DMatrix;
use proptest::prelude::*;

use shrinkfit::density::projection_pa;
use shrinkfit::fitters::{adm_equal_shrinkage, exact_equal_moments, fit_adm_equal, fit_reml};
use shrinkfit::specfun::{chi2_cdf, chi2_sf};
use shrinkfit::{fit, random_effects, FitMethod, PriorSpec, TwoLevelData};

fn dataset() -> impl Strategy<Value = TwoLevelData> {
    (5usize..16, 0usize..3)
        .prop_flat_map(|(k, r)| {
            (
                prop::collection::vec(-6.0..6.0f64, k),
                prop::collection::vec(0.1..8.0f64, k),
                Just(r),
            )
        })
        .prop_map(|(y, v, r)| {
            let k = y.len();
            let x = (r > 0).then(|| DMatrix::from_fn(k, r, |i, j| if j == 0 { 1.0 } else { (i as f64).sqrt() }));
            TwoLevelData::new(y, v, x).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shrinkage_in_unit_interval_and_ordered_by_variance(data in dataset()) {
        let prior = PriorSpec::shp();
        for method in FitMethod::ALL {
            let shr = fit(&data, &prior, method).unwrap();
            for (i, &b) in shr.b_hat.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&b), "{method} B̂ = {b}");
                for (j, &bj) in shr.b_hat.iter().enumerate() {
                    if data.v()[i] < data.v()[j] {
                        prop_assert!(b <= bj);
                    }
                }
            }
            prop_assert!(shr.v.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn random_effects_are_convex_and_dominate_plug_in(data in dataset()) {
        let prior = PriorSpec::shp();
        let shr = fit(&data, &prior, FitMethod::Adm).unwrap();
        let re = random_effects(&data, &prior, &shr, 1.96).unwrap();
        let p = if data.r() > 0 { projection_pa(shr.a_hat, &data).unwrap().1 } else { vec![0.0; data.k()] };
        for i in 0..data.k() {
            let yhat = if data.r() > 0 { data.fitted(i, &re.beta_hat) } else { 0.0 };
            let (lo, hi) = (data.y()[i].min(yhat), data.y()[i].max(yhat));
            prop_assert!(re.theta_hat[i] >= lo - 1e-12 && re.theta_hat[i] <= hi + 1e-12);
            let plug = data.v()[i] * (1.0 - shr.b_hat[i]) * (1.0 - p[i]);
            prop_assert!(re.s2[i] >= plug - 1e-12);
            prop_assert!(re.lo[i] <= re.theta_hat[i] && re.theta_hat[i] <= re.hi[i]);
        }
    }

    #[test]
    fn fits_are_deterministic(data in dataset()) {
        let prior = PriorSpec::shp();
        for method in FitMethod::ALL {
            prop_assert_eq!(fit(&data, &prior, method).unwrap(), fit(&data, &prior, method).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reml_below_adm_with_equal_variances(
        y in prop::collection::vec(-5.0..5.0f64, 4..30),
        v in 0.05..5.0f64,
        intercept: bool,
    ) {
        let k = y.len();
        let data = if intercept {
            TwoLevelData::intercept_only(y, vec![v; k]).unwrap()
        } else {
            TwoLevelData::new(y, vec![v; k], None).unwrap()
        };
        let prior = PriorSpec::shp();
        let adm = fit_adm_equal(&data, &prior).unwrap();
        let reml = fit_reml(&data, &prior).unwrap();
        prop_assert!(reml.a_hat <= adm.a_hat);
        // ADM cap 1 − c/(m+1)
        let m = (k as f64 - data.r() as f64 - 2.0) / 2.0;
        prop_assert!(adm.b_hat[0] <= 1.0 - 1.0 / (m + 1.0) + 1e-15);
    }

    #[test]
    fn adm_equal_nonincreasing_in_t(t in 0.0..200.0f64, dt in 0.0..50.0f64, m in 0.5..30.0f64, half: bool) {
        let c = if half { 0.5 } else { 1.0 };
        prop_assert!(adm_equal_shrinkage(t + dt, m, c) <= adm_equal_shrinkage(t, m, c) + 1e-15);
    }

    #[test]
    fn exact_moments_are_a_distribution_on_unit_interval(t in 0.0..300.0f64, m in 0.5..40.0f64) {
        let (b, v) = exact_equal_moments(t, m).unwrap();
        prop_assert!(b > 0.0 && b < 1.0);
        prop_assert!(v >= 0.0 && v <= b * (1.0 - b));
        prop_assert!(b <= m / (m + 1.0) + 1e-12);
    }

    #[test]
    fn chi_square_tails_complement(x in 0.0..500.0f64, dof in 0.5..300.0f64) {
        let p = chi2_cdf(x, dof).unwrap().value();
        let q = chi2_sf(x, dof).unwrap().value();
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
        prop_assert!((p + q - 1.0).abs() < 1e-12);
    }
}
