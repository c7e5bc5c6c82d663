//! Posterior means, variances and Normal intervals for the random effects.

use crate::density::MarginalModel;
use crate::fitters::FitError;
use crate::model::{PriorSpec, RandomEffectPosterior, ShrinkagePosterior, TwoLevelData};

/// Nominal 95% two-sided Normal quantile.
pub const DEFAULT_Z_STAR: f64 = 1.96;

/// Mean and variance of a Normal law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalLaw {
    pub mean: f64,
    pub variance: f64,
}

/// `θ | y, μ, A ~ N((1−B) y + B μ, V(1−B))` with `B = V/(V+A)`.
pub fn theta_law(y: f64, v: f64, mu: f64, a: f64) -> NormalLaw {
    if a.is_infinite() {
        return NormalLaw { mean: y, variance: v };
    }
    let b = v / (v + a);
    NormalLaw {
        mean: (1.0 - b) * y + b * mu,
        variance: v * (1.0 - b),
    }
}

/// Conditional law of `θ_i` given `y_i`, `β` and `A`; `beta` is empty when `r = 0`
/// and the mean shrinks toward zero.
pub fn conditional_theta_law(data: &TwoLevelData, i: usize, beta: &[f64], a: f64) -> NormalLaw {
    theta_law(data.y()[i], data.v()[i], data.fitted(i, beta), a)
}

/// Random-effect moments from a shrinkage fit:
///
/// ```text
/// θ̂_i  = (1 − B̂_i) y_i + B̂_i ŷ_i
/// s_i² = (1 − (1 − p_ii) B̂_i) V_i + v_i (y_i − ŷ_i)²
/// ```
///
/// with `ŷ = Xβ̂_Â` and `p_ii` the diagonal of `P_Â` when `r ≥ 1`, or
/// `ŷ_i = μ_i` and `p_ii = 0` when `r = 0`. Intervals are `θ̂_i ± z* s_i`.
pub fn random_effects(
    data: &TwoLevelData,
    prior: &PriorSpec,
    shr: &ShrinkagePosterior,
    z_star: f64,
) -> Result<RandomEffectPosterior, FitError> {
    let k = data.k();
    let (beta_hat, fitted, leverage) = if data.r() == 0 {
        let mu: Vec<f64> = (0..k).map(|i| data.known_mean(prior, i)).collect();
        (Vec::new(), mu, vec![0.0; k])
    } else {
        let ev = MarginalModel::new(data, prior).eval(shr.a_hat)?;
        let fitted = data.y().iter().zip(&ev.residuals).map(|(y, e)| y - e).collect();
        (ev.beta, fitted, ev.leverage)
    };
    let mut theta_hat = Vec::with_capacity(k);
    let mut s2 = Vec::with_capacity(k);
    let mut lo = Vec::with_capacity(k);
    let mut hi = Vec::with_capacity(k);
    for i in 0..k {
        let y = data.y()[i];
        let vi = data.v()[i];
        let b = shr.b_hat[i];
        let resid: f64 = y - fitted[i];
        let t = (1.0 - b) * y + b * fitted[i];
        let var = ((1.0 - (1.0 - leverage[i]) * b) * vi + shr.v[i] * resid * resid).max(0.0);
        let half = z_star * var.sqrt();
        theta_hat.push(t);
        s2.push(var);
        lo.push(t - half);
        hi.push(t + half);
    }
    Ok(RandomEffectPosterior {
        theta_hat,
        s2,
        beta_hat,
        z_star,
        lo,
        hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitters::{exact_equal_moments, fit, fit_exact_equal, fit_mle};
    use crate::model::FitMethod;
    use nalgebra::DMatrix;

    const Y10: [f64; 10] = [1.2, -0.7, 0.3, 2.4, -1.9, 0.8, 3.1, -2.2, 0.05, 1.6];

    #[test]
    fn theta_law_limits() {
        let l = theta_law(2.0, 1.5, -1.0, 0.0);
        assert_eq!((l.mean, l.variance), (-1.0, 0.0));
        let l = theta_law(2.0, 1.5, -1.0, f64::INFINITY);
        assert_eq!((l.mean, l.variance), (2.0, 1.5));
        let l = theta_law(2.0, 1.5, -1.0, 1.5);
        assert!((l.mean - 0.5).abs() < 1e-15);
        assert!((l.variance - 0.75).abs() < 1e-15);
    }

    #[test]
    fn conditional_law_uses_fitted_mean() {
        let data = TwoLevelData::intercept_only(Y10.to_vec(), vec![2.0; 10]).unwrap();
        let l = conditional_theta_law(&data, 3, &[0.5], 2.0);
        assert!((l.mean - (0.5 * 2.4 + 0.5 * 0.5)).abs() < 1e-15);
        assert!((l.variance - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mle_boundary_gives_zero_width_intervals() {
        let data = TwoLevelData::new(vec![0.8f64.sqrt(); 10], vec![1.0; 10], None).unwrap();
        let prior = PriorSpec::shp();
        let shr = fit_mle(&data, &prior).unwrap();
        assert!(shr.boundary);
        let re = random_effects(&data, &prior, &shr, DEFAULT_Z_STAR).unwrap();
        assert!(re.s2.iter().all(|&s| s == 0.0));
        assert!(re.lo.iter().zip(&re.hi).all(|(l, h)| l == h));
        assert!(re.theta_hat.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn equal_variance_regression_variance_form() {
        let k = 10;
        let x = DMatrix::from_fn(k, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let v = 0.7;
        let data = TwoLevelData::new(Y10.to_vec(), vec![v; k], Some(x.clone())).unwrap();
        let prior = PriorSpec::shp();
        let shr = fit(&data, &prior, FitMethod::Adm).unwrap();
        let re = random_effects(&data, &prior, &shr, 1.96).unwrap();
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let yv = nalgebra::DVector::from_column_slice(&Y10);
        let beta = &xtx_inv * x.transpose() * &yv;
        for i in 0..k {
            let xi = x.row(i).transpose();
            let h = (xi.transpose() * &xtx_inv * &xi)[(0, 0)];
            let e = Y10[i] - xi.dot(&beta);
            let b = shr.b_hat[i];
            let expected = v * (1.0 - b) + v * h * b + shr.v[i] * e * e;
            assert!((re.s2[i] - expected).abs() < 1e-12);
            assert!((re.hi[i] - re.lo[i] - 2.0 * 1.96 * re.s2[i].sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn plug_in_reduction_when_v_zero() {
        let data = TwoLevelData::intercept_only(Y10.to_vec(), vec![1.0; 10]).unwrap();
        let prior = PriorSpec::shp();
        let mut shr = fit(&data, &prior, FitMethod::Adm).unwrap();
        shr.v = vec![0.0; 10];
        let re = random_effects(&data, &prior, &shr, 1.96).unwrap();
        for i in 0..10 {
            let b = shr.b_hat[i];
            // V(1−B) plus the β-uncertainty term p_ii B V with p_ii = 1/k
            assert!((re.s2[i] - ((1.0 - b) + 0.1 * b)).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_pipeline_reproduces_closed_form_moments() {
        let y: Vec<f64> = Y10.iter().map(|t| t * 0.8).collect();
        let mu = vec![0.25; 10];
        let data = TwoLevelData::new(y.clone(), vec![1.3; 10], None).unwrap();
        let prior = PriorSpec::shp().known_mu(mu.clone());
        let shr = fit_exact_equal(&data, &prior).unwrap();
        let re = random_effects(&data, &prior, &shr, 1.96).unwrap();
        let s: f64 = y.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum();
        let (b, v) = exact_equal_moments(s / 2.6, 4.0).unwrap();
        for i in 0..10 {
            let th = (1.0 - b) * y[i] + b * mu[i];
            let s2 = 1.3 * (1.0 - b) + v * (y[i] - mu[i]).powi(2);
            assert!((re.theta_hat[i] - th).abs() < 1e-10);
            assert!((re.s2[i] - s2).abs() < 1e-10);
        }
    }

    #[test]
    fn theta_hat_is_convex_combination_and_variance_dominates_plug_in() {
        let v: Vec<f64> = (0..10).map(|i| 0.3 + 0.5 * i as f64).collect();
        let data = TwoLevelData::intercept_only(Y10.to_vec(), v.clone()).unwrap();
        let prior = PriorSpec::shp();
        let shr = fit(&data, &prior, FitMethod::Adm).unwrap();
        let re = random_effects(&data, &prior, &shr, 1.96).unwrap();
        let (_, p) = crate::density::projection_pa(shr.a_hat, &data).unwrap();
        let yhat = re.beta_hat[0];
        for i in 0..10 {
            let (lo, hi) = if Y10[i] < yhat { (Y10[i], yhat) } else { (yhat, Y10[i]) };
            assert!(re.theta_hat[i] >= lo - 1e-12 && re.theta_hat[i] <= hi + 1e-12);
            assert!(re.s2[i] >= v[i] * (1.0 - shr.b_hat[i]) * (1.0 - p[i]) - 1e-12);
        }
    }
}
