//! Deterministic shrinkage curves `B̂(T)` and variances for equal variances,
//! as functions of `T = S₊/2V`.

use serde::{Deserialize, Serialize};

use crate::fitters::{adm_equal_shrinkage, adm_equal_variance, exact_equal_moments, exact_moments_quadrature, FitError};
use crate::model::{PriorSpec, TwoLevelData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub b_exact: f64,
    pub v_exact: f64,
    pub b_adm: f64,
    pub v_adm: f64,
    pub b_mle: f64,
    pub b_reml: f64,
    /// `m/T`, unbounded.
    pub b_js: f64,
}

/// Exact moments at `T` for `k − r` effective units and prior power `c`.
///
/// `c = 1` uses the closed form; other `c` integrate a synthetic `r = 0`
/// dataset of `k − r` units with `V = 1` and `S₊ = 2T`, which has the same
/// posterior of `A`.
pub fn exact_curve_point(k: usize, r: usize, c: f64, t: f64) -> Result<(f64, f64), FitError> {
    let n = k - r;
    let m = (n as f64 - 2.0) / 2.0;
    if c == 1.0 {
        return exact_equal_moments(t, m);
    }
    let y = vec![(2.0 * t / n as f64).sqrt(); n];
    let data = TwoLevelData::new(y, vec![1.0; n], None)?;
    let mom = exact_moments_quadrature(&data, &PriorSpec::with_c(c))?;
    Ok((mom.mean_b[0], mom.var_b[0]))
}

/// Curves for `k` units, `r` covariates and prior power `c` on the given `T` grid.
pub fn shrinkage_curves(k: usize, r: usize, c: f64, t_grid: &[f64]) -> Result<Vec<CurveRow>, FitError> {
    let n = k as f64 - r as f64;
    if !(n > 2.0 * c) || !(c > 0.0) {
        return Err(FitError::NonintegrablePosterior);
    }
    let m = (n - 2.0) / 2.0;
    t_grid
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(FitError::Model(crate::model::ModelError::NonFiniteInput(format!("T = {t}"))));
            }
            let (b_exact, v_exact) = exact_curve_point(k, r, c, t)?;
            let b_adm = adm_equal_shrinkage(t, m, c);
            // MLE: V + Â = S₊/k; REML: V + Â = S₊/(k − r)
            let cap = |dof: f64| if t == 0.0 { 1.0 } else { (dof / (2.0 * t)).min(1.0) };
            Ok(CurveRow {
                t,
                b_exact,
                v_exact,
                b_adm,
                v_adm: adm_equal_variance(b_adm, m, c),
                b_mle: cap(k as f64),
                b_reml: cap(n),
                b_js: if t == 0.0 { f64::INFINITY } else { m / t },
            })
        })
        .collect()
}
