//! The four estimation methods producing a [`ShrinkagePosterior`].
//!
//! * ADM: Beta approximation to the posterior of each `B_i`, from the maximizer
//!   and curvature of the `A`-adjusted log posterior in `α = log A`.
//! * MLE / REML: plug-in maximizers of the (profile / restricted) likelihood,
//!   with `v_i = 0`.
//! * Exact: posterior moments of `B_i`, in closed form for equal variances and
//!   `c = 1`, by adaptive quadrature over `α` otherwise.
//!
//! Every fitter that has an equal-variance closed form also has a general
//! numerical path; [`fit`] dispatches to the closed form when it applies.

pub mod optimize;
pub mod quadrature;

use thiserror::Error;

use crate::density::{equal_variance_inv_info, AdjustedLogDensity, MarginalEval, MarginalModel};
use crate::model::{validate, FitMethod, ModelError, PriorSpec, ShrinkagePosterior, TwoLevelData};
use crate::specfun::{ln_confluent_m, SpecialError};
use optimize::{bracket_max, brent_max, polish_stationary, Bracket};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("OptimizerNoBracket: no finite maximizer within the search range (is c too large for k − r?)")]
    OptimizerNoBracket,
    #[error("NonconcaveAtMax: invariant information {0} is not positive")]
    NonconcaveAtMax(f64),
    #[error("NonintegrablePosterior: posterior of A does not integrate (k − r ≤ 2c)")]
    NonintegrablePosterior,
    #[error("SingularNormalEquations: X'D⁻¹X is not positive definite")]
    SingularNormalEquations,
    #[error("RequiresEqualVariances: closed form needs V_1 = … = V_k")]
    RequiresEqualVariances,
    #[error("RequiresUnitC: closed-form exact moments need c = 1")]
    RequiresUnitC,
    #[error("QuadratureFailed: adaptive quadrature did not reach tolerance")]
    QuadratureFailed,
}

impl FitError {
    /// Stable variant name, as printed by the command line.
    pub fn name(&self) -> &'static str {
        match self {
            FitError::Model(e) => e.name(),
            FitError::Special(SpecialError::Domain(_)) => "SpecialFunctionDomain",
            FitError::Special(SpecialError::NoConvergence) => "SpecialFunctionNoConvergence",
            FitError::OptimizerNoBracket => "OptimizerNoBracket",
            FitError::NonconcaveAtMax(_) => "NonconcaveAtMax",
            FitError::NonintegrablePosterior => "NonintegrablePosterior",
            FitError::SingularNormalEquations => "SingularNormalEquations",
            FitError::RequiresEqualVariances => "RequiresEqualVariances",
            FitError::RequiresUnitC => "RequiresUnitC",
            FitError::QuadratureFailed => "QuadratureFailed",
        }
    }
}

/// Brent stopping tolerance on `α`.
const ALPHA_TOL: f64 = 1e-10;

/// MLE/REML maximizers below `V̄ · BOUNDARY_RTOL` are reported as `A = 0`.
const BOUNDARY_RTOL: f64 = 1e-10;

/// Fits `data` by `method`, validating first and using closed forms when the
/// variances are equal.
pub fn fit(data: &TwoLevelData, prior: &PriorSpec, method: FitMethod) -> Result<ShrinkagePosterior, FitError> {
    validate(data, prior, method)?;
    let equal = data.equal_variance().is_some();
    match method {
        FitMethod::Adm if equal => fit_adm_equal(data, prior),
        FitMethod::Adm => fit_adm_general(data, prior),
        FitMethod::Mle => fit_mle(data, prior),
        FitMethod::Reml => fit_reml(data, prior),
        FitMethod::Exact if equal && prior.c == 1.0 => fit_exact_equal(data, prior),
        FitMethod::Exact => fit_exact_quadrature(data, prior),
    }
}

/// Residual sum of squares about the known means (`r = 0`) or the OLS fit.
pub fn residual_sum_of_squares(data: &TwoLevelData, prior: &PriorSpec) -> Result<f64, FitError> {
    // with equal weights the WLS fit at any A is OLS
    let ev = MarginalModel::new(data, prior).eval(0.0)?;
    Ok(ev.residuals.iter().map(|e| e * e).sum())
}

/// Sufficient statistics of the equal-variance case: `(V, T = S₊/2V, m = (k−r−2)/2)`.
fn equal_variance_stats(data: &TwoLevelData, prior: &PriorSpec) -> Result<(f64, f64, f64), FitError> {
    let v = data.equal_variance().ok_or(FitError::RequiresEqualVariances)?;
    let s = residual_sum_of_squares(data, prior)?;
    let m = (data.k() as f64 - data.r() as f64 - 2.0) / 2.0;
    Ok((v, s / (2.0 * v), m))
}

/// Positive root `Â/V` of `(m+1−c)A² − (2c+T−m−1)VA − cV² = 0`, in a form
/// free of cancellation for either sign of the linear coefficient.
pub fn adm_equal_a_over_v(t: f64, m: f64, c: f64) -> f64 {
    let lead = m + 1.0 - c;
    let lin = 2.0 * c + t - m - 1.0;
    let disc = (lin * lin + 4.0 * lead * c).sqrt();
    if lin >= 0.0 {
        (lin + disc) / (2.0 * lead)
    } else {
        2.0 * c / (disc - lin)
    }
}

/// ADM shrinkage in the equal-variance case:
/// `B̂ = 2(m−c+1) / (T + m + 1 + √((T−m−1)² + 4cT))`.
pub fn adm_equal_shrinkage(t: f64, m: f64, c: f64) -> f64 {
    2.0 * (m - c + 1.0) / (t + m + 1.0 + ((t - m - 1.0).powi(2) + 4.0 * c * t).sqrt())
}

/// ADM Beta variance in the equal-variance case.
pub fn adm_equal_variance(b: f64, m: f64, c: f64) -> f64 {
    (b * (1.0 - b)).powi(2) / (m * (1.0 - b).powi(2) + (1.0 - c) + (2.0 * c - 1.0) * b)
}

fn posterior_from_a(
    method: FitMethod,
    data: &TwoLevelData,
    a_hat: f64,
    inv_info: f64,
    beta: bool,
    boundary: bool,
) -> ShrinkagePosterior {
    let b_hat: Vec<f64> = data.v().iter().map(|&vi| vi / (vi + a_hat)).collect();
    let (v, a1, a0) = if beta {
        let v = b_hat
            .iter()
            .map(|&b| (b * (1.0 - b)).powi(2) / (inv_info + b * (1.0 - b)))
            .collect();
        let a1 = b_hat.iter().map(|&b| inv_info / (1.0 - b)).collect();
        let a0 = b_hat.iter().map(|&b| inv_info / b).collect();
        (v, Some(a1), Some(a0))
    } else {
        (vec![0.0; data.k()], None, None)
    };
    ShrinkagePosterior {
        method,
        a_hat,
        inv_info,
        b_hat,
        v,
        a1,
        a0,
        boundary,
    }
}

/// ADM in closed form for equal variances.
pub fn fit_adm_equal(data: &TwoLevelData, prior: &PriorSpec) -> Result<ShrinkagePosterior, FitError> {
    let (v, t, m) = equal_variance_stats(data, prior)?;
    let c = prior.c;
    if !(m + 1.0 - c > 0.0) {
        return Err(FitError::OptimizerNoBracket);
    }
    let a_hat = v * adm_equal_a_over_v(t, m, c);
    let b = v / (v + a_hat);
    let info = equal_variance_inv_info(m, b, c);
    if !(info > 0.0) {
        return Err(FitError::NonconcaveAtMax(info));
    }
    Ok(posterior_from_a(FitMethod::Adm, data, a_hat, info, true, false))
}

/// Depends only on `k`, `r` and the V's, used as the α search start.
fn start_alpha(data: &TwoLevelData, prior: &PriorSpec) -> Result<f64, FitError> {
    let vbar = data.mean_variance();
    let dof = (data.k() - data.r()).max(1) as f64;
    let a_unb = residual_sum_of_squares(data, prior)? / dof - vbar;
    Ok(a_unb.max(vbar / 10.0).max(vbar * 1e-12).ln())
}

struct Maximum {
    alpha: f64,
}

/// Walks, brackets, maximizes and then polishes on the analytic score.
fn maximize_alpha<F, S>(f: &F, score: &S, start: f64, floor: f64, ceil: f64) -> Result<Result<Maximum, Bracket>, FitError>
where
    F: Fn(f64) -> Result<f64, FitError>,
    S: Fn(f64) -> Result<f64, FitError>,
{
    match bracket_max(f, start, floor, ceil)? {
        Bracket::Interior { lo, mid, hi } => {
            let (x, _) = brent_max(f, lo, mid, hi, ALPHA_TOL)?;
            let polished = polish_stationary(score, x)?;
            // keep the refinement only if it stays inside the bracket
            let alpha = if polished > lo && polished < hi { polished } else { x };
            Ok(Ok(Maximum { alpha }))
        }
        other => Ok(Err(other)),
    }
}

/// Search window for `α`, relative to the data scale.
fn alpha_limits(data: &TwoLevelData, prior: &PriorSpec) -> Result<(f64, f64), FitError> {
    let vbar = data.mean_variance();
    let scale = vbar + residual_sum_of_squares(data, prior)?;
    Ok((vbar.ln() - 200.0, scale.ln() + 60.0))
}

/// ADM by numerical maximization of `ℓ(α)`; any variances, any `r`.
pub fn fit_adm_general(data: &TwoLevelData, prior: &PriorSpec) -> Result<ShrinkagePosterior, FitError> {
    let dens = AdjustedLogDensity::new(data, prior);
    let (floor, ceil) = alpha_limits(data, prior)?;
    let start = start_alpha(data, prior)?;
    let value = |a: f64| dens.value(a);
    let score = |a: f64| dens.score(a);
    let max = maximize_alpha(&value, &score, start, floor, ceil)?.map_err(|_| FitError::OptimizerNoBracket)?;
    let info = dens.neg_d2_numeric(max.alpha)?;
    if !(info > 0.0) {
        return Err(FitError::NonconcaveAtMax(info));
    }
    Ok(posterior_from_a(FitMethod::Adm, data, max.alpha.exp(), info, true, false))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Likelihood {
    Profile,
    Restricted,
}

impl Likelihood {
    fn value(self, ev: &MarginalEval) -> f64 {
        match self {
            Likelihood::Profile => ev.profile_loglik(),
            Likelihood::Restricted => ev.restricted_loglik(),
        }
    }

    fn score(self, ev: &MarginalEval) -> f64 {
        match self {
            Likelihood::Profile => ev.profile_score(),
            Likelihood::Restricted => ev.restricted_score(),
        }
    }
}

/// Maximizes a likelihood in `A ≥ 0`, detecting the `A = 0` boundary.
fn fit_plug_in(
    data: &TwoLevelData,
    prior: &PriorSpec,
    lik: Likelihood,
    method: FitMethod,
) -> Result<ShrinkagePosterior, FitError> {
    let model = MarginalModel::new(data, prior);
    let vbar = data.mean_variance();
    let value = |alpha: f64| Ok(lik.value(&model.eval(alpha.exp())?));
    let score = |alpha: f64| {
        let a = alpha.exp();
        Ok(a * lik.score(&model.eval(a)?))
    };
    let floor = (vbar * 1e-12).ln();
    let (_, ceil) = alpha_limits(data, prior)?;
    let start = start_alpha(data, prior)?;
    let at_zero = lik.value(&model.eval(0.0)?);

    let interior = match maximize_alpha(&value, &score, start, floor, ceil)? {
        Ok(max) => Some(max.alpha),
        Err(Bracket::LowerLimit) => None,
        Err(_) => return Err(FitError::OptimizerNoBracket),
    };
    let boundary_fit = || posterior_from_a(method, data, 0.0, 0.0, false, true);
    let Some(alpha) = interior else {
        return Ok(boundary_fit());
    };
    let a_hat = alpha.exp();
    if a_hat < vbar * BOUNDARY_RTOL || at_zero >= value(alpha)? {
        return Ok(boundary_fit());
    }
    // observed information in α, for reporting only
    let h = 1e-4 * alpha.abs().max(1.0);
    let info = -(-score(alpha + 2.0 * h)? + 8.0 * score(alpha + h)? - 8.0 * score(alpha - h)? + score(alpha - 2.0 * h)?)
        / (12.0 * h);
    Ok(posterior_from_a(method, data, a_hat, info.max(0.0), false, false))
}

/// Plug-in fit from a closed-form `Â`, boundary when `Â = 0`.
fn closed_form_plug_in(method: FitMethod, data: &TwoLevelData, v: f64, s: f64, dof: f64) -> ShrinkagePosterior {
    let a = s / dof - v;
    if a <= 0.0 {
        return posterior_from_a(method, data, 0.0, 0.0, false, true);
    }
    // −d²/dα² of −(dof/2)log(V+A) − S/(2(V+A)) at its maximizer
    let b = v / (v + a);
    let info = 0.5 * dof * (1.0 - b).powi(2);
    posterior_from_a(method, data, a, info, false, false)
}

/// Maximum likelihood: `L₀(A)` when `r = 0`, the profile likelihood with
/// `β = β̂_A` substituted when `r ≥ 1`.
pub fn fit_mle(data: &TwoLevelData, prior: &PriorSpec) -> Result<ShrinkagePosterior, FitError> {
    if let Some(v) = data.equal_variance() {
        let s = residual_sum_of_squares(data, prior)?;
        return Ok(closed_form_plug_in(FitMethod::Mle, data, v, s, data.k() as f64));
    }
    fit_mle_general(data, prior)
}

/// Numerical MLE path, for any variances.
pub fn fit_mle_general(data: &TwoLevelData, prior: &PriorSpec) -> Result<ShrinkagePosterior, FitError> {
    fit_plug_in(data, prior, Likelihood::Profile, FitMethod::Mle)
}

/// REML: maximizes `p(A | y)` under flat priors on `β` and `A`, without the
/// `A` multiplier.
pub fn fit_reml(data: &TwoLevelData, prior: &PriorSpec) -> Result<ShrinkagePosterior, FitError> {
    if let Some(v) = data.equal_variance() {
        let s = residual_sum_of_squares(data, prior)?;
        let dof = (data.k() - data.r()) as f64;
        return Ok(closed_form_plug_in(FitMethod::Reml, data, v, s, dof));
    }
    fit_reml_general(data, prior)
}

/// Numerical REML path, for any variances.
pub fn fit_reml_general(data: &TwoLevelData, prior: &PriorSpec) -> Result<ShrinkagePosterior, FitError> {
    fit_plug_in(data, prior, Likelihood::Restricted, FitMethod::Reml)
}

/// Exact posterior mean and variance of `B` for equal variances and `c = 1`,
/// as functions of `T = S₊/2V` and `m = (k−r−2)/2`.
///
/// The posterior of `B` is `∝ B^{m−1} e^{−TB}` on `[0, 1]`, so
/// `E[B] = (m/T)(1 − 1/M_m(T)) = m/(m+1) · M_{m+1}(T)/M_m(T)` and
/// `E[B²] = m/(m+2) · M_{m+2}(T)/M_m(T)`; the ratio forms stay finite as `T → 0`.
pub fn exact_equal_moments(t: f64, m: f64) -> Result<(f64, f64), FitError> {
    let l0 = ln_confluent_m(m, t)?;
    let l1 = ln_confluent_m(m + 1.0, t)?;
    let l2 = ln_confluent_m(m + 2.0, t)?;
    let mean = m / (m + 1.0) * (l1 - l0).exp();
    let second = m / (m + 2.0) * (l2 - l0).exp();
    let var = (second - mean * mean).max(0.0);
    Ok((mean, var))
}

/// Exact Bayes for equal variances and `c = 1`.
///
/// `a_hat` is the value implied by `B̂ = V/(V + Â)`; `inv_info` is the
/// curvature of the log posterior of `α` at its mode.
pub fn fit_exact_equal(data: &TwoLevelData, prior: &PriorSpec) -> Result<ShrinkagePosterior, FitError> {
    if prior.c != 1.0 {
        return Err(FitError::RequiresUnitC);
    }
    let (v, t, m) = equal_variance_stats(data, prior)?;
    let (b, var) = exact_equal_moments(t, m)?;
    let k = data.k();
    Ok(ShrinkagePosterior {
        method: FitMethod::Exact,
        a_hat: v * (1.0 - b) / b,
        inv_info: equal_variance_inv_info(m, adm_equal_shrinkage(t, m, 1.0), 1.0),
        b_hat: vec![b; k],
        v: vec![var; k],
        a1: None,
        a0: None,
        boundary: false,
    })
}

/// Posterior moments of every `B_i` and of `α`, by quadrature over `α`.
#[derive(Debug, Clone)]
pub struct ExactMoments {
    pub mean_b: Vec<f64>,
    pub var_b: Vec<f64>,
    pub mean_alpha: f64,
    pub alpha_mode: f64,
    pub evaluations: usize,
}

/// Quadrature relative tolerance per moment.
const QUAD_RTOL: f64 = 1e-11;

/// Integrates `B_i(α)^j exp(ℓ(α) − ℓ(α̂))` over `α`; the adjusted density in
/// `α` is the posterior density of `α` (the `dA = A dα` Jacobian and the
/// `A` adjustment coincide).
pub fn exact_moments_quadrature(data: &TwoLevelData, prior: &PriorSpec) -> Result<ExactMoments, FitError> {
    let k = data.k();
    let r = data.r();
    if !((k as f64 - r as f64) > 2.0 * prior.c) {
        return Err(FitError::NonintegrablePosterior);
    }
    let dens = AdjustedLogDensity::new(data, prior);
    let (floor, ceil) = alpha_limits(data, prior)?;
    let start = start_alpha(data, prior)?;
    let value = |a: f64| dens.value(a);
    let score = |a: f64| dens.score(a);
    let mode = maximize_alpha(&value, &score, start, floor, ceil)?
        .map_err(|_| FitError::NonintegrablePosterior)?
        .alpha;
    let peak = dens.value(mode)?;

    // Stop where the density has fallen by e^-60 on both sides.
    const DROP: f64 = 60.0;
    let find_edge = |dir: f64| -> Result<f64, FitError> {
        let mut step = 1.0;
        let mut x = mode;
        for _ in 0..10_000 {
            x += dir * step;
            if dens.value(x)? < peak - DROP {
                return Ok(x);
            }
            step = (step * 1.5).min(20.0);
        }
        Err(FitError::NonintegrablePosterior)
    };
    let lo = find_edge(-1.0)?;
    let hi = find_edge(1.0)?;

    // distinct variances share their moments
    let mut distinct: Vec<f64> = Vec::new();
    let index: Vec<usize> = data
        .v()
        .iter()
        .map(|&vi| match distinct.iter().position(|&d| d == vi) {
            Some(j) => j,
            None => {
                distinct.push(vi);
                distinct.len() - 1
            }
        })
        .collect();
    let nd = distinct.len();
    let dim = 2 + 2 * nd;
    let integrand = |alpha: f64, out: &mut [f64]| -> Result<(), FitError> {
        let w = (dens.value(alpha)? - peak).exp();
        out[0] = w;
        // shifted to stay positive, so relative tolerances apply
        out[1] = w * (alpha - lo + 1.0);
        let a = alpha.exp();
        for (j, &vj) in distinct.iter().enumerate() {
            let b = vj / (vj + a);
            out[2 + 2 * j] = w * b;
            out[3 + 2 * j] = w * b * b;
        }
        Ok(())
    };
    let pieces = ((hi - lo) / 2.0).ceil().max(4.0) as usize;
    let res = quadrature::integrate(integrand, lo, hi, dim, pieces, QUAD_RTOL, 1e-300, 20_000)?;
    if !res.converged {
        return Err(FitError::QuadratureFailed);
    }
    let z = res.value[0];
    let mut mean_d = Vec::with_capacity(nd);
    let mut var_d = Vec::with_capacity(nd);
    for j in 0..nd {
        let m1 = res.value[2 + 2 * j] / z;
        let m2 = res.value[3 + 2 * j] / z;
        mean_d.push(m1);
        var_d.push((m2 - m1 * m1).max(0.0));
    }
    Ok(ExactMoments {
        mean_b: index.iter().map(|&j| mean_d[j]).collect(),
        var_b: index.iter().map(|&j| var_d[j]).collect(),
        mean_alpha: res.value[1] / z + lo - 1.0,
        alpha_mode: mode,
        evaluations: res.evaluations,
    })
}

/// Exact Bayes by quadrature; any variances, any `r`, any `c`.
///
/// Unequal variances admit no single `A` with `E[B_i] = V_i/(V_i + A)` for
/// all `i`; `a_hat` reports `exp(E[α | y])`, which is what the random-effect
/// step uses for `β̂` and `P`.
pub fn fit_exact_quadrature(data: &TwoLevelData, prior: &PriorSpec) -> Result<ShrinkagePosterior, FitError> {
    let mom = exact_moments_quadrature(data, prior)?;
    let inv_info = AdjustedLogDensity::new(data, prior).neg_d2_numeric(mom.alpha_mode)?;
    Ok(ShrinkagePosterior {
        method: FitMethod::Exact,
        a_hat: mom.mean_alpha.exp(),
        inv_info,
        b_hat: mom.mean_b,
        v: mom.var_b,
        a1: None,
        a0: None,
        boundary: false,
    })
}

/// Derivatives in `B` of an adjusted log density `ℓ(B) = log(B(1−B) f(B))`.
pub trait ShrinkageLogDensity {
    fn d1(&self, b: f64) -> Result<f64, FitError>;
    fn d2(&self, b: f64) -> Result<f64, FitError>;
}

/// Beta approximation to a density on `[0, 1]` produced by ADM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaApprox {
    pub mean: f64,
    pub variance: f64,
    pub inv_info: f64,
    pub a1: f64,
    pub a0: f64,
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Fits a Beta by ADM on the logit scale.
///
/// With `u = logit(B)`, `dℓ/du = B(1−B)ℓ'(B)` and
/// `d²ℓ/du² = B²(1−B)²ℓ''(B) + B(1−B)(1−2B)ℓ'(B)`; `B̂` solves `dℓ/du = 0`,
/// `inv.info = −d²ℓ/du²`, and `Var(B) ≈ (B̂(1−B̂))² / (inv.info + B̂(1−B̂))`.
pub fn adm_beta_approx<D: ShrinkageLogDensity>(density: &D) -> Result<BetaApprox, FitError> {
    let score = |u: f64| -> Result<f64, FitError> {
        let b = logistic(u);
        Ok(b * (1.0 - b) * density.d1(b)?)
    };
    // ℓ is concave for the targets of interest: walk until the score changes sign
    let s0 = score(0.0)?;
    let dir = if s0 > 0.0 { 1.0 } else { -1.0 };
    let mut prev = 0.0;
    let mut step = 1.0;
    let mut root = None;
    if s0 == 0.0 {
        root = Some(0.0);
    }
    while root.is_none() && step < 1e3 {
        let next = prev + dir * step;
        if score(next)?.signum() != dir {
            let (lo, hi) = if dir > 0.0 { (prev, next) } else { (next, prev) };
            root = optimize::brent_root(&score, lo, hi, 0.0)?;
            break;
        }
        prev = next;
        step *= 2.0;
    }
    let u = root.ok_or(FitError::OptimizerNoBracket)?;
    let b = logistic(u);
    let bb = b * (1.0 - b);
    let inv_info = -(bb * bb * density.d2(b)? + bb * (1.0 - 2.0 * b) * density.d1(b)?);
    if !(inv_info > 0.0) {
        return Err(FitError::NonconcaveAtMax(inv_info));
    }
    Ok(BetaApprox {
        mean: b,
        variance: bb * bb / (inv_info + bb),
        inv_info,
        a1: inv_info / (1.0 - b),
        a0: inv_info / b,
    })
}

/// An exact `Beta(a1, a0)` density: `ℓ(B) = a1 log B + a0 log(1−B)`.
#[derive(Debug, Clone, Copy)]
pub struct ExactBeta {
    pub a1: f64,
    pub a0: f64,
}

impl ShrinkageLogDensity for ExactBeta {
    fn d1(&self, b: f64) -> Result<f64, FitError> {
        Ok(self.a1 / b - self.a0 / (1.0 - b))
    }

    fn d2(&self, b: f64) -> Result<f64, FitError> {
        Ok(-self.a1 / (b * b) - self.a0 / ((1.0 - b) * (1.0 - b)))
    }
}

/// The posterior of one unit's shrinkage `B_i`, adjusted by `B_i(1−B_i)`.
///
/// `ℓ(B_i) = log(A π(A) L(A))` at `A = V_i(1−B_i)/B_i`; `ℓ'` is analytic via
/// the `α` score, `ℓ''` is a central difference of `ℓ'`.
pub struct UnitShrinkageDensity<'a> {
    density: AdjustedLogDensity<'a>,
    v_i: f64,
}

impl<'a> UnitShrinkageDensity<'a> {
    pub fn new(data: &'a TwoLevelData, prior: &PriorSpec, unit: usize) -> Self {
        UnitShrinkageDensity {
            density: AdjustedLogDensity::new(data, prior),
            v_i: data.v()[unit],
        }
    }

    fn alpha(&self, b: f64) -> f64 {
        self.v_i.ln() + (1.0 - b).ln() - b.ln()
    }
}

impl ShrinkageLogDensity for UnitShrinkageDensity<'_> {
    fn d1(&self, b: f64) -> Result<f64, FitError> {
        // dα/dB = −1/(B(1−B))
        Ok(-self.density.score(self.alpha(b))? / (b * (1.0 - b)))
    }

    fn d2(&self, b: f64) -> Result<f64, FitError> {
        let h = 1e-5 * b.min(1.0 - b);
        Ok((-self.d1(b + 2.0 * h)? + 8.0 * self.d1(b + h)? - 8.0 * self.d1(b - h)? + self.d1(b - 2.0 * h)?)
            / (12.0 * h))
    }
}
