//! Scalar special functions: regularized incomplete gamma, chi-square and
//! Normal CDFs, and the Beta(1, m) moment generating function `M_m(T)`.
//!
//! All functions are pure and thread-safe.

use thiserror::Error;

const MAX_ITER: usize = 100_000;
const EPS: f64 = f64::EPSILON;
const TINY: f64 = 1e-300;

/// Above this argument `M_m(T)` is assembled in log space.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("series or continued fraction failed to converge")]
    NoConvergence,
}

/// A value in the closed unit interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    /// Clamps tiny excursions from rounding into `[0, 1]`.
    pub fn new(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        Probability(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(x^a e^{-x} / Γ(a))`, the common prefactor of both expansions.
fn ln_prefactor(a: f64, x: f64) -> f64 {
    a * x.ln() - x - ln_gamma(a)
}

/// `Σ_{n≥0} x^n / ((a+1)(a+2)…(a+n))`, i.e. the Kummer function 1F1(1; a+1; x).
///
/// Converges for every finite `x`; fast when `x < a + 1`.
fn kummer_unit_series(a: f64, x: f64) -> Result<f64, SpecialError> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut denom = a;
    for _ in 0..MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term < sum * EPS {
            return Ok(sum);
        }
    }
    Err(SpecialError::NoConvergence)
}

/// Modified Lentz evaluation of the continued fraction for `Q(a, x)`
/// without the prefactor.
fn upper_gamma_cf(a: f64, x: f64) -> Result<f64, SpecialError> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(SpecialError::NoConvergence)
}

fn check_gamma_args(a: f64, x: f64) -> Result<(), SpecialError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(SpecialError::Domain("shape must be positive and finite"));
    }
    if !(x >= 0.0) {
        return Err(SpecialError::Domain("argument must be nonnegative"));
    }
    Ok(())
}

/// Regularized incomplete gamma pair `(P(a, x), Q(a, x))`.
///
/// Series for `x < a + 1`, continued fraction otherwise.
pub fn regularized_gamma(a: f64, x: f64) -> Result<(f64, f64), SpecialError> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    if x < a + 1.0 {
        // P = x^a e^{-x} / Γ(a+1) · 1F1(1; a+1; x)
        let p = (ln_prefactor(a, x) - a.ln()).exp() * kummer_unit_series(a, x)?;
        let p = p.min(1.0);
        Ok((p, 1.0 - p))
    } else {
        let q = (ln_prefactor(a, x) + upper_gamma_cf(a, x)?.ln()).exp();
        let q = q.min(1.0);
        Ok((1.0 - q, q))
    }
}

/// Chi-square CDF `P(χ²_dof ≤ x) = P(dof/2, x/2)`.
pub fn chi2_cdf(x: f64, dof: f64) -> Result<Probability, SpecialError> {
    if !(dof > 0.0) {
        return Err(SpecialError::Domain("degrees of freedom must be positive"));
    }
    if !(x >= 0.0) {
        return Err(SpecialError::Domain("chi-square argument must be nonnegative"));
    }
    let (p, _) = regularized_gamma(dof / 2.0, x / 2.0)?;
    Ok(Probability::new(p))
}

/// Chi-square upper tail `P(χ²_dof > x)`.
pub fn chi2_sf(x: f64, dof: f64) -> Result<Probability, SpecialError> {
    if !(dof > 0.0) {
        return Err(SpecialError::Domain("degrees of freedom must be positive"));
    }
    if !(x >= 0.0) {
        return Err(SpecialError::Domain("chi-square argument must be nonnegative"));
    }
    let (_, q) = regularized_gamma(dof / 2.0, x / 2.0)?;
    Ok(Probability::new(q))
}

/// Standard Normal CDF.
pub fn normal_cdf(z: f64) -> Probability {
    Probability::new(0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2))
}

/// `ln M_m(T)` where `M_m(T) = ∫₀¹ exp((1−B)T) d(B^m)
/// = Γ(m+1) T^{−m} e^T P(χ²_{2m} ≤ 2T)`.
pub fn ln_confluent_m(m: f64, t: f64) -> Result<f64, SpecialError> {
    check_gamma_args(m, t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if t < m + 1.0 {
        return Ok(kummer_unit_series(m, t)?.ln());
    }
    let (p, q) = regularized_gamma(m, t)?;
    let ln_p = if q < 0.5 { (-q).ln_1p() } else { p.ln() };
    Ok(ln_gamma(m + 1.0) - m * t.ln() + t + ln_p)
}

/// The Beta(1, m) moment generating function `M_m(T)`; equals 1 at `T = 0`.
///
/// Returns `+∞` only when the true value exceeds `f64::MAX`.
pub fn confluent_m(m: f64, t: f64) -> Result<f64, SpecialError> {
    check_gamma_args(m, t)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    if t < m + 1.0 {
        return kummer_unit_series(m, t);
    }
    if t > LOG_SPACE_THRESHOLD {
        return Ok(ln_confluent_m(m, t)?.exp());
    }
    let (p, _) = regularized_gamma(m, t)?;
    Ok((ln_gamma(m + 1.0) - m * t.ln()).exp() * t.exp() * p)
}
