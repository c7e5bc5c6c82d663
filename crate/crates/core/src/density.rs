//! Likelihoods and marginal posteriors of the Level-2 variance `A`.
//!
//! With `D = diag(V_i + A)` and `β` integrated against a flat prior, the log
//! posterior of `α = log A` under `π(A) ∝ A^{c−1}` is
//!
//! ```text
//! ℓ(α) = c·α − ½ Σ log(V_i + A) − ½ log|X'D⁻¹X| − ½ (y − Xβ̂_A)' D⁻¹ (y − Xβ̂_A)
//! ```
//!
//! which is also the log of the `A`-adjusted posterior density of `A`. When
//! `r = 0` the determinant term is absent and residuals are taken about the
//! known means.

use nalgebra::{DMatrix, DVector};

use crate::fitters::FitError;
use crate::model::{PriorSpec, TwoLevelData};

/// Everything that depends on `A` through the weights `w_i = 1/(V_i + A)`.
#[derive(Debug, Clone)]
pub struct MarginalEval {
    pub a: f64,
    pub weights: Vec<f64>,
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Diagonal of `P_A`.
    pub leverage: Vec<f64>,
    /// `Σ log(V_i + A)`.
    pub sum_log: f64,
    /// `log|X'D⁻¹X|`.
    pub log_det: f64,
    /// `(y − Xβ̂_A)' D⁻¹ (y − Xβ̂_A)`.
    pub quad: f64,
}

impl MarginalEval {
    /// `log p(A | y)` under a flat prior on `A` (the REML criterion).
    pub fn restricted_loglik(&self) -> f64 {
        -0.5 * (self.sum_log + self.log_det + self.quad)
    }

    /// Profile log-likelihood with `β = β̂_A` substituted.
    pub fn profile_loglik(&self) -> f64 {
        -0.5 * (self.sum_log + self.quad)
    }

    /// `d/dA` of [`Self::restricted_loglik`].
    pub fn restricted_score(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.weights.len() {
            let w = self.weights[i];
            let e = self.residuals[i];
            s += w * w * e * e - w * (1.0 - self.leverage[i]);
        }
        0.5 * s
    }

    /// `d/dA` of [`Self::profile_loglik`] (envelope theorem in `β`).
    pub fn profile_score(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.weights.len() {
            let w = self.weights[i];
            let e = self.residuals[i];
            s += w * w * e * e - w;
        }
        0.5 * s
    }
}

/// Evaluates the Gaussian marginal of `y` for a fixed dataset at any `A ≥ 0`.
#[derive(Debug, Clone)]
pub struct MarginalModel<'a> {
    data: &'a TwoLevelData,
    target: Vec<f64>,
}

impl<'a> MarginalModel<'a> {
    pub fn new(data: &'a TwoLevelData, prior: &PriorSpec) -> Self {
        MarginalModel {
            data,
            target: data.centered(prior),
        }
    }

    pub fn data(&self) -> &TwoLevelData {
        self.data
    }

    /// Observations after removing known means (`r = 0`), else `y`.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn eval(&self, a: f64) -> Result<MarginalEval, FitError> {
        let data = self.data;
        let k = data.k();
        let r = data.r();
        let weights: Vec<f64> = data.v().iter().map(|&vi| 1.0 / (vi + a)).collect();
        let sum_log = data.v().iter().map(|&vi| (vi + a).ln()).sum();
        if r == 0 {
            let quad = self
                .target
                .iter()
                .zip(&weights)
                .map(|(e, w)| w * e * e)
                .sum();
            return Ok(MarginalEval {
                a,
                weights,
                beta: Vec::new(),
                residuals: self.target.clone(),
                leverage: vec![0.0; k],
                sum_log,
                log_det: 0.0,
                quad,
            });
        }
        let x = data.x();
        let mut xtwx = DMatrix::zeros(r, r);
        let mut xtwy = DVector::zeros(r);
        for i in 0..k {
            let w = weights[i];
            for p in 0..r {
                let wx = w * x[(i, p)];
                xtwy[p] += wx * self.target[i];
                for q in 0..=p {
                    xtwx[(p, q)] += wx * x[(i, q)];
                }
            }
        }
        for p in 0..r {
            for q in 0..p {
                xtwx[(q, p)] = xtwx[(p, q)];
            }
        }
        let chol = xtwx.cholesky().ok_or(FitError::SingularNormalEquations)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d: &f64| d.ln()).sum::<f64>();
        let beta = chol.solve(&xtwy);
        let mut residuals = Vec::with_capacity(k);
        let mut leverage = Vec::with_capacity(k);
        let mut quad = 0.0;
        let l = chol.l();
        for i in 0..k {
            let xi = DVector::from_iterator(r, (0..r).map(|j| x[(i, j)]));
            let e = self.target[i] - xi.dot(&beta);
            quad += weights[i] * e * e;
            residuals.push(e);
            let z = l
                .solve_lower_triangular(&xi)
                .ok_or(FitError::SingularNormalEquations)?;
            leverage.push(weights[i] * z.norm_squared());
        }
        Ok(MarginalEval {
            a,
            weights,
            beta: beta.iter().copied().collect(),
            residuals,
            leverage,
            sum_log,
            log_det,
            quad,
        })
    }
}

/// Log of the `A`-adjusted posterior density as a function of `α = log A`.
#[derive(Debug, Clone)]
pub struct AdjustedLogDensity<'a> {
    model: MarginalModel<'a>,
    c: f64,
}

impl<'a> AdjustedLogDensity<'a> {
    pub fn new(data: &'a TwoLevelData, prior: &PriorSpec) -> Self {
        AdjustedLogDensity {
            model: MarginalModel::new(data, prior),
            c: prior.c,
        }
    }

    pub fn model(&self) -> &MarginalModel<'a> {
        &self.model
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn value(&self, alpha: f64) -> Result<f64, FitError> {
        let ev = self.model.eval(alpha.exp())?;
        Ok(self.c * alpha + ev.restricted_loglik())
    }

    /// Analytic `dℓ/dα = c + A · d log p(A|y) / dA`.
    pub fn score(&self, alpha: f64) -> Result<f64, FitError> {
        let a = alpha.exp();
        let ev = self.model.eval(a)?;
        Ok(self.c + a * ev.restricted_score())
    }

    /// `−d²ℓ/dα²` by a central five-point stencil on the analytic score,
    /// step `1e−4 · max(1, |α|)`.
    pub fn neg_d2_numeric(&self, alpha: f64) -> Result<f64, FitError> {
        let h = 1e-4 * alpha.abs().max(1.0);
        let s = |t: f64| self.score(t);
        let d2 = (-s(alpha + 2.0 * h)? + 8.0 * s(alpha + h)? - 8.0 * s(alpha - h)? + s(alpha - 2.0 * h)?)
            / (12.0 * h);
        Ok(-d2)
    }
}

/// `log L₀(A) = −½ Σ [log(V_i + A) + S_i/(V_i + A)]`, `S_i = (y_i − μ_i)²`.
pub fn loglik_l0(a: f64, data: &TwoLevelData, known_mu: Option<&[f64]>) -> f64 {
    data.y()
        .iter()
        .zip(data.v())
        .enumerate()
        .map(|(i, (&y, &v))| {
            let mu = known_mu.map_or(0.0, |m| m[i]);
            let s = (y - mu) * (y - mu);
            -0.5 * ((v + a).ln() + s / (v + a))
        })
        .sum()
}

/// Weighted least squares `β̂_A = (X'D⁻¹X)⁻¹ X'D⁻¹ y`.
pub fn beta_hat_a(a: f64, data: &TwoLevelData) -> Result<Vec<f64>, FitError> {
    Ok(MarginalModel::new(data, &PriorSpec::shp()).eval(a)?.beta)
}

/// The rank-`r` projector `P_A = D^{−1/2} X (X'D⁻¹X)⁻¹ X' D^{−1/2}` and its diagonal.
pub fn projection_pa(a: f64, data: &TwoLevelData) -> Result<(DMatrix<f64>, Vec<f64>), FitError> {
    let k = data.k();
    let r = data.r();
    if r == 0 {
        return Ok((DMatrix::zeros(k, k), vec![0.0; k]));
    }
    let mut z = data.x().clone();
    for i in 0..k {
        let s = (data.v()[i] + a).sqrt().recip();
        for j in 0..r {
            z[(i, j)] *= s;
        }
    }
    let gram = z.transpose() * &z;
    let chol = gram.cholesky().ok_or(FitError::SingularNormalEquations)?;
    let p = &z * chol.solve(&z.transpose());
    let diag = p.diagonal().iter().copied().collect();
    Ok((p, diag))
}

/// `ℓ(α)` including the `log(A π(A)) = c α` adjustment.
pub fn adjusted_logdensity(alpha: f64, data: &TwoLevelData, prior: &PriorSpec) -> Result<f64, FitError> {
    AdjustedLogDensity::new(data, prior).value(alpha)
}

/// Invariant information `−ℓ''(α̂)` at a stationary point `α̂`.
///
/// Closed form `m(1−B̂)² + B̂² + (1−c)(1−2B̂)` when all variances are equal;
/// central differences otherwise.
pub fn adjusted_logdensity_d2(alpha_hat: f64, data: &TwoLevelData, prior: &PriorSpec) -> Result<f64, FitError> {
    let info = match data.equal_variance() {
        Some(v) => {
            let m = (data.k() as f64 - data.r() as f64 - 2.0) / 2.0;
            let b = v / (v + alpha_hat.exp());
            equal_variance_inv_info(m, b, prior.c)
        }
        None => AdjustedLogDensity::new(data, prior).neg_d2_numeric(alpha_hat)?,
    };
    if !(info > 0.0) {
        return Err(FitError::NonconcaveAtMax(info));
    }
    Ok(info)
}

pub(crate) fn equal_variance_inv_info(m: f64, b: f64, c: f64) -> f64 {
    m * (1.0 - b).powi(2) + b * b + (1.0 - c) * (1.0 - 2.0 * b)
}
