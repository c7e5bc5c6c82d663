//! Data types shared by every fitter, and input validation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used to decide whether all Level-1 variances are equal.
pub const EQUAL_VARIANCE_RTOL: f64 = 1e-12;

/// Columns whose pivoted-QR diagonal falls below this fraction of the largest
/// column norm are treated as linearly dependent.
const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("RankDeficientX: covariate matrix has rank {rank} < {r} columns")]
    RankDeficientX { rank: usize, r: usize },
    #[error("TooFewUnits: {k} units given, at least {required} required for {method}")]
    TooFewUnits {
        k: usize,
        required: usize,
        method: FitMethod,
    },
    #[error("NonpositiveVariance: V[{index}] = {value} must be positive and finite")]
    NonpositiveVariance { index: usize, value: f64 },
    #[error("NonpositiveC: prior exponent c = {0} must be positive")]
    NonpositiveC(f64),
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("NonFiniteInput: {0}")]
    NonFiniteInput(String),
}

impl ModelError {
    /// Stable error name, used by the CLI on stderr.
    pub fn name(&self) -> &'static str {
        match self {
            ModelError::RankDeficientX { .. } => "RankDeficientX",
            ModelError::TooFewUnits { .. } => "TooFewUnits",
            ModelError::NonpositiveVariance { .. } => "NonpositiveVariance",
            ModelError::NonpositiveC(_) => "NonpositiveC",
            ModelError::DimensionMismatch(_) => "DimensionMismatch",
            ModelError::NonFiniteInput(_) => "NonFiniteInput",
        }
    }
}

/// Estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Adm,
    Mle,
    Reml,
    Exact,
}

impl FitMethod {
    pub const ALL: [FitMethod; 4] = [FitMethod::Adm, FitMethod::Mle, FitMethod::Reml, FitMethod::Exact];

    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Adm => "adm",
            FitMethod::Mle => "mle",
            FitMethod::Reml => "reml",
            FitMethod::Exact => "exact",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adm" | "adm-shp" => Ok(FitMethod::Adm),
            "mle" => Ok(FitMethod::Mle),
            "reml" => Ok(FitMethod::Reml),
            "exact" => Ok(FitMethod::Exact),
            other => Err(format!("unknown method `{other}` (expected adm, mle, reml or exact)")),
        }
    }
}

/// Observations `y_i ~ N(θ_i, V_i)` with Level-2 covariates `X` (k × r, r may be 0).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelData {
    y: Vec<f64>,
    v: Vec<f64>,
    x: DMatrix<f64>,
}

impl TwoLevelData {
    /// Builds a dataset. Shape and finiteness are checked here; positivity of
    /// `V` and the rank of `X` are left to [`validate`].
    pub fn new(y: Vec<f64>, v: Vec<f64>, x: Option<DMatrix<f64>>) -> Result<Self, ModelError> {
        let k = y.len();
        if v.len() != k {
            return Err(ModelError::DimensionMismatch(format!(
                "y has {k} entries but V has {}",
                v.len()
            )));
        }
        let x = x.unwrap_or_else(|| DMatrix::zeros(k, 0));
        if x.nrows() != k {
            return Err(ModelError::DimensionMismatch(format!(
                "X has {} rows but y has {k} entries",
                x.nrows()
            )));
        }
        if let Some(i) = y.iter().position(|t| !t.is_finite()) {
            return Err(ModelError::NonFiniteInput(format!("y[{i}] = {}", y[i])));
        }
        if x.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::NonFiniteInput("X contains a non-finite entry".into()));
        }
        Ok(TwoLevelData { y, v, x })
    }

    /// Shrinkage toward a common, estimated mean (`X` = column of ones).
    pub fn intercept_only(y: Vec<f64>, v: Vec<f64>) -> Result<Self, ModelError> {
        let k = y.len();
        Self::new(y, v, Some(DMatrix::from_element(k, 1, 1.0)))
    }

    pub fn k(&self) -> usize {
        self.y.len()
    }

    pub fn r(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `x_i' β`.
    pub fn fitted(&self, i: usize, beta: &[f64]) -> f64 {
        (0..self.r()).map(|j| self.x[(i, j)] * beta[j]).sum()
    }

    pub fn mean_variance(&self) -> f64 {
        self.v.iter().sum::<f64>() / self.k() as f64
    }

    /// The common variance when all `V_i` agree to [`EQUAL_VARIANCE_RTOL`].
    pub fn equal_variance(&self) -> Option<f64> {
        let first = *self.v.first()?;
        let all_equal = self
            .v
            .iter()
            .all(|&vi| (vi - first).abs() <= EQUAL_VARIANCE_RTOL * first.abs());
        all_equal.then(|| self.mean_variance())
    }

    /// Observations minus known means when `r = 0`; the raw `y` otherwise.
    pub fn centered(&self, prior: &PriorSpec) -> Vec<f64> {
        match (&prior.known_mu, self.r()) {
            (Some(mu), 0) => self.y.iter().zip(mu).map(|(y, m)| y - m).collect(),
            _ => self.y.clone(),
        }
    }

    /// Prior mean `μ_i` used when `r = 0` (zero unless supplied).
    pub fn known_mean(&self, prior: &PriorSpec, i: usize) -> f64 {
        prior.known_mu.as_ref().map_or(0.0, |mu| mu[i])
    }

    /// Numerical rank of `X` from a column-pivoted QR factorization.
    pub fn rank(&self) -> usize {
        let r = self.r();
        if r == 0 {
            return 0;
        }
        let max_norm = (0..r).map(|j| self.x.column(j).norm()).fold(0.0, f64::max);
        if max_norm == 0.0 {
            return 0;
        }
        let qr = self.x.clone().col_piv_qr();
        let rr = qr.r();
        (0..r.min(self.k()))
            .filter(|&j| rr[(j, j)].abs() > RANK_RTOL * max_norm)
            .count()
    }
}

/// Scale-invariant prior `π(A) ∝ A^{c−1}`; `c = 1` is Stein's harmonic prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub c: f64,
    /// Known Level-2 means, only meaningful when `r = 0`.
    pub known_mu: Option<Vec<f64>>,
}

impl PriorSpec {
    pub fn shp() -> Self {
        PriorSpec { c: 1.0, known_mu: None }
    }

    pub fn with_c(c: f64) -> Self {
        PriorSpec { c, known_mu: None }
    }

    pub fn known_mu(mut self, mu: Vec<f64>) -> Self {
        self.known_mu = Some(mu);
        self
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::shp()
    }
}

/// Posterior moments of the shrinkage factors `B_i = V_i / (V_i + A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkagePosterior {
    pub method: FitMethod,
    pub a_hat: f64,
    /// Negative second derivative of the fitted objective in `α = log A`.
    pub inv_info: f64,
    pub b_hat: Vec<f64>,
    pub v: Vec<f64>,
    /// Beta parameters of the ADM approximation, per unit.
    pub a1: Option<Vec<f64>>,
    pub a0: Option<Vec<f64>>,
    /// Set when the likelihood maximizer sits at `A = 0`.
    pub boundary: bool,
}

/// Point and interval estimates for the random effects `θ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffectPosterior {
    pub theta_hat: Vec<f64>,
    pub s2: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub z_star: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Smallest `k` for which `method` is well defined.
///
/// The improper prior needs `k − r > 2c` for a proper posterior (`k ≥ r + 3`
/// at `c = 1`); the likelihood methods need one residual degree of freedom.
pub fn required_units(r: usize, c: f64, method: FitMethod) -> usize {
    match method {
        FitMethod::Mle | FitMethod::Reml => r + 1,
        FitMethod::Adm | FitMethod::Exact => r + (2.0 * c).floor() as usize + 1,
    }
}

/// Checks the dataset and prior for `method`. Deterministic and side-effect free.
pub fn validate(data: &TwoLevelData, prior: &PriorSpec, method: FitMethod) -> Result<(), ModelError> {
    if !(prior.c > 0.0) || !prior.c.is_finite() {
        return Err(ModelError::NonpositiveC(prior.c));
    }
    if let Some((index, &value)) = data
        .v()
        .iter()
        .enumerate()
        .find(|(_, &vi)| !(vi > 0.0) || !vi.is_finite())
    {
        return Err(ModelError::NonpositiveVariance { index, value });
    }
    let k = data.k();
    let r = data.r();
    if let Some(mu) = &prior.known_mu {
        if r > 0 {
            return Err(ModelError::DimensionMismatch(
                "known means can only be supplied when X has no columns".into(),
            ));
        }
        if mu.len() != k {
            return Err(ModelError::DimensionMismatch(format!(
                "known_mu has {} entries but y has {k}",
                mu.len()
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(ModelError::NonFiniteInput("known_mu contains a non-finite entry".into()));
        }
    }
    let required = required_units(r, prior.c, method).max(1);
    if k < required {
        return Err(ModelError::TooFewUnits { k, required, method });
    }
    if r > 0 {
        let rank = data.rank();
        if rank < r {
            return Err(ModelError::RankDeficientX { rank, r });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(k: usize) -> Vec<f64> {
        vec![1.0; k]
    }

    #[test]
    fn adm_needs_r_plus_three_units_at_c_one() {
        let data = TwoLevelData::intercept_only(vec![0.1, 0.4, -0.3], ones(3)).unwrap();
        let err = validate(&data, &PriorSpec::shp(), FitMethod::Adm).unwrap_err();
        assert!(matches!(err, ModelError::TooFewUnits { k: 3, required: 4, .. }));
        assert!(validate(&data, &PriorSpec::shp(), FitMethod::Reml).is_ok());
        // c = 1/2 only needs k − r > 1
        assert!(validate(&data, &PriorSpec::with_c(0.5), FitMethod::Adm).is_ok());
    }

    #[test]
    fn ten_units_without_covariates_is_valid() {
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let data = TwoLevelData::new(y, ones(10), None).unwrap();
        for method in FitMethod::ALL {
            assert!(validate(&data, &PriorSpec::shp(), method).is_ok());
        }
    }

    #[test]
    fn zero_c_is_rejected() {
        let data = TwoLevelData::new(vec![0.0; 5], ones(5), None).unwrap();
        let err = validate(&data, &PriorSpec::with_c(0.0), FitMethod::Adm).unwrap_err();
        assert_eq!(err, ModelError::NonpositiveC(0.0));
        assert_eq!(err.name(), "NonpositiveC");
        assert!(validate(&data, &PriorSpec::with_c(-1.0), FitMethod::Mle).is_err());
    }

    #[test]
    fn variances_must_be_positive() {
        let data = TwoLevelData::new(vec![0.0; 5], vec![1.0, 1.0, 0.0, 1.0, 1.0], None).unwrap();
        let err = validate(&data, &PriorSpec::shp(), FitMethod::Adm).unwrap_err();
        assert!(matches!(err, ModelError::NonpositiveVariance { index: 2, .. }));
    }

    #[test]
    fn rank_deficiency_detected() {
        let k = 8;
        let mut x = DMatrix::zeros(k, 3);
        for i in 0..k {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = i as f64;
            x[(i, 2)] = 2.0 - 3.0 * i as f64;
        }
        let data = TwoLevelData::new(vec![0.0; k], ones(k), Some(x.clone())).unwrap();
        assert_eq!(data.rank(), 2);
        let err = validate(&data, &PriorSpec::shp(), FitMethod::Reml).unwrap_err();
        assert_eq!(err, ModelError::RankDeficientX { rank: 2, r: 3 });

        x[(3, 2)] += 0.5;
        let data = TwoLevelData::new(vec![0.0; k], ones(k), Some(x)).unwrap();
        assert_eq!(data.rank(), 3);
    }

    #[test]
    fn known_mu_only_without_covariates() {
        let data = TwoLevelData::intercept_only(vec![0.0; 6], ones(6)).unwrap();
        let prior = PriorSpec::shp().known_mu(vec![0.0; 6]);
        assert!(matches!(
            validate(&data, &prior, FitMethod::Adm),
            Err(ModelError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn equal_variance_detection() {
        let data = TwoLevelData::new(vec![0.0; 3], vec![2.0, 2.0, 2.0], None).unwrap();
        assert_eq!(data.equal_variance(), Some(2.0));
        let data = TwoLevelData::new(vec![0.0; 3], vec![2.0, 2.0, 2.1], None).unwrap();
        assert_eq!(data.equal_variance(), None);
    }

    #[test]
    fn method_names_round_trip() {
        for m in FitMethod::ALL {
            assert_eq!(m.as_str().parse::<FitMethod>().unwrap(), m);
        }
        assert!("bayes".parse::<FitMethod>().is_err());
    }
}
