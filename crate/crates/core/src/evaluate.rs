//! Seeded Monte-Carlo estimates of interval coverage and calibrated risk, and
//! the ADM-vs-exact accuracy ratio for equal variances.
//!
//! Each replication draws `θ ~ N(Xβ, A I)` and `y ~ N(θ, diag V)` with
//! `A = V₀(1−B₀)/B₀` and fits every requested method to the same `y`. The
//! coverage and risk terms are Rao–Blackwellized: indicators are replaced by
//! their expectations under `θ_i | y_i, β, A`.
//!
//! Every `(gridpoint, replication)` pair owns an independent ChaCha stream
//! keyed by the seed, so results do not depend on thread count or schedule.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitters::{adm_equal_shrinkage, exact_equal_moments, fit, fit_adm_equal, fit_exact_equal, FitError};
use crate::inference::{random_effects, DEFAULT_Z_STAR};
use crate::model::{FitMethod, PriorSpec, TwoLevelData};
use crate::specfun::normal_cdf;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Second-level design used when simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// `r = 0`; units shrink toward the known means `known_mu`.
    None { known_mu: Vec<f64> },
    /// `r = 1`, a column of ones.
    Intercept,
    /// Arbitrary `k × r` covariates, stored row-major.
    Matrix { rows: usize, cols: usize, values: Vec<f64> },
}

impl Design {
    fn matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            Design::None { .. } => None,
            Design::Intercept => None,
            Design::Matrix { rows, cols, values } => Some(DMatrix::from_row_slice(*rows, *cols, values)),
        }
    }

    fn r(&self) -> usize {
        match self {
            Design::None { .. } => 0,
            Design::Intercept => 1,
            Design::Matrix { cols, .. } => *cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub v: Vec<f64>,
    pub design: Design,
    pub beta_true: Vec<f64>,
    /// Group label of every unit; results are averaged within groups.
    pub groups: Vec<usize>,
    pub group_names: Vec<String>,
    /// True shrinkage values `B₀` at the reference variance `v0`.
    pub grid: Vec<f64>,
    pub v0: f64,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<FitMethod>,
    pub c: f64,
    pub z_star: f64,
}

/// `B = start, start+step, …` up to and including `end` (within rounding).
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|j| start + j as f64 * step).collect()
}

impl SimConfig {
    /// Equal variances `V = 1`, `r = 0` with known zero means.
    pub fn equal(k: usize) -> Self {
        SimConfig {
            v: vec![1.0; k],
            design: Design::None { known_mu: vec![0.0; k] },
            beta_true: Vec::new(),
            groups: vec![0; k],
            group_names: vec!["all".into()],
            grid: uniform_grid(0.005, 0.995, 0.01),
            v0: 1.0,
            reps: 1000,
            seed: 0,
            methods: vec![FitMethod::Adm, FitMethod::Exact, FitMethod::Mle],
            c: 1.0,
            z_star: DEFAULT_Z_STAR,
        }
    }

    /// `k = 10`, intercept only, five units with `V = 0.55` and five with `V = 5.5`.
    /// `V₀ = 1` is the harmonic mean of the two variances.
    pub fn two_group() -> Self {
        let mut v = vec![0.55; 5];
        v.extend([5.5; 5]);
        SimConfig {
            v,
            design: Design::Intercept,
            beta_true: vec![0.0],
            groups: [vec![0; 5], vec![1; 5]].concat(),
            group_names: vec!["small_v".into(), "large_v".into()],
            grid: uniform_grid(0.01, 0.99, 0.02),
            v0: 1.0,
            reps: 100,
            seed: 0,
            methods: vec![FitMethod::Adm],
            c: 1.0,
            z_star: DEFAULT_Z_STAR,
        }
    }

    pub fn k(&self) -> usize {
        self.v.len()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        let k = self.k();
        if k == 0 {
            return bad("no units");
        }
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.grid.is_empty() || self.grid.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return bad("grid values must lie in (0, 1)");
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return bad("reference variance must be positive");
        }
        if self.v.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("variances must be positive");
        }
        if self.methods.is_empty() {
            return bad("no methods");
        }
        if !(self.z_star > 0.0) {
            return bad("z* must be positive");
        }
        if self.beta_true.len() != self.design.r() {
            return bad("beta_true length must equal the number of covariates");
        }
        if self.groups.len() != k || self.groups.iter().any(|&g| g >= self.group_names.len()) {
            return bad("every unit needs a valid group label");
        }
        match &self.design {
            Design::None { known_mu } if known_mu.len() != k => return bad("known_mu length must equal k"),
            Design::Matrix { rows, cols, values } if *rows != k || values.len() != rows * cols => {
                return bad("design matrix shape does not match k");
            }
            _ => {}
        }
        let prior = PriorSpec::with_c(self.c);
        let probe = self.data(vec![0.0; k])?;
        for &m in &self.methods {
            crate::model::validate(&probe, &self.prior_for(&prior), m).map_err(FitError::from)?;
        }
        Ok(())
    }

    fn prior_for(&self, prior: &PriorSpec) -> PriorSpec {
        match &self.design {
            Design::None { known_mu } => prior.clone().known_mu(known_mu.clone()),
            _ => prior.clone(),
        }
    }

    fn data(&self, y: Vec<f64>) -> Result<TwoLevelData, SimError> {
        let data = match &self.design {
            Design::None { .. } => TwoLevelData::new(y, self.v.clone(), None),
            Design::Intercept => TwoLevelData::intercept_only(y, self.v.clone()),
            d => TwoLevelData::new(y, self.v.clone(), d.matrix()),
        };
        data.map_err(|e| SimError::Fit(e.into()))
    }

    /// Prior means `x_i'β_true` (or the known means when `r = 0`).
    fn true_means(&self) -> Vec<f64> {
        match &self.design {
            Design::None { known_mu } => known_mu.clone(),
            Design::Intercept => vec![self.beta_true[0]; self.k()],
            d => {
                let x = d.matrix().expect("matrix design");
                (0..self.k())
                    .map(|i| (0..x.ncols()).map(|j| x[(i, j)] * self.beta_true[j]).sum())
                    .collect()
            }
        }
    }
}

/// The random stream of one replication.
pub fn replication_rng(seed: u64, grid_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((grid_index as u64) << 32) | rep as u64);
    rng
}

/// One row of simulation output: a gridpoint × method × unit group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub b0: f64,
    pub a_true: f64,
    pub method: FitMethod,
    pub group: String,
    /// Rao–Blackwellized coverage rate and its Monte-Carlo standard error.
    pub coverage: f64,
    pub coverage_se: f64,
    /// Indicator-based coverage rate and its binomial standard error.
    pub raw_coverage: f64,
    pub raw_coverage_se: f64,
    /// Rao–Blackwellized `(θ̂ − θ)²/s²`, averaged over units with `s > 0`
    /// within a replication and then over replications.
    pub risk: f64,
    pub risk_se: f64,
    /// Rao–Blackwellized `(θ̂ − θ)²` and the reported `s²`, unit averages.
    pub mse: f64,
    pub mean_s2: f64,
    pub mean_b_hat: f64,
    pub mean_v: f64,
    /// Fraction of replications with the fit on the `A = 0` boundary.
    pub boundary_rate: f64,
    /// Fraction of unit intervals with zero width (risk excluded there).
    pub zero_width_rate: f64,
    pub fit_failures: usize,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub rows: Vec<SimRow>,
}

/// Per-replication, per-method, per-group sums.
#[derive(Debug, Clone, Default)]
struct Tally {
    cov: f64,
    raw: f64,
    risk: f64,
    risk_n: usize,
    sq_err: f64,
    s2: f64,
    zero: usize,
    units: usize,
    b: f64,
    v: f64,
    boundary: bool,
    failed: bool,
}

fn replicate(cfg: &SimConfig, prior: &PriorSpec, means: &[f64], gi: usize, rep: usize, a: f64) -> Vec<Vec<Tally>> {
    let k = cfg.k();
    let ng = cfg.group_names.len();
    let mut rng = replication_rng(cfg.seed, gi, rep);
    let theta: Vec<f64> = means
        .iter()
        .map(|&mu| mu + a.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y: Vec<f64> = theta
        .iter()
        .zip(&cfg.v)
        .map(|(&t, &vi)| t + vi.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let data = cfg.data(y.clone()).expect("config validated");

    cfg.methods
        .iter()
        .map(|&method| {
            let mut tallies = vec![Tally::default(); ng];
            let fitted = fit(&data, prior, method).and_then(|shr| {
                let re = random_effects(&data, prior, &shr, cfg.z_star)?;
                Ok((shr, re))
            });
            let Ok((shr, re)) = fitted else {
                tallies.iter_mut().for_each(|t| t.failed = true);
                return tallies;
            };
            for i in 0..k {
                let t = &mut tallies[cfg.groups[i]];
                let vi = cfg.v[i];
                let b = vi / (vi + a);
                let cm = (1.0 - b) * y[i] + b * means[i];
                let sd = (vi * (1.0 - b)).sqrt();
                let s = re.s2[i].sqrt();
                let half = cfg.z_star * s;
                let d = re.theta_hat[i] - cm;
                t.cov += normal_cdf((d + half) / sd).value() - normal_cdf((d - half) / sd).value();
                t.raw += f64::from((re.theta_hat[i] - theta[i]).abs() <= half && s > 0.0);
                if s > 0.0 {
                    let risk = (sd * sd + d * d) / re.s2[i];
                    t.risk += risk;
                    t.risk_n += 1;
                } else {
                    t.zero += 1;
                }
                t.sq_err += sd * sd + d * d;
                t.s2 += re.s2[i];
                t.units += 1;
                t.b += shr.b_hat[i];
                t.v += shr.v[i];
                t.boundary = shr.boundary;
            }
            tallies
        })
        .collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the coverage simulation on a pool of `threads` workers (0 = all cores).
pub fn run_coverage(cfg: &SimConfig, threads: usize) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let prior = cfg.prior_for(&PriorSpec::with_c(cfg.c));
    let means = cfg.true_means();
    let ng = cfg.group_names.len();

    let mut rows = Vec::new();
    for (gi, &b0) in cfg.grid.iter().enumerate() {
        let a = cfg.v0 * (1.0 - b0) / b0;
        // collect keeps replication order; the reduction below is sequential
        let reps: Vec<Vec<Vec<Tally>>> = pool.install(|| {
            (0..cfg.reps)
                .into_par_iter()
                .map(|rep| replicate(cfg, &prior, &means, gi, rep, a))
                .collect()
        });
        for (mi, &method) in cfg.methods.iter().enumerate() {
            for g in 0..ng {
                let ok: Vec<&Tally> = reps.iter().map(|r| &r[mi][g]).filter(|t| !t.failed).collect();
                let per = |f: fn(&Tally) -> f64| -> Vec<f64> { ok.iter().map(|t| f(t) / t.units as f64).collect() };
                let (coverage, coverage_se) = mean_se(&per(|t| t.cov));
                let (raw_coverage, raw_coverage_se) = mean_se(&per(|t| t.raw));
                let (mean_b_hat, _) = mean_se(&per(|t| t.b));
                let (mean_v, _) = mean_se(&per(|t| t.v));
                let (mse, _) = mean_se(&per(|t| t.sq_err));
                let (mean_s2, _) = mean_se(&per(|t| t.s2));
                let rep_risk: Vec<f64> = ok
                    .iter()
                    .filter(|t| t.risk_n > 0)
                    .map(|t| t.risk / t.risk_n as f64)
                    .collect();
                let (risk, risk_se) = if rep_risk.is_empty() {
                    (f64::INFINITY, f64::NAN)
                } else {
                    mean_se(&rep_risk)
                };
                let units: usize = ok.iter().map(|t| t.units).sum();
                let zero: usize = ok.iter().map(|t| t.zero).sum();
                let n_ok = ok.len().max(1) as f64;
                rows.push(SimRow {
                    b0,
                    a_true: a,
                    method,
                    group: cfg.group_names[g].clone(),
                    coverage,
                    coverage_se,
                    raw_coverage,
                    raw_coverage_se,
                    risk,
                    risk_se,
                    mse,
                    mean_s2,
                    mean_b_hat,
                    mean_v,
                    boundary_rate: ok.iter().filter(|t| t.boundary).count() as f64 / n_ok,
                    zero_width_rate: if units == 0 { f64::NAN } else { zero as f64 / units as f64 },
                    fit_failures: cfg.reps - ok.len(),
                    reps: cfg.reps,
                });
            }
        }
    }
    Ok(SimResult { config: cfg.clone(), rows })
}

/// The two-group design, per variance group.
pub fn run_two_group(cfg: &SimConfig, threads: usize) -> Result<SimResult, SimError> {
    if cfg.design != Design::Intercept || cfg.group_names.len() != 2 {
        return Err(SimError::InvalidConfig("two-group run needs an intercept design with two groups".into()));
    }
    run_coverage(cfg, threads)
}

impl SimResult {
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn rows_for(&self, method: FitMethod) -> impl Iterator<Item = &SimRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

/// One grid cell of the accuracy study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub k: usize,
    pub t: f64,
    pub b_exact: f64,
    pub b_adm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub rows: Vec<AccuracyRow>,
    pub max_ratio: f64,
    pub argmax_k: usize,
    pub argmax_b: f64,
}

/// `T` with `E[B | T] = target`; `E[B]` falls from `m/(m+1)` at `T = 0` to 0.
fn t_for_exact_shrinkage(m: f64, target: f64) -> Result<f64, FitError> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while exact_equal_moments(hi, m)?.0 > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if exact_equal_moments(mid, m)?.0 > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Ratio of squared error between ADM and exact estimates of `θ` to the
/// exact posterior variance, for equal variances (`V = 1`, `r = 0`, `c = 1`):
///
/// ```text
/// Σ(θ̂_i − θ̂_e,i)² / Σ s²_e,i = (B_a − B_e)² 2T / (k(1 − B_e) + v_e 2T)
/// ```
pub fn accuracy_ratio(k: usize, t: f64) -> Result<(f64, f64, f64), FitError> {
    let m = (k as f64 - 2.0) / 2.0;
    let (be, ve) = exact_equal_moments(t, m)?;
    let ba = adm_equal_shrinkage(t, m, 1.0);
    let s = 2.0 * t;
    Ok((be, ba, (ba - be).powi(2) * s / (k as f64 * (1.0 - be) + ve * s)))
}

/// Evaluates the accuracy ratio on all `k` and exact-shrinkage targets;
/// targets at or above `m/(m+1)` are unreachable and skipped.
pub fn run_accuracy(ks: &[usize], shrinkage: &[f64]) -> Result<AccuracyResult, SimError> {
    if ks.iter().any(|&k| k < 3) {
        return Err(SimError::InvalidConfig("accuracy study needs k ≥ 3".into()));
    }
    let cells: Vec<(usize, f64)> = ks
        .iter()
        .flat_map(|&k| shrinkage.iter().map(move |&b| (k, b)))
        .filter(|&(k, b)| {
            let m = (k as f64 - 2.0) / 2.0;
            b > 0.0 && b < m / (m + 1.0)
        })
        .collect();
    let rows: Vec<AccuracyRow> = cells
        .par_iter()
        .map(|&(k, target)| {
            let m = (k as f64 - 2.0) / 2.0;
            let t = t_for_exact_shrinkage(m, target)?;
            let (b_exact, b_adm, ratio) = accuracy_ratio(k, t)?;
            Ok(AccuracyRow { k, t, b_exact, b_adm, ratio })
        })
        .collect::<Result<_, FitError>>()?;
    let best = rows
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .ok_or_else(|| SimError::InvalidConfig("empty accuracy grid".into()))?;
    let (max_ratio, argmax_k, argmax_b) = (best.ratio, best.k, best.b_exact);
    Ok(AccuracyResult {
        rows,
        max_ratio,
        argmax_k,
        argmax_b,
    })
}

/// Full-data cross-check of [`accuracy_ratio`] through the fitted estimates.
pub fn accuracy_ratio_from_fits(data: &TwoLevelData) -> Result<f64, FitError> {
    let prior = PriorSpec::shp().known_mu(vec![0.0; data.k()]);
    let adm = random_effects(data, &prior, &fit_adm_equal(data, &prior)?, DEFAULT_Z_STAR)?;
    let ex = random_effects(data, &prior, &fit_exact_equal(data, &prior)?, DEFAULT_Z_STAR)?;
    let num: f64 = adm.theta_hat.iter().zip(&ex.theta_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = ex.s2.iter().sum();
    Ok(num / den)
}
