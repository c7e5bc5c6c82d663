//! End-to-end acceptance checks; prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use shrinkfit::evaluate::{run_accuracy, run_coverage, run_two_group, uniform_grid, SimConfig, SimResult};
use shrinkfit::fitters::{
    adm_beta_approx, fit_adm_equal, fit_adm_general, fit_exact_equal, fit_exact_quadrature, ExactBeta,
    UnitShrinkageDensity,
};
use shrinkfit::density::AdjustedLogDensity;
use shrinkfit::model::validate;
use shrinkfit::{FitMethod, PriorSpec, TwoLevelData};

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, elapsed: Duration, limit: Option<Duration>, out: Outcome) -> bool {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = out.pass && in_time;
    let limit_txt = limit.map(|l| format!(" (limit {} s)", l.as_secs())).unwrap_or_default();
    println!(
        "criterion {n} [{name}]: {} {} [{:.2} s{limit_txt}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn equal_dataset(rng: &mut ChaCha8Rng, k: usize, r: usize) -> TwoLevelData {
    let v = rng.random_range(0.1..10.0);
    let a = v * rng.random_range(0.01..20.0f64);
    let y = (0..k)
        .map(|_| (v + a).sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let x = (r > 0).then(|| {
        DMatrix::from_fn(k, r, |i, j| if j == 0 { 1.0 } else { rng_free_covariate(i, j) })
    });
    TwoLevelData::new(y, vec![v; k], x).unwrap()
}

fn rng_free_covariate(i: usize, j: usize) -> f64 {
    ((i as f64 + 1.0) * (j as f64 + 0.5)).sin()
}

fn c1_optimizer_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut db, mut dv) = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 1000 {
        let k = rng.random_range(4..=50);
        let c = if rng.random_bool(0.5) { 0.5 } else { 1.0 };
        let r = rng.random_range(0..=2);
        let prior = PriorSpec::with_c(c);
        let data = equal_dataset(&mut rng, k, r);
        if validate(&data, &prior, FitMethod::Adm).is_err() {
            continue;
        }
        let a = fit_adm_equal(&data, &prior).unwrap();
        let b = fit_adm_general(&data, &prior).unwrap();
        for i in 0..k {
            db = db.max((a.b_hat[i] - b.b_hat[i]).abs());
            dv = dv.max((a.v[i] - b.v[i]).abs());
        }
        n += 1;
    }
    Outcome {
        pass: db <= 1e-8 && dv <= 1e-6,
        detail: format!("1000 datasets, max |ΔB̂| = {db:.2e}, max |Δv| = {dv:.2e}"),
    }
}

fn c2_quadrature_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let prior = PriorSpec::shp();
    let (mut db, mut dv) = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 200 {
        let k = rng.random_range(4..=50);
        let r = rng.random_range(0..=2);
        let data = equal_dataset(&mut rng, k, r);
        if validate(&data, &prior, FitMethod::Exact).is_err() {
            continue;
        }
        let a = fit_exact_equal(&data, &prior).unwrap();
        let b = fit_exact_quadrature(&data, &prior).unwrap();
        db = db.max((a.b_hat[0] - b.b_hat[0]).abs());
        dv = dv.max((a.v[0] - b.v[0]).abs());
        n += 1;
    }
    Outcome {
        pass: db <= 1e-7 && dv <= 1e-7,
        detail: format!("200 datasets, max |ΔB̂| = {db:.2e}, max |Δv| = {dv:.2e}"),
    }
}

fn c3_beta_recovery() -> Outcome {
    let mut worst = 0.0f64;
    for (a1, a0) in [(2.0, 3.0), (5.0, 1.0), (0.5, 0.5)] {
        let f = adm_beta_approx(&ExactBeta { a1, a0 }).unwrap();
        let mean = a1 / (a1 + a0);
        let var = f.mean * (1.0 - f.mean) / (a1 + a0 + 1.0);
        worst = worst.max(((f.mean - mean) / mean).abs()).max(((f.variance - var) / var).abs());
    }
    Outcome {
        pass: worst <= 4.0 * f64::EPSILON,
        detail: format!("max relative error {worst:.2e}"),
    }
}

fn c4_accuracy_ratio() -> Outcome {
    let ks: Vec<usize> = (3..=60).collect();
    let res = run_accuracy(&ks, &uniform_grid(0.05, 0.95, 0.01)).unwrap();
    let located = (15..=25).contains(&res.argmax_k) && (0.5..=0.7).contains(&res.argmax_b);
    Outcome {
        pass: (0.009..=0.013).contains(&res.max_ratio) && located,
        detail: format!(
            "max ratio {:.5} at k = {}, exact shrinkage {:.2}",
            res.max_ratio, res.argmax_k, res.argmax_b
        ),
    }
}

fn equal_sweep(threads: usize) -> Vec<(usize, SimResult)> {
    // 25 points from 0.035 to 0.995
    let grid: Vec<f64> = (0..25).map(|j| 0.995 - 0.04 * (24 - j) as f64).collect();
    [4usize, 10, 20]
        .iter()
        .map(|&k| {
            let cfg = SimConfig {
                grid: grid.clone(),
                reps: 1000,
                seed: SEED,
                ..SimConfig::equal(k)
            };
            (k, run_coverage(&cfg, threads).unwrap())
        })
        .collect()
}

fn c5_equal_coverage(sweep: &[(usize, SimResult)]) -> Outcome {
    let mut fails = Vec::new();
    let mut notes = Vec::new();
    for (k, res) in sweep {
        let adm_min = res.rows_for(FitMethod::Adm).map(|r| r.coverage).fold(1.0, f64::min);
        for row in res.rows_for(FitMethod::Adm) {
            if row.coverage < 0.945 - 3.0 * row.coverage_se {
                fails.push(format!("ADM k={k} B={:.3} cov={:.4}", row.b0, row.coverage));
            }
        }
        let exact: Vec<_> = res.rows_for(FitMethod::Exact).collect();
        let lowest = exact.iter().min_by(|a, b| a.coverage.total_cmp(&b.coverage)).unwrap();
        for row in &exact {
            if row.coverage < 0.940 {
                fails.push(format!("exact k={k} B={:.3} cov={:.4}", row.b0, row.coverage));
            }
        }
        if *k == 20 && !(0.15..=0.65).contains(&lowest.b0) {
            fails.push(format!("exact k=20 minimum at B={:.3}", lowest.b0));
        }
        notes.push(format!(
            "k={k}: min ADM {adm_min:.4}, min exact {:.4} at B={:.3}",
            lowest.coverage, lowest.b0
        ));
    }
    Outcome {
        pass: fails.is_empty(),
        detail: format!("{}{}", notes.join("; "), fmt_fails(&fails)),
    }
}

fn c6_mle_failure(sweep: &[(usize, SimResult)]) -> Outcome {
    let mut fails = Vec::new();
    let mut notes = Vec::new();
    for (k, res) in sweep {
        let rows: Vec<_> = res.rows_for(FitMethod::Mle).collect();
        let top = rows.iter().max_by(|a, b| a.b0.total_cmp(&b.b0)).unwrap();
        if top.coverage >= 0.55 + 3.0 * top.coverage_se {
            fails.push(format!("k={k} coverage {:.4} at B={:.3}", top.coverage, top.b0));
        }
        let cut = 2.0 / (3.0 * *k as f64);
        let mut min_rate = 1.0f64;
        for row in rows.iter().filter(|r| r.a_true <= cut) {
            let se = (0.25 / row.reps as f64).sqrt();
            min_rate = min_rate.min(row.boundary_rate);
            if row.boundary_rate <= 0.5 - 3.0 * se {
                fails.push(format!("k={k} B={:.3} boundary rate {:.3}", row.b0, row.boundary_rate));
            }
        }
        notes.push(format!("k={k}: cov {:.4} at B=0.995, min Â=0 rate {min_rate:.3}", top.coverage));
    }
    Outcome {
        pass: fails.is_empty(),
        detail: format!("{}{}", notes.join("; "), fmt_fails(&fails)),
    }
}

fn two_group_run(threads: usize) -> SimResult {
    let cfg = SimConfig {
        seed: SEED,
        ..SimConfig::two_group()
    };
    run_two_group(&cfg, threads).unwrap()
}

fn c7_two_group(res: &SimResult) -> Outcome {
    let mut fails = Vec::new();
    let (mut min_cov, mut max_risk) = (1.0f64, 0.0f64);
    for row in res.rows_for(FitMethod::Adm) {
        min_cov = min_cov.min(row.coverage);
        max_risk = max_risk.max(row.risk);
        if row.coverage < 0.95 - 3.0 * row.coverage_se {
            fails.push(format!("{} B0={:.2} cov={:.4}", row.group, row.b0, row.coverage));
        }
        if !(row.risk < 1.0) {
            fails.push(format!("{} B0={:.2} risk={:.4}±{:.4}", row.group, row.b0, row.risk, row.risk_se));
        }
    }
    Outcome {
        pass: fails.is_empty() && res.rows.len() == 100,
        detail: format!(
            "{} rows, min coverage {min_cov:.4}, max calibrated risk {max_risk:.4}{}",
            res.rows.len(),
            fmt_fails(&fails)
        ),
    }
}

fn c8_determinism(sweep: &[(usize, SimResult)], two: &SimResult) -> Outcome {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    let csv = |s: &[(usize, SimResult)]| s.iter().map(|(_, r)| r.to_csv().unwrap()).collect::<Vec<_>>();
    let again = equal_sweep(1);
    let two_again = two_group_run(1);
    let same_eq = csv(sweep) == csv(&again);
    let same_two = two.to_csv().unwrap() == two_again.to_csv().unwrap();
    let json = |r: &SimResult| serde_json::to_string(r).unwrap();
    let same_json = json(two) == json(&two_again);
    Outcome {
        pass: same_eq && same_two && same_json,
        detail: format!(
            "{threads} threads vs 1 thread: equal-variance sweep identical = {same_eq}, two-group identical = {}",
            same_two && same_json
        ),
    }
}

fn c9_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut worst_info = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(5..=30);
        let r = rng.random_range(0..=2);
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..5.0)).collect();
        let a = rng.random_range(0.1..5.0);
        let y: Vec<f64> = v.iter().map(|vi| (vi + a as f64).sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let x = (r > 0).then(|| DMatrix::from_fn(k, r, |i, j| if j == 0 { 1.0 } else { rng_free_covariate(i, j) }));
        let data = TwoLevelData::new(y, v.clone(), x).unwrap();
        let prior = PriorSpec::shp();
        let fit = fit_adm_general(&data, &prior).unwrap();
        let dens = AdjustedLogDensity::new(&data, &prior);
        let alpha = fit.a_hat.ln();
        let h = 1e-3;
        let d2 = |g: &dyn Fn(f64) -> f64, x: f64| {
            (-g(x + 2.0 * h) + 16.0 * g(x + h) - 30.0 * g(x) + 16.0 * g(x - h) - g(x - 2.0 * h)) / (12.0 * h * h)
        };
        let in_alpha = -d2(&|t| dens.value(t).unwrap(), alpha);
        for i in 0..k {
            // logit B_i = log V_i − α
            let u = (fit.b_hat[i] / (1.0 - fit.b_hat[i])).ln();
            let in_logit = -d2(&|w| dens.value(v[i].ln() - w).unwrap(), u);
            let beta = adm_beta_approx(&UnitShrinkageDensity::new(&data, &prior, i)).unwrap();
            let rel = |x: f64| ((x - in_alpha) / in_alpha).abs();
            worst_info = worst_info.max(rel(in_logit)).max(rel(beta.inv_info)).max(rel(fit.inv_info));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let mut worst_resid = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(4..=50);
        let c = if rng.random_bool(0.5) { 0.5 } else { 1.0 };
        let r = rng.random_range(0..=2);
        let prior = PriorSpec::with_c(c);
        let data = equal_dataset(&mut rng, k, r);
        if validate(&data, &prior, FitMethod::Adm).is_err() {
            continue;
        }
        let fit = fit_adm_equal(&data, &prior).unwrap();
        let v = data.v()[0];
        let m = (k as f64 - r as f64 - 2.0) / 2.0;
        let s = shrinkfit::fitters::residual_sum_of_squares(&data, &prior).unwrap();
        let t = s / (2.0 * v);
        let a = fit.a_hat;
        let resid = (m + 1.0 - c) * a * a - (2.0 * c + t - m - 1.0) * v * a - c * v * v;
        worst_resid = worst_resid.max(resid.abs() / (v * v));
    }
    Outcome {
        pass: worst_info <= 1e-6 && worst_resid <= 1e-9,
        detail: format!(
            "invariant information max relative gap {worst_info:.2e} (100 datasets); \
             stationarity residual max {worst_resid:.2e}·V² (1000 fits)"
        ),
    }
}

fn fmt_fails(f: &[String]) -> String {
    if f.is_empty() {
        String::new()
    } else {
        format!(" | failures: {}", f.join(", "))
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let out = f();
    (out, t0.elapsed())
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut all = true;

    let (o, t) = timed(c1_optimizer_agreement);
    all &= report(1, "closed-form vs optimizer ADM", t, Some(secs(10)), o);
    let (o, t) = timed(c2_quadrature_agreement);
    all &= report(2, "exact closed form vs quadrature", t, Some(secs(30)), o);
    let (o, t) = timed(c3_beta_recovery);
    all &= report(3, "Beta recovery", t, None, o);
    let (o, t) = timed(c4_accuracy_ratio);
    all &= report(4, "ADM vs exact accuracy ratio", t, Some(secs(60)), o);

    let (sweep, t_sweep) = timed(|| equal_sweep(0));
    let (o, t) = timed(|| c5_equal_coverage(&sweep));
    all &= report(5, "equal-variance coverage", t + t_sweep, Some(secs(300)), o);
    let (o, t) = timed(|| c6_mle_failure(&sweep));
    all &= report(6, "MLE failure mode", t + t_sweep, Some(secs(300)), o);

    let (two, t_two) = timed(|| two_group_run(0));
    let (o, t) = timed(|| c7_two_group(&two));
    all &= report(7, "two-group coverage and risk", t + t_two, Some(secs(300)), o);

    let (o, t) = timed(|| c8_determinism(&sweep, &two));
    all &= report(8, "determinism across thread counts", t, None, o);
    let (o, t) = timed(c9_identities);
    all &= report(9, "information and stationarity identities", t, None, o);

    if all {
        println!("acceptance: all 9 criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILURES present");
        ExitCode::FAILURE
    }
}
