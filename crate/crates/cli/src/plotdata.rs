//! Long-format tables for plotting.

use std::path::Path;

use serde::Serialize;

use shrinkfit::curves::shrinkage_curves;
use shrinkfit::evaluate::{uniform_grid, SimResult};
use shrinkfit::FitMethod;

use crate::{csv_writer, finish_csv, write_out, CliError};

#[derive(Serialize)]
struct CoverageRow<'a> {
    k: usize,
    method: FitMethod,
    b0: f64,
    coverage: f64,
    coverage_se: f64,
    boundary_rate: f64,
    group: &'a str,
}

#[derive(Serialize)]
struct CoverageRiskRow<'a> {
    k: usize,
    method: FitMethod,
    group: &'a str,
    b0: f64,
    coverage: f64,
    coverage_se: f64,
    risk: f64,
    risk_se: f64,
    zero_width_rate: f64,
}

#[derive(Serialize)]
struct CurvePoint {
    k: usize,
    t: f64,
    method: &'static str,
    value: f64,
}

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv_writer();
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    write_out(Some(&dir.join(name)), &finish_csv(w)?)
}

fn coverage_risk_rows(k: usize, res: &SimResult) -> impl Iterator<Item = CoverageRiskRow<'_>> {
    res.rows.iter().map(move |r| CoverageRiskRow {
        k,
        method: r.method,
        group: &r.group,
        b0: r.b0,
        coverage: r.coverage,
        coverage_se: r.coverage_se,
        risk: r.risk,
        risk_se: r.risk_se,
        zero_width_rate: r.zero_width_rate,
    })
}

/// Coverage, coverage-and-risk, and shrinkage/variance curve tables for the
/// equal-variance runs.
pub fn equal(dir: &Path, runs: &[(usize, SimResult)], c: f64) -> Result<(), CliError> {
    write_rows(
        dir,
        "fig4_coverage.csv",
        runs.iter().flat_map(|(k, res)| {
            res.rows.iter().map(move |r| CoverageRow {
                k: *k,
                method: r.method,
                b0: r.b0,
                coverage: r.coverage,
                coverage_se: r.coverage_se,
                boundary_rate: r.boundary_rate,
                group: &r.group,
            })
        }),
    )?;
    write_rows(
        dir,
        "fig5_coverage_risk.csv",
        runs.iter().flat_map(|(k, res)| coverage_risk_rows(*k, res)),
    )?;

    let t = uniform_grid(0.0, 30.0, 0.25);
    let mut shrink = Vec::new();
    let mut var = Vec::new();
    for (k, res) in runs {
        let r = match &res.config.design {
            shrinkfit::evaluate::Design::None { .. } => 0,
            shrinkfit::evaluate::Design::Intercept => 1,
            shrinkfit::evaluate::Design::Matrix { cols, .. } => *cols,
        };
        for row in shrinkage_curves(*k, r, c, &t)? {
            let k = *k;
            let t = row.t;
            shrink.push(CurvePoint { k, t, method: "exact", value: row.b_exact });
            shrink.push(CurvePoint { k, t, method: "adm", value: row.b_adm });
            shrink.push(CurvePoint { k, t, method: "mle", value: row.b_mle });
            var.push(CurvePoint { k, t, method: "exact", value: row.v_exact });
            var.push(CurvePoint { k, t, method: "adm", value: row.v_adm });
        }
    }
    write_rows(dir, "fig2_shrinkage_curves.csv", shrink)?;
    write_rows(dir, "fig3_variance_curves.csv", var)
}

/// Coverage and calibrated risk per variance group.
pub fn two_group(dir: &Path, res: &SimResult) -> Result<(), CliError> {
    write_rows(dir, "fig7_twogroup.csv", coverage_risk_rows(res.config.v.len(), res))
}
