//! CSV and fixed-width text renderings of a replication report.

use std::fmt::Write as _;
use std::io::Write;

use super::harness::ReplicationReport;
use crate::error::Result;
use crate::task::EstimatorKind;

fn estimator_name(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Sub => "sub",
        EstimatorKind::Ipw => "ipw",
        EstimatorKind::Tmle => "tmle",
    }
}

/// One row per cell, estimator and metric.
pub fn write_csv<W: Write>(report: &ReplicationReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["arm", "conditioning", "scenario", "n", "estimator", "metric", "value"])?;
    for cell in &report.cells {
        let key = [cell.arm.clone(), cell.conditioning.clone(), cell.scenario.to_string(), cell.n.to_string()];
        let mut row = |est: &str, metric: &str, value: f64| {
            let mut rec: Vec<String> = key.to_vec();
            rec.extend([est.to_string(), metric.to_string(), format!("{value}")]);
            w.write_record(&rec)
        };
        row("", "truth", cell.truth)?;
        row("", "truth_mc_se", cell.truth_mc_se)?;
        row("", "replicates", cell.replicates as f64)?;
        for e in &cell.estimators {
            let name = estimator_name(e.estimator);
            row(name, "replicates_ok", e.replicates_ok as f64)?;
            row(name, "failures", e.failures as f64)?;
            row(name, "mae_x100", e.mae_x100)?;
            row(name, "me_x100", e.me_x100)?;
            if let Some(c) = e.coverage {
                row(name, "coverage", c)?;
            }
            if let Some(sd) = e.alpha_sd {
                row(name, "alpha_sd", sd)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cell_text(v: Option<f64>, scale: f64, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{:.*}", digits, x * scale),
        _ => "-".to_string(),
    }
}

/// Text table with one block per arm and conditioning set and one line per
/// scenario and sample size.
pub fn format_table(report: &ReplicationReport) -> String {
    let mut out = String::new();
    let mut last_block = None;
    for cell in &report.cells {
        let block = (cell.arm.as_str(), cell.conditioning.as_str());
        if last_block != Some(block) {
            last_block = Some(block);
            let _ = writeln!(
                out,
                "\n{} | B = {} | truth {:.5} (mc se {:.1e}) | R = {}",
                cell.arm, cell.conditioning, cell.truth, cell.truth_mc_se, cell.replicates
            );
            let mut header = format!("{:>4} {:>6}", "scn", "N");
            for e in &cell.estimators {
                let name = estimator_name(e.estimator);
                let _ = write!(header, " | {:>8} {:>8}", format!("{name} MAE"), format!("{name} ME"));
                if e.coverage.is_some() {
                    let _ = write!(header, " {:>7}", "cov%");
                }
                if e.alpha_sd.is_some() {
                    let _ = write!(header, " {:>8}", "sd(a)");
                }
            }
            let _ = writeln!(out, "{header}");
        }
        let mut line = format!("{:>4} {:>6}", cell.scenario, cell.n);
        for e in &cell.estimators {
            let _ = write!(line, " | {:>8} {:>8}", cell_text(Some(e.mae_x100), 1.0, 2), cell_text(Some(e.me_x100), 1.0, 2));
            if e.coverage.is_some() {
                let _ = write!(line, " {:>7}", cell_text(e.coverage, 100.0, 1));
            }
            if e.alpha_sd.is_some() {
                let _ = write!(line, " {:>8}", cell_text(e.alpha_sd, 1.0, 2));
            }
        }
        if cell.estimators.iter().any(|e| e.failures > 0) {
            let failures = cell.estimators.iter().map(|e| e.failures).max().unwrap_or(0);
            let _ = write!(line, "  ({failures} failed)");
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::harness::{CellReport, EstimatorSummary};

    fn report() -> ReplicationReport {
        ReplicationReport {
            name: "t".into(),
            seed: 1,
            replicates: 10,
            cells: vec![CellReport {
                arm: "a".into(),
                conditioning: "{1}".into(),
                scenario: 1,
                n: 500,
                truth: 0.3,
                truth_mc_se: 1e-4,
                replicates: 10,
                estimators: vec![EstimatorSummary {
                    estimator: EstimatorKind::Tmle,
                    replicates_ok: 10,
                    failures: 0,
                    mae_x100: 1.5,
                    me_x100: -0.2,
                    coverage: Some(0.9),
                    alpha_sd: Some(2.0),
                }],
                errors: vec![],
            }],
        }
    }

    #[test]
    fn csv_has_one_row_per_metric() {
        let mut buf = Vec::new();
        write_csv(&report(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 + 6);
        assert!(text.contains("a,{1},1,500,tmle,coverage,0.9"));
    }

    #[test]
    fn table_shows_percent_coverage() {
        let t = format_table(&report());
        assert!(t.contains("90.0"));
        assert!(t.contains("tmle MAE"));
    }
}
