//! Summary CSVs and text tables.

use std::fmt::Write as _;
use std::io::Write;

use adaptrial::engine::{ScenarioSummary, SummaryRow};
use adaptrial::EstimatorKind;
use serde::Serialize;

pub const COLUMNS: [&str; 14] = [
    "scenario", "setting", "gamma1", "design", "estimator", "x_selector", "reps", "failures", "bias", "emp_sd",
    "median_se", "rel_eff", "coverage", "mean_pi2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Table,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: &'a str,
    setting: &'a str,
    gamma1: String,
    design: &'a str,
    estimator: String,
    x_selector: &'a str,
    reps: usize,
    failures: usize,
    bias: String,
    emp_sd: String,
    median_se: String,
    rel_eff: String,
    coverage: String,
    mean_pi2: String,
}

fn num(x: f64, digits: usize) -> String {
    if x.is_finite() {
        format!("{x:.digits$}")
    } else {
        "NA".to_string()
    }
}

fn csv_row<'a>(s: &'a ScenarioSummary, r: &'a SummaryRow) -> CsvRow<'a> {
    CsvRow {
        scenario: &s.scenario,
        setting: &s.setting,
        gamma1: s.gamma1.to_string(),
        design: &r.design,
        estimator: r.estimator.to_string(),
        x_selector: &s.x_selector,
        reps: r.reps,
        failures: r.failures,
        bias: num(r.bias, 4),
        emp_sd: num(r.emp_sd, 4),
        median_se: num(r.median_se, 4),
        rel_eff: num(r.rel_eff, 3),
        coverage: num(r.coverage, 3),
        mean_pi2: r.mean_pi2.map_or_else(String::new, |p| num(p, 3)),
    }
}

/// Writes the summary CSV (header always present, even with no rows).
pub fn write_csv<W: Write>(out: W, summaries: &[ScenarioSummary]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for s in summaries {
        for r in &s.rows {
            w.serialize(csv_row(s, r))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(summaries: &[ScenarioSummary]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, summaries).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Relative-efficiency table: one block per (setting, gamma1), rows are the
/// covariate choices, columns design x estimator. Followed by a bias, SD,
/// median SE and coverage block per block.
pub fn text_table(summaries: &[ScenarioSummary]) -> String {
    let mut out = String::new();
    let mut blocks: Vec<(&str, f64)> = Vec::new();
    for s in summaries {
        if !blocks.iter().any(|&(st, g)| st == s.setting && g == s.gamma1) {
            blocks.push((&s.setting, s.gamma1));
        }
    }
    for (setting, gamma1) in blocks {
        let members: Vec<&ScenarioSummary> =
            summaries.iter().filter(|s| s.setting == setting && s.gamma1 == gamma1).collect();
        let columns: Vec<(String, _)> = members[0].rows.iter().map(|r| (r.design.clone(), r.estimator)).collect();
        let label = |(d, e): &(String, EstimatorKind)| {
            format!("{d}/{}", if *e == EstimatorKind::Simple { "S" } else { "O" })
        };
        let width = columns.iter().map(|c| label(c).len()).max().unwrap_or(0).max(6);

        let _ = writeln!(out, "Setting {setting}, gamma1 = {gamma1}: relative efficiency");
        let _ = write!(out, "{:<10}", "X");
        for c in &columns {
            let _ = write!(out, " {:>width$}", label(c));
        }
        let _ = writeln!(out, " {:>7}", "pi2");
        for s in &members {
            let _ = write!(out, "{:<10}", s.x_selector);
            for (d, e) in &columns {
                let cell = s.row(d, *e).map_or("-".to_string(), |r| num(r.rel_eff, 3));
                let _ = write!(out, " {cell:>width$}");
            }
            let pi2 = s.rows.iter().find_map(|r| r.mean_pi2.filter(|_| r.design.starts_with("2S")));
            let _ = writeln!(out, " {:>7}", pi2.map_or("-".to_string(), |p| num(p, 3)));
        }
        let _ = writeln!(out);

        let _ = writeln!(out, "Setting {setting}, gamma1 = {gamma1}: bias / SD / median SE / coverage");
        let _ = writeln!(
            out,
            "{:<10} {:<w2$} {:>8} {:>8} {:>8} {:>8} {:>5}",
            "X",
            "design",
            "bias",
            "SD",
            "SE",
            "cover",
            "fail",
            w2 = width
        );
        for s in &members {
            for r in &s.rows {
                let _ = writeln!(
                    out,
                    "{:<10} {:<w2$} {:>8} {:>8} {:>8} {:>8} {:>5}{}",
                    s.x_selector,
                    label(&(r.design.clone(), r.estimator)),
                    num(r.bias, 4),
                    num(r.emp_sd, 4),
                    num(r.median_se, 4),
                    num(r.coverage, 3),
                    r.failures,
                    if r.valid { "" } else { "  INVALID" },
                    w2 = width
                );
            }
        }
        let _ = writeln!(out);
    }
    out
}
