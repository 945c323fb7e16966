//! Study execution and artifact writing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use adaptrial::engine::{monte_carlo, Execution, ScenarioSummary};
use anyhow::Context;
use serde_json::json;

use crate::config::StudyConfig;
use crate::report::{self, Format};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub exec: Execution,
    pub out: PathBuf,
    pub format: Format,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub summaries: Vec<ScenarioSummary>,
    /// Scenarios that could not be simulated, with the reason.
    pub errors: Vec<(String, String)>,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.errors.is_empty() && self.summaries.iter().all(ScenarioSummary::is_valid)
    }

    pub fn invalid_scenarios(&self) -> Vec<&str> {
        let invalid = self.summaries.iter().filter(|s| !s.is_valid()).map(|s| s.scenario.as_str());
        invalid.chain(self.errors.iter().map(|(n, _)| n.as_str())).collect()
    }
}

/// File name for a scenario's CSV.
pub fn scenario_file(name: &str) -> String {
    let stem: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    format!("{stem}.csv")
}

fn write_summary(out: &Path, summaries: &[ScenarioSummary]) -> anyhow::Result<()> {
    let path = out.join("summary.csv");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    report::write_csv(BufWriter::new(file), summaries)?;
    Ok(())
}

fn manifest_line(manifest: &mut impl Write, value: serde_json::Value) -> anyhow::Result<()> {
    writeln!(manifest, "{value}")?;
    manifest.flush()?;
    Ok(())
}

/// Runs every scenario, writing `<scenario>.csv`, `summary.csv`,
/// `manifest.jsonl` and `config.toml` under `opts.out` (plus `summary.txt`
/// for the table format). The summary is rewritten after each scenario so
/// an interrupted run leaves usable partial results.
pub fn run_study(config: &StudyConfig, opts: &RunOptions) -> anyhow::Result<RunReport> {
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    fs::write(opts.out.join("config.toml"), config.to_toml())?;
    let manifest_path = opts.out.join("manifest.jsonl");
    let mut manifest = BufWriter::new(
        File::create(&manifest_path).with_context(|| format!("creating {}", manifest_path.display()))?,
    );
    let hash = config.hash();
    manifest_line(
        &mut manifest,
        json!({
            "kind": "run",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": config.seed(),
            "config_hash": hash,
            "scenarios": config.scenarios.len(),
            "parallel_feature": cfg!(feature = "parallel"),
        }),
    )?;

    let started = Instant::now();
    let mut run = RunReport::default();
    write_summary(&opts.out, &run.summaries)?;
    for scenario in &config.scenarios {
        let t = Instant::now();
        match monte_carlo(scenario, opts.exec) {
            Ok(summary) => {
                let path = opts.out.join(scenario_file(&scenario.name));
                report::write_csv(BufWriter::new(File::create(&path)?), std::slice::from_ref(&summary))?;
                manifest_line(
                    &mut manifest,
                    json!({
                        "kind": "scenario",
                        "scenario": scenario.name,
                        "seed": scenario.seed,
                        "replications": scenario.replications,
                        "config_hash": hash,
                        "elapsed_secs": t.elapsed().as_secs_f64(),
                        "true_delta": summary.truth.delta,
                        "pi_opt": summary.truth.pi_opt,
                        "failures": summary.failures(),
                        "valid": summary.is_valid(),
                        "diagnostics": summary.diagnostics,
                        "file": scenario_file(&scenario.name),
                    }),
                )?;
                run.summaries.push(summary);
            }
            Err(e) => {
                manifest_line(
                    &mut manifest,
                    json!({"kind": "scenario", "scenario": scenario.name, "error": e.to_string(), "valid": false}),
                )?;
                run.errors.push((scenario.name.clone(), e.to_string()));
            }
        }
        write_summary(&opts.out, &run.summaries)?;
    }
    if opts.format == Format::Table {
        fs::write(opts.out.join("summary.txt"), report::text_table(&run.summaries))?;
    }
    manifest_line(
        &mut manifest,
        json!({
            "kind": "done",
            "elapsed_secs": started.elapsed().as_secs_f64(),
            "valid": run.success(),
            "invalid_scenarios": run.invalid_scenarios(),
        }),
    )?;
    Ok(run)
}
