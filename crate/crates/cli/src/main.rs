use std::path::PathBuf;
use std::process::ExitCode;

use adaptrial::engine::Execution;
use adaptrial_cli::{parse_config, report, run_study, Format, RunOptions};
use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptrial", version, about = "Monte Carlo studies of multi-stage adaptive trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every scenario in a study file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads; 0 uses all cores, 1 runs sequentially.
        #[arg(long, env = "ADAPTRIAL_JOBS")]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Check a study file and print its normalized form.
    Validate { config: PathBuf },
    /// Print the true marginal means, effect and optimal allocation per scenario.
    TrueValues { config: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Validate { config } => {
            let study = parse_config(&config)?;
            print!("{}", study.to_toml());
            eprintln!("{} scenario(s), config hash {}", study.scenarios.len(), study.hash());
            Ok(ExitCode::SUCCESS)
        }
        Command::TrueValues { config } => {
            let study = parse_config(&config)?;
            println!("scenario,x_selector,mu1,mu0,delta,ev1,ev0,pi_opt");
            for s in &study.scenarios {
                let t = s.true_values().with_context(|| format!("scenario {}", s.name))?;
                println!(
                    "{},\"{}\",{:.6},{:.6},{:.6},{:.6},{:.6},{:.4}",
                    s.name, s.selector, t.mu1, t.mu0, t.delta, t.ev1, t.ev0, t.pi_opt
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, seed, reps, jobs, out, format } => {
            let study = parse_config(&config)?.with_overrides(seed, reps)?;
            let exec = jobs.or(study.jobs).map_or_else(Execution::default, Execution::from_jobs);
            let out = out.unwrap_or_else(|| study.output_dir.clone());
            let report = run_study(&study, &RunOptions { exec, out: out.clone(), format })?;
            if format == Format::Table {
                print!("{}", report::text_table(&report.summaries));
            }
            eprintln!("wrote {} scenario(s) to {}", report.summaries.len(), out.display());
            if report.success() {
                Ok(ExitCode::SUCCESS)
            } else {
                for name in report.invalid_scenarios() {
                    eprintln!("invalid summary: {name}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
