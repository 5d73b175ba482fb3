use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use feedsim::config::ExperimentConfig;
use feedsim::pipeline;

/// Feed-following consistency simulator.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Experiment config (TOML); built-in desk defaults if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory. FEEDSIM_OUT takes precedence.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the following network and workload profile.
    Gen,
    /// Simulate the workload and write tweet and response logs.
    Run,
    /// Detect observable conflicts in the logs.
    Detect,
    /// Write the analytics report.
    Report,
    /// Run every stage and evaluate the acceptance checks.
    Repro,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = pipeline::resolve_out_dir(&cfg, cli.out);

    match cli.command {
        Command::Gen => {
            let v = pipeline::cmd_gen(&cfg, &dir)?;
            for c in &v.checks {
                println!(
                    "{:<24} mean {:>8.3} (target {:>6.3}, error {:>5.1}%)",
                    c.name,
                    c.realized_mean,
                    c.target_mean,
                    c.relative_error * 100.0
                );
            }
        }
        Command::Run => {
            let s = pipeline::cmd_run(&cfg, &dir)?;
            let (w, r) = s.throughput();
            println!(
                "tweets {}, responses {}, timeline writes {}, retries {}",
                s.tweets, s.responses, s.timeline_writes, s.retries
            );
            println!("throughput: {w:.2} writes/s, {r:.2} reads/s");
            for (kind, n) in &s.events_by_kind {
                println!("  {kind:<20} {n}");
            }
        }
        Command::Detect => {
            let t = pipeline::cmd_detect(&cfg, &dir)?;
            println!(
                "analyzed {} responses, {} conflicting, {} conflict records",
                t.responses_analyzed, t.conflicting_responses, t.conflict_records
            );
        }
        Command::Report => {
            pipeline::cmd_report(&cfg, &dir)?;
            print!(
                "{}",
                std::fs::read_to_string(dir.join(pipeline::REPORT_DIR).join("summary.txt"))?
            );
        }
        Command::Repro => {
            let checks = pipeline::cmd_repro(&cfg, &dir)?;
            for c in &checks {
                println!("{}", c.line());
            }
            if checks.iter().any(|c| !c.pass) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
