//! Command-line front end for the pagemill pipeline.
//!
//! Exit codes: 0 on success, 1 when `validate` finds violations, 2 on
//! fatal configuration or I/O errors (including usage errors).

use clap::{Args, Parser, Subcommand};
use pagemill::pipeline::{
    cmd_anneal_plan, cmd_generate, cmd_ingest, cmd_length_report, cmd_stats, cmd_validate,
    PipelineConfig,
};
use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pagemill",
    version,
    about = "Layout-aware instruction-data pipeline for OCR'd document pages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML pipeline configuration; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; overrides the config value.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Input file.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Output file.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, value_name = "INT")]
    workers: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Normalized pages JSONL the records were generated from.
    #[arg(long, value_name = "PATH")]
    pages: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize raw OCR JSONL onto the [0, 1000] page grid.
    Ingest(CommonArgs),
    /// Synthesize instruction records from normalized pages.
    Generate(CommonArgs),
    /// Write the per-step CoT/direct batch mix plan.
    AnnealPlan(CommonArgs),
    /// Measure prompt lengths under both coordinate modes.
    LengthReport(CommonArgs),
    /// Re-verify generated records against their source pages.
    Validate(ValidateArgs),
    /// Count records per task and render mode.
    Stats(CommonArgs),
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, Box<dyn Error>> {
    value.ok_or_else(|| format!("missing required flag {flag}").into())
}

fn load_config(common: &CommonArgs) -> Result<PipelineConfig, Box<dyn Error>> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// Runs one subcommand; `Ok(false)` means "completed, but validation
/// failures are present".
fn run(cli: Cli) -> Result<bool, Box<dyn Error>> {
    let mut log = std::io::stderr();
    match cli.command {
        Command::Ingest(args) => {
            let input = require(args.input.as_deref(), "--input")?;
            let output = require(args.output.as_deref(), "--output")?;
            let report = cmd_ingest(input, output, &mut log)?;
            println!(
                "ingested {} pages ({} lines failed) -> {}",
                report.pages_written,
                report.lines_failed,
                output.display()
            );
            Ok(true)
        }
        Command::Generate(args) => {
            let config = load_config(&args)?;
            let input = require(args.input.as_deref(), "--input")?;
            let output = require(args.output.as_deref(), "--output")?;
            let report = cmd_generate(input, &config, output, args.workers, &mut log)?;
            println!(
                "generated {} lines from {} pages ({} skipped) -> {}",
                report.lines_written,
                report.pages_processed,
                report.pages_skipped,
                output.display()
            );
            Ok(true)
        }
        Command::AnnealPlan(args) => {
            let config = load_config(&args)?;
            let output = require(args.output.as_deref(), "--output")?;
            let report = cmd_anneal_plan(&config, output, &mut log)?;
            println!(
                "planned {} steps (max window deviation {:.6}) -> {}",
                report.steps,
                report.max_window_deviation,
                output.display()
            );
            Ok(true)
        }
        Command::LengthReport(args) => {
            let config = load_config(&args)?;
            let input = require(args.input.as_deref(), "--input")?;
            let output = require(args.output.as_deref(), "--output")?;
            let summary = cmd_length_report(input, &config, output, &mut log)?;
            println!(
                "measured {} pages: mean textual {:.2}, mean embedded {:.2}, ratio {:.2}, {} patch tokens -> {}",
                summary.pages,
                summary.mean_i,
                summary.mean_ii,
                summary.ratio,
                summary.patch_tokens,
                output.display()
            );
            Ok(true)
        }
        Command::Validate(args) => {
            let input = require(args.common.input.as_deref(), "--input")?;
            let pages = require(args.pages.as_deref(), "--pages")?;
            let report = cmd_validate(input, pages, &mut log)?;
            println!(
                "{} violations in {} records",
                report.violations.len(),
                report.records_checked
            );
            Ok(report.violations.is_empty())
        }
        Command::Stats(args) => {
            let input = require(args.input.as_deref(), "--input")?;
            let report = cmd_stats(input, args.output.as_deref(), &mut log)?;
            for (task, modes) in &report.counts {
                for (mode, count) in modes {
                    println!("{task}\t{mode}\t{count}");
                }
            }
            println!(
                "total\t{} records ({} invalid lines)",
                report.total, report.invalid_lines
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
