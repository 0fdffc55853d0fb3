use clap::{Parser, Subcommand};
use epiphase::pipeline::{self, synth, Command, PipelineConfig, PipelineError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Epidemic-phase analysis: structural breaks, dispersion momentum, phase
/// labeling, per-phase mobility fits and policy indices.
///
/// Exit codes: 0 success, 2 input/output error, 3 schema or configuration
/// error, 4 analysis error.
#[derive(Debug, Parser)]
#[command(name = "epiphase", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for bootstrap resampling and fixture generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = parse_override)]
    overrides: Vec<(String, String)>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check every configured input and print a JSON report.
    Validate,
    /// Full pipeline: tables, figures and manifest.
    Run,
    /// Structural breaks of the smoothed case counts.
    Cpd,
    /// Dispersion momentum and its sign transitions.
    Geo,
    /// Phase timeline from fused transitions.
    Phases,
    /// Per-phase fits of mobility reduction on case counts.
    Fit,
    /// Policy response indices.
    Index,
    /// Write the synthetic fixture and its configuration to DIR.
    Synth { dir: PathBuf },
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), out.display().to_string()));
    }
    PipelineConfig::load(cli.config.as_deref(), &overrides, Path::new("."))
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let command = match &cli.command {
        Cmd::Synth { dir } => {
            let config = synth::write_fixture(dir, cli.seed.unwrap_or(synth::DEFAULT_SEED))?;
            println!("{}", config.display());
            return Ok(());
        }
        Cmd::Validate => {
            let cfg = load_config(cli)?;
            let report = pipeline::validate_inputs(&cfg)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| PipelineError::Output(e.to_string()))?;
            println!("{text}");
            return Ok(());
        }
        Cmd::Run => Command::Run,
        Cmd::Cpd => Command::Cpd,
        Cmd::Geo => Command::Geo,
        Cmd::Phases => Command::Phases,
        Cmd::Fit => Command::Fit,
        Cmd::Index => Command::Index,
    };
    let cfg = load_config(cli)?;
    let summary = pipeline::execute(&cfg, command)?;
    for w in &summary.manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}: {} files written to {}", command.as_str(), summary.files.len(), summary.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
