use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rwre_cli::config::load_document;
use rwre_cli::{print_report, run, CliError, Command, ExperimentConfig};
use serde_json::Value;

/// Monte Carlo experiments for random walks in random environments.
///
/// Settings come from an optional JSON config; every flag overrides the key
/// of the same name, and `--set key=value` overrides any other key.
#[derive(Parser, Debug)]
#[command(name = "rwre", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// KEY=VALUE, VALUE parsed as JSON (e.g. `--set 'model={"name":"orthant2d","p":0.7}'`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut doc = load_document(cli.config.as_deref())?;
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        doc.insert(k.to_string(), value);
    }
    let flags = [
        ("seed", cli.seed.map(Value::from)),
        ("replicates", cli.replicates.map(Value::from)),
        ("steps", cli.steps.map(Value::from)),
        ("workers", cli.workers.map(Value::from)),
        ("out", cli.out.as_ref().map(|p| Value::from(p.to_string_lossy().into_owned()))),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            doc.insert(k.into(), v);
        }
    }
    ExperimentConfig::from_document(doc)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|cfg| run(cli.command, cfg));
    match result {
        Ok(report) => match print_report(&report) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("rwre: {e}");
                ExitCode::from(3)
            }
        },
        Err(e) => {
            eprintln!("rwre: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
