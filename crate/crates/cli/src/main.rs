use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use kdv_cli::{
    compare_experiment, run_experiment, sweep, ConfigError, ExitStatus, RawConfig, RunConfig,
    RunSummary,
};
use kdv_core::sweep::Execution;

/// Multisymplectic and classical schemes for the KdV equation.
///
/// Exit codes: 0 success, 1 output or solver failure, 2 iteration
/// divergence, 3 invalid configuration, 4 blow-up.
#[derive(Parser)]
#[command(name = "kdv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme and write snapshots, diagnostics and a manifest.
    Run(RunArgs),
    /// Run two schemes from the same data and write their per-step gap.
    Compare(RunArgs),
    /// Run several configuration files, concurrently when built with the
    /// `parallel` feature.
    Sweep {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
}

/// Every flag overrides the configuration file key of the same name.
#[derive(Args)]
struct RunArgs {
    /// Configuration file of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    /// zero, cosine, soliton:A:x0, two-soliton:A1:x1:A2:x2 or file:PATH
    #[arg(long, allow_hyphen_values = true)]
    ic: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    xmin: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    xmax: Option<String>,
    /// exact or printed
    #[arg(long)]
    variant: Option<String>,
    /// index:value, 1-based
    #[arg(long, allow_hyphen_values = true)]
    anchor: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    divergence_threshold: Option<String>,
    #[arg(long)]
    snapshot_every: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Second scheme for `compare`.
    #[arg(long)]
    compare_with: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        let out = self.out.as_ref().map(|p| p.display().to_string());
        let flags = [
            ("scheme", &self.scheme),
            ("n", &self.n),
            ("tau", &self.tau),
            ("steps", &self.steps),
            ("ic", &self.ic),
            ("eta", &self.eta),
            ("delta", &self.delta),
            ("xmin", &self.xmin),
            ("xmax", &self.xmax),
            ("variant", &self.variant),
            ("anchor", &self.anchor),
            ("tol", &self.tol),
            ("max-iter", &self.max_iter),
            ("divergence-threshold", &self.divergence_threshold),
            ("snapshot-every", &self.snapshot_every),
            ("out", &out),
            ("compare-with", &self.compare_with),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                raw.set(key, value, &format!("--{key}"))?;
            }
        }
        raw.resolve()
    }
}

fn report(summary: &RunSummary) -> ExitStatus {
    match &summary.error {
        None => println!(
            "{}: {} steps written",
            summary.out.display(),
            summary.steps_completed
        ),
        Some(e) => eprintln!(
            "kdv: {}: stopped after {} steps: {e}",
            summary.out.display(),
            summary.steps_completed
        ),
    }
    summary.status
}

fn execute(command: Command) -> ExitStatus {
    let single = |args: RunArgs, compare: bool| {
        let outcome = args.resolve().map_err(Into::into).and_then(|cfg| {
            if compare {
                compare_experiment(&cfg)
            } else {
                run_experiment(&cfg)
            }
        });
        match outcome {
            Ok(summary) => report(&summary),
            Err(e) => {
                eprintln!("kdv: {e}");
                e.status()
            }
        }
    };
    match command {
        Command::Run(args) => single(args, false),
        Command::Compare(args) => single(args, true),
        Command::Sweep { configs } => {
            let resolved: Result<Vec<RunConfig>, ConfigError> = configs
                .iter()
                .map(|path| RawConfig::from_file(path)?.resolve())
                .collect();
            let outcomes = match resolved.and_then(|cfgs| sweep(&cfgs, Execution::default())) {
                Ok(outcomes) => outcomes,
                Err(e) => {
                    eprintln!("kdv: {e}");
                    return ExitStatus::InvalidConfig;
                }
            };
            outcomes.iter().fold(ExitStatus::Success, |worst, outcome| {
                let status = match outcome {
                    Ok(summary) => report(summary),
                    Err(e) => {
                        eprintln!("kdv: {e}");
                        e.status()
                    }
                };
                worst.worst(status)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(ExitStatus::InvalidConfig.code()),
            };
        }
    };
    ExitCode::from(execute(cli.command).code())
}
