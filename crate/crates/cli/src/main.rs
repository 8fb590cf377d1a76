use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mirror_msa_cli::{run_experiment, ConfigError, Experiment, ExperimentError, PartialConfig};

/// Mirror-descent method of successive approximations: experiment runner.
#[derive(Debug, Parser)]
#[command(name = "mirror-msa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scalar LQ problem against the Riccati optimum.
    Lq(Flags),
    /// Quartic terminal-cost problem, tau = 0 and tau > 0.
    Quartic(Flags),
    /// High-dimensional nonlinear system, one solve per dimension.
    Highdim(Flags),
    /// Gradient triangle and inequality suites.
    Gradcheck(Flags),
    /// Experiment named by the config file's `experiment` key.
    Run(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with keys matching the configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn resolve(command: Command) -> Result<mirror_msa_cli::ExperimentConfig, ExperimentError> {
    let (selected, flags) = match command {
        Command::Lq(f) => (Some(Experiment::Lq), f),
        Command::Quartic(f) => (Some(Experiment::Quartic), f),
        Command::Highdim(f) => (Some(Experiment::Highdim), f),
        Command::Gradcheck(f) => (Some(Experiment::Gradcheck), f),
        Command::Run(f) => (None, f),
    };
    let file = match &flags.config {
        Some(path) => PartialConfig::from_file(path)?,
        None if selected.is_none() => return Err(ConfigError::Invalid("run needs --config <path>".into()).into()),
        None => PartialConfig::default(),
    };
    if let (Some(s), Some(f)) = (selected, file.experiment) {
        if s != f {
            return Err(ConfigError::Invalid(format!("config file selects {f} but the subcommand is {s}")).into());
        }
    }
    let over = PartialConfig {
        experiment: selected,
        tau: flags.tau,
        lambda: flags.lambda,
        nt: flags.nt,
        max_iters: flags.max_iters,
        dims: flags.dims,
        seed: flags.seed,
        output_dir: flags.out,
        ..Default::default()
    };
    Ok(file.overlay(over).resolve()?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = resolve(cli.command).and_then(|config| run_experiment(&config));
    match outcome {
        Ok(summary) => {
            for c in &summary.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status} {}", c.name);
            }
            println!("summary: {}", summary.config.output_dir.join("summary.json").display());
            ExitCode::from(if summary.passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
