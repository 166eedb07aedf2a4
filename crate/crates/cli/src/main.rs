use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use holdout_al::strategies::StrategyId;
use holdout_al_cli::config::{ExperimentConfig, Overrides};
use holdout_al_cli::{cmd_run, cmd_sweep, report, CliError};

#[derive(Parser)]
#[command(name = "holdout-al", version, about = "Pool-based active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (strategy, seed) pair of a config, one after the other.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Summarize a results directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Run a config on several workers and write its report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Args)]
struct OverrideArgs {
    /// Replaces the seed list.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Replaces the strategy list.
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<String>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    step_size: Option<usize>,
    #[arg(long)]
    initial_per_class: Option<usize>,
    #[arg(long)]
    holdout_per_class: Option<usize>,
    /// Defaults to the config value, then $HOLDOUT_AL_OUTPUT_DIR, then ./results.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl OverrideArgs {
    fn resolve(self) -> Result<Overrides, CliError> {
        let strategies = self
            .strategy
            .map(|v| {
                v.iter()
                    .map(|s| s.parse::<StrategyId>().map_err(|e| CliError::Validation(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        Ok(Overrides {
            seeds: self.seed,
            strategies,
            steps: self.steps,
            step_size: self.step_size,
            initial_per_class: self.initial_per_class,
            holdout_per_class: self.holdout_per_class,
            output_dir: self.output_dir,
        })
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides.resolve()?)?;
            let csv = cmd_run(&cfg)?;
            eprintln!("results written to {}", csv.display());
        }
        Command::Sweep {
            config,
            workers,
            overrides,
        } => {
            let cfg = ExperimentConfig::load(&config, &overrides.resolve()?)?;
            for dir in cmd_sweep(&cfg, workers)? {
                eprintln!("results and report written to {}", dir.display());
            }
        }
        Command::Report { dir } => {
            let r = report::cmd_report(&dir)?;
            print!("{}", r.text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
