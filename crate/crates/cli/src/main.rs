use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ctrp_cli::commands::{self, required_out, BoundsConfig};
use ctrp_cli::config::Split;
use ctrp_cli::error::{CliError, CliResult};
use ctrp_core::jl::BoundVariant;

/// Compressed Bayesian tensor regression.
#[derive(Parser)]
#[command(name = "ctrp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the ensemble projections and compress the configured data.
    Project {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Tabulate JL sample-size bounds over a grid of tolerances.
    Bounds {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Repeatable; defaults to tensorwise and modewise.
        #[arg(long = "variant", value_enum)]
        variants: Vec<VariantArg>,
        /// `lo:hi:count` or a comma-separated list.
        #[arg(long)]
        eps_grid: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        order: Option<u32>,
        #[arg(long)]
        rank: Option<u32>,
        #[arg(long)]
        constant: Option<f64>,
    },
    /// Fit the projected ensemble on the training split.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Forecast with a model written by `fit`.
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Output directory of `fit`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Run a simulation scenario.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
        /// Also write the simulated train, test and coefficient CSVs.
        #[arg(long)]
        emit_data: bool,
    },
    /// Time the compressed fit of a scenario against the uncompressed one.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Tensorwise,
    Modewise,
    Hypercontractive,
    Cp,
    Tt,
}

impl From<VariantArg> for BoundVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Tensorwise => BoundVariant::Tensorwise,
            VariantArg::Modewise => BoundVariant::Modewise,
            VariantArg::Hypercontractive => BoundVariant::Hypercontractive,
            VariantArg::Cp => BoundVariant::Cp,
            VariantArg::Tt => BoundVariant::Tt,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("CTRP_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        CliError::config(format!(
            "CTRP_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Project {
            config,
            out,
            seed_override,
        } => commands::project(&config, out.as_deref(), seed_override),
        Command::Bounds {
            config,
            out,
            variants,
            eps_grid,
            beta,
            n,
            order,
            rank,
            constant,
        } => {
            let flags = BoundsConfig {
                variants: (!variants.is_empty())
                    .then(|| variants.into_iter().map(Into::into).collect()),
                eps_grid,
                beta,
                n,
                order,
                rank,
                constant,
            };
            commands::bounds(config.as_deref(), flags, &out)
        }
        Command::Fit {
            config,
            out,
            seed_override,
        } => commands::fit(&config, out.as_deref(), seed_override),
        Command::Predict {
            config,
            model,
            out,
            split,
        } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            commands::predict(&config, &model, out.as_deref(), split)
        }
        Command::Simulate {
            config,
            out,
            seed_override,
            emit_data,
        } => commands::simulate_cmd(&config, &required_out(out)?, seed_override, emit_data),
        Command::Bench {
            config,
            out,
            seed_override,
        } => commands::bench(&config, &required_out(out)?, seed_override),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let err = CliError::config(e.to_string().trim_end());
                eprintln!("{}", err.to_json());
                return ExitCode::from(err.category.exit_code());
            }
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.category.exit_code())
        }
    }
}
