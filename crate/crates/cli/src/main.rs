mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Strategy;

/// Gaussian-process forecasting with learned window locations and kernel
/// structure search.
#[derive(Parser, Debug)]
#[command(name = "autogp", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config entry, e.g. `--set train.lr=0.01` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Window length L.
    #[arg(short = 'L', long)]
    pub length: Option<usize>,
    /// Window step Δ.
    #[arg(long)]
    pub step: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search a kernel structure and write it with a budget report.
    Search {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        /// Search depth R.
        #[arg(short = 'R', long = "order")]
        order: Option<usize>,
    },
    /// Train a forecaster (searching first unless a kernel is given).
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        #[arg(short = 'R', long = "order")]
        order: Option<usize>,
        /// Fixed kernel expression, e.g. "SE + PER*LIN".
        #[arg(long, conflicts_with = "kernel_file")]
        kernel: Option<String>,
        /// File holding a kernel expression (as written by `search`).
        #[arg(long)]
        kernel_file: Option<PathBuf>,
    },
    /// Forecast F steps after the rows of a recent-window CSV.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        /// CSV with exactly L rows.
        #[arg(long)]
        recent: PathBuf,
        #[arg(short = 'F', long)]
        horizon: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Rolling-origin evaluation on a test CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(short = 'F', long)]
        horizon: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write the training covariance K, the cross-variable weights D and
    /// shared-kernel blocks C^{m,n}.
    ExportCov {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only export the block for this pair of variables.
        #[arg(long, num_args = 2, value_names = ["M", "N"])]
        pair: Option<Vec<usize>>,
    },
    /// Generate a synthetic series.
    Synth(commands::SynthArgs),
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("AUTOGP_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow::anyhow!("AUTOGP_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<autogp::Error>())
        .any(|e| e.is_numerical());
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = init_threads().and_then(|_| {
        let base = || config::RunConfig::load(cli.config.as_deref(), &cli.set);
        match cli.command {
            Command::Search { run, strategy, order } => commands::search(base()?, &run, strategy, order),
            Command::Train {
                run,
                strategy,
                order,
                kernel,
                kernel_file,
            } => commands::train(base()?, &run, strategy, order, kernel, kernel_file),
            Command::Forecast {
                model,
                recent,
                horizon,
                output,
            } => commands::forecast(&model, &recent, horizon, &output),
            Command::Eval {
                model,
                data,
                horizon,
                output,
            } => commands::eval(&model, &data, horizon, &output),
            Command::ExportCov { model, out, pair } => commands::export_cov(&model, &out, pair),
            Command::Synth(args) => commands::synth(&args),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
