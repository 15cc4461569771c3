use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use influence_ad::commands::{self, Overrides};
use influence_ad::report::version;
use influence_ad::CliError;

#[derive(Parser)]
#[command(name = "influence-ad", version = version_str(), about = "Influence-based anomaly detection for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn version_str() -> &'static str {
    Box::leak(version().into_boxed_str())
}

#[derive(Args)]
struct Common {
    /// Run config (or, for `prepare`, a dataset recipe).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Split and standardize a dataset.
    Prepare(Common),
    /// Train one model and save its checkpoints.
    Train(Common),
    /// Score the validation set and report F1.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint store to score instead of retraining.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Retrain every run and compare scorers.
    Bench(Common),
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let common = match &cli.command {
        Command::Prepare(c) | Command::Train(c) | Command::Bench(c) => c,
        Command::Evaluate { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    let ov = Overrides {
        out: common.out.clone(),
        seed: common.seed,
    };
    match &cli.command {
        Command::Prepare(c) => commands::prepare(&c.config, &ov),
        Command::Train(c) => commands::train(&c.config, &ov),
        Command::Evaluate { common, store } => commands::evaluate(&common.config, &ov, store.as_deref()),
        Command::Bench(c) => commands::bench(&c.config, &ov),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
