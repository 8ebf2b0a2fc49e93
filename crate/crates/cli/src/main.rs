mod commands;
mod config;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::UsageError;

#[derive(Parser)]
#[command(name = "phaselab", version, about = "Phase randomness of gain-switched laser pulses")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// JSON file with optional `laser`, `grid`, `interference` and `cascade` sections.
    #[arg(long, global = true, value_name = "JSON")]
    pub params: Option<PathBuf>,
    /// Master seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true, env = "PHASELAB_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Stochastic rate-equation runs.
    #[command(subcommand)]
    Simulate(commands::Simulate),
    /// Tabulated density of the normalized interference signal.
    Pdf(commands::PdfArgs),
    /// Histogram of Monte-Carlo signal samples.
    Sample(commands::SampleArgs),
    /// Mean and std of the signal versus interferometer phase.
    FringeModel(commands::FringeModelArgs),
    /// Min-entropy, distances and reduction factors.
    #[command(subcommand)]
    Entropy(commands::Entropy),
    /// Fits of measured fringes.
    #[command(subcommand)]
    Fit(commands::Fit),
    /// Interferometer cascade.
    #[command(subcommand)]
    Cascade(commands::Cascade),
    /// Maps raw histogram areas to the normalized signal.
    Normalize(commands::NormalizeArgs),
    /// Regenerates the data behind one figure.
    Reproduce(reproduce::ReproduceArgs),
}

fn run(cli: Cli) -> anyhow::Result<String> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(config::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    std::fs::create_dir_all(&cli.global.out)?;
    let params = config::ParamFile::load(cli.global.params.as_deref())?;
    let g = &cli.global;
    match cli.command {
        Command::Simulate(c) => commands::simulate(c, g, &params),
        Command::Pdf(a) => commands::pdf(a, g, &params),
        Command::Sample(a) => commands::sample(a, g, &params),
        Command::FringeModel(a) => commands::fringe_model(a, g, &params),
        Command::Entropy(c) => commands::entropy(c, g, &params),
        Command::Fit(c) => commands::fit(c, g),
        Command::Cascade(c) => commands::cascade(c, g, &params),
        Command::Normalize(a) => commands::normalize(a, g),
        Command::Reproduce(a) => reproduce::run(a, g, &params),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
