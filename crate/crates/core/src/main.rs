use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shgp::cli::{self, Command, ConfigBuilder};
use shgp::ShgpError;

#[derive(Parser)]
#[command(
    name = "shgp",
    version,
    about = "Hidden Markov models with reversible transitions under a hierarchical gamma process prior"
)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a chain and observations from the prior.
    Simulate(Common),
    /// Run the MCMC sampler on a data set.
    Fit(Common),
    /// Evaluate posterior predictive error on training and held-out cells.
    Predict(Common),
    /// Detailed balance, convergence and active-state diagnostics.
    Diagnose(Common),
}

#[derive(clap::Args)]
struct Common {
    /// `key = value` config file; SHGP_* variables and flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Independent chains, written to `<output>/chain_<i>` with seeds seed+i.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Overrides the `output.dir` key.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn execute(args: Args) -> Result<(), ShgpError> {
    let (command, common) = match args.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Fit(c) => (Command::Fit, c),
        Cmd::Predict(c) => (Command::Predict, c),
        Cmd::Diagnose(c) => (Command::Diagnose, c),
    };
    let mut builder = ConfigBuilder::default();
    if let Some(path) = common.config {
        builder.apply_file(&path)?;
    }
    builder.apply_env(std::env::vars())?;
    if let Some(seed) = common.seed {
        builder.set("seed", seed.to_string())?;
    }
    if let Some(dir) = common.output {
        builder.set("output.dir", dir.to_string_lossy())?;
    }
    if common.chains == 0 {
        return Err(ShgpError::Config("--chains must be at least 1".into()));
    }
    let cfg = builder.build()?;
    cli::run(command, &cfg, common.chains)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.class(), e);
            ExitCode::from(match e.class() {
                "config" => 2,
                "io" | "format" => 3,
                _ => 1,
            })
        }
    }
}
