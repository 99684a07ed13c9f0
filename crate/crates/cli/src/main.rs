mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AppError, Ctx, Status};
use output::OutDir;

#[derive(Parser)]
#[command(name = "biasfield", version, about = "Incremental fields on biased thermoelectroelastic bodies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario and export fields per saved level.
    Simulate(Common),
    /// Print effective constants next to the classical moduli.
    Constants(Common),
    /// Energy-balance residual under time-step refinement.
    VerifyEnergy(Common),
    /// Lyapunov decay of the difference of two runs.
    VerifyUniqueness(Common),
    /// Enthalpy density and variational identities.
    VerifyHamilton(Common),
    /// Laplace-domain reciprocity between `action` and `action_b`.
    VerifyReciprocity(Common),
    /// Joint grid and time self-convergence study.
    Converge(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Refinement levels (overrides the config).
    #[arg(long)]
    levels: Option<usize>,
    /// Comma-separated Laplace parameters (overrides the config).
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<Status, AppError> {
    let (name, common, f): (&'static str, Common, fn(&Ctx) -> Result<Status, AppError>) = match cli.command {
        Command::Simulate(c) => ("simulate", c, commands::simulate),
        Command::Constants(c) => ("constants", c, commands::constants),
        Command::VerifyEnergy(c) => ("verify-energy", c, commands::verify_energy),
        Command::VerifyUniqueness(c) => ("verify-uniqueness", c, commands::verify_uniqueness),
        Command::VerifyHamilton(c) => ("verify-hamilton", c, commands::verify_hamilton),
        Command::VerifyReciprocity(c) => ("verify-reciprocity", c, commands::verify_reciprocity),
        Command::Converge(c) => ("converge", c, commands::converge),
    };
    let mut config = config::parse_config(&common.config)?;
    let v = &mut config.verification;
    if let Some(l) = common.levels {
        v.levels = l;
    }
    if let Some(p) = common.p {
        v.p = p;
    }
    if let Some(s) = common.seed {
        v.seed = s;
    }
    config.validate()?;
    let out = OutDir::create(&common.out)?;
    out.write("config.toml", &config.to_canonical())?;
    f(&Ctx { config, out, command: name })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
