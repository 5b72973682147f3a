use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use witten_cli::{execute, prepare, CliError, Overrides, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Critical points, barrier and prefactor.
    Landscape,
    /// Lowest eigenvalues for each eps.
    Spectrum,
    /// Gap against the prediction over the eps list, plus a rate fit.
    Sweep,
    /// Quasimode estimates and the resulting bounds on the gap.
    Quasimode,
    /// Lattice Gaussian sums against their leading terms.
    LaplaceCheck,
    /// Mean transition time of the jump process.
    Simulate,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Landscape => Subcommand::Landscape,
            Command::Spectrum => Subcommand::Spectrum,
            Command::Sweep => Subcommand::Sweep,
            Command::Quasimode => Subcommand::Quasimode,
            Command::LaplaceCheck => Subcommand::LaplaceCheck,
            Command::Simulate => Subcommand::Simulate,
        }
    }
}

/// Low-lying spectrum of lattice Witten Laplacians.
#[derive(Debug, Parser)]
#[command(name = "wl", version)]
struct Args {
    command: Command,
    /// JSON experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma separated, strictly decreasing.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Report directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the trajectory streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Built-in name or a potential JSON file.
    #[arg(long, global = true)]
    potential: Option<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cmd = Subcommand::from(args.command);
    let overrides = Overrides {
        eps: args.eps,
        out: args.out,
        seed: args.seed,
        threads: args.threads,
        potential: args.potential,
    };
    let result = prepare(cmd, args.config.as_deref(), &overrides)
        .map_err(CliError::from)
        .and_then(|r| execute(cmd, &r));
    match result {
        Ok((out, files)) => {
            println!("{}", out.summary);
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
