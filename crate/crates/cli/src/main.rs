use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlwave_cli::{run_command, Command};

#[derive(Parser)]
#[command(name = "nlwave", version, about = "Travelling-wave profiles and simulations for nonlocal traffic models")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Decay rates of the profile tails.
    Rates(RunArgs),
    /// Macroscopic profile Q.
    ProfileQ(RunArgs),
    /// Discrete profile P for car length ell.
    ProfileP(RunArgs),
    /// Follow-the-leaders simulation.
    FtlsSim(RunArgs),
    /// Nonlocal conservation law simulation.
    PdeSim(RunArgs),
    /// Convergence of P towards Q as ell shrinks.
    MicroMacro(RunArgs),
    /// Several runs of one command.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, replacing `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted `key=value` override, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Rates(a) => (Command::Rates, a),
        Sub::ProfileQ(a) => (Command::ProfileQ, a),
        Sub::ProfileP(a) => (Command::ProfileP, a),
        Sub::FtlsSim(a) => (Command::FtlsSim, a),
        Sub::PdeSim(a) => (Command::PdeSim, a),
        Sub::MicroMacro(a) => (Command::MicroMacro, a),
        Sub::Sweep(a) => (Command::Sweep, a),
    };
    match run_command(command, args.config.as_deref(), args.out.as_deref(), &args.overrides) {
        Ok(outcome) => {
            if let Some(text) = outcome.stdout {
                println!("{}", text);
            }
            for f in outcome.files {
                eprintln!("wrote {}", f);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
