use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lowrank_lab::runner::{self, Overrides, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "lowrank-lab", version, about = "Low-rank bias experiments and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a named acceptance suite.
    Verify { suite: String },
    /// Run a config once per value of one numeric field.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let code = match cli.command {
        Command::Run { config, out, seed } => runner::run(&config, &Overrides { out, seed }),
        Command::Verify { suite } => runner::verify(&suite),
        Command::Sweep { config, param, values, out, seed } => {
            let values: Vec<String> = values.into_iter().filter(|v| !v.trim().is_empty()).collect();
            runner::sweep(&config, &param, &values, &Overrides { out, seed })
        }
    };
    ExitCode::from(code as u8)
}
