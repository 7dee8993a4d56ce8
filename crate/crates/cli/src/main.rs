mod commands;
mod output;
mod scenario;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use bifurcat_core::continuation::BifurcationEvent;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Equilibria,
    Stability,
    Hopf,
    Lyapunov,
    ContinueEq,
    ContinueHopf,
    Cycles,
    Figure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Equilibria, stability, Hopf/Bautin analysis and continuation for the
/// leafhopper-mite model.
#[derive(Debug, Parser)]
#[command(name = "bifurcat", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Format of tabular outputs; events are always JSON.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Seed for randomized initial states.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Input(String),
    #[error("{message}")]
    Numerical {
        message: String,
        events: Vec<BifurcationEvent>,
    },
}

impl Failure {
    pub fn numerical(message: impl Into<String>) -> Self {
        Failure::Numerical {
            message: message.into(),
            events: Vec::new(),
        }
    }
}

impl From<bifurcat_core::Error> for Failure {
    fn from(e: bifurcat_core::Error) -> Self {
        match e {
            bifurcat_core::Error::InvalidParameter { .. } => Failure::Input(e.to_string()),
            other => Failure::numerical(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match commands::run(&cli) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical { message, events }) => {
            eprintln!("numerical failure: {message}");
            match output::Sink::new(&cli.out)
                .and_then(|s| s.write("failure.json", &output::failure_json(&message, &events)))
            {
                Ok(p) => eprintln!("event log: {}", p.display()),
                Err(e) => eprintln!("could not write event log: {e}"),
            }
            ExitCode::from(2)
        }
    }
}
