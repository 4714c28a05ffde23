//! Command-line front end shared by the `svi` binary and its tests.

pub mod artifacts;
pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};

use crate::error::Result;
use config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "svi", version, about = "Sparse variational inference for ReLU networks")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Generate a sparse teacher network and synthetic train/test CSVs.
    Teacher,
    /// Train one architecture and write params.json and report.json.
    Train,
    /// Train every width candidate and keep the best penalized ELBO.
    Select,
    /// Evaluate closed-form rate quantities.
    Rates,
    /// Evaluate a saved params.json on CSV data.
    Eval,
}

/// Runs one subcommand; output that belongs on stdout is returned.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = config::load(&cli.overrides)?;
    let paths = match cli.command {
        Command::Teacher => commands::cmd_teacher(&cfg)?,
        Command::Train => commands::cmd_train(&cfg)?,
        Command::Select => commands::cmd_select(&cfg)?,
        Command::Rates => {
            let write = cli.overrides.out.is_some() || cfg.rates.is_some();
            let out = commands::cmd_rates(&cfg, write)?;
            return Ok(serde_json::to_string_pretty(&out)? + "\n");
        }
        Command::Eval => {
            let m = commands::cmd_eval(&cfg)?;
            return Ok(serde_json::to_string_pretty(&m)? + "\n");
        }
    };
    Ok(paths
        .iter()
        .map(|p| format!("wrote {}\n", p.display()))
        .collect())
}
