//! Library half of the `wshare` command-line tool.

pub mod cli;
pub mod commands;
pub mod manifest;
pub mod output;

use std::io::Write;

use cli::{Cli, Command};

/// Runs one command. `Ok(false)` means the command ran but a check failed.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Analyze(a) => commands::analyze::run(a, out),
        Command::Cluster(a) => commands::cluster::run(a, out),
        Command::Verify(a) => commands::verify::run(a, out),
        Command::Compare(a) => commands::compare::run(a, out, err),
        Command::Map(a) => commands::map::run(a, out),
    }
}
