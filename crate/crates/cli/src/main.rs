//! `scgfm` command-line entry point.

mod args;
mod commands;
mod data;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Embed(a) => commands::embed(a),
        Command::Eval(a) => commands::eval(a),
        Command::Diagnose(d) => commands::diagnose(d),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
