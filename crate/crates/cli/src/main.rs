mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Fit(a) => commands::fit_cmd(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Demo(a) => commands::demo_cmd(&a.which),
        Command::Export(a) => commands::export_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
