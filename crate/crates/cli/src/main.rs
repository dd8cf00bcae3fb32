//! Command-line front end for training, evaluating and inspecting
//! head-lexicalized tree LSTMs.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure
//! (a non-finite loss or a failed gradient check).

mod commands;
mod manifest;
mod opts;

use std::process::ExitCode;

use clap::Parser;
use opts::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Predict(a) => commands::predict_cmd(a),
        Command::InspectHeads(a) => commands::inspect_cmd(a),
        Command::Gradcheck(a) => commands::gradcheck_cmd(a),
        Command::CountParams(a) => commands::count_cmd(a),
        Command::CompareStrategies(a) => commands::compare_cmd(a),
        Command::RerankScore(a) => commands::rerank_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
