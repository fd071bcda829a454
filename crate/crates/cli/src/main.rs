mod args;
mod commands;
mod error;
mod manifest;
mod settings;
mod tokenizer;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use settings::Settings;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SUBICAP_LOG", "info")).init();
    let cli = Cli::parse();
    let result = Settings::load(cli.config.as_deref()).and_then(|s| commands::run(cli.command, s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
