use std::process::ExitCode;

use clap::Parser;
use fealm_cli::commands::{self, Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::Run(args) => commands::run(args, &mut std::io::stdout().lock()),
        Command::Serve(args) => commands::serve(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
