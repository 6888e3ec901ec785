mod args;
mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

const EXIT_OTHER: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_TRAINING: u8 = 4;
const EXIT_DEGENERATE: u8 = 5;

fn core_exit_code(e: &insider_core::Error) -> u8 {
    use insider_core::Error as E;
    match e {
        E::Schema(_) | E::Parse { .. } | E::Validation(_) => EXIT_SCHEMA,
        E::Config(_) | E::Shape(_) | E::Mode(_) => EXIT_CONFIG,
        E::Training { .. } => EXIT_TRAINING,
        E::Degenerate(_) => EXIT_DEGENERATE,
        E::AtK { source, .. } => core_exit_code(source),
        _ => EXIT_OTHER,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|c| c.downcast_ref::<insider_core::Error>())
        .map_or(EXIT_OTHER, core_exit_code)
}

fn parse_cli() -> Result<Cli, ExitCode> {
    let mut argv: Vec<OsString> = std::env::args_os().collect();
    let cmd = Cli::command();
    if let Some(path) = config::config_path(&argv) {
        argv = match config::splice(argv, &PathBuf::from(path), &cmd) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("error: {e:#}");
                return Err(ExitCode::from(EXIT_CONFIG));
            }
        };
    }
    match cmd.try_get_matches_from(argv).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => Ok(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            Err(ExitCode::from(code))
        }
    }
}

fn main() -> ExitCode {
    let cli = match parse_cli() {
        Ok(c) => c,
        Err(code) => return code,
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Synth(a) => commands::synth(a),
        Command::ScanK(a) => commands::scan_k_cmd(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Enrich(a) => commands::enrich(a),
        Command::Check(a) => commands::check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
