//! `gglink`: split, train, evaluate and cross-validate directed link
//! predictors from the command line.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use gglink_core::ErrorClass;

use args::{Cli, Command};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_VALIDATION: u8 = 4;
pub const EXIT_IO: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gglink_core::Error>() {
            return match e.class() {
                ErrorClass::Parse => EXIT_PARSE,
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Runtime => EXIT_RUNTIME,
            };
        }
        if cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_PARSE;
        }
        if cause.is::<commands::UsageError>() {
            return EXIT_VALIDATION;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_RUNTIME
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("GGLINK_THREADS") {
        let n: usize = value.parse().map_err(|_| {
            commands::UsageError(format!(
                "GGLINK_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
        if n == 0 {
            return Err(commands::UsageError("GGLINK_THREADS must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();

    let result = init_threads().and_then(|()| match &cli.command {
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Crossval(a) => commands::crossval(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
