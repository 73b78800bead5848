//! `gjms`: command-line front end. Exit codes: 0 pass, 1 failure, 2 configuration error,
//! 3 indeterminate.

mod args;
mod commands;
mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use gjms_core::Error;

use args::{Cli, Command, Common};
use commands::Output;
use config::RunConfig;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INDETERMINATE: u8 = 3;

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidModel(_)
        | Error::InvalidLattice(_)
        | Error::InvalidInput(_)
        | Error::Unsupported(_)
        | Error::CutoffTooLarge(_)
        | Error::NonPositiveImTau(_) => EXIT_CONFIG,
        Error::NoConvergence(_) | Error::Breakdown { .. } => EXIT_INDETERMINATE,
        Error::LatticeMismatch(_) | Error::Io(_) => EXIT_FAILURE,
    }
}

fn threads_from_env() -> Result<(), Error> {
    match std::env::var("GJMS_THREADS") {
        Err(_) => Ok(()),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                gjms_core::exec::configure_threads(n);
                Ok(())
            }
            _ => Err(Error::Config(format!("GJMS_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let base = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    base.overlay(common)
}

fn run(cli: Cli) -> Result<(Output, RunConfig), Error> {
    threads_from_env()?;
    let (common, job): (&Common, Box<dyn Fn(&RunConfig) -> Result<Output, Error>>) = match &cli.command {
        Command::Spectrum(a) => (&a.common, Box::new(|c| commands::spectrum(c, a.analytic, a.grid))),
        Command::Negcount(a) => (&a.common, Box::new(|c| commands::negcount(c, a.grid))),
        Command::Battery(c) => (c, Box::new(commands::battery)),
        Command::Nullvec(a) => (&a.common, Box::new(|c| commands::nullvec(c, a.analytic, a.vector))),
        Command::Qk(c) => (c, Box::new(commands::qk)),
        Command::ExportMatrix(c) => (c, Box::new(commands::export_matrix)),
    };
    let cfg = load(common)?;
    let out = job(&cfg)?;
    Ok((out, cfg))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok((out, cfg)) => {
            let written = match &cfg.out {
                Some(path) => std::fs::write(path, &out.text),
                None => std::io::stdout().lock().write_all(out.text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: writing output: {e}");
                return ExitCode::from(EXIT_FAILURE);
            }
            if let Some(s) = out.summary {
                eprintln!("{s}");
            }
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
