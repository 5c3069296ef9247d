//! `slicethin` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or runtime error.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use slicethin::analysis::AnalysisError;
use slicethin::synth::SynthError;
use slicethin::ReduceError;

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<ReduceError> for CliError {
    fn from(e: ReduceError) -> Self {
        match e {
            ReduceError::InvalidTarget(_) | ReduceError::MissingEmbeddings => CliError::Usage(e.to_string()),
            other => CliError::Data(other.into()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Reduce(inner) => inner.into(),
            AnalysisError::NoRepetitions => CliError::Usage(e.to_string()),
            other => CliError::Data(other.into()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Invalid(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout and are not failures
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Reduce(a) => commands::reduce(a),
        Command::Compare(a) => commands::compare(a),
        Command::Bench(a) => commands::bench(a),
        Command::Stats(a) => commands::stats(a),
        Command::HashDump(a) => commands::hash_dump(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Data(err) => eprintln!("error: {err}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
