mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use hiss_core::ProtocolError;

use crate::config::Cli;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INFRA: u8 = 1;
pub const EXIT_PARSE: u8 = 2;

/// An error with a stable code and exit status. Anything else that escapes
/// a command is reported as an infrastructure failure.
#[derive(Debug)]
pub struct Failure {
    pub code: &'static str,
    pub exit: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: &'static str, exit: u8, message: impl Into<String>) -> Self {
        Failure { code, exit, message: message.into() }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        let exit = if e.is_parse_failure() { EXIT_PARSE } else { EXIT_INFRA };
        Failure::new(e.code(), exit, e.to_string())
    }
}

fn report(err: &anyhow::Error) -> u8 {
    let (code, exit, message) = match err.downcast_ref::<Failure>() {
        Some(f) => (f.code, f.exit, format!("{err:#}")),
        None => ("error", EXIT_INFRA, format!("{err:#}")),
    };
    eprintln!("{}", json!({ "error": { "code": code, "message": message } }));
    exit
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => ExitCode::from(report(&err)),
    }
}
