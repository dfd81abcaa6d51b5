//! Command-line front end: argument parsing, config merging, command
//! dispatch and output writing for the `lossrate` binary.

pub mod args;
mod commands;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::Path;

use clap::Parser;
use serde_json::Value;

pub use args::{Cli, Command, OutputFormat};
pub use output::{emit_curves, load_curve, CumulantPoint, Curve, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTATION: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flag values or unreadable inputs.
    Validation,
    /// A solver or numerical failure on valid inputs.
    Computation,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(flag: &str, message: impl fmt::Display) -> Self {
        CliError {
            kind: ErrorKind::Validation,
            message: format!("{flag}: {message}"),
        }
    }

    pub fn computation(message: impl fmt::Display) -> Self {
        CliError {
            kind: ErrorKind::Computation,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Computation => EXIT_COMPUTATION,
        }
    }

    /// Maps a core error, naming the flag it most likely came from. `flag`
    /// is used when the error does not identify a parameter itself.
    pub fn from_core(e: lossrate_core::Error, flag: &str) -> Self {
        use lossrate_core::Error as E;
        let named = match &e {
            E::SolverFailure(_) | E::Internal(_) | E::ZeroVariance => {
                return CliError::computation(e)
            }
            E::InvalidA(_) => "--a",
            E::InvalidS(_) => "--s",
            E::InvalidLambda(_) => "--lambda",
            E::InvalidTolerance(_) => "--tol",
            E::InvalidMeta(_) => "--p/--n/--delta/--epsilon",
            _ => flag,
        };
        CliError::validation(named, e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub(crate) trait Context<T> {
    /// Attaches the flag whose value produced the error.
    fn flag(self, flag: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for lossrate_core::Result<T> {
    fn flag(self, flag: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(e, flag))
    }
}

/// Turns a JSON config object into extra command-line arguments. Keys are
/// flag names with `_` or `-` separators; `true` becomes a bare switch,
/// arrays become one flag followed by every element.
pub fn config_args(config: &Value) -> Result<Vec<OsString>, String> {
    let Value::Object(map) = config else {
        return Err("config must be a JSON object".into());
    };
    let scalar = |key: &str, v: &Value| match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("{key}: unsupported value {other}")),
    };
    let mut out = Vec::new();
    for (key, value) in map {
        let flag = OsString::from(format!("--{}", key.replace('_', "-")));
        match value {
            Value::Bool(true) => out.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                out.push(flag);
                for item in items {
                    out.push(scalar(key, item)?.into());
                }
            }
            v => {
                out.push(flag);
                out.push(scalar(key, v)?.into());
            }
        }
    }
    Ok(out)
}

fn parse_with_config(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let cli = Cli::try_parse_from(&argv)?;
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let config = read_config(path).map_err(|msg| {
        clap::Error::raw(
            clap::error::ErrorKind::ValueValidation,
            format!("--config {}: {msg}\n", path.display()),
        )
    })?;
    let mut merged = argv;
    merged.extend(config);
    Cli::try_parse_from(merged)
}

fn read_config(path: &Path) -> Result<Vec<OsString>, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let value: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    config_args(&value)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse_with_config(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let name = cli.command.name();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("lossrate {name}: {e}");
            e.exit_code()
        }
    }
}

/// Runs the parsed command inside a thread pool of the requested size.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads", "must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::computation(format!("thread pool: {e}")))?;
    let out = pool.install(|| commands::dispatch(&cli.command))?;
    out.write(cli)
}
