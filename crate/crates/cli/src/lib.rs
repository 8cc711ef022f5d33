//! Library side of the `ma1max` command: argument parsing, route
//! orchestration and output rendering.
//!
//! Exit codes: 0 success, 2 usage, 3 tolerance violation, 4 numerical
//! failure.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

pub use config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Rendered argument-parser message; `help` and `version` are not errors.
    Clap { message: String, is_error: bool },
    Usage(String),
    Tolerance(Vec<String>),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Clap { is_error: false, .. } => 0,
            Self::Clap { .. } | Self::Usage(_) => 2,
            Self::Tolerance(_) => 3,
            Self::Numerical(_) | Self::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Clap { message, .. } => write!(f, "{}", message.trim_end()),
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Tolerance(v) => write!(f, "tolerance exceeded:\n  {}", v.join("\n  ")),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Io(m) => write!(f, "i/o failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ma1_core::Error> for CliError {
    fn from(e: ma1_core::Error) -> Self {
        match e {
            ma1_core::Error::InvalidArgument(_) | ma1_core::Error::UnsupportedOrder { .. } => {
                Self::Usage(e.to_string())
            }
            other => Self::Numerical(other.to_string()),
        }
    }
}

/// Parses, runs and writes output; returns the process exit code.
pub fn run_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match execute(args) {
        Ok(()) => 0,
        Err(e) => {
            if e.exit_code() == 0 {
                print!("{e}\n");
            } else {
                eprintln!("{e}");
            }
            e.exit_code()
        }
    }
}

fn execute<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = RunConfig::parse_from(args)?;
    let out = commands::run(&cfg)?;
    match &cfg.out {
        Some(path) => report::write_atomic(path, &out.text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(out.text.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
        }
    }
    if let (Some(path), Some(data)) = (&cfg.emit_plot_data, &out.plot_data) {
        report::write_atomic(path, data)?;
    }
    if !out.violations.is_empty() {
        return Err(CliError::Tolerance(out.violations));
    }
    Ok(())
}
