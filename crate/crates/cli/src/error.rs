use std::fmt;
use std::process::ExitCode;

/// Command failure carrying its exit code: 1 for domain failures (bad labels,
/// unmatched ids, empty buckets), 2 for usage and I/O failures.
#[derive(Debug)]
pub enum CliError {
    Domain(anyhow::Error),
    Usage(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Domain(_) => ExitCode::from(1),
            CliError::Usage(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(e) | CliError::Usage(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub trait ResultExt<T> {
    fn domain(self) -> CliResult<T>;
    fn usage(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn domain(self) -> CliResult<T> {
        self.map_err(|e| CliError::Domain(e.into()))
    }

    fn usage(self) -> CliResult<T> {
        self.map_err(|e| CliError::Usage(e.into()))
    }
}

pub fn domain(msg: impl fmt::Display) -> CliError {
    CliError::Domain(anyhow::anyhow!("{msg}"))
}

pub fn usage(msg: impl fmt::Display) -> CliError {
    CliError::Usage(anyhow::anyhow!("{msg}"))
}
