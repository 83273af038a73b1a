//! Scenario-driven front end for the vapor-kinetics solvers.

pub mod commands;
pub mod config;
pub mod svg;

use thiserror::Error;
use vapor_kinetics::ale::AleError;
use vapor_kinetics::ee::EeError;
use vapor_kinetics::refpde::PdeError;
use vapor_kinetics::relax::RelaxError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Io(String),
    /// A completed run that misses its acceptance thresholds.
    #[error("thresholds not met: {reason}")]
    Threshold { report: String, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) | CliError::Threshold { .. } => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<RelaxError> for CliError {
    fn from(e: RelaxError) -> Self {
        match e {
            RelaxError::InvalidParameter(_) | RelaxError::Coeff(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EeError> for CliError {
    fn from(e: EeError) -> Self {
        match e {
            EeError::Export(m) => CliError::Io(m),
            EeError::InvalidState(_) | EeError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Config(_) | PdeError::Grid(_) => CliError::Config(e.to_string()),
            PdeError::Io(m) => CliError::Io(m),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<AleError> for CliError {
    fn from(e: AleError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Caps the global rayon pool at `VK_THREADS` when the variable is set.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("VK_THREADS = {v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
