use std::io;
use std::path::PathBuf;

use moldable::exact_ctmc::CtmcError;
use moldable::fluid::FluidError;
use moldable::speedup::RegimeError;
use moldable::{AllocError, SimError, SpeedupError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}:{line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Speedup(#[from] SpeedupError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Ctmc(#[from] CtmcError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_)
            | CliError::Config { .. }
            | CliError::Speedup(_)
            | CliError::Regime(_)
            | CliError::Alloc(_) => 1,
            CliError::Ctmc(e) => match e {
                CtmcError::StateSpaceTooLarge { .. }
                | CtmcError::InvalidInstance(_)
                | CtmcError::Alloc(_) => 1,
                _ => 2,
            },
            CliError::Sim(e) => match e {
                SimError::ConfigInvalid(_) | SimError::Regime(_) | SimError::Alloc(_) => 1,
                SimError::SscViolation { .. } => 2,
            },
            CliError::Fluid(e) => match e {
                FluidError::InvalidParameters(_) => 1,
                FluidError::NonfiniteState { .. } => 2,
            },
            CliError::DegenerateFit(_) | CliError::Io { .. } | CliError::Csv(_) => 2,
        }
    }
}
