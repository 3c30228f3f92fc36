use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for each failure class.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_NON_CONVERGENCE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Model(#[from] cogmac::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(cogmac::Error::Infeasible(_) | cogmac::Error::NoFiniteRoot { .. }) => EXIT_INFEASIBLE,
            CliError::Model(cogmac::Error::NonConvergence(_)) => EXIT_NON_CONVERGENCE,
            _ => EXIT_CONFIG,
        }
    }
}
