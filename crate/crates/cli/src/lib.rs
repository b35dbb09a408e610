//! Batch runner behind the `lattice-lab` executable.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(lattice_lab_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<lattice_lab_core::Error> for CliError {
    fn from(e: lattice_lab_core::Error) -> Self {
        use lattice_lab_core::Error as E;
        match e {
            E::BlowUp { .. } => CliError::Numerical(e.to_string()),
            E::InvalidParameter { .. }
            | E::Window(_)
            | E::OutOfGrid { .. }
            | E::OffGrid { .. }
            | E::MissingTime(_)
            | E::PathMismatch { .. } => CliError::Config(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical blow-up, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            _ => 1,
        }
    }
}
