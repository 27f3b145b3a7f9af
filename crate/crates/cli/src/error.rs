use gmdkit::GmdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable files, malformed or mismatched inputs.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Numerical(#[from] GmdError),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(GmdError::DimensionMismatch { .. } | GmdError::EmptyDesign) => 2,
            CliError::Numerical(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "input",
            _ => "numerical",
        }
    }
}
