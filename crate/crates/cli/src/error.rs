use thiserror::Error;

/// Exit code for configuration and input errors.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}: {source}")]
    Wav { path: String, source: hound::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}

impl From<rtf_mclp::Error> for CliError {
    fn from(e: rtf_mclp::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}
