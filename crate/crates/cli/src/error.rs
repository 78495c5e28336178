use nsqip::nosig::NosigError;
use nsqip::proveropt::OptError;
use nsqip::qip::QipError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Violation(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Cap(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Violation(_) => 1,
            CliError::Input(_) => 2,
            CliError::Cap(_) => 3,
        }
    }
}

impl From<NosigError> for CliError {
    fn from(e: NosigError) -> Self {
        match e {
            NosigError::TooLarge(_) => CliError::Cap(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<QipError> for CliError {
    fn from(e: QipError) -> Self {
        match e {
            QipError::QubitCap { .. } | QipError::DenseTooLarge { .. } => CliError::Cap(e.to_string()),
            QipError::MarginalUniformity { .. } => CliError::Violation(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<OptError> for CliError {
    fn from(e: OptError) -> Self {
        match e {
            OptError::Qip(q) => q.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
