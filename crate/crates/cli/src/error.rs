//! Exit codes and the machine-readable error line.

use serde::Serialize;
use strikeconv::PricingError;

/// Invalid configuration or input.
pub const EXIT_INPUT: i32 = 2;
/// Numerical failure.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Pricing(PricingError),
    Config(String),
    Io(String),
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        Self::Pricing(e)
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            Self::Pricing(PricingError::InvalidInput(_)) => "invalid_input",
            Self::Pricing(PricingError::Domain(_)) => "domain",
            Self::Pricing(PricingError::Numerical(_)) => "numerical",
            Self::Pricing(PricingError::DegenerateConvention(_)) => "degenerate_convention",
            Self::Pricing(PricingError::DegenerateModel(_)) => "degenerate_model",
            Self::Config(_) => "config",
            Self::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Pricing(PricingError::InvalidInput(_) | PricingError::Domain(_)) | Self::Config(_) => EXIT_INPUT,
            _ => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> String {
        match self {
            Self::Pricing(e) => e.to_string(),
            Self::Config(m) | Self::Io(m) => m.clone(),
        }
    }

    /// One JSON object on a single line.
    pub fn line(&self) -> String {
        let line = ErrorLine { error: self.kind(), message: self.message(), exit_code: self.exit_code() };
        serde_json::to_string(&line).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }
}
