use std::path::PathBuf;

use dpscale_core::accounting::AccountingError;
use dpscale_core::grid::GridError;
use dpscale_core::lawfit::LawError;
use dpscale_core::planner::PlanError;
use serde::Serialize;

/// Everything a command or request can fail with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{message}")]
    OutOfDomain { field: Option<String>, message: String },
    #[error("{message}")]
    Numeric { code: &'static str, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

/// Machine-readable error body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub field: Option<String>,
}

impl CliError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Invalid { field: field.into(), message: message.into() }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Format { path: path.into(), message: message.to_string() }
    }

    /// 2 for bad input, 3 when the numerics could not produce an answer.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric { .. } => 3,
            _ => 2,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Invalid { .. } => "invalid_parameter",
            CliError::OutOfDomain { .. } => "out_of_domain",
            CliError::Numeric { code, .. } => code,
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "invalid_file",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            CliError::Invalid { field, .. } => Some(field),
            CliError::OutOfDomain { field, .. } => field.as_deref(),
            _ => None,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code().into(), message: self.to_string(), field: self.field().map(Into::into) }
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        match e {
            AccountingError::InvalidParameter { name, reason } => CliError::invalid(name, reason),
            AccountingError::Unattainable { .. } => CliError::Numeric { code: "unattainable", message: e.to_string() },
            AccountingError::NonPrivate => CliError::invalid("epsilon", e.to_string()),
            AccountingError::InvalidCurve(_) => CliError::Numeric { code: "accounting", message: e.to_string() },
        }
    }
}

impl From<LawError> for CliError {
    fn from(e: LawError) -> Self {
        match e {
            LawError::OutOfDomain { axis, .. } => {
                CliError::OutOfDomain { field: Some(axis.as_str().into()), message: e.to_string() }
            }
            LawError::NoNonPrivateSlice => {
                CliError::OutOfDomain { field: Some("noise_batch_ratio".into()), message: e.to_string() }
            }
            LawError::FitDiverged { .. } | LawError::TooFewRows { .. } => {
                CliError::Numeric { code: "fit_failed", message: e.to_string() }
            }
            _ => CliError::invalid("law", e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::TooFewFitPoints { .. } | GridError::InvalidSeries | GridError::FitDiverged { .. } => {
                CliError::Numeric { code: "fit_failed", message: e.to_string() }
            }
            _ => CliError::invalid("grid", e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::InvalidInput { name, reason } => CliError::invalid(name, reason),
            PlanError::TooManyConfigs { .. } => CliError::invalid("lattice_density", e.to_string()),
            PlanError::NoFeasibleConfig { excluded } => {
                if excluded.out_of_domain > 0 {
                    CliError::OutOfDomain { field: None, message: e.to_string() }
                } else {
                    CliError::Numeric { code: "no_feasible_config", message: e.to_string() }
                }
            }
            PlanError::Cancelled => CliError::Numeric { code: "cancelled", message: e.to_string() },
            PlanError::Accounting(a) => a.into(),
        }
    }
}
