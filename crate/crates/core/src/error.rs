use thiserror::Error;

/// Errors raised anywhere in the estimation engine.
#[derive(Debug, Error)]
pub enum GattError {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty conditioning stratum: no unit has its treatment trajectory in the conditioning set")]
    EmptyConditioningStratum,

    #[error("empty regression subset at time {t}")]
    EmptyRegressionSubset { t: usize },

    #[error("learner failure: {0}")]
    Learner(String),

    #[error("non-finite Riesz loss at time {t}")]
    NonFiniteLoss { t: usize },

    #[error("fluctuation did not converge at time {t} (score residual {residual:e})")]
    FluctuationDiverged { t: usize, residual: f64 },

    #[error("continuous treatment at time {t}: the plug-in ratio path needs discrete treatments, use riesz_mode = loss_minimization")]
    ContinuousTreatment { t: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GattError>;

impl GattError {
    /// Stable snake-case name, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            GattError::InvalidData(_) => "invalid_data",
            GattError::Config(_) => "invalid_configuration",
            GattError::EmptyConditioningStratum => "empty_conditioning_stratum",
            GattError::EmptyRegressionSubset { .. } => "empty_regression_subset",
            GattError::Learner(_) => "learner_failure",
            GattError::NonFiniteLoss { .. } => "non_finite_loss",
            GattError::FluctuationDiverged { .. } => "fluctuation_diverged",
            GattError::ContinuousTreatment { .. } => "continuous_treatment",
            GattError::Io(_) => "io",
            GattError::Csv(_) => "csv",
            GattError::Json(_) => "json",
        }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            GattError::Config(_) | GattError::Json(_) => 2,
            GattError::InvalidData(_) | GattError::Csv(_) | GattError::Io(_) => 3,
            GattError::EmptyConditioningStratum | GattError::EmptyRegressionSubset { .. } => 4,
            GattError::ContinuousTreatment { .. } => 5,
            GattError::Learner(_) | GattError::NonFiniteLoss { .. } | GattError::FluctuationDiverged { .. } => 6,
        }
    }
}
