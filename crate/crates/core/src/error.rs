use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    ConfigSyntax(String),

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("unknown unit suffix `{unit}` for key `{key}`")]
    UnknownUnit { key: String, unit: String },

    #[error("invalid value for `{key}` ({value}): {reason}")]
    InvalidValue { key: String, value: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rate requested for {power} W on zero codes")]
    PowerWithoutCodes { power: f64 },

    #[error("beta {beta} is below the minimum {min}")]
    BetaTooSmall { beta: f64, min: f64 },

    #[error("grid of {points} evaluations exceeds the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("allocation is infeasible: {0}")]
    InfeasibleAllocation(String),

    #[error("all rates are zero")]
    AllZeroRates,

    #[error("malformed metrics file: {0}")]
    MalformedMetrics(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(key: &str, value: impl ToString, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
