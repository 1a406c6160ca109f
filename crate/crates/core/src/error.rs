use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}:\n  {}", violations.join("\n  "))]
    Invalid { what: String, violations: Vec<String> },

    #[error("LPHE requires per-layer HE costs")]
    MissingPerLayerHe,

    #[error("upload fraction must lie in (0, 1), got {0}")]
    FractionOutOfRange(f64),

    #[error("granularity {0} leaves fewer than two cells in (0, 1)")]
    Granularity(f64),

    #[error("closed-form split needs upload or download bytes, both are zero")]
    NoTraffic,

    #[error("unknown network `{0}`")]
    UnknownNetwork(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("calibration data: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
