use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model is not stationary (spectral radius {spectral_radius:.12})")]
    NonStationary { spectral_radius: f64 },

    #[error("design not identifying: moment matrix condition number {condition:.3e}; collinear moment rows: {collinear:?}")]
    NotIdentifying {
        condition: f64,
        collinear: Vec<String>,
    },

    #[error("near unit root; ATE unbounded")]
    NearUnitRoot,

    #[error("autocovariances not realizable by an MA process (offending lag {lag})")]
    Unrealizable { lag: usize },

    #[error("design has no analytic moments: {0}")]
    NoAnalyticMoments(String),

    #[error("order too large: {0}")]
    OrderTooLarge(String),

    #[error("every candidate order failed to fit: {0}")]
    AllFitsFailed(String),

    #[error("bootstrap needs an MA stage or block-resampling fallback: {0}")]
    BootstrapUnavailable(String),

    #[error("malformed input file: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
