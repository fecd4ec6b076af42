use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("ratings are degenerate: all {0} values are equal")]
    DegenerateRatings(usize),
    #[error("expected at least {needed} distinct ratings, got {got}")]
    TooFewRatings { needed: usize, got: usize },
    #[error("rating {0} is not a positive finite number")]
    InvalidRating(f64),
    #[error("model did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("answer {value} for item `{item}` is outside the 1-7 scale")]
    OutOfScale { item: String, value: i64 },
    #[error("unknown questionnaire item `{0}`")]
    UnknownItem(String),
    #[error("invalid observation table: {0}")]
    InvalidTable(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, StatsError>;
