use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("integration diverged at t = {t}: |x| = {magnitude:e}")]
    Divergence { t: f64, magnitude: f64 },
    #[error("state count {needed} exceeds the amplitude budget {budget}")]
    Budget { needed: usize, budget: usize },
    #[error("bath recurrence time {recurrence} does not exceed t_end = {t_end}")]
    Recurrence { recurrence: f64, t_end: f64 },
    #[error("regime mismatch: {0}")]
    Regime(String),
    #[error("matrix {0} is not positive definite")]
    NotPositiveDefinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
