use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cell geometry: {0}")]
    InvalidGeometry(String),

    #[error("model fails validation: {}", join(.0))]
    InvalidModel(Vec<Violation>),

    #[error("density {density} outside [0, {jam_density}]")]
    Domain { density: f64, jam_density: f64 },

    #[error("empty feasible rate interval at cell {cell}: [{lo}, {hi}]")]
    InfeasibleRate { cell: usize, lo: f64, hi: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("horizon mismatch: {0}")]
    Horizon(String),

    #[error("model not supported: {0}")]
    Unsupported(String),

    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
