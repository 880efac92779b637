use thiserror::Error;

use crate::problem::InfeasibilityReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("label {label} at image {image}, point {point} is out of range for d = {d}")]
    LabelOutOfRange {
        image: usize,
        point: usize,
        label: usize,
        d: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("bit assignment is not a valid segmentation: {0}")]
    Infeasible(InfeasibilityReport),

    #[error("invalid motion counts: {0}")]
    InvalidCounts(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("problem has no ground truth")]
    MissingGroundTruth,

    #[error("brute force refused: k = {k} exceeds the limit of {max} variables")]
    SizeGuard { k: usize, max: usize },

    #[error("sample set is empty")]
    EmptySampleSet,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
