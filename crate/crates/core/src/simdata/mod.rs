//! Data sources: the standardized SEM, synthetic threshold-model data and
//! CSV ingestion.

mod dataset;
mod sem;
mod threshold_dgp;

use thiserror::Error;

pub use dataset::{load_csv, parse_csv, write_csv, Dataset, Schema, INTERCEPT};
pub use sem::{simulate_sem, standardize_sem, SemDataset, SemParams};
pub use threshold_dgp::{simulate_threshold_dgp, BinaryProxyData, CovariateSpec, ThresholdDataset};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("infeasible standardization: {0}")]
    InfeasibleStandardization(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("non-numeric cell {value:?} in column {column}, data row {row}")]
    NonNumericCell {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column {column} must be 0/1 but data row {row} holds {value}")]
    NonBinary { column: String, row: usize, value: f64 },
    #[error("{0} has no data rows")]
    EmptyFile(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("io: {0}")]
    Io(String),
}
