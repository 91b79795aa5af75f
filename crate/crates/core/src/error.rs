use thiserror::Error;

use crate::triangle::Line;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine reports. Cell coordinates are 1-based
/// (accident year, development year).
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("non-positive premium for accident year {accident_year}")]
    Exposure { accident_year: usize },

    #[error("incomplete data: {0}")]
    IncompleteData(String),

    #[error("missing column `{column}`")]
    Schema { column: String },

    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("group {group}: {detail}")]
    Completeness { group: String, detail: String },

    #[error("row {row}: {detail}")]
    OutOfWindow { row: usize, detail: String },

    #[error("group {group}: {detail}")]
    Conflict { group: String, detail: String },

    #[error("group code {code} not found for line {line}")]
    Selection { code: String, line: Line },

    #[error("zero denominator for development factor at lag {lag}")]
    DegenerateColumn { lag: usize },

    #[error("zero fitted increment against a non-zero payment at ({ay}, {dy})")]
    FitDegeneracy { ay: usize, dy: usize },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-positive observed payment at ({ay}, {dy})")]
    Support { ay: usize, dy: usize },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("missing level-1 input `{source_name}`")]
    Assembly { source_name: &'static str },

    #[error("non-positive mean at development year {dy}")]
    MomentSupport { dy: usize },

    #[error("sum of actual values is zero")]
    Normalization,

    #[error("mean reserve is zero for company {company}")]
    RatioUndefined { company: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
