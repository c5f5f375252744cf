use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    /// No document is relevant to any subtopic, so the normalizer is zero.
    #[error("degenerate query {query_id}: no relevant documents")]
    DegenerateQuery { query_id: String },

    #[error("dimension mismatch: {what} expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("instance too large for exhaustive search: n={n}, k={k} (limit n<=10, k<=5)")]
    SizeGuard { n: usize, k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("QP solver did not converge after {iterations} iterations (max KKT violation {violation:e})")]
    QpNonConvergence { iterations: usize, violation: f64 },

    #[error("{}:{line}: query {}: field `{field}`: {message}", path_display(.path), .query_id.as_deref().unwrap_or("-"))]
    Schema {
        path: Option<PathBuf>,
        line: usize,
        query_id: Option<String>,
        field: String,
        message: String,
    },

    #[error("{}:{line}: {message}", path_display(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("incompatible model: {0}")]
    Compatibility(String),

    #[error("empty C grid")]
    EmptyGrid,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn path_display(path: &Option<PathBuf>) -> String {
    path.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "<input>".to_string())
}
