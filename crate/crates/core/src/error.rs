use crate::geometry::HullProjection;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("degenerate group: {0}")]
    DegenerateGroup(String),

    #[error("degenerate split: could not retain every group in both splits after {retries} shuffles")]
    DegenerateSplit { retries: usize },

    #[error("degenerate vertex: total weight is zero")]
    DegenerateVertex,

    #[error("degenerate plan: all coefficients are zero")]
    DegeneratePlan,

    #[error("leaf {0} has zero mass but positive coefficient")]
    ZeroMassLeaf(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("projection solver stalled after {iterations} iterations (movement {movement:e})")]
    SolverStalled {
        iterations: usize,
        movement: f64,
        /// Best iterate reached before the cap.
        best: HullProjection,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
