use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric degeneracy at {location}: {detail}")]
    MetricDegeneracy { location: String, detail: String },

    #[error("stage `{stage}`: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error("chart degeneracy at {location}: {detail}")]
    ChartDegeneracy { location: String, detail: String },

    #[error("operator is not Hermitian: relative asymmetry {asymmetry:.3e} exceeds {tolerance:.1e}")]
    NonHermitian { asymmetry: f64, tolerance: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expression error in `{field}`: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },

    #[error("schema violation at {path}: {detail}")]
    Schema { path: String, detail: String },

    #[error("gauge fixing failed: {0}")]
    GaugeFixing(String),

    #[error("conditional amplitude not normalized: max deviation {deviation:.3e}")]
    Unnormalized { deviation: f64 },

    #[error("wavefunction is identically zero")]
    ZeroState,

    #[error("every grid node is masked")]
    AllMasked,

    #[error("loop is not closed: first node {first}, last node {last}")]
    OpenLoop { first: usize, last: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn shape(detail: impl Into<String>) -> Self {
        Error::ShapeMismatch(detail.into())
    }
}
