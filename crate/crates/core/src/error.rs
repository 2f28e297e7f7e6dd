use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pattern matrix is singular (det = 0)")]
    Singular,

    #[error("integer overflow in lattice arithmetic ({0})")]
    Overflow(&'static str),

    #[error("unsupported dimension {0}: only d = 1, 2, 3 are handled")]
    Dimension(usize),

    #[error("malformed pattern matrix: {0}")]
    Malformed(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("size {size} exceeds the capacity guard {limit} of {what}")]
    Capacity {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("degenerate generator: bracket sum vanishes at frequency {h:?}")]
    DegenerateGenerator { h: Vec<i64> },

    #[error("interpolation problem is degenerate at frequency {h:?}")]
    InterpolationDegenerate { h: Vec<i64> },

    #[error("generator translates are not orthonormal: m*[|c|^2] = {value} at frequency {h:?}")]
    NotOrthonormal { h: Vec<i64>, value: f64 },

    #[error("singular linear system (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("field format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
