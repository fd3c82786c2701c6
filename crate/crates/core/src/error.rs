use crate::lattice::VertexId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("resource limit: {what} needs {requested}, budget is {budget}")]
    Budget {
        what: &'static str,
        requested: usize,
        budget: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step distribution is not symmetric: p({point:?}) = {p} but p(-x) = {mirror}")]
    AsymmetricSupport {
        point: [i64; 2],
        p: f64,
        mirror: f64,
    },

    #[error("step probabilities sum to {0}, expected 1")]
    NotNormalized(f64),

    #[error("edge {a}-{b} has half-angle {theta} outside ({lo}, {hi})")]
    Ellipticity {
        a: VertexId,
        b: VertexId,
        theta: f64,
        lo: f64,
        hi: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("jump ceiling of {0} jumps reached before the stopping rule fired")]
    JumpCeiling(u64),

    #[error("duplicate target vertex {0}")]
    DuplicateTarget(VertexId),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("effective sample size {ess:.1} fell below {min}")]
    EssCollapse { ess: f64, min: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
