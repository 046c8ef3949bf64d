use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("player index {index} out of range for {n} players")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("self-loop on player {0} (1-based)")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) listed more than once")]
    DuplicateEdge(usize, usize),
    #[error("edge ({i}, {j}) has asymmetric weights {w_ij} and {w_ji}")]
    AsymmetricWeight {
        i: usize,
        j: usize,
        w_ij: f64,
        w_ji: f64,
    },
    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("strong monotonicity fails: l_m = {0} is not positive")]
    NotMonotone(f64),
    #[error("perturbation draw does not belong to this network")]
    NetworkMismatch,
    #[error("invalid perturbation draw: {0}")]
    InvalidDraw(String),
    #[error("linear system is numerically singular")]
    Singular,
    #[error("inputs are not mu-adjacent: {0}")]
    NotAdjacent(String),
    #[error("equilibrium is not interior to the action box")]
    NotInterior,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
