use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },

    #[error("tensor of shape {shape:?} needs {expected} values, got {actual}")]
    BadLength { shape: Vec<usize>, expected: usize, actual: usize },

    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("backward needs a scalar output, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),

    #[error("backward already ran on this record; reset it first")]
    BackwardAlreadyRun,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("road lattice is disconnected")]
    DisconnectedLattice,

    #[error("no labeled lots; propagation undefined")]
    NoLabeledLots,

    #[error("lot {0} has no labeled neighbor to propagate from")]
    EmptyPropagationSet(usize),

    #[error("PA {pa} outside capacity {capacity}")]
    PaOutsideCapacity { pa: i64, capacity: u32 },

    #[error("series of length {len} too short for T={window} and tau={horizon}")]
    SeriesTooShort { len: usize, window: usize, horizon: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("malformed {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument { op, msg: msg.into() }
    }

    pub(crate) fn parse(what: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { what: what.into(), msg: msg.into() }
    }
}
