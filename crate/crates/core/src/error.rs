use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("non-affine expression: `{0}`")]
    NonAffine(String),
    #[error("arity mismatch for tensor `{tensor}`: access has {access} indices, structure has {structure}")]
    ArityMismatch {
        tensor: String,
        access: usize,
        structure: usize,
    },
    #[error("no unique set for tensor `{0}`")]
    MissingUniqueSet(String),
    #[error("unbounded iterator `{0}`")]
    UnboundedIterator(String),
    #[error("projection blocked by mod constraint on `{0}`")]
    ProjectionBlocked(String),
    #[error("unsupported: periodic count ({0})")]
    UnsupportedPeriodic(String),
    #[error("polynomial degree {degree} exceeds maximum {max}")]
    DegreeOverflow { degree: u32, max: u32 },
    #[error("missing binding for symbol `{0}`")]
    MissingBinding(String),
    #[error("point outside the function domain")]
    OutsideDomain,
    #[error("non-integer value {0} from index polynomial")]
    NonInteger(String),
    #[error("compressed index {index} out of range for buffer of length {len}")]
    IndexOutOfRange { index: i128, len: usize },
    #[error("slot {0} written more than once")]
    DoubleWrite(usize),
    #[error("redundancy map image {0:?} lies outside the accessed domain")]
    RedundancyImage(Vec<i64>),
    #[error("cannot infer extent of dimension {dim} of `{tensor}`; declare a shape")]
    UnknownExtent { tensor: String, dim: usize },
    #[error("invalid program: {0}")]
    Invalid(String),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
