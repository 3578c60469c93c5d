use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the tensor substrate.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes do not conform for the named operation.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Buffer length does not match the product of the shape extents.
    Buffer { shape: Vec<usize>, len: usize },
    /// An operation produced NaN or an infinity.
    NonFinite { op: &'static str },
    /// `backward` was called on a tensor that is not a scalar.
    NotScalar { shape: Vec<usize> },
    /// Slice bounds fall outside the last axis.
    Slice { start: usize, end: usize, width: usize },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::Shape { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            TensorError::Buffer { shape, len } => {
                write!(f, "buffer of length {len} does not fit shape {shape:?}")
            }
            TensorError::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            TensorError::NotScalar { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            TensorError::Slice { start, end, width } => {
                write!(f, "slice {start}..{end} out of bounds for width {width}")
            }
        }
    }
}

impl core::error::Error for TensorError {}

/// Crate-level error.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    Tensor(TensorError),
    /// Widths of model inputs or parameters do not agree.
    Dimension(String),
    /// A non-finite value appeared during a model computation.
    Numeric(String),
    /// Invalid caller-supplied argument (bad fractions, empty batch, ...).
    InvalidArgument(String),
    /// Problem with the contents of a dataset.
    Data(String),
}

impl Error {
    /// Wraps the error with additional context, keeping its category.
    pub fn context(self, ctx: impl fmt::Display) -> Self {
        use alloc::format;
        match self {
            Error::Tensor(TensorError::NonFinite { op }) => {
                Error::Numeric(format!("{ctx}: {op} produced a non-finite value"))
            }
            Error::Tensor(e) => Error::Dimension(format!("{ctx}: {e}")),
            Error::Dimension(m) => Error::Dimension(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{ctx}: {m}")),
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Tensor(TensorError::NonFinite { .. })
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Tensor(e) => e.fmt(f),
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Tensor(e) => Some(e),
            _ => None,
        }
    }
}

impl From<TensorError> for Error {
    fn from(e: TensorError) -> Self {
        Error::Tensor(e)
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
