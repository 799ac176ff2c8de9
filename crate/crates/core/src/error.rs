use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands have incompatible shapes.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// An input violates a precondition of the operation.
    InvalidInput(String),
    /// A non-finite value was encountered where finite values are required.
    NonFinite(&'static str),
    /// A class label is outside `[0, classes)`.
    LabelOutOfRange { label: usize, classes: usize },
    /// Configuration values violate an invariant.
    InvalidConfig(String),
    /// Training produced a non-finite loss.
    Diverged { level: usize, epoch: usize, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch {left:?} vs {right:?}")
            }
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite values in {what}"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Diverged { level, epoch, detail } => {
                write!(f, "training diverged at level {level}, epoch {epoch}: {detail}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, left: &[usize], right: &[usize]) -> Result<T> {
    Err(Error::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    })
}
