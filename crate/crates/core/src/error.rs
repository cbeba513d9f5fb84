use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid tensor: shape {shape:?} needs {expected} values, got {actual}")]
    InvalidTensor {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("non-finite loss value {0}")]
    NonFiniteLoss(f64),
    #[error("label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("epoch {epoch} outside 1..={epochs}")]
    EpochOutOfRange { epoch: u32, epochs: u32 },
    #[error("temperature {temperature} outside 1..={t_max}")]
    TemperatureOutOfRange { temperature: u32, t_max: u32 },
    #[error("layer {index} expects input width {expected}, previous layer produces {actual}")]
    LayerMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("network spec has no layers")]
    EmptyNetwork,
    #[error("teacher table has no entry for input row {0}")]
    MissingTableEntry(usize),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("numeric failure at epoch {epoch}: {source}")]
    Numeric {
        epoch: u32,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dataset split is empty")]
    EmptySplit,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_epoch(self, epoch: u32) -> Self {
        match self {
            e @ Error::Numeric { .. } => e,
            e => Error::Numeric {
                epoch,
                source: alloc::boxed::Box::new(e),
            },
        }
    }

    /// True for failures caused by the numbers themselves rather than by
    /// bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric { .. } | Error::NonFiniteLoss(_) | Error::NonFiniteGradient
        )
    }
}
