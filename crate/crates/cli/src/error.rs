use mmsc_core::allocation::AllocationError;
use mmsc_core::codec::CodecError;
use mmsc_core::fusion::FusionError;
use mmsc_core::metrics::MetricsError;
use mmsc_core::tensors::TensorError;
use mmsc_core::transport::TransportError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadInput(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Capacity(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn bad(msg: impl Into<String>) -> Self {
        CliError::BadInput(msg.into())
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) | CliError::Io { .. } => 2,
            CliError::Format(_) => 3,
            CliError::Capacity(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::Io(io) => CliError::BadInput(io.to_string()),
            TensorError::MissingEntry(_)
            | TensorError::WrongDtype { .. }
            | TensorError::ShapeMismatch { .. } => CliError::BadInput(e.to_string()),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::Tensor(t) => t.into(),
            other => CliError::BadInput(other.to_string()),
        }
    }
}

impl From<AllocationError> for CliError {
    fn from(e: AllocationError) -> Self {
        CliError::BadInput(e.to_string())
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::UnsupportedRate(_)
            | CodecError::UnsupportedPatchSize(_)
            | CodecError::ImageTooLarge(_)
            | CodecError::PlanLength { .. }
            | CodecError::PatchDims(_) => CliError::BadInput(e.to_string()),
            CodecError::Layout(a) => a.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Tensor(t) => t.into(),
            other => CliError::BadInput(other.to_string()),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::CapacityExceeded { .. } => CliError::Capacity(e.to_string()),
            TransportError::Config(a) => a.into(),
        }
    }
}
