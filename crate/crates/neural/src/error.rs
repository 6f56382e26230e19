use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error(transparent)]
    Core(#[from] twoport_core::Error),

    #[error("training diverged at epoch {epoch}, step {step}: non-finite loss")]
    Divergence { epoch: usize, step: usize },

    #[error("prediction failed: {0}")]
    Prediction(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NeuralError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NeuralError::Core(twoport_core::Error::InvalidInput(msg.into()))
    }

    /// Divergence and numerical failures from the simulator.
    pub fn is_numerical(&self) -> bool {
        match self {
            NeuralError::Divergence { .. } => true,
            NeuralError::Core(e) => e.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, NeuralError>;
