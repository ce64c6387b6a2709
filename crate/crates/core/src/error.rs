use thiserror::Error;

/// Errors produced by the core algorithms.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// The sampler produced a non-finite iterate.
    #[error("numerical divergence at step t = {step}")]
    Divergence { step: usize },

    #[error("predictor does not support {0}")]
    Capability(&'static str),

    /// Training loss became non-finite.
    #[error("training diverged at step {step} (loss = {loss})")]
    Training { step: usize, loss: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
