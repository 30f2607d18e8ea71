// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io;

/// Errors raised anywhere in the simulation, inference and detection stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("integration diverged at step {step}: |component| = {magnitude:e}")]
    Divergence { step: usize, magnitude: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("channel {channel} has zero standard deviation (degenerate corpus)")]
    ZeroStd { channel: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("too many diverging prior draws: {rejected} rejected out of {attempted}")]
    ResampleBudget { rejected: usize, attempted: usize },

    #[error("non-finite loss {loss} at batch {batch}")]
    NonFiniteLoss { batch: usize, loss: f64 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidInput(msg.into())
    }

    /// True for failures of the numerics (divergence, non-finite loss) as opposed
    /// to bad inputs or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::Divergence { .. } | Self::NonFiniteLoss { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
