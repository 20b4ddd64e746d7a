//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the decomposition, design and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape mismatch between operands.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Controller synthesis could not produce a proper, stable result.
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// Controller design parameters are inconsistent.
    #[error("design error: {0}")]
    Design(String),

    /// A matrix failed block-circulant structure validation.
    #[error(
        "structure validation failed: worst block deviation {worst:.3e} \
         (block offset {block}) exceeds tolerance {tol:.1e}"
    )]
    Structure { worst: f64, block: usize, tol: f64 },

    /// A numerical routine failed to converge or produced invalid output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Per-cell decomposition failure, tagged with the ring cell index.
    #[error("decomposition failed in cell {cell}: {reason}")]
    Cell { cell: usize, reason: String },

    /// The closed-loop simulation produced a non-finite signal.
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A matrix file could not be parsed.
    #[error("corrupt matrix file: {0}")]
    CorruptFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
