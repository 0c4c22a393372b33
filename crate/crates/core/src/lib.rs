//! Irregular wavefront propagation on 2D grayscale grids.
//!
//! Pixels form waves that expand irregularly across the image until nothing
//! can improve: morphological reconstruction, Euclidean distance transform
//! and hole filling are all instances of the one pattern. This crate ships
//! the pattern in three interchangeable engines — a classic push loop, a
//! two-phase identify/propagate form in which a pixel only ever writes its
//! own cell, and a 16-lane batched variant of the two-phase form — plus
//! FIFO and priority wavefront queues, a per-thread parallel runtime over
//! shared state, and a strip-tiling pipeline with seam correction for
//! inputs beyond one worker's budget. Every operator comes with the
//! brute-force reference it is tested against.

pub mod engine;
pub mod grid;
pub mod lanes;
pub mod operators;
pub mod parallel;
pub mod pixelqueue;
pub mod synth;
pub mod tiling;

pub use engine::{EngineVariant, PropagationOperator, RunStats};
pub use grid::{Addr, CellView, Connectivity, Image2D, Neighborhood};
pub use lanes::{Dir, LaneBatch, LaneMask};
pub use pixelqueue::{QueueKind, WaveQueue};
pub use tiling::{Share, TilePlan, WorkerSpec};

/// Errors across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied parameter is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Input data violates an operator precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Malformed serialized image data.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    /// The operator cannot run on the batched engine.
    #[error("operator does not support the batched engine")]
    UnsupportedOperator,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
