//! Minimal dense `f64` numerics with tape-based reverse-mode differentiation.
//!
//! The primitive set is exactly what a 1D temporal U-Net needs: dense layers,
//! 1D convolutions, group normalization, Mish, FiLM modulation, channel
//! concatenation/slicing, nearest upsampling and a mean-square reduction.
//! Only scalar-with-array broadcasting exists; everything else requires
//! matching shapes.

mod array;
mod error;
pub mod gradcheck;
pub mod kernels;
pub mod optim;
pub mod rng;
mod tape;

pub use array::Array;
pub use error::DiffError;
pub use optim::{adam_step, AdamConfig, AdamState};
pub use rng::{SeededRng, Stream};
pub use tape::{record_forward, Gradients, Tape, Var};
