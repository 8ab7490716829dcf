//! Dense 2-D tensors, a tape-based reverse-mode autodiff over a small operator
//! set, transformer building blocks, cross-entropy, AdamW and a binary
//! checkpoint format.
//!
//! Everything is generic over [`Scalar`], so the same model code runs in `f32`
//! for training and in `f64` for finite-difference gradient checks.
//!
//! All kernels are deterministic regardless of the rayon pool size: every
//! output element is produced by exactly one task and reductions run in a
//! fixed order.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{NnError, Result};
pub use layers::{
    sinusoidal_positions, AttentionParams, Dropout, EncoderLayerParams, FfnParams, LayerNormParams,
    LinearParams,
};
pub use optim::AdamW;
pub use params::{Init, ParamGrads, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::{SparseRows, Tensor2};
