//! Minimal CPU neural-network substrate: NCHW tensors, the five layer kinds
//! used by the refiner, discriminator, HCD and PI networks, Adam, Xavier
//! initialization and checkpoints.
//!
//! Convolutions are 3×3 with one pixel of zero padding. Fully-connected
//! layers flatten their input in (channel, row, column) order.

mod adam;
pub mod checkpoint;
mod network;
pub(crate) mod ops;
mod params;
mod spec;
mod tensor;

use std::ops::Range;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use network::{
    backward, backward_input, forward, forward_range, infer, infer_range, update_running_stats,
    BnBatchStats, ForwardCache, Gradients, Mode, BN_EPS, BN_MOMENTUM,
};
pub use ops::{log_softmax_at, softmax};
pub use params::{
    expected_param_dims, xavier_bound, xavier_init, NetworkParams, ParamKey, ParamKind, ParamSet,
};
pub use spec::{Activation, LayerKind, LayerSpec, NetworkSpec, LEAKY_SLOPE, MIN_SCALED_MAPS};
pub use tensor::{Dims, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{len} values cannot fill dims {dims}")]
    DataLength { dims: Dims, len: usize },
    #[error("cannot stack an empty batch")]
    EmptyBatch,
    #[error("cannot stack {found} onto {expected}")]
    StackMismatch { expected: Dims, found: Dims },
    #[error("crop {h}x{w} at ({y0}, {x0}) exceeds {dims}")]
    CropOutOfBounds {
        dims: Dims,
        y0: usize,
        x0: usize,
        h: usize,
        w: usize,
    },
    #[error("layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("layer {layer} expects input {expected:?}, got {found}")]
    InputShape {
        layer: usize,
        expected: (usize, usize, usize),
        found: Dims,
    },
    #[error("layer range {range:?} outside a {layers}-layer network")]
    LayerRange { range: Range<usize>, layers: usize },
    #[error("missing parameter {0}")]
    MissingParam(ParamKey),
    #[error("unexpected parameter {0}")]
    UnexpectedParam(ParamKey),
    #[error("parameter {key}: expected {expected}, found {found}")]
    ParamShape {
        key: ParamKey,
        expected: Dims,
        found: Dims,
    },
    #[error("bad parameter name {0:?}")]
    BadParamName(String),
    #[error("backward needs a train-mode forward cache")]
    EvalCache,
    #[error("output gradient {found} does not match output {expected}")]
    GradientShape { expected: Dims, found: Dims },
    #[error("non-finite values at layer {layer} during {stage}")]
    NonFinite { layer: usize, stage: &'static str },
}
