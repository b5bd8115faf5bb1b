//! Policy-value network: a shared residual convolutional trunk feeding a
//! 64-way sense head, a 4673-way move head and a scalar value head.
//!
//! Everything is implemented directly on flat arrays. Activations are laid
//! out `[square, channel]`. The input layer is a sparse 1x1 convolution
//! that touches only the set bits of the binary plane stack.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;
mod net;
mod tensor;

pub use adam::{AdamConfig, OptimizerState};
pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint,
    CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{
    gradcheck, randomized_net, relative_error, GradcheckConfig, GradcheckReport, TensorCheck,
};
pub use loss::{argmax_action, cross_entropy, log_prob, sample_action, value_loss};
pub use net::{
    BlockWeights, Cache, DenseInput, Heads, InputPlanes, NetOutput, NetworkConfig, OutputGrad,
    PolicyHead, PolicyValueNet, ValueHead, Weights,
};
pub use tensor::{axpy, dot, entropy, log_softmax, softmax, Scalar, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("logits must be finite and nonempty")]
    NonFinite,
    #[error("checkpoint version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
