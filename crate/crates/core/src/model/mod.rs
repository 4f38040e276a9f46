//! Stage 1 and stage 2 of the pipeline: a permutation-invariant point-set
//! encoder conditioning an autoregressive skeleton decoder, with training,
//! validation, generation and checkpoints.

mod batch;
mod checkpoint;
mod config;
mod inference;
mod network;
mod params;
mod train;

pub use batch::{examples_from_dataset, point_features, Batch, Example, ExampleError};
pub use checkpoint::{
    config_hash, load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint,
    CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use config::{ModelConfig, ModelConfigError, Preset};
pub use inference::{
    decode_step, decoder_logits, encode, encode_points, generate, loss, DecodeMode, ModelError,
};
pub use network::squash;
pub use params::{ModelParams, TensorSpec, INIT_SCALE};
pub use train::{loss_and_gradient, validate, TrainError, Trainer};
