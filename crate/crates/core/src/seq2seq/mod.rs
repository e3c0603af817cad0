//! Attentional LSTM encoder-decoder, trained with plain minibatch SGD.
//!
//! The encoder is a stack of unidirectional LSTM layers; the decoder stack
//! starts from the encoder's final states. At every target step the top decoder
//! state attends over all encoder outputs with a bilinear score
//! `h_t · W_a · e_i`; the context and the decoder state are combined through a
//! `tanh` layer before the output projection. Everything is `f64`.

mod checkpoint;
mod gradcheck;
mod lstm;
mod model;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{gradient_check, GradCheckReport, SampledCoordinate};
pub use model::{
    batch_loss, batch_loss_and_grad, decode_greedy, forward_loss, AttentionRecord, EncodedPair,
    Mode,
};
pub use params::{init_params, LstmLayer, ModelParams};
pub use train::{next_lr, train, train_with_progress, EpochRecord, TrainOutcome, TrainState};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty source sequence")]
    EmptySource,
    #[error("empty target sequence")]
    EmptyTarget,
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("training needs non-empty {0} data")]
    NoData(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Omitted fields deserialize to the full-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_start_epoch: usize,
    pub max_decode_len: usize,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Full-scale settings: 4 x 1000 LSTM, 600-dim embeddings, 13 epochs.
    fn default() -> Self {
        ModelConfig {
            embed_dim: 600,
            hidden_dim: 1000,
            num_layers: 4,
            dropout_rate: 0.3,
            batch_size: 64,
            max_epochs: 13,
            initial_lr: 0.8,
            decay_factor: 0.7,
            decay_start_epoch: 9,
            max_decode_len: 100,
            clip_norm: 5.0,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Laptop-sized model: 2 x 64 LSTM with 32-dim embeddings.
    pub fn desk() -> Self {
        ModelConfig {
            embed_dim: 32,
            hidden_dim: 64,
            num_layers: 2,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Config(msg.to_string()));
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 {
            return bad("dimensions and layer count must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}
