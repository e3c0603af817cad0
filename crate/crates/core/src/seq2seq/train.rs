use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{batch_loss, loss_and_grad_with, DropoutRng, EncodedPair};
use super::params::ModelParams;
use super::{ModelConfig, ModelError};

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Learning-rate schedule state. `epoch` is the 1-based index of the last
/// completed epoch; `best_val` covers epochs strictly before the pending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_start_epoch: usize,
    pub val_history: Vec<f64>,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl TrainState {
    pub fn new(config: &ModelConfig) -> Self {
        TrainState {
            epoch: 0,
            lr: config.initial_lr,
            decay_factor: config.decay_factor,
            decay_start_epoch: config.decay_start_epoch,
            val_history: Vec::new(),
            best_val: None,
            best_epoch: None,
        }
    }

    /// Records the validation loss of epoch `self.epoch` and moves to the next lr.
    fn record(&mut self, val: f64) {
        self.lr = next_lr(self, val);
        self.val_history.push(val);
        if self.best_val.map_or(true, |b| val < b) {
            self.best_val = Some(val);
            self.best_epoch = Some(self.epoch);
        }
    }
}

/// Learning rate for epoch `state.epoch + 1` given the validation loss of
/// epoch `state.epoch`.
pub fn next_lr(state: &TrainState, new_val: f64) -> f64 {
    let past_start = state.epoch + 1 > state.decay_start_epoch;
    let not_improving = state.best_val.map_or(false, |b| new_val >= b);
    if past_start || not_improving {
        state.lr * state.decay_factor
    } else {
        state.lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Token-weighted mean loss over the epoch's batches, dropout on.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Parameters after the epoch with the lowest validation loss.
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub state: TrainState,
}

/// Minibatch SGD with global-norm clipping; deterministic per `config.seed`.
///
/// The step objective is summed token NLL divided by the number of sentences
/// in the batch; reported losses stay per-token.
pub fn train(
    params: ModelParams,
    train_pairs: &[EncodedPair],
    val_pairs: &[EncodedPair],
    config: &ModelConfig,
) -> Result<TrainOutcome, ModelError> {
    train_with_progress(params, train_pairs, val_pairs, config, |_| {})
}

pub fn train_with_progress(
    mut params: ModelParams,
    train_pairs: &[EncodedPair],
    val_pairs: &[EncodedPair],
    config: &ModelConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(ModelError::NoData("training"));
    }
    if val_pairs.is_empty() {
        return Err(ModelError::NoData("validation"));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut state = TrainState::new(config);
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best_params = params.clone();
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let lr = state.lr;
        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<EncodedPair> = chunk.iter().map(|&i| train_pairs[i].clone()).collect();
            let mut dropout = Some(DropoutRng {
                rng: &mut dropout_rng,
                rate: config.dropout_rate,
            });
            let (loss, mut grad) = loss_and_grad_with(&params, &batch, &mut dropout)?;
            let n: usize = batch.iter().map(|p| p.tgt.len() + 1).sum();
            // Step on the per-sentence loss (token sum / batch size).
            grad.scale(n as f64 / batch.len() as f64);
            let norm = grad.squared_norm().sqrt();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(ModelError::NonFinite {
                    epoch,
                    batch: batch_idx,
                });
            }
            if norm > config.clip_norm {
                grad.scale(config.clip_norm / norm);
            }
            params.sgd_step(&grad, lr);
            loss_sum += loss * n as f64;
            tokens += n;
        }
        let val_loss = batch_loss(&params, val_pairs)?;
        if !val_loss.is_finite() {
            return Err(ModelError::NonFinite {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        state.epoch = epoch;
        state.record(val_loss);
        if state.best_epoch == Some(epoch) {
            best_params = params.clone();
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / tokens as f64,
            val_loss,
        };
        on_epoch(&record);
        history.push(record);
    }

    Ok(TrainOutcome {
        params,
        best_params,
        best_epoch: state.best_epoch.unwrap_or(0),
        history,
        state,
    })
}
