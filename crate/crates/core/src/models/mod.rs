//! Forecasting architectures: the decoder-only Timer over univariate patch
//! tokens, its channel-dependent Transformer counterparts and a stacked LSTM.

mod checkpoint;
mod config;
mod decoder;
mod init;
mod lstm;

pub use checkpoint::{load_checkpoint, same_architecture, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{BaselineTransformerConfig, LstmConfig, ModelConfig, ModelKind, TimerConfig, TIME_SLOTS};
pub use decoder::{baseline_transformer_forward, causal_mask, timer_forward};
pub use init::{count_params, count_transformer_params, init_params, param_shapes, INIT_STD};
pub use lstm::lstm_forward;

use crate::autodiff::{BoundParams, Graph, Var};
use crate::error::{Error, Result};

/// Dispatch to the forward pass of `cfg`'s architecture. `x` is
/// `[B, rows, width]`: tokens for the decoders, time steps for the LSTM.
pub fn forward(g: &mut Graph, params: &BoundParams, cfg: &ModelConfig, x: Var, time: Option<&[usize]>) -> Result<Var> {
    match cfg {
        ModelConfig::Timer(c) => timer_forward(g, params, c, x, time),
        ModelConfig::Transformer(c) => baseline_transformer_forward(g, params, c, x, time),
        ModelConfig::Lstm(c) => {
            if time.is_some() {
                return Err(Error::invalid("the LSTM takes no time embedding"));
            }
            lstm_forward(g, params, c, x)
        }
    }
}
