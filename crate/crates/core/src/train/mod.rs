//! Next-step training: datasets, the objective, the training loop and the
//! synthetic pre-training corpus.

mod config;
mod corpus;
mod data;
mod loss;
mod trainer;

pub use config::{Schedule, TrainConfig, TrainMode};
pub use corpus::{pretrain_corpus, Regime};
pub use data::{dataset_for, interleave_patches, lstm_dataset, time_slot, timer_dataset, transformer_dataset, Dataset, NormScope};
pub use loss::{autoregressive_loss, autoregressive_loss_graph, cosine_lr};
pub use trainer::{evaluate_loss, train, EarlyStopping, EpochRecord, Observation, StopReason, TrainHistory, TrainOutcome};
