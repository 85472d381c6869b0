//! Wind-turbine SCADA cleaning and patch-tokenized decoder-only forecasting.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`] - dense tensors, reverse-mode gradients, Adam.
//! * [`clean`] - range and turbine-physics rules, DBSCAN/LOF refinement,
//!   short-gap interpolation and sliding windows.
//! * [`series`] - single-series (channel-independent) samples, instance
//!   normalization and patch tokenization.
//! * [`models`] - the decoder-only Timer, channel-dependent Transformer
//!   baselines and an LSTM, with checkpoints.
//! * [`train`] - next-token objective, cosine schedule, early stopping and
//!   a synthetic pre-training corpus.
//! * [`inference`] - iterative multi-horizon forecasting.
//! * [`eval`] - multi-horizon MSE and the comparison, ablation and
//!   one-turbine protocols.
//! * [`synth`] - synthetic plants with ground-truth outlier labels.
//! * [`pipeline`] - file-based stages and the end-to-end run.
//! * [`config`] - flat `section.key = value` configuration.

pub mod autodiff;
pub mod clean;
pub mod config;
mod error;
pub mod eval;
pub mod inference;
pub mod models;
pub mod pipeline;
pub mod series;
pub mod synth;
pub mod train;
pub mod util;

pub use error::{Error, Result};
