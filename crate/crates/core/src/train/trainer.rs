use std::io::Write;

use rand::seq::SliceRandom;

use super::config::{Schedule, TrainConfig, TrainMode};
use super::data::Dataset;
use super::loss::{autoregressive_loss_graph, cosine_lr};
use crate::autodiff::{clip_global_norm, AdamState, Graph, ParamSet, Tensor};
use crate::autodiff::kernels::splitmix64;
use crate::error::{Error, Result};
use crate::models::{forward, init_params, ModelConfig};
use crate::util::{rng_for, Stopwatch};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    /// A training or validation loss was NaN or infinite.
    NonFiniteLoss,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStop => "early_stop",
            StopReason::NonFiniteLoss => "non_finite_loss",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate of the epoch's last update.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned; 0 when none ran.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch.checked_sub(1)?).map(|e| e.val_loss)
    }

    /// `epoch,train_loss,val_loss,lr` rows. Wall-clock time is left out so the
    /// file is reproducible.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "val_loss", "lr"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.lr.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<history>", e))?;
        Ok(())
    }
}

/// Tracks the best validation loss and says when to stop.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Observation {
    Improved,
    NoImprovement,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, since_best: 0 }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Observation {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            return Observation::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            Observation::Stop
        } else {
            Observation::NoImprovement
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub history: TrainHistory,
}

fn batch_tensor(data: &Dataset, idx: &[usize]) -> Result<Tensor> {
    let mut flat = Vec::with_capacity(idx.len() * data.rows * data.width);
    for &i in idx {
        flat.extend_from_slice(&data.samples[i]);
    }
    Tensor::new(vec![idx.len(), data.rows, data.width], flat)
}

fn batch_time(data: &Dataset, idx: &[usize]) -> Option<Vec<usize>> {
    data.time.as_ref().map(|t| idx.iter().flat_map(|&i| t[i].iter().copied()).collect())
}

/// Mean next-step loss of `params` over `data` in evaluation mode.
pub fn evaluate_loss(cfg: &ModelConfig, params: &ParamSet, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let mut g = Graph::eval();
        let bound = params.register(&mut g, false);
        let x = g.constant(batch_tensor(data, chunk)?);
        let time = batch_time(data, chunk);
        let y = forward(&mut g, &bound, cfg, x, time.as_deref())?;
        let loss = autoregressive_loss_graph(&mut g, y, x)?;
        total += g.value(loss).data()[0] * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Train with Adam on the next-step objective.
///
/// Scratch and pretrain runs start from [`init_params`]; fine-tuning starts
/// from `initial` and updates every parameter. Validation loss is computed
/// after each epoch and the parameters of the best validation epoch are
/// returned. Without validation data the training loss stands in.
pub fn train(
    model: &ModelConfig,
    initial: Option<&ParamSet>,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = match (cfg.mode, initial) {
        (_, Some(p)) => p.clone(),
        (TrainMode::Finetune, None) => {
            return Err(Error::Config("fine-tuning needs starting parameters from a checkpoint".into()))
        }
        (_, None) => init_params(model, cfg.seed)?,
    };
    if train_set.is_empty() && cfg.epochs > 0 {
        return Err(Error::invalid("training set is empty"));
    }
    let batches_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best = params.clone();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let clock = Stopwatch::start();
        order.shuffle(&mut rng_for(cfg.seed, 1_000 + epoch as u64));
        let mut sum = 0.0;
        let mut lr = cfg.lr;
        for chunk in order.chunks(cfg.batch_size) {
            lr = match cfg.schedule {
                Schedule::Cosine => cosine_lr(step, total_steps, cfg.lr),
                Schedule::Constant => cfg.lr,
            };
            let mut g = Graph::train(splitmix64(cfg.seed ^ splitmix64(step as u64)));
            let bound = params.register(&mut g, true);
            let x = g.constant(batch_tensor(train_set, chunk)?);
            let time = batch_time(train_set, chunk);
            let y = forward(&mut g, &bound, model, x, time.as_deref())?;
            let loss = autoregressive_loss_graph(&mut g, y, x)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                history.stop_reason = StopReason::NonFiniteLoss;
                return Ok(TrainOutcome { params: best, history });
            }
            sum += value * chunk.len() as f64;
            let mut grads = g.backward(loss)?;
            let mut grads = params.gradients_for(&bound, &mut grads);
            if let Some(c) = cfg.clip {
                clip_global_norm(&mut grads, c);
            }
            match adam.step(&mut params, &grads, lr) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient(_)) => {
                    history.stop_reason = StopReason::NonFiniteLoss;
                    return Ok(TrainOutcome { params: best, history });
                }
                Err(e) => return Err(e),
            }
            step += 1;
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            evaluate_loss(model, &params, val_set, cfg.batch_size)?
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            seconds: clock.seconds(),
        });
        if !val_loss.is_finite() {
            history.stop_reason = StopReason::NonFiniteLoss;
            return Ok(TrainOutcome { params: best, history });
        }
        match stopper.observe(epoch, val_loss) {
            Observation::Improved => {
                best = params.clone();
                history.best_epoch = epoch;
            }
            Observation::NoImprovement => {}
            Observation::Stop => {
                history.stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }
    Ok(TrainOutcome { params: best, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LstmConfig, TimerConfig};

    fn toy(n: usize, rows: usize, width: usize) -> Dataset {
        let mut d = Dataset::new(rows, width);
        d.samples = (0..n)
            .map(|k| (0..rows * width).map(|i| ((i + k) as f64 * 0.3).sin()).collect())
            .collect();
        d
    }

    fn tiny() -> ModelConfig {
        ModelConfig::Timer(TimerConfig { layers: 1, model_dim: 8, ffn_hidden: 8, heads: 2, patch: 4, ..TimerConfig::tiny() })
    }

    #[test]
    fn zero_lr_leaves_params_untouched() {
        let m = tiny();
        let cfg = TrainConfig { lr: 0.0, epochs: 3, batch_size: 2, ..TrainConfig::for_mode(TrainMode::Scratch) };
        let out = train(&m, None, &toy(5, 4, 4), &toy(2, 4, 4), &cfg).unwrap();
        assert_eq!(out.params, init_params(&m, cfg.seed).unwrap());
        assert_eq!(out.history.epochs.len(), 3);
    }

    #[test]
    fn finetune_needs_start_and_zero_epochs_is_identity() {
        let m = tiny();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::for_mode(TrainMode::Finetune) };
        assert!(train(&m, None, &toy(2, 4, 4), &toy(2, 4, 4), &cfg).is_err());
        let start = init_params(&m, 9).unwrap();
        let out = train(&m, Some(&start), &toy(2, 4, 4), &toy(2, 4, 4), &cfg).unwrap();
        assert_eq!(out.params, start);
        assert_eq!(out.history.best_epoch, 0);
    }

    #[test]
    fn worsening_validation_stops_early() {
        // A huge constant learning rate drives validation loss up every epoch.
        let m = ModelConfig::Lstm(LstmConfig { hidden_units: 3, layers: 1, dropout: 0.0, input_dim: 2 });
        let cfg = TrainConfig {
            lr: 0.5,
            schedule: Schedule::Constant,
            epochs: 50,
            batch_size: 4,
            patience: 1,
            clip: None,
            ..TrainConfig::for_mode(TrainMode::Scratch)
        };
        let out = train(&m, None, &toy(4, 6, 2), &toy(3, 6, 2), &cfg).unwrap();
        let h = &out.history;
        let best = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(h.best_val_loss(), Some(best));
        if h.stop_reason == StopReason::EarlyStop {
            assert_eq!(h.epochs.len(), h.best_epoch + 1);
        }
    }

    #[test]
    fn patience_one_stops_at_second_worse_epoch() {
        let mut s = EarlyStopping::new(1);
        assert_eq!(s.observe(1, 1.0), Observation::Improved);
        assert_eq!(s.observe(2, 2.0), Observation::Stop);
        assert_eq!(s.best_epoch(), 1);
        let mut s = EarlyStopping::new(3);
        let seen: Vec<_> = [3.0, 2.0, 2.0, 2.5, 1.0, 4.0, 4.0, 4.0].iter().enumerate().map(|(e, &v)| s.observe(e + 1, v)).collect();
        assert_eq!(seen[4], Observation::Improved);
        assert_eq!(seen[7], Observation::Stop);
        assert_eq!(s.best_epoch(), 5);
    }

    #[test]
    fn runs_are_deterministic() {
        let m = tiny();
        let cfg = TrainConfig { lr: 1e-2, epochs: 4, batch_size: 2, ..TrainConfig::for_mode(TrainMode::Scratch) };
        let a = train(&m, None, &toy(6, 4, 4), &toy(2, 4, 4), &cfg).unwrap();
        let b = train(&m, None, &toy(6, 4, 4), &toy(2, 4, 4), &cfg).unwrap();
        let losses = |o: &TrainOutcome| o.history.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(a.params, b.params);
    }
}
