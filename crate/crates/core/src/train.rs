//! Mini-batch training on shingled chunks.
//!
//! Each epoch walks a fresh permutation of the training chunks in batches,
//! maximizing the rescaled mini-batch ELBO with Adam. A validation pass with
//! common noise follows every epoch; the learning rate is then adjusted by
//! [`lr_schedule`] and the parameters with the lowest validation loss are
//! kept.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{ChunkSet, TimeSeries};
use crate::error::{Error, Result};
use crate::model::Vrnnaug;
use crate::nn::{ParamRecord, ParamStore};
use crate::optim::{
    clip_grad_norm, lr_schedule, AdamConfig, LrDecision, OptimState, ScheduleConfig, Termination,
};
use crate::rng::{self, Gaussian};

const SHUFFLE_STREAM: u64 = 0x5f1e;
const TRAIN_NOISE_STREAM: u64 = 0x7a11;
const VALID_NOISE_STREAM: u64 = 0x7a1d;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub schedule: ScheduleConfig,
    pub adam: AdamConfig,
    /// Optional cap on the joint gradient norm of each batch.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            schedule: ScheduleConfig::default(),
            adam: AdamConfig::default(),
            max_grad_norm: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(s.initial_lr > 0.0 && s.initial_lr.is_finite()) || !(s.decay > 0.0 && s.decay < 1.0) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive and the decay factor within (0, 1)".into(),
            ));
        }
        if s.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return Err(Error::InvalidArgument("max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

/// One completed epoch. Losses are negative ELBOs averaged per chunk.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub termination: Option<Termination>,
}

impl TrainReport {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn valid_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.valid_loss).collect()
    }
}

/// Everything needed to continue an interrupted run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainState {
    pub optim: OptimState,
    pub report: TrainReport,
    pub best_params: Vec<ParamRecord>,
    /// Parameters after the last completed epoch.
    pub last_params: Vec<ParamRecord>,
    /// `Some` once the schedule has ended the run.
    pub finished: Option<Termination>,
}

impl TrainState {
    pub fn new(model: &Vrnnaug, cfg: &TrainConfig) -> Self {
        Self {
            optim: OptimState::new(model.params(), cfg.schedule.initial_lr, cfg.adam.clone()),
            report: TrainReport {
                best_valid_loss: f64::INFINITY,
                ..TrainReport::default()
            },
            best_params: model.params().to_records(),
            last_params: model.params().to_records(),
            finished: None,
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.report.epochs.len()
    }
}

/// Hooks invoked by the loop; wall-clock time comes from here because the
/// core crate has no clock.
pub trait TrainObserver {
    fn now(&mut self) -> f64 {
        0.0
    }

    /// Called after every epoch; returning `false` pauses training, leaving
    /// the state resumable.
    fn on_epoch(&mut self, _record: &EpochRecord, _state: &TrainState) -> bool {
        true
    }
}

/// Observer that does nothing.
pub struct Silent;

impl TrainObserver for Silent {}

/// Training and validation data with their chunkings.
pub struct TrainData<'a> {
    pub train: &'a TimeSeries,
    pub train_chunks: &'a ChunkSet,
    pub valid: &'a TimeSeries,
    pub valid_chunks: &'a ChunkSet,
}

/// Per-chunk mean negative ELBO of a chunk set under fixed noise.
pub fn evaluate_loss(
    model: &Vrnnaug,
    series: &TimeSeries,
    chunks: &ChunkSet,
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    let mut noise = Gaussian(rng::stream(seed, &[VALID_NOISE_STREAM]));
    let idx: Vec<usize> = (0..chunks.count).collect();
    let mut total = 0.0;
    for part in idx.chunks(batch_size.max(1)) {
        let batch = chunks.batch(series, part)?;
        total += model.elbo(&batch, &mut noise)?.0;
    }
    Ok(-total / chunks.count as f64)
}

/// Factor `J/|B|` turning a batch sum into an unbiased full-data estimate,
/// using the actual size of the (possibly short) batch.
pub fn batch_scale(total_chunks: usize, batch: usize) -> f64 {
    total_chunks as f64 / batch as f64
}

fn run_epoch(
    model: &mut Vrnnaug,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    optim: &mut OptimState,
    epoch: usize,
) -> Result<f64> {
    let j = data.train_chunks.count;
    let order = rng::permutation(j, &mut rng::stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
    let mut noise = Gaussian(rng::stream(cfg.seed, &[TRAIN_NOISE_STREAM, epoch as u64]));
    let mut total = 0.0;
    for (b, part) in order.chunks(cfg.batch_size).enumerate() {
        let at = |e: Error| e.context(format_args!("epoch {epoch}, batch {}", b + 1));
        let batch = data.train_chunks.batch(data.train, part).map_err(at)?;
        let scale = batch_scale(j, part.len());
        let (elbo, mut grads) = model.neg_elbo_grad(&batch, scale, &mut noise).map_err(at)?;
        if let Some(max) = cfg.max_grad_norm {
            clip_grad_norm(&mut grads, max);
        }
        optim.step(model.params_mut(), &grads).map_err(at)?;
        total += elbo;
    }
    Ok(-total / j as f64)
}

/// Runs epochs until the schedule stops or the observer pauses. On return
/// `model` holds the best parameters seen so far.
pub fn train(
    model: &mut Vrnnaug,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    state: &mut TrainState,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    cfg.validate()?;
    if data.train_chunks.count == 0 || data.valid_chunks.count == 0 {
        return Err(Error::Data("training and validation need at least one chunk".into()));
    }
    if state.optim.m.len() != model.params().len() {
        return Err(Error::InvalidArgument("training state does not match the model".into()));
    }
    let last = ParamStore::from_records(state.last_params.clone())?;
    model
        .params_mut()
        .copy_from(&last)
        .map_err(|e| e.context("training state does not match the model"))?;
    while state.finished.is_none() {
        let epoch = state.epochs_done() + 1;
        let start = observer.now();
        let lr = state.optim.lr;
        let train_loss = run_epoch(model, data, cfg, &mut state.optim, epoch)?;
        let valid_loss = evaluate_loss(model, data.valid, data.valid_chunks, cfg.batch_size, cfg.seed)
            .map_err(|e| e.context(format_args!("validation after epoch {epoch}")))?;
        if !valid_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            lr,
            seconds: observer.now() - start,
        };
        let report = &mut state.report;
        if valid_loss < report.best_valid_loss {
            report.best_valid_loss = valid_loss;
            report.best_epoch = epoch;
            state.best_params = model.params().to_records();
        }
        report.epochs.push(record.clone());
        let history = report.valid_losses();
        match lr_schedule(epoch, &history, lr, &cfg.schedule) {
            LrDecision::Continue(next) => state.optim.lr = next,
            LrDecision::Stop { lr, reason } => {
                state.optim.lr = lr;
                state.finished = Some(reason);
                report.termination = Some(reason);
            }
        }
        state.last_params = model.params().to_records();
        if !observer.on_epoch(&record, state) {
            break;
        }
    }
    let best = ParamStore::from_records(state.best_params.clone())?;
    model.params_mut().copy_from(&best)?;
    Ok(())
}

/// Fresh training run.
pub fn fit(
    model: &mut Vrnnaug,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainReport> {
    let mut state = TrainState::new(model, cfg);
    train(model, data, cfg, &mut state, observer)?;
    Ok(state.report)
}
