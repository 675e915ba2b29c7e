//! Mixed-domain training loop.

pub mod loss;
pub mod optim;
pub mod schedule;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use loss::{bce_grad, bce_heatmap_loss, bce_loss, bce_per_image};
pub use optim::Adam;
pub use schedule::{cyclic_lr, CyclicSchedule};

use crate::data::{augment, AugmentConfig, MixedBatchSampler, Sample};
use crate::error::{Error, Result};
use crate::heatmap::{encode_into, GaussianScale};
use crate::model::Model;
use crate::rng::{substream, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    pub epochs: usize,
    /// Epochs per half-cycle of the learning-rate triangle.
    pub cycle_length: usize,
    pub seed: u64,
    pub sigma: f64,
    pub gaussian: GaussianScale,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            lr_min: 1e-4,
            lr_max: 1e-2,
            epochs: 100,
            cycle_length: 10,
            seed: 0,
            sigma: 3.0,
            gaussian: GaussianScale::Verbatim,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return bad("learning rates must satisfy 0 < lr_min < lr_max");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.cycle_length == 0 {
            return bad("cycle_length must be at least 1");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must lie in [0,1) and adam_eps must be positive");
        }
        Ok(())
    }
}

/// Training and held-out samples of one domain, at working resolution.
#[derive(Debug, Clone, Default)]
pub struct DomainData {
    pub fit: Vec<Sample>,
    pub val: Vec<Sample>,
}

/// Loss summary of one domain for one epoch. Losses are per-image means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainLoss {
    pub domain_id: String,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    pub domains: Vec<DomainLoss>,
    pub train_loss: f64,
    /// Mean over every held-out image of every domain; falls back to the
    /// training loss when no domain has held-out data.
    pub val_loss: f64,
}

/// Receives control after every epoch. Returning an error aborts training.
pub trait TrainObserver {
    fn on_epoch(&mut self, record: &EpochRecord, model: &Model, improved: bool) -> core::result::Result<(), String>;
}

impl TrainObserver for () {
    fn on_epoch(&mut self, _: &EpochRecord, _: &Model, _: bool) -> core::result::Result<(), String> {
        Ok(())
    }
}

impl<F> TrainObserver for F
where
    F: FnMut(&EpochRecord, &Model, bool) -> core::result::Result<(), String>,
{
    fn on_epoch(&mut self, record: &EpochRecord, model: &Model, improved: bool) -> core::result::Result<(), String> {
        self(record, model, improved)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss (first one on ties).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best: Model,
}

/// Stacks images and encodes their targets.
pub fn assemble_batch(samples: &[&Sample], sigma: f64, scale: GaussianScale) -> (Tensor, Tensor) {
    let first = samples.first().expect("non-empty batch");
    let (c, h, w) = (first.image.channels, first.image.height, first.image.width);
    let k = first.landmarks.len();
    let x = Tensor::stack(samples.iter().map(|s| s.image.data.as_slice()), c, h, w);
    let mut y = Tensor::zeros([samples.len(), k, h, w]);
    for (i, s) in samples.iter().enumerate() {
        encode_into(&s.landmarks.points, h, w, sigma, scale, y.image_mut(i));
    }
    (x, y)
}

/// Mean per-image loss of `model` in evaluation mode.
pub fn validation_loss(model: &Model, samples: &[Sample], domain: usize, config: &TrainConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(config.batch_size) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, y) = assemble_batch(&refs, config.sigma, config.gaussian);
        let pred = model.infer(&x, domain)?;
        total += bce_per_image(&pred, &y).iter().sum::<f64>();
    }
    Ok(total / samples.len() as f64)
}

fn check_data(model: &Model, data: &[DomainData]) -> Result<()> {
    let specs = &model.config().domains;
    if data.len() != specs.len() {
        return Err(Error::InvalidConfig(format!(
            "model has {} domains but {} datasets were given",
            specs.len(),
            data.len()
        )));
    }
    for (spec, d) in specs.iter().zip(data) {
        if d.fit.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "domain `{}` has no training samples",
                spec.domain_id
            )));
        }
        for s in d.fit.iter().chain(&d.val) {
            let (h, w) = spec.resize_to;
            if (s.image.channels, s.image.height, s.image.width) != (spec.in_channels, h, w) {
                return Err(Error::ShapeMismatch(format!(
                    "sample `{}` of domain `{}` is {}x{}x{}, expected {}x{}x{}",
                    s.landmarks.image_id,
                    spec.domain_id,
                    s.image.channels,
                    s.image.height,
                    s.image.width,
                    spec.in_channels,
                    h,
                    w
                )));
            }
            s.landmarks.validate(spec.num_landmarks, h, w)?;
        }
    }
    Ok(())
}

/// Trains `model` in place and returns the history plus the snapshot with
/// the lowest validation loss.
pub fn train(
    model: &mut Model,
    data: &[DomainData],
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_data(model, data)?;
    let ids = model.config().domain_ids();
    let mut sampler = MixedBatchSampler::new(
        data.iter().map(|d| d.fit.len()).collect(),
        config.batch_size,
        substream(config.seed, Stream::Sampler),
    )?;
    let mut aug_rng = substream(config.seed, Stream::Augment);
    let schedule = CyclicSchedule::new(config, sampler.batches_per_epoch());
    let mut adam = Adam::new(config.adam_beta1, config.adam_beta2, config.adam_eps);
    let has_val = data.iter().any(|d| !d.val.is_empty());

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;
    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        let epoch_lr = schedule.lr(step);
        let mut sums = vec![0.0; data.len()];
        let mut counts = vec![0usize; data.len()];
        for batch in sampler.next_epoch() {
            let d = batch.domain;
            let augmented: Vec<Sample> = batch
                .indices
                .iter()
                .map(|&i| augment(&data[d].fit[i], &config.augment, &mut aug_rng))
                .collect();
            let refs: Vec<&Sample> = augmented.iter().collect();
            let (x, y) = assemble_batch(&refs, config.sigma, config.gaussian);
            model.zero_grad();
            let pred = model.forward(&x, d)?;
            let per = bce_per_image(&pred, &y);
            let total: f64 = per.iter().sum();
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    domain: ids[d].clone(),
                });
            }
            model.backward(&bce_grad(&pred, &y));
            adam.step(model, schedule.lr(step));
            sums[d] += total;
            counts[d] += per.len();
            step += 1;
        }

        let mut domains = Vec::with_capacity(data.len());
        let (mut val_sum, mut val_n) = (0.0, 0usize);
        for (i, d) in data.iter().enumerate() {
            let val_loss = if d.val.is_empty() {
                None
            } else {
                let v = validation_loss(model, &d.val, i, config)?;
                val_sum += v * d.val.len() as f64;
                val_n += d.val.len();
                Some(v)
            };
            domains.push(DomainLoss {
                domain_id: ids[i].clone(),
                train_loss: sums[i] / counts[i].max(1) as f64,
                val_loss,
            });
        }
        let train_loss = sums.iter().sum::<f64>() / counts.iter().sum::<usize>().max(1) as f64;
        let val_loss = if has_val { val_sum / val_n as f64 } else { train_loss };
        let record = EpochRecord {
            epoch,
            lr: epoch_lr,
            domains,
            train_loss,
            val_loss,
        };
        let improved = best.as_ref().is_none_or(|(_, v, _)| val_loss < *v);
        if improved {
            best = Some((epoch, val_loss, model.clone()));
        }
        observer.on_epoch(&record, model, improved).map_err(Error::Observer)?;
        history.push(record);
    }
    let (best_epoch, best_val_loss, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_loss,
        best,
    })
}
