//! Pixel-loss (L1) training with Adam and step learning-rate decay.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{self, NamedTensor};
use crate::error::{Error, Result};
use crate::imaging::crop::{aligned_crop_at, aligned_random_crop_with};
use crate::imaging::PairedSample;
use crate::nn::ops::l1_loss;
use crate::nn::Adam;
use crate::scalar::Scalar;
use crate::sr_model::checkpoint::{EpochLoss, ModelCheckpoint};
use crate::sr_model::net::ForwardCache;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub lr0: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// LR-space crop side.
    pub lr_crop: usize,
    /// Random crops drawn from every image per epoch.
    pub crops_per_image: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            lr_decay: 0.1,
            decay_every: 20,
            epochs: 50,
            batch_size: 16,
            lr_crop: 32,
            crops_per_image: 1,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    /// `lr0 * lr_decay ^ floor(epoch / decay_every)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi((epoch / self.decay_every.max(1)) as i32)
    }
}

pub(crate) fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Stacks LR and HR crops into network-ready batches.
pub(crate) fn stack_pairs<T: Scalar>(crops: &[PairedSample<T>]) -> (Tensor<T>, Tensor<T>) {
    let lr: Vec<Tensor<T>> = crops.iter().map(|c| c.lr.to_tensor()).collect();
    let hr: Vec<Tensor<T>> = crops.iter().map(|c| c.hr.to_tensor()).collect();
    (Tensor::stack(&lr), Tensor::stack(&hr))
}

/// Forward, L1 loss, backward and one Adam update. Returns the batch loss.
pub(crate) fn optimizer_step<T: Scalar>(
    model: &mut ModelCheckpoint<T>,
    adam: &mut Adam<T>,
    lr_batch: &Tensor<T>,
    hr_batch: &Tensor<T>,
    learning_rate: f64,
    step_index: usize,
) -> Result<f64> {
    let (pred, cache) = model.net.forward_train(lr_batch);
    apply_update(model, adam, &pred, &cache, hr_batch, learning_rate, step_index)
}

/// L1 loss of an existing forward pass, backward and one Adam update.
pub(crate) fn apply_update<T: Scalar>(
    model: &mut ModelCheckpoint<T>,
    adam: &mut Adam<T>,
    pred: &Tensor<T>,
    cache: &ForwardCache<T>,
    hr_batch: &Tensor<T>,
    learning_rate: f64,
    step_index: usize,
) -> Result<f64> {
    let (loss, dy) = l1_loss(pred, hr_batch);
    if !loss.is_finite() {
        return Err(Error::Divergence { step: step_index, loss });
    }
    let mut grads = model.net.zeros_like();
    let layer_mask = model.layer_grad_mask();
    model.net.backward(cache, &dy, &mut grads, &layer_mask);
    let trainable = model.trainable_mask();
    let grad_slices = grads.params();
    let mut params = model.net.params_mut();
    adam.update(&mut params, &grad_slices, &trainable, learning_rate);
    Ok(loss)
}

pub(crate) fn batch_loss<T: Scalar>(model: &ModelCheckpoint<T>, lr_batch: &Tensor<T>, hr_batch: &Tensor<T>) -> f64 {
    l1_loss(&model.net.forward(lr_batch), hr_batch).0
}

/// Trains a checkpoint epoch by epoch; optimizer state survives between
/// calls and can be persisted to resume bit-identically.
pub struct Trainer<T> {
    pub schedule: TrainSchedule,
    pub adam: Adam<T>,
    pub next_epoch: usize,
    pub steps: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: &ModelCheckpoint<T>, schedule: TrainSchedule) -> Self {
        let sizes: Vec<usize> = model.net.params().iter().map(|p| p.len()).collect();
        let adam = Adam::with_betas(&sizes, schedule.beta1, schedule.beta2);
        Self { schedule, adam, next_epoch: 0, steps: 0 }
    }

    fn heldin_batch(&self, dataset: &[PairedSample<T>]) -> Result<(Tensor<T>, Tensor<T>)> {
        let crop = self.schedule.lr_crop;
        let crops = dataset
            .iter()
            .take(4)
            .map(|p| {
                let (h, w, _) = p.lr.dims();
                if crop > h.min(w) {
                    return Err(Error::CropTooLarge { crop, available: h.min(w) });
                }
                aligned_crop_at(p, (h - crop) / 2, (w - crop) / 2, crop)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(stack_pairs(&crops))
    }

    /// Runs epochs until `schedule.epochs` have been seen or `max_epochs`
    /// more have run, appending to the model's loss curve.
    pub fn run(&mut self, model: &mut ModelCheckpoint<T>, dataset: &[PairedSample<T>], max_epochs: Option<usize>) -> Result<()> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (held_lr, held_hr) = self.heldin_batch(dataset)?;
        if self.next_epoch == 0 && model.meta.loss_curve.is_empty() {
            model.meta.loss_curve.push(EpochLoss {
                epoch: 0,
                lr: self.schedule.lr_at(0),
                train_loss: None,
                heldin_loss: batch_loss(model, &held_lr, &held_hr),
            });
        }
        let end = match max_epochs {
            Some(n) => (self.next_epoch + n).min(self.schedule.epochs),
            None => self.schedule.epochs,
        };
        let batch = self.schedule.batch_size.max(1);
        while self.next_epoch < end {
            let epoch = self.next_epoch;
            let lr = self.schedule.lr_at(epoch);
            let mut rng = epoch_rng(self.schedule.seed, epoch);
            let mut order: Vec<usize> = (0..dataset.len()).flat_map(|i| std::iter::repeat_n(i, self.schedule.crops_per_image.max(1))).collect();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut count = 0usize;
            for chunk in order.chunks(batch) {
                let crops = chunk
                    .iter()
                    .map(|&i| aligned_random_crop_with(&dataset[i], self.schedule.lr_crop, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let (lr_b, hr_b) = stack_pairs(&crops);
                total += optimizer_step(model, &mut self.adam, &lr_b, &hr_b, lr, self.steps)?;
                count += 1;
                self.steps += 1;
            }
            self.next_epoch += 1;
            model.meta.epochs_seen += 1;
            let heldin = batch_loss(model, &held_lr, &held_hr);
            if !heldin.is_finite() {
                return Err(Error::Divergence { step: self.steps, loss: heldin });
            }
            model.meta.loss_curve.push(EpochLoss { epoch: epoch + 1, lr, train_loss: Some(total / count as f64), heldin_loss: heldin });
            log::info!("epoch {} lr {lr:.1e} train L1 {:.5} held-in L1 {heldin:.5}", epoch + 1, total / count as f64);
        }
        Ok(())
    }

    /// Optimizer moments and counters, stored next to the checkpoint for
    /// resuming.
    pub fn save_state(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tensors = std::collections::BTreeMap::new();
        for (i, (m, v)) in self.adam.m.iter().zip(&self.adam.v).enumerate() {
            tensors.insert(format!("m.{i:04}"), NamedTensor { shape: vec![m.len()], values: m.clone() });
            tensors.insert(format!("v.{i:04}"), NamedTensor { shape: vec![v.len()], values: v.clone() });
        }
        let meta = std::collections::HashMap::from([
            ("schedule".to_string(), serde_json::to_string(&self.schedule)?),
            ("adam_step".to_string(), self.adam.step.to_string()),
            ("next_epoch".to_string(), self.next_epoch.to_string()),
            ("steps".to_string(), self.steps.to_string()),
        ]);
        std::fs::write(path, archive::encode(&tensors, meta)?).map_err(|e| Error::file(path, e))
    }

    pub fn load_state(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        let (mut tensors, meta) = archive::decode::<T>(&bytes)?;
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Checkpoint(format!("trainer state missing `{k}`")));
        let parse = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::Checkpoint(format!("bad `{k}`"))) };
        let schedule: TrainSchedule = serde_json::from_str(get("schedule")?)?;
        let n = tensors.len() / 2;
        let mut adam = Adam::with_betas(&[], schedule.beta1, schedule.beta2);
        for i in 0..n {
            let m = tensors.remove(&format!("m.{i:04}")).ok_or_else(|| Error::Checkpoint("missing moment".into()))?;
            let v = tensors.remove(&format!("v.{i:04}")).ok_or_else(|| Error::Checkpoint("missing moment".into()))?;
            adam.m.push(m.values);
            adam.v.push(v.values);
        }
        adam.step = parse("adam_step")?;
        Ok(Self { schedule, adam, next_epoch: parse("next_epoch")? as usize, steps: parse("steps")? as usize })
    }
}

/// Trains `model` on `dataset` for the full schedule.
pub fn train<T: Scalar>(model: &mut ModelCheckpoint<T>, dataset: &[PairedSample<T>], schedule: &TrainSchedule) -> Result<()> {
    let mut trainer = Trainer::new(model, schedule.clone());
    model.meta.seed = schedule.seed;
    trainer.run(model, dataset, None)
}
