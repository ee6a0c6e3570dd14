//! Constrained fine-tuning on a handful of images.

use crate::error::{Error, Result};
use crate::imaging::crop::aligned_random_crop_with;
use crate::imaging::PairedSample;
use crate::nn::Adam;
use crate::scalar::Scalar;
use crate::sr_model::checkpoint::ModelCheckpoint;
use crate::sr_model::train::{epoch_rng, optimizer_step, stack_pairs};
use crate::tta::AdaptationConfig;

/// Optimizer steps per fine-tuning epoch: `ceil(crops_per_epoch / n_images)`.
pub fn steps_per_epoch(crops_per_epoch: usize, n_images: usize) -> usize {
    crops_per_epoch.div_ceil(n_images.max(1)).max(1)
}

/// Fine-tunes the non-frozen parameters with L1 + Adam at `cfg.lr`.
///
/// Every step uses one fresh aligned random crop from each image as the
/// batch. Adam starts from zero moments. `epoch_callback(e, model)` runs for
/// `e = 0` before any update and after each completed epoch.
pub fn fine_tune<T, F>(model: &mut ModelCheckpoint<T>, images: &[PairedSample<T>], cfg: &AdaptationConfig, mut epoch_callback: F) -> Result<()>
where
    T: Scalar,
    F: FnMut(usize, &ModelCheckpoint<T>) -> Result<()>,
{
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lr_crop = cfg.lr_crop(model.scale())?;
    let sizes: Vec<usize> = model.net.params().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(&sizes);
    let steps = steps_per_epoch(cfg.crops_per_epoch, images.len());
    epoch_callback(0, model)?;
    let mut step_index = 0;
    for epoch in 1..=cfg.epochs {
        let mut rng = epoch_rng(cfg.seed, epoch);
        for _ in 0..steps {
            let crops = images
                .iter()
                .map(|p| aligned_random_crop_with(p, lr_crop, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let (lr_b, hr_b) = stack_pairs(&crops);
            optimizer_step(model, &mut adam, &lr_b, &hr_b, cfg.lr, step_index)?;
            step_index += 1;
        }
        model.meta.epochs_seen += 1;
        epoch_callback(epoch, model)?;
    }
    Ok(())
}
