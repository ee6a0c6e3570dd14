//! Central-difference validation of the analytic L1 gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::PairedSample;
use crate::nn::ops::l1_loss;
use crate::sr_model::checkpoint::ModelCheckpoint;
use crate::sr_model::train::stack_pairs;
use crate::tensor::Tensor;

pub const GRADCHECK_STEP: f64 = 1e-4;
pub const GRADCHECK_SAMPLES: usize = 50;
/// Residuals this close to zero sit on the L1 kink.
pub const KINK_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_deviation: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed an L1 or ReLU kink.
    pub excluded: usize,
}

struct Probe {
    loss: f64,
    residual_signs: Vec<i8>,
    relu_pattern: Vec<bool>,
}

fn probe(model: &ModelCheckpoint<f64>, lr: &Tensor<f64>, hr: &Tensor<f64>) -> Probe {
    let (pred, cache) = model.net.forward_train(lr);
    let (loss, _) = l1_loss(&pred, hr);
    let residual_signs = pred
        .data
        .iter()
        .zip(&hr.data)
        .map(|(p, t)| {
            let r = p - t;
            if r.abs() < KINK_RESIDUAL {
                0
            } else if r > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    Probe { loss, residual_signs, relu_pattern: cache.relu_pattern() }
}

/// Compares analytic gradients of the batch L1 loss with central finite
/// differences on [`GRADCHECK_SAMPLES`] seeded parameter coordinates.
pub fn l1_gradient_check(model: &ModelCheckpoint<f64>, batch: &[PairedSample<f64>], seed: u64) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (lr, hr) = stack_pairs(batch);
    let (pred, cache) = model.net.forward_train(&lr);
    let (_, dy) = l1_loss(&pred, &hr);
    let mut grads = model.net.zeros_like();
    let all = vec![true; model.net.layers().len()];
    model.net.backward(&cache, &dy, &mut grads, &all);
    let analytic = grads.params().into_iter().map(|g| g.to_vec()).collect::<Vec<_>>();
    let base = probe(model, &lr, &hr);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_params = analytic.len();
    let mut report = GradCheckReport { max_rel_deviation: 0.0, checked: 0, excluded: 0 };
    let mut perturbed = model.clone();
    for _ in 0..GRADCHECK_SAMPLES {
        let p = rng.random_range(0..n_params);
        let j = rng.random_range(0..analytic[p].len());
        let original = model.net.params()[p][j];
        perturbed.net.params_mut()[p][j] = original + GRADCHECK_STEP;
        let plus = probe(&perturbed, &lr, &hr);
        perturbed.net.params_mut()[p][j] = original - GRADCHECK_STEP;
        let minus = probe(&perturbed, &lr, &hr);
        perturbed.net.params_mut()[p][j] = original;

        let kink = base.residual_signs.contains(&0)
            || plus.residual_signs != minus.residual_signs
            || plus.relu_pattern != minus.relu_pattern
            || plus.relu_pattern != base.relu_pattern;
        if kink {
            report.excluded += 1;
            continue;
        }
        let fd = (plus.loss - minus.loss) / (2.0 * GRADCHECK_STEP);
        let an = analytic[p][j];
        let scale = fd.abs().max(an.abs());
        let dev = if scale < 1e-10 { 0.0 } else { (fd - an).abs() / scale };
        report.max_rel_deviation = report.max_rel_deviation.max(dev);
        report.checked += 1;
    }
    Ok(report)
}
