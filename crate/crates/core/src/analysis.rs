//! Filter-correlation study: how fine-tuning moves the last body layer
//! toward a network overfit on the test image itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{psnr, Image, MetricMode, PairedSample};
use crate::nn::Adam;
use crate::scalar::Scalar;
use crate::sr_model::train::{apply_update, stack_pairs};
use crate::sr_model::ModelCheckpoint;
use crate::tensor::Tensor;
use crate::tta::{adapt_with, mean_std, AdaptContext, AdaptationConfig, AdaptationTrace, FreezeRule, SetKind};

/// Pearson correlation of two flattened filters.
///
/// Returns 0 when exactly one filter is constant and
/// [`Error::UndefinedCorrelation`] when both are.
pub fn filter_correlation<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let (ca, cb) = (is_constant(a), is_constant(b));
    if ca && cb {
        return Err(Error::UndefinedCorrelation);
    }
    if ca || cb {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let ma = a.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let mb = b.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x.as_f64() - ma, y.as_f64() - mb);
        dot += dx * dy;
        na += dx * dx;
        nb += dy * dy;
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

fn is_constant<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Mean index-matched filter correlation of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCorrelation {
    pub mean: f64,
    pub n_filters: usize,
    /// Pairs skipped because a filter was constant.
    pub n_excluded: usize,
}

/// Averages [`filter_correlation`] over filter `k` of `layer` in both models.
pub fn layer_correlation<T: Scalar>(a: &ModelCheckpoint<T>, b: &ModelCheckpoint<T>, layer: &str) -> Result<LayerCorrelation> {
    if a.arch() != b.arch() {
        return Err(Error::ArchitectureMismatch(format!("{:?} vs {:?}", a.arch(), b.arch())));
    }
    let la = a.net.layer(layer).ok_or_else(|| Error::UnknownLayer(layer.into()))?;
    let lb = b.net.layer(layer).ok_or_else(|| Error::UnknownLayer(layer.into()))?;
    let mut sum = 0.0;
    let mut used = 0;
    let mut excluded = 0;
    for k in 0..la.out_ch {
        let (fa, fb) = (la.filter(k), lb.filter(k));
        if is_constant(fa) || is_constant(fb) {
            excluded += 1;
            continue;
        }
        sum += filter_correlation(fa, fb)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(LayerCorrelation { mean: sum / used as f64, n_filters: used, n_excluded: excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GPerCriterion {
    pub target_psnr: f64,
    pub max_steps: usize,
    pub lr: f64,
    pub metric: MetricMode,
}

impl Default for GPerCriterion {
    fn default() -> Self {
        Self { target_psnr: 45.0, max_steps: 2000, lr: 1e-3, metric: MetricMode::Rgb }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GPerStop {
    TargetReached,
    StepBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPerOutcome {
    pub steps: usize,
    pub stop: GPerStop,
    pub initial_psnr: f64,
    pub final_psnr: f64,
}

fn clamped_psnr<T: Scalar>(pred: &Tensor<T>, gt: &Image<T>, metric: MetricMode) -> Result<f64> {
    psnr(&Image::from_tensor_clamped(pred, 0)?, gt, metric)
}

/// Fine-tunes a copy of `baseline` on the full single pair, under the
/// upsampling freeze, until the prediction reaches `target_psnr` or the step
/// budget runs out.
pub fn build_g_per<T: Scalar>(baseline: &ModelCheckpoint<T>, pair: &PairedSample<T>, criterion: &GPerCriterion) -> Result<(ModelCheckpoint<T>, GPerOutcome)> {
    let mut model = baseline.clone();
    model.freeze_upsampling();
    let (lr_b, hr_b) = stack_pairs(std::slice::from_ref(pair));
    let sizes: Vec<usize> = model.net.params().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(&sizes);
    let mut initial_psnr = None;
    let mut steps = 0;
    loop {
        let (pred, cache) = model.net.forward_train(&lr_b);
        let current = clamped_psnr(&pred, &pair.hr, criterion.metric)?;
        let initial = *initial_psnr.get_or_insert(current);
        let stop = if current >= criterion.target_psnr {
            Some(GPerStop::TargetReached)
        } else if steps >= criterion.max_steps {
            Some(GPerStop::StepBudget)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok((model, GPerOutcome { steps, stop, initial_psnr: initial, final_psnr: current }));
        }
        apply_update(&mut model, &mut adam, &pred, &cache, &hr_b, criterion.lr, steps)?;
        steps += 1;
    }
}

/// Correlation curves of one test image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageCorrelation {
    pub id: String,
    pub g_per: GPerOutcome,
    /// `layer_correlation(baseline, G_per)`.
    pub baseline: f64,
    /// Per epoch, `layer_correlation(G', G_per)`.
    pub matched: Vec<f64>,
    /// Per epoch, `layer_correlation(G_rand, G_per)`.
    pub random: Vec<f64>,
    pub n_excluded: usize,
    /// Fidelity traces of the two runs, measured against the pair's HR image.
    pub matched_trace: AdaptationTrace,
    pub random_trace: AdaptationTrace,
}

/// Builds G_per once, then tracks the matched and random fine-tuning runs
/// against it at every epoch.
pub fn correlation_curve<T: Scalar>(
    baseline: &ModelCheckpoint<T>,
    pair: &PairedSample<T>,
    ctx: &AdaptContext<'_, T>,
    cfg: &AdaptationConfig,
    criterion: &GPerCriterion,
) -> Result<ImageCorrelation> {
    if cfg.freeze != FreezeRule::Upsampling {
        return Err(Error::InvalidConfig("the correlation study requires the upsampling freeze".into()));
    }
    let layer = baseline.arch().body_output_layer();
    let (g_per, outcome) = build_g_per(baseline, pair, criterion)?;
    let base = layer_correlation(baseline, &g_per, &layer)?;
    let mut n_excluded = base.n_excluded;
    let mut run = |kind| -> Result<(Vec<f64>, AdaptationTrace)> {
        let mut curve = Vec::with_capacity(cfg.epochs + 1);
        let a = adapt_with(baseline, &pair.lr, ctx, cfg, Some(&pair.hr), kind, |_, m| {
            let c = layer_correlation(m, &g_per, &layer)?;
            n_excluded += c.n_excluded;
            curve.push(c.mean);
            Ok(())
        })?;
        Ok((curve, a.trace))
    };
    let (matched, matched_trace) = run(SetKind::Matched)?;
    let (random, random_trace) = run(SetKind::Random)?;
    Ok(ImageCorrelation { id: pair.id.clone(), g_per: outcome, baseline: base.mean, matched, random, n_excluded, matched_trace, random_trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub epoch: usize,
    pub mean_rho_matched: f64,
    pub mean_rho_random: f64,
    pub baseline_rho: f64,
    pub n_images: usize,
    pub n_excluded_filters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub layer: String,
    /// How the correlation index is computed.
    pub correlation: String,
    pub criterion: GPerCriterion,
    pub rows: Vec<CorrelationRow>,
    pub per_image: Vec<ImageCorrelation>,
}

impl CorrelationReport {
    /// Averages per-image curves epoch by epoch.
    pub fn aggregate(layer: &str, criterion: &GPerCriterion, per_image: Vec<ImageCorrelation>) -> Self {
        let epochs = per_image.iter().map(|c| c.matched.len().min(c.random.len())).min().unwrap_or(0);
        let baseline_rho = mean_std(&per_image.iter().map(|c| c.baseline).collect::<Vec<_>>()).0;
        let n_excluded_filters = per_image.iter().map(|c| c.n_excluded).sum();
        let rows = (0..epochs)
            .map(|e| CorrelationRow {
                epoch: e,
                mean_rho_matched: mean_std(&per_image.iter().map(|c| c.matched[e]).collect::<Vec<_>>()).0,
                mean_rho_random: mean_std(&per_image.iter().map(|c| c.random[e]).collect::<Vec<_>>()).0,
                baseline_rho,
                n_images: per_image.len(),
                n_excluded_filters,
            })
            .collect();
        Self {
            layer: layer.into(),
            correlation: "pearson over flattened index-matched filters".into(),
            criterion: criterion.clone(),
            rows,
            per_image,
        }
    }

    /// `epoch,mean_rho_matched,mean_rho_random,baseline_rho,n_images,n_excluded_filters`
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}
