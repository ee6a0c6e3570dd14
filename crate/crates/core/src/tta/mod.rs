//! Test-time adaptation of a baseline SR model to one input image.

mod config;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_index::{
    channel_scores_with, select_adaptation_set, top_m_filters, ActivationIndex, FeatureExtractor, FilterSelection, HrSource,
};
use crate::imaging::{make_pair, psnr, ssim, DegradationSpec, Image, MetricMode, PairedSample};
use crate::scalar::Scalar;
use crate::sr_model::{fine_tune, ModelCheckpoint};

pub use config::{AdaptationConfig, CropSpace, FreezeRule};

/// Everything `adapt` reads besides the model and the input.
pub struct AdaptContext<'a, T> {
    pub extractor: &'a FeatureExtractor<T>,
    pub index: &'a ActivationIndex,
    pub source: &'a dyn HrSource<T>,
    pub spec: DegradationSpec,
    pub metric: MetricMode,
}

impl<T> Clone for AdaptContext<'_, T> {
    fn clone(&self) -> Self {
        Self { extractor: self.extractor, index: self.index, source: self.source, spec: self.spec, metric: self.metric }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// Top images of the most activated filters.
    Matched,
    /// Uniform random corpus sample (control).
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Against ground truth, when it was supplied.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationTrace {
    pub set_kind: SetKind,
    pub selection: Option<FilterSelection>,
    pub selected_image_ids: Vec<String>,
    pub baseline_fingerprint: String,
    pub config: AdaptationConfig,
    /// `epochs + 1` entries; epoch 0 is the baseline.
    pub records: Vec<EpochRecord>,
}

pub struct Adaptation<T> {
    pub model: ModelCheckpoint<T>,
    pub initial_sr: Image<T>,
    pub activated_sr: Image<T>,
    pub trace: AdaptationTrace,
}

/// Most activated filters of `sr` and their adaptation image set.
pub fn select_for_prediction<T: Scalar>(
    extractor: &FeatureExtractor<T>,
    index: &ActivationIndex,
    sr: &Image<T>,
    m: usize,
    k: usize,
) -> Result<(FilterSelection, Vec<String>)> {
    index.check_extractor(&extractor.fingerprint())?;
    let scores = channel_scores_with(extractor, sr, index.aggregation)?;
    let selection = top_m_filters(&scores, m)?;
    let ids = select_adaptation_set(index, &selection, k)?;
    Ok((selection, ids))
}

/// `n` distinct ids drawn uniformly without replacement.
pub fn random_set(ids: &[String], n: usize, seed: u64) -> Result<Vec<String>> {
    if ids.len() < n {
        return Err(Error::CorpusTooSmall { required: n, available: ids.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C0A7_7201);
    let mut sorted = ids.to_vec();
    sorted.sort();
    Ok(sorted.choose_multiple(&mut rng, n).cloned().collect())
}

fn check_compatible<T: Scalar>(baseline: &ModelCheckpoint<T>, ctx: &AdaptContext<'_, T>) -> Result<()> {
    ctx.index.check_extractor(&ctx.extractor.fingerprint())?;
    if baseline.scale() != ctx.spec.scale {
        return Err(Error::ArchitectureMismatch(format!("model scale {} but degradation scale {}", baseline.scale(), ctx.spec.scale)));
    }
    Ok(())
}

/// Runs the adaptation with either image set, calling `on_epoch` with the
/// fine-tuned model at every epoch (0 included).
pub fn adapt_with<T, F>(
    baseline: &ModelCheckpoint<T>,
    lr_img: &Image<T>,
    ctx: &AdaptContext<'_, T>,
    cfg: &AdaptationConfig,
    gt: Option<&Image<T>>,
    kind: SetKind,
    mut on_epoch: F,
) -> Result<Adaptation<T>>
where
    T: Scalar,
    F: FnMut(usize, &ModelCheckpoint<T>) -> Result<()>,
{
    cfg.validate()?;
    check_compatible(baseline, ctx)?;
    let initial_sr = baseline.predict(lr_img)?;
    let (selection, ids) = match kind {
        SetKind::Matched => {
            let (sel, ids) = select_for_prediction(ctx.extractor, ctx.index, &initial_sr, cfg.m, cfg.k)?;
            (Some(sel), ids)
        }
        SetKind::Random => (None, random_set(&ctx.source.ids(), cfg.m * cfg.k, cfg.seed)?),
    };
    let pairs = ids
        .iter()
        .map(|id| make_pair(ctx.source.load(id)?, &ctx.spec, id.clone()))
        .collect::<Result<Vec<PairedSample<T>>>>()?;

    let mut model = baseline.clone();
    if cfg.freeze == FreezeRule::Upsampling {
        model.freeze_upsampling();
    }
    let mut records = Vec::with_capacity(cfg.epochs + 1);
    fine_tune(&mut model, &pairs, cfg, |epoch, m| {
        let (p, s) = match gt {
            Some(gt) => {
                let sr = if epoch == 0 { initial_sr.clone() } else { m.predict(lr_img)? };
                (Some(psnr(&sr, gt, ctx.metric)?), Some(ssim(&sr, gt, ctx.metric)?))
            }
            None => (None, None),
        };
        records.push(EpochRecord { epoch, psnr: p, ssim: s, fingerprint: m.fingerprint() });
        on_epoch(epoch, m)
    })?;
    let activated_sr = model.predict(lr_img)?;
    let trace = AdaptationTrace {
        set_kind: kind,
        selection,
        selected_image_ids: ids,
        baseline_fingerprint: baseline.fingerprint(),
        config: cfg.clone(),
        records,
    };
    Ok(Adaptation { model, initial_sr, activated_sr, trace })
}

/// Fine-tunes a copy of `baseline` on the images matched to its own
/// prediction for `lr_img`, then predicts again.
pub fn adapt<T: Scalar>(
    baseline: &ModelCheckpoint<T>,
    lr_img: &Image<T>,
    ctx: &AdaptContext<'_, T>,
    cfg: &AdaptationConfig,
    gt: Option<&Image<T>>,
) -> Result<Adaptation<T>> {
    adapt_with(baseline, lr_img, ctx, cfg, gt, SetKind::Matched, |_, _| Ok(()))
}

/// Same as [`adapt`] with a seeded uniform random image set.
pub fn ablation_random_set<T: Scalar>(
    baseline: &ModelCheckpoint<T>,
    lr_img: &Image<T>,
    ctx: &AdaptContext<'_, T>,
    cfg: &AdaptationConfig,
    gt: Option<&Image<T>>,
) -> Result<Adaptation<T>> {
    adapt_with(baseline, lr_img, ctx, cfg, gt, SetKind::Random, |_, _| Ok(()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub epoch: usize,
    pub n_images: usize,
    pub mean_delta_psnr: f64,
    pub std_delta_psnr: f64,
    pub mean_delta_ssim: f64,
    pub std_delta_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub traces: Vec<(String, AdaptationTrace)>,
    pub failures: Vec<ImageFailure>,
    pub summary: Vec<SummaryRow>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Per-epoch change against epoch 0, across traces.
pub fn summarize(traces: &[AdaptationTrace]) -> Vec<SummaryRow> {
    let epochs = traces.iter().map(|t| t.records.len()).min().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let delta = |f: fn(&EpochRecord) -> Option<f64>| -> Vec<f64> {
                traces.iter().filter_map(|t| Some(f(&t.records[e])? - f(&t.records[0])?)).collect()
            };
            let dp = delta(|r| r.psnr);
            let ds = delta(|r| r.ssim);
            let (mean_delta_psnr, std_delta_psnr) = mean_std(&dp);
            let (mean_delta_ssim, std_delta_ssim) = mean_std(&ds);
            SummaryRow { epoch: traces[0].records[e].epoch, n_images: dp.len(), mean_delta_psnr, std_delta_psnr, mean_delta_ssim, std_delta_ssim }
        })
        .collect()
}

/// Adapts every test pair independently from the same baseline. Failures
/// are collected instead of aborting the batch.
pub fn adapt_batch<T: Scalar>(
    baseline: &ModelCheckpoint<T>,
    testset: &[PairedSample<T>],
    ctx: &AdaptContext<'_, T>,
    cfg: &AdaptationConfig,
) -> Result<BatchResult> {
    if testset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let outcomes: Vec<_> = testset
        .par_iter()
        .map(|pair| (pair.id.clone(), adapt(baseline, &pair.lr, ctx, cfg, Some(&pair.hr)).map(|a| a.trace)))
        .collect();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(t) => traces.push((id, t)),
            Err(e) => {
                log::warn!("adaptation failed for {id}: {e}");
                failures.push(ImageFailure { id, error: e.to_string() });
            }
        }
    }
    let only: Vec<AdaptationTrace> = traces.iter().map(|(_, t)| t.clone()).collect();
    Ok(BatchResult { summary: summarize(&only), traces, failures })
}

/// `epoch,n_images,mean_delta_psnr,std_delta_psnr,mean_delta_ssim,std_delta_ssim`
pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_set_is_seeded_and_distinct() {
        let ids: Vec<String> = (0..30).map(|i| format!("img{i:02}")).collect();
        let a = random_set(&ids, 10, 4).unwrap();
        assert_eq!(a, random_set(&ids, 10, 4).unwrap());
        let mut shuffled = ids.clone();
        shuffled.reverse();
        assert_eq!(a, random_set(&shuffled, 10, 4).unwrap());
        assert_ne!(a, random_set(&ids, 10, 5).unwrap());
        let mut d = a.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 10);
        assert!(matches!(random_set(&ids[..5], 10, 0), Err(Error::CorpusTooSmall { required: 10, available: 5 })));
    }

    #[test]
    fn summary_is_mean_of_deltas() {
        let rec = |epoch, p: f64, s: f64| EpochRecord { epoch, psnr: Some(p), ssim: Some(s), fingerprint: String::new() };
        let trace = |r: Vec<EpochRecord>| AdaptationTrace {
            set_kind: SetKind::Matched,
            selection: None,
            selected_image_ids: vec![],
            baseline_fingerprint: String::new(),
            config: AdaptationConfig::default(),
            records: r,
        };
        let rows = summarize(&[trace(vec![rec(0, 30.0, 0.9), rec(1, 30.5, 0.91)]), trace(vec![rec(0, 20.0, 0.5), rec(1, 19.5, 0.47)])]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_delta_psnr, 0.0);
        assert_eq!(rows[1].mean_delta_psnr, 0.0);
        assert!((rows[1].std_delta_psnr - 0.5f64.hypot(0.5)).abs() < 1e-12);
        assert!((rows[1].mean_delta_ssim - (-0.01)).abs() < 1e-12);
        let csv = String::from_utf8(summary_csv(&rows).unwrap()).unwrap();
        assert!(csv.starts_with("epoch,n_images,mean_delta_psnr,std_delta_psnr,mean_delta_ssim,std_delta_ssim\n"));
    }

    #[test]
    fn mean_std_edge_cases() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        assert!(mean_std(&[]).0.is_nan());
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
