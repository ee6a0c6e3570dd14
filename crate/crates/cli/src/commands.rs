//! One function per CLI verb. Every artifact embeds the config fingerprint.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use plotters::style::{BLACK, BLUE, RED};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tta_sr::analysis::{correlation_curve, CorrelationReport};
use tta_sr::feature_index::{build_index, train_desk_extractor, ActivationIndex, BuildOptions, DirectorySource, FeatureExtractor};
use tta_sr::imaging::io::{list_pngs, load_png, relative_id, save_png};
use tta_sr::imaging::{make_pair, modcrop, synth, Image, MetricMode, PairedSample};
use tta_sr::sr_model::{build_model, ModelCheckpoint, Trainer};
use tta_sr::tta::{ablation_random_set, adapt, adapt_batch, summary_csv, AdaptContext, AdaptationTrace, ImageFailure};
use tta_sr::{Error, Result};

use crate::config::RunConfig;
use crate::lock::OutputLock;
use crate::plot::{line_chart_svg, Series};

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::File { path: parent.into(), source: e })?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::File { path: path.into(), source: e })
}

fn json_bytes<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes<S: Serialize>(rows: &[S]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::File { path: dir.into(), source: std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found") })
    }
}

/// HR images under `dir`, cropped to multiples of `scale`, keyed by relative path.
fn load_hr_dir(dir: &Path, scale: usize) -> Result<Vec<(String, Image<f32>)>> {
    require_dir(dir)?;
    let files = list_pngs(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDataset);
    }
    files.iter().map(|p| Ok((relative_id(dir, p), modcrop(&load_png(p)?, scale)?))).collect()
}

fn load_pairs(cfg: &RunConfig, dir: &Path) -> Result<Vec<PairedSample<f32>>> {
    load_hr_dir(dir, cfg.degradation.scale)?
        .into_iter()
        .map(|(id, hr)| make_pair(hr, &cfg.degradation, id))
        .collect()
}

/// Writes a procedural labeled corpus as `<dir>/<family>/<id>.png`.
pub fn cmd_make_corpus(dir: &Path, prefix: &str, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let images = synth::corpus::<f32>(prefix, count, size, size, seed)?;
    let mut written = Vec::with_capacity(images.len());
    for s in images {
        let path = dir.join(format!("{:?}", s.family).to_lowercase()).join(format!("{}.png", s.id));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::File { path: parent.into(), source: e })?;
        }
        save_png(&s.image, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct ExtractorEpochRow {
    epoch: usize,
    loss: f64,
    accuracy: f64,
    config_fingerprint: String,
}

/// Trains the desk extractor on the corpus; the first directory level of
/// each image path is its class.
pub fn cmd_train_extractor(cfg: &RunConfig) -> Result<PathBuf> {
    let _lock = OutputLock::acquire(&cfg.output_dir())?;
    let corpus = load_hr_dir(&cfg.corpus_dir(), 1)?;
    let class_of = |id: &str| id.split_once('/').map(|(c, _)| c.to_string());
    let classes: BTreeSet<String> = corpus.iter().filter_map(|(id, _)| class_of(id)).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidConfig("extractor training needs at least two class subdirectories in the corpus".into()));
    }
    let classes: Vec<String> = classes.into_iter().collect();
    let data: Vec<(Image<f32>, usize)> = corpus
        .into_iter()
        .filter_map(|(id, img)| Some((img, classes.binary_search(&class_of(&id)?).ok()?)))
        .collect();
    let (extractor, history) = train_desk_extractor(&data, &cfg.extractor.training)?;
    let extractor = extractor.with_tap(&cfg.extractor.tap)?;
    let path = cfg.extractor_path();
    write_file(&path, &extractor.to_bytes()?)?;
    let fp = cfg.fingerprint();
    let rows: Vec<_> = history
        .iter()
        .map(|h| ExtractorEpochRow { epoch: h.epoch, loss: h.loss, accuracy: h.accuracy, config_fingerprint: fp.clone() })
        .collect();
    write_file(&cfg.output_dir().join("extractor_training.csv"), &csv_bytes(&rows)?)?;
    Ok(path)
}

fn load_extractor(cfg: &RunConfig) -> Result<FeatureExtractor<f32>> {
    FeatureExtractor::load(cfg.extractor_path(), Some(&cfg.extractor.tap))
}

pub fn cmd_build_index(cfg: &RunConfig) -> Result<PathBuf> {
    let _lock = OutputLock::acquire(&cfg.output_dir())?;
    let corpus = cfg.corpus_dir();
    require_dir(&corpus)?;
    let extractor = load_extractor(cfg)?;
    let path = cfg.index_path();
    let opts = BuildOptions {
        k_store: cfg.extractor.k_store,
        aggregation: cfg.extractor.aggregation,
        cache: Some(path.with_extension("scores.json")),
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::File { path: parent.into(), source: e })?;
    }
    let mut index = build_index(&extractor, &corpus, &opts)?;
    index.config_fingerprint = Some(cfg.fingerprint());
    write_file(&path, &index.to_json()?)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct LossRow {
    epoch: usize,
    lr: f64,
    train_loss: Option<f64>,
    heldin_loss: f64,
}

/// Trains the baseline, checkpointing model and optimizer after every epoch.
/// With `resume`, continues from the saved pair bit-identically.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<PathBuf> {
    let _lock = OutputLock::acquire(&cfg.output_dir())?;
    let pairs = load_pairs(cfg, &cfg.corpus_dir())?;
    let path = cfg.baseline_path();
    let state_path = path.with_extension("trainer.safetensors");
    let (mut model, mut trainer) = if resume && path.exists() && state_path.exists() {
        let model = ModelCheckpoint::<f32>::load(&path)?;
        if model.arch() != &cfg.arch() {
            return Err(Error::ArchitectureMismatch("checkpoint does not match the configured model".into()));
        }
        let mut trainer = Trainer::<f32>::load_state(&state_path)?;
        trainer.schedule.epochs = cfg.train.epochs;
        (model, trainer)
    } else {
        let model = build_model::<f32>(cfg.arch(), cfg.seed)?;
        let trainer = Trainer::new(&model, cfg.train.clone());
        (model, trainer)
    };
    model.meta.seed = cfg.seed;
    model.meta.config_fingerprint = Some(cfg.fingerprint());
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::File { path: parent.into(), source: e })?;
    }
    while trainer.next_epoch < trainer.schedule.epochs {
        trainer.run(&mut model, &pairs, Some(1))?;
        model.save(&path)?;
        trainer.save_state(&state_path)?;
    }
    if !path.exists() {
        model.save(&path)?;
    }
    let rows: Vec<LossRow> = model
        .meta
        .loss_curve
        .iter()
        .map(|l| LossRow { epoch: l.epoch, lr: l.lr, train_loss: l.train_loss, heldin_loss: l.heldin_loss })
        .collect();
    write_file(&cfg.output_dir().join("train_loss.csv"), &csv_bytes(&rows)?)?;
    Ok(path)
}

/// Model, extractor and index, with fingerprints checked against each other.
struct Inputs {
    baseline: ModelCheckpoint<f32>,
    extractor: FeatureExtractor<f32>,
    index: ActivationIndex,
    source: DirectorySource,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let baseline = ModelCheckpoint::<f32>::load(cfg.baseline_path())?;
    let extractor = load_extractor(cfg)?;
    let index = ActivationIndex::load(cfg.index_path())?;
    index.check_extractor(&extractor.fingerprint())?;
    if let (Some(a), Some(b)) = (&baseline.meta.config_fingerprint, &index.config_fingerprint) {
        if a != b {
            return Err(Error::FingerprintMismatch { expected: b.clone(), found: a.clone() });
        }
    }
    if baseline.scale() != cfg.degradation.scale {
        return Err(Error::ArchitectureMismatch(format!("baseline scale {} vs configured {}", baseline.scale(), cfg.degradation.scale)));
    }
    let source = DirectorySource::new(cfg.corpus_dir(), &index);
    Ok(Inputs { baseline, extractor, index, source })
}

fn context<'a>(cfg: &RunConfig, inputs: &'a Inputs) -> AdaptContext<'a, f32> {
    AdaptContext { extractor: &inputs.extractor, index: &inputs.index, source: &inputs.source, spec: cfg.degradation, metric: cfg.metric }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub config_fingerprint: String,
    pub input: String,
    pub trace: AdaptationTrace,
}

#[derive(Debug, Clone)]
pub struct AdaptOutputs {
    pub initial: PathBuf,
    pub activated: PathBuf,
    pub trace: PathBuf,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Adapts the baseline to one LR image and writes both predictions and the trace.
pub fn cmd_adapt(cfg: &RunConfig, lr_image: &Path, gt: Option<&Path>, random_set: bool) -> Result<AdaptOutputs> {
    let _lock = OutputLock::acquire(&cfg.output_dir())?;
    let inputs = load_inputs(cfg)?;
    let ctx = context(cfg, &inputs);
    let lr = load_png::<f32>(lr_image)?;
    let gt = gt.map(|p| load_png::<f32>(p).and_then(|g| modcrop(&g, cfg.degradation.scale))).transpose()?;
    let run = if random_set { ablation_random_set } else { adapt };
    let result = run(&inputs.baseline, &lr, &ctx, &cfg.adapt, gt.as_ref())?;
    let stem = lr_image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
    let dir = cfg.output_dir().join("adapt").join(if random_set { format!("{stem}_random") } else { stem });
    let out = AdaptOutputs { initial: dir.join("initial.png"), activated: dir.join("activated.png"), trace: dir.join("trace.json") };
    std::fs::create_dir_all(&dir).map_err(|e| Error::File { path: dir.clone(), source: e })?;
    save_png(&result.initial_sr, &out.initial)?;
    save_png(&result.activated_sr, &out.activated)?;
    let file = TraceFile { config_fingerprint: cfg.fingerprint(), input: file_name(lr_image), trace: result.trace };
    write_file(&out.trace, &json_bytes(&file)?)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub id: String,
    pub baseline_psnr: f64,
    pub activated_psnr: f64,
    pub baseline_ssim: f64,
    pub activated_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_fingerprint: String,
    pub metric: MetricMode,
    pub epochs: usize,
    pub per_image: Vec<ImageEval>,
    /// Arithmetic means of the per-image values.
    pub aggregate: Option<ImageEval>,
    pub failures: Vec<ImageFailure>,
}

impl EvalReport {
    fn aggregate(per_image: &[ImageEval]) -> Option<ImageEval> {
        if per_image.is_empty() {
            return None;
        }
        let n = per_image.len() as f64;
        let mean = |f: fn(&ImageEval) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        Some(ImageEval {
            id: "mean".into(),
            baseline_psnr: mean(|e| e.baseline_psnr),
            activated_psnr: mean(|e| e.activated_psnr),
            baseline_ssim: mean(|e| e.baseline_ssim),
            activated_ssim: mean(|e| e.activated_ssim),
        })
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutputs {
    pub report: PathBuf,
    pub per_image_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub psnr_plot: PathBuf,
    pub ssim_plot: PathBuf,
}

/// Adapts every test image and reports baseline vs activated fidelity.
pub fn cmd_evaluate(cfg: &RunConfig, testset_dir: &Path) -> Result<(EvalReport, EvalOutputs)> {
    let _lock = OutputLock::acquire(&cfg.output_dir())?;
    let inputs = load_inputs(cfg)?;
    let ctx = context(cfg, &inputs);
    let testset = load_pairs(cfg, testset_dir)?;
    let batch = adapt_batch(&inputs.baseline, &testset, &ctx, &cfg.adapt)?;
    let per_image: Vec<ImageEval> = batch
        .traces
        .iter()
        .filter_map(|(id, t)| {
            let (first, last) = (t.records.first()?, t.records.last()?);
            Some(ImageEval {
                id: id.clone(),
                baseline_psnr: first.psnr?,
                activated_psnr: last.psnr?,
                baseline_ssim: first.ssim?,
                activated_ssim: last.ssim?,
            })
        })
        .collect();
    let report = EvalReport {
        config_fingerprint: cfg.fingerprint(),
        metric: cfg.metric,
        epochs: cfg.adapt.epochs,
        aggregate: EvalReport::aggregate(&per_image),
        per_image,
        failures: batch.failures.clone(),
    };
    let dir = cfg.output_dir().join("evaluate");
    let out = EvalOutputs {
        report: dir.join("eval_report.json"),
        per_image_csv: dir.join("per_image.csv"),
        summary_csv: dir.join("summary.csv"),
        psnr_plot: dir.join("delta_psnr.svg"),
        ssim_plot: dir.join("delta_ssim.svg"),
    };
    write_file(&out.report, &json_bytes(&report)?)?;
    write_file(&out.per_image_csv, &csv_bytes(&report.per_image)?)?;
    write_file(&out.summary_csv, &summary_csv(&batch.summary)?)?;
    let curve = |f: fn(&tta_sr::tta::SummaryRow) -> f64| batch.summary.iter().map(|r| (r.epoch as f64, f(r))).collect::<Vec<_>>();
    let psnr_svg = line_chart_svg(
        "Mean PSNR change during adaptation",
        "epoch",
        "delta PSNR (dB)",
        &[Series { label: "mean delta PSNR", points: curve(|r| r.mean_delta_psnr), color: RED, dashed: false }],
    )?;
    let ssim_svg = line_chart_svg(
        "Mean SSIM change during adaptation",
        "epoch",
        "delta SSIM",
        &[Series { label: "mean delta SSIM", points: curve(|r| r.mean_delta_ssim), color: BLUE, dashed: false }],
    )?;
    write_file(&out.psnr_plot, psnr_svg.as_bytes())?;
    write_file(&out.ssim_plot, ssim_svg.as_bytes())?;
    Ok((report, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisFile {
    pub config_fingerprint: String,
    pub report: CorrelationReport,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutputs {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub plot: PathBuf,
}

/// Correlation of matched and random fine-tuning to the per-image ideal network.
pub fn cmd_analyze_filters(cfg: &RunConfig, testset_dir: &Path) -> Result<(CorrelationReport, AnalysisOutputs)> {
    let _lock = OutputLock::acquire(&cfg.output_dir())?;
    let inputs = load_inputs(cfg)?;
    let ctx = context(cfg, &inputs);
    let testset = load_pairs(cfg, testset_dir)?;
    let per_image = testset
        .par_iter()
        .map(|pair| correlation_curve(&inputs.baseline, pair, &ctx, &cfg.adapt, &cfg.analysis))
        .collect::<Result<Vec<_>>>()?;
    let layer = inputs.baseline.arch().body_output_layer();
    let report = CorrelationReport::aggregate(&layer, &cfg.analysis, per_image);
    let dir = cfg.output_dir().join("analysis");
    let out = AnalysisOutputs { csv: dir.join("correlation.csv"), json: dir.join("correlation.json"), plot: dir.join("correlation.svg") };
    write_file(&out.csv, &report.to_csv()?)?;
    write_file(&out.json, &json_bytes(&AnalysisFile { config_fingerprint: cfg.fingerprint(), report: report.clone() })?)?;
    let pts = |f: fn(&tta_sr::analysis::CorrelationRow) -> f64| report.rows.iter().map(|r| (r.epoch as f64, f(r))).collect::<Vec<_>>();
    let svg = line_chart_svg(
        &format!("Filter correlation to G_per ({layer})"),
        "epoch",
        "mean correlation",
        &[
            Series { label: "G' (matched set)", points: pts(|r| r.mean_rho_matched), color: RED, dashed: false },
            Series { label: "G_rand (random set)", points: pts(|r| r.mean_rho_random), color: BLUE, dashed: false },
            Series { label: "baseline", points: pts(|r| r.baseline_rho), color: BLACK, dashed: true },
        ],
    )?;
    write_file(&out.plot, svg.as_bytes())?;
    Ok((report, out))
}
