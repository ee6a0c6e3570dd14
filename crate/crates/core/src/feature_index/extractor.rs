//! Convolutional classification backbone tapped at an intermediate layer.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::{self, NamedTensor};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::nn::ops::{max_pool2, max_pool2_backward, relu_backward_inplace, relu_inplace, softmax_cross_entropy};
use crate::nn::{Adam, Conv2d};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const EXTRACTOR_FORMAT: &str = "tta-sr-extractor";
pub const EXTRACTOR_VERSION: u32 = 1;
pub const DEFAULT_TAP: &str = "conv3";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpSpec {
    Conv { in_ch: usize, out_ch: usize, kernel: usize },
    Relu,
    MaxPool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Relu,
    MaxPool,
}

impl<T: Scalar> Layer<T> {
    fn spec(&self) -> OpSpec {
        match self {
            Layer::Conv(c) => OpSpec::Conv { in_ch: c.in_ch, out_ch: c.out_ch, kernel: c.kernel },
            Layer::Relu => OpSpec::Relu,
            Layer::MaxPool => OpSpec::MaxPool,
        }
    }
}

/// Per-channel normalization applied before the first convolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Preprocess {
    /// ImageNet statistics.
    fn default() -> Self {
        Self { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    /// Small classifier trained from scratch.
    Desk,
    /// Published VGG19 `features.N` weights.
    Vgg19,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor<T> {
    pub kind: ExtractorKind,
    pub features: Vec<Layer<T>>,
    /// Tap name to the index of the ReLU whose output is scored.
    pub taps: BTreeMap<String, usize>,
    pub tap: String,
    pub preprocess: Preprocess,
    /// 1x1 convolution applied to globally pooled features (desk only).
    pub classifier: Option<Conv2d<T>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ExtractorKind,
    ops: Vec<OpSpec>,
    taps: BTreeMap<String, usize>,
    tap: String,
    preprocess: Preprocess,
}

const VGG19_CFG: [usize; 21] = [64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0];

fn vgg19_ops() -> (Vec<OpSpec>, BTreeMap<String, usize>) {
    let mut ops = Vec::new();
    let mut taps = BTreeMap::new();
    let mut in_ch = 3;
    let mut block = 1;
    let mut first_in_block = true;
    for &c in &VGG19_CFG {
        if c == 0 {
            ops.push(OpSpec::MaxPool);
            block += 1;
            first_in_block = true;
        } else {
            ops.push(OpSpec::Conv { in_ch, out_ch: c, kernel: 3 });
            ops.push(OpSpec::Relu);
            if first_in_block {
                taps.insert(format!("conv{block}"), ops.len() - 1);
                first_in_block = false;
            }
            in_ch = c;
        }
    }
    (ops, taps)
}

fn desk_ops() -> (Vec<OpSpec>, BTreeMap<String, usize>) {
    let ops = vec![
        OpSpec::Conv { in_ch: 3, out_ch: 32, kernel: 3 },
        OpSpec::Relu,
        OpSpec::MaxPool,
        OpSpec::Conv { in_ch: 32, out_ch: 64, kernel: 3 },
        OpSpec::Relu,
        OpSpec::MaxPool,
        OpSpec::Conv { in_ch: 64, out_ch: 256, kernel: 3 },
        OpSpec::Relu,
    ];
    let taps = BTreeMap::from([("conv1".to_string(), 1), ("conv2".to_string(), 4), ("conv3".to_string(), 7)]);
    (ops, taps)
}

fn layers_from_specs<T: Scalar, R: Rng + ?Sized>(ops: &[OpSpec], rng: &mut R) -> Vec<Layer<T>> {
    ops.iter()
        .map(|op| match *op {
            OpSpec::Conv { in_ch, out_ch, kernel } => Layer::Conv(Conv2d::init_uniform(in_ch, out_ch, kernel, rng)),
            OpSpec::Relu => Layer::Relu,
            OpSpec::MaxPool => Layer::MaxPool,
        })
        .collect()
}

/// Activations recorded by [`FeatureExtractor::forward_train`].
struct TrainCache<T> {
    inputs: Vec<Tensor<T>>,
    argmax: Vec<Vec<usize>>,
    pooled: Tensor<T>,
    tap_hw: usize,
}

impl<T: Scalar> FeatureExtractor<T> {
    /// Untrained desk backbone (conv 32, 64, 256 with two 2x2 pools) and a
    /// linear head over `classes`.
    pub fn desk(classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ops, taps) = desk_ops();
        let features = layers_from_specs(&ops, &mut rng);
        let classifier = Some(Conv2d::init_uniform(256, classes, 1, &mut rng));
        Self { kind: ExtractorKind::Desk, features, taps, tap: DEFAULT_TAP.into(), preprocess: Preprocess::default(), classifier }
    }

    /// Selects a different tap; errors on unknown names.
    pub fn with_tap(mut self, tap: &str) -> Result<Self> {
        if !self.taps.contains_key(tap) {
            return Err(Error::UnknownLayer(tap.into()));
        }
        self.tap = tap.into();
        Ok(self)
    }

    fn tap_index(&self) -> usize {
        self.taps[&self.tap]
    }

    /// Channels produced at the active tap.
    pub fn channels(&self) -> usize {
        self.features[..=self.tap_index()]
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Conv(c) => Some(c.out_ch),
                _ => None,
            })
            .unwrap_or(3)
    }

    /// Smallest image side that leaves at least one pixel at the tap.
    pub fn min_size(&self) -> usize {
        let pools = self.features[..=self.tap_index()].iter().filter(|l| matches!(l, Layer::MaxPool)).count();
        1 << pools
    }

    /// SHA-256 over the tap, preprocessing, layer specs and weights up to the tap.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tap.as_bytes());
        h.update(serde_json::to_string(&self.preprocess).unwrap_or_default().as_bytes());
        let mut buf = Vec::new();
        for layer in &self.features[..=self.tap_index()] {
            h.update(serde_json::to_string(&layer.spec()).unwrap_or_default().as_bytes());
            if let Layer::Conv(c) = layer {
                buf.clear();
                for &v in c.weight.iter().chain(&c.bias) {
                    v.write_le(&mut buf);
                }
                h.update(&buf);
            }
        }
        hex::encode(h.finalize())
    }

    fn normalize(&self, img: &Image<T>) -> Tensor<T> {
        let (h, w, c) = img.dims();
        let mut t = Tensor::zeros(1, 3, h, w);
        let hw = h * w;
        for ch in 0..3 {
            let src = if c == 1 { 0 } else { ch };
            let (m, s) = (self.preprocess.mean[ch], self.preprocess.std[ch]);
            for (i, v) in t.data[ch * hw..(ch + 1) * hw].iter_mut().enumerate() {
                *v = T::from_f64_lossy((img.data()[i * c + src].as_f64() - m) / s);
            }
        }
        t
    }

    fn check_size(&self, h: usize, w: usize) -> Result<()> {
        let min = self.min_size();
        if h.min(w) < min {
            return Err(Error::DimensionTooSmall { what: "feature extractor input", actual: h.min(w), min });
        }
        Ok(())
    }

    /// Post-ReLU activations at the tap for one image.
    pub fn tap_features(&self, img: &Image<T>) -> Result<Tensor<T>> {
        self.check_size(img.height(), img.width())?;
        let mut x = self.normalize(img);
        for layer in &self.features[..=self.tap_index()] {
            x = match layer {
                Layer::Conv(c) => c.forward(&x),
                Layer::Relu => {
                    relu_inplace(&mut x);
                    x
                }
                Layer::MaxPool => max_pool2(&x).0,
            };
        }
        Ok(x)
    }

    fn forward_train(&self, x: Tensor<T>) -> (Tensor<T>, TrainCache<T>) {
        let classifier = self.classifier.as_ref().expect("classifier head");
        let mut inputs = Vec::with_capacity(self.features.len());
        let mut argmax = Vec::new();
        let mut x = x;
        for layer in &self.features {
            inputs.push(x.clone());
            x = match layer {
                Layer::Conv(c) => c.forward(&x),
                Layer::Relu => {
                    relu_inplace(&mut x);
                    x
                }
                Layer::MaxPool => {
                    let (out, idx) = max_pool2(&x);
                    argmax.push(idx);
                    out
                }
            };
        }
        let tap_hw = x.plane();
        let mut pooled = Tensor::zeros(x.n, x.c, 1, 1);
        let inv = T::from_f64_lossy(1.0 / tap_hw as f64);
        for (p, chunk) in pooled.data.iter_mut().zip(x.data.chunks(tap_hw)) {
            *p = chunk.iter().copied().sum::<T>() * inv;
        }
        inputs.push(x);
        let logits = classifier.forward(&pooled);
        (logits, TrainCache { inputs, argmax, pooled, tap_hw })
    }

    /// Gradients of all convolutions (features then head) for `dlogits`.
    fn backward(&self, cache: &TrainCache<T>, dlogits: &Tensor<T>, grads: &mut [Conv2d<T>]) {
        let classifier = self.classifier.as_ref().expect("classifier head");
        let n_conv = grads.len() - 1;
        let dpooled = classifier.backward(&cache.pooled, dlogits, Some(&mut grads[n_conv]), true).expect("input grad");
        let last = cache.inputs.last().expect("tap output");
        let inv = T::from_f64_lossy(1.0 / cache.tap_hw as f64);
        let mut dx = Tensor::zeros(last.n, last.c, last.h, last.w);
        for (chunk, &g) in dx.data.chunks_mut(cache.tap_hw).zip(&dpooled.data) {
            chunk.fill(g * inv);
        }
        let mut conv_i = n_conv;
        let mut pool_i = cache.argmax.len();
        for (li, layer) in self.features.iter().enumerate().rev() {
            let input = &cache.inputs[li];
            dx = match layer {
                Layer::Conv(c) => {
                    conv_i -= 1;
                    match c.backward(input, &dx, Some(&mut grads[conv_i]), li > 0) {
                        Some(d) => d,
                        None => break,
                    }
                }
                Layer::Relu => {
                    relu_backward_inplace(&mut dx, &cache.inputs[li + 1]);
                    dx
                }
                Layer::MaxPool => {
                    pool_i -= 1;
                    max_pool2_backward(&dx, &cache.argmax[pool_i], input.shape())
                }
            };
        }
    }

    fn convs(&self) -> Vec<&Conv2d<T>> {
        self.features
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(c),
                _ => None,
            })
            .chain(self.classifier.as_ref())
            .collect()
    }

    fn convs_mut(&mut self) -> Vec<&mut Conv2d<T>> {
        self.features
            .iter_mut()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(c),
                _ => None,
            })
            .chain(self.classifier.as_mut())
            .collect()
    }

    /// Class logits for one image (desk extractors only).
    pub fn classify(&self, img: &Image<T>) -> Result<Vec<T>> {
        if self.classifier.is_none() {
            return Err(Error::InvalidConfig("extractor has no classification head".into()));
        }
        self.check_size(img.height(), img.width())?;
        Ok(self.forward_train(self.normalize(img)).0.data)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind,
            ops: self.features.iter().map(Layer::spec).collect(),
            taps: self.taps.clone(),
            tap: self.tap.clone(),
            preprocess: self.preprocess,
        };
        let mut tensors = BTreeMap::new();
        let mut put = |name: String, c: &Conv2d<T>| {
            tensors.insert(format!("{name}.weight"), NamedTensor { shape: vec![c.out_ch, c.in_ch, c.kernel, c.kernel], values: c.weight.clone() });
            tensors.insert(format!("{name}.bias"), NamedTensor { shape: vec![c.out_ch], values: c.bias.clone() });
        };
        for (i, layer) in self.features.iter().enumerate() {
            if let Layer::Conv(c) = layer {
                put(format!("features.{i}"), c);
            }
        }
        if let Some(c) = &self.classifier {
            put("classifier".into(), c);
        }
        let meta = HashMap::from([
            ("format".to_string(), EXTRACTOR_FORMAT.to_string()),
            ("version".to_string(), EXTRACTOR_VERSION.to_string()),
            ("header".to_string(), serde_json::to_string(&header)?),
        ]);
        archive::encode(&tensors, meta)
    }

    /// Reads a saved extractor, or a bare VGG19 `features.N` weight archive.
    /// `tap` overrides the stored tap.
    pub fn from_bytes(bytes: &[u8], tap: Option<&str>) -> Result<Self> {
        let (mut tensors, meta) = archive::decode::<T>(bytes)?;
        let (kind, ops, taps, stored_tap, preprocess) = match meta.get("format") {
            Some(f) if f == EXTRACTOR_FORMAT => {
                let version: u32 = meta.get("version").and_then(|v| v.parse().ok()).unwrap_or(0);
                if version != EXTRACTOR_VERSION {
                    return Err(Error::Checkpoint(format!("unsupported extractor version {version}")));
                }
                let header: Header = serde_json::from_str(meta.get("header").ok_or_else(|| Error::Checkpoint("extractor header missing".into()))?)?;
                (header.kind, header.ops, header.taps, header.tap, header.preprocess)
            }
            Some(other) => return Err(Error::Checkpoint(format!("not an extractor archive: {other}"))),
            None => {
                let (ops, taps) = vgg19_ops();
                (ExtractorKind::Vgg19, ops, taps, DEFAULT_TAP.to_string(), Preprocess::default())
            }
        };
        let tap = tap.unwrap_or(&stored_tap).to_string();
        let Some(&tap_idx) = taps.get(&tap) else {
            return Err(Error::UnknownLayer(tap));
        };
        // Published weights carry the whole backbone; only layers up to the tap are kept.
        let keep = if kind == ExtractorKind::Vgg19 { tap_idx + 1 } else { ops.len() };
        let head_shape = tensors.get("classifier.weight").map(|t| t.shape.clone());
        let mut take = |name: &str, in_ch: usize, out_ch: usize, kernel: usize| -> Result<Conv2d<T>> {
            let w = tensors.remove(&format!("{name}.weight")).ok_or_else(|| Error::Checkpoint(format!("missing `{name}.weight`")))?;
            let b = tensors.remove(&format!("{name}.bias")).ok_or_else(|| Error::Checkpoint(format!("missing `{name}.bias`")))?;
            if w.shape != [out_ch, in_ch, kernel, kernel] || b.shape != [out_ch] {
                return Err(Error::Checkpoint(format!("`{name}` has shape {:?}", w.shape)));
            }
            Ok(Conv2d { in_ch, out_ch, kernel, weight: w.values, bias: b.values })
        };
        let mut features = Vec::with_capacity(keep);
        for (i, op) in ops[..keep].iter().enumerate() {
            features.push(match *op {
                OpSpec::Conv { in_ch, out_ch, kernel } => Layer::Conv(take(&format!("features.{i}"), in_ch, out_ch, kernel)?),
                OpSpec::Relu => Layer::Relu,
                OpSpec::MaxPool => Layer::MaxPool,
            });
        }
        let classifier = match head_shape {
            Some(shape) if kind == ExtractorKind::Desk && shape.len() == 4 => Some(take("classifier", shape[1], shape[0], shape[2])?),
            _ => None,
        };
        let taps = taps.into_iter().filter(|&(_, i)| i < keep).collect();
        Ok(Self { kind, features, taps, tap, preprocess, classifier })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>, tap: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes, tap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorTraining {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Square training crop side.
    pub crop: usize,
    /// Random horizontal flips.
    pub flip: bool,
    pub seed: u64,
}

impl Default for ExtractorTraining {
    fn default() -> Self {
        Self { epochs: 20, lr: 1e-3, batch_size: 16, crop: 32, flip: true, seed: 0 }
    }
}

/// Per-epoch mean cross-entropy and training accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Trains a desk extractor as a classifier over `(image, label)` pairs.
pub fn train_desk_extractor<T: Scalar>(data: &[(Image<T>, usize)], cfg: &ExtractorTraining) -> Result<(FeatureExtractor<T>, Vec<ExtractorEpoch>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = data.iter().map(|(_, l)| l + 1).max().unwrap_or(1);
    let mut ext = FeatureExtractor::<T>::desk(classes, cfg.seed);
    for (img, _) in data {
        let side = img.height().min(img.width());
        if side < cfg.crop {
            return Err(Error::CropTooLarge { crop: cfg.crop, available: side });
        }
    }
    let sizes: Vec<usize> = ext.convs().iter().flat_map(|c| [c.weight.len(), c.bias.len()]).collect();
    let trainable = vec![true; sizes.len()];
    let mut adam = Adam::new(&sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut batches) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut batch = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (img, label) = &data[i];
                let y0 = rng.random_range(0..=img.height() - cfg.crop);
                let x0 = rng.random_range(0..=img.width() - cfg.crop);
                let mut crop = img.crop(y0, x0, cfg.crop, cfg.crop)?;
                if cfg.flip && rng.random_bool(0.5) {
                    crop = crop.flip_horizontal();
                }
                batch.push(ext.normalize(&crop));
                labels.push(*label);
            }
            let x = Tensor::stack(&batch);
            let (logits, cache) = ext.forward_train(x);
            let (loss, dlogits) = softmax_cross_entropy(&logits.data, classes, &labels);
            if !loss.is_finite() {
                return Err(Error::Divergence { step: batches, loss });
            }
            for (row, &label) in logits.data.chunks(classes).zip(&labels) {
                let best = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
                correct += usize::from(best == label);
            }
            let dlogits = Tensor::from_vec(labels.len(), classes, 1, 1, dlogits);
            let mut grads: Vec<Conv2d<T>> = ext.convs().iter().map(|c| c.zeros_like()).collect();
            ext.backward(&cache, &dlogits, &mut grads);
            let grad_slices: Vec<&[T]> = grads.iter().flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()]).collect();
            let mut params: Vec<&mut [T]> = ext.convs_mut().into_iter().flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()]).collect();
            adam.update(&mut params, &grad_slices, &trainable, cfg.lr);
            loss_sum += loss;
            batches += 1;
        }
        let entry = ExtractorEpoch { epoch, loss: loss_sum / batches as f64, accuracy: correct as f64 / data.len() as f64 };
        log::info!("extractor epoch {epoch}: loss {:.4} acc {:.3}", entry.loss, entry.accuracy);
        history.push(entry);
    }
    Ok((ext, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vgg_archive() -> Vec<u8> {
        let (ops, _) = vgg19_ops();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tensors = BTreeMap::new();
        // Only the layers up to conv3 are needed; the rest stay absent.
        for (i, op) in ops.iter().enumerate().take(12) {
            if let OpSpec::Conv { in_ch, out_ch, kernel } = *op {
                let c = Conv2d::<f32>::init_uniform(in_ch, out_ch, kernel, &mut rng);
                tensors.insert(format!("features.{i}.weight"), NamedTensor { shape: vec![out_ch, in_ch, kernel, kernel], values: c.weight });
                tensors.insert(format!("features.{i}.bias"), NamedTensor { shape: vec![out_ch], values: c.bias });
            }
        }
        archive::encode(&tensors, HashMap::new()).unwrap()
    }

    #[test]
    fn vgg19_layout_taps() {
        let (ops, taps) = vgg19_ops();
        assert_eq!(taps["conv3"], 11);
        assert!(matches!(ops[10], OpSpec::Conv { in_ch: 128, out_ch: 256, kernel: 3 }));
        assert_eq!(taps["conv2"], 6);
        assert_eq!(taps["conv4"], 20);
        assert_eq!(taps["conv5"], 29);
    }

    #[test]
    fn vgg19_weights_load_up_to_tap() {
        let ext = FeatureExtractor::<f32>::from_bytes(&tiny_vgg_archive(), None).unwrap();
        assert_eq!(ext.kind, ExtractorKind::Vgg19);
        assert_eq!(ext.channels(), 256);
        assert_eq!(ext.min_size(), 4);
        let img = Image::filled(9, 7, 3, 0.5f32).unwrap();
        let f = ext.tap_features(&img).unwrap();
        assert_eq!(f.shape(), [1, 256, 2, 1]);
        assert!(FeatureExtractor::<f32>::from_bytes(&tiny_vgg_archive(), Some("conv4")).is_err());
    }

    #[test]
    fn desk_roundtrip_and_taps() {
        let ext = FeatureExtractor::<f32>::desk(8, 3);
        assert_eq!(ext.channels(), 256);
        let back = FeatureExtractor::<f32>::from_bytes(&ext.to_bytes().unwrap(), None).unwrap();
        assert_eq!(back, ext);
        assert_eq!(back.fingerprint(), ext.fingerprint());
        let conv2 = ext.clone().with_tap("conv2").unwrap();
        assert_eq!(conv2.channels(), 64);
        assert_ne!(conv2.fingerprint(), ext.fingerprint());
        assert!(matches!(ext.with_tap("conv9"), Err(Error::UnknownLayer(_))));
    }

    #[test]
    fn too_small_input_is_rejected() {
        let ext = FeatureExtractor::<f32>::desk(2, 0);
        let img = Image::filled(3, 8, 3, 0.2f32).unwrap();
        assert!(matches!(ext.tap_features(&img), Err(Error::DimensionTooSmall { min: 4, .. })));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut ext = FeatureExtractor::<f64>::desk(3, 9);
        let imgs: Vec<Tensor<f64>> = (0..2)
            .map(|i| ext.normalize(&Image::from_fn(8, 8, 3, |y, x, c| ((y * 5 + x * 3 + c + i * 7) % 11) as f64 / 10.0).unwrap()))
            .collect();
        let x = Tensor::stack(&imgs);
        let labels = [0usize, 2];
        let loss = |e: &FeatureExtractor<f64>| softmax_cross_entropy(&e.forward_train(x.clone()).0.data, 3, &labels).0;
        let (logits, cache) = ext.forward_train(x.clone());
        let (_, dl) = softmax_cross_entropy(&logits.data, 3, &labels);
        let mut grads: Vec<Conv2d<f64>> = ext.convs().iter().map(|c| c.zeros_like()).collect();
        ext.backward(&cache, &Tensor::from_vec(2, 3, 1, 1, dl), &mut grads);
        for (ci, j) in [(0usize, 5usize), (1, 17), (2, 40), (3, 2)] {
            let analytic = grads[ci].weight[j];
            let h = 1e-6;
            let orig = ext.convs()[ci].weight[j];
            ext.convs_mut()[ci].weight[j] = orig + h;
            let up = loss(&ext);
            ext.convs_mut()[ci].weight[j] = orig - h;
            let down = loss(&ext);
            ext.convs_mut()[ci].weight[j] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - analytic).abs() <= 1e-5 * fd.abs().max(1e-3), "conv {ci}: {fd} vs {analytic}");
        }
    }
}
