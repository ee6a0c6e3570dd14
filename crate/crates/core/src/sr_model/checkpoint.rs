use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::{self, NamedTensor};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scalar::Scalar;
use crate::sr_model::arch::SrArchitecture;
use crate::sr_model::net::SrNet;

pub const CHECKPOINT_FORMAT: &str = "tta-sr-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One row of a training loss curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    /// Mean L1 over the epoch's optimizer steps; `None` for the epoch-0 probe.
    pub train_loss: Option<f64>,
    /// L1 on the fixed held-in batch after the epoch.
    pub heldin_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_seen: usize,
    pub loss_curve: Vec<EpochLoss>,
    pub seed: u64,
    #[serde(default)]
    pub config_fingerprint: Option<String>,
}

/// SR network parameters plus the frozen-parameter mask and training record.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<T> {
    pub net: SrNet<T>,
    pub frozen: BTreeSet<String>,
    pub meta: TrainMeta,
}

/// Initializes a network; parameters depend only on `arch` and `seed`.
pub fn build_model<T: Scalar>(arch: SrArchitecture, seed: u64) -> Result<ModelCheckpoint<T>> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ModelCheckpoint {
        net: SrNet::new(arch, &mut rng),
        frozen: BTreeSet::new(),
        meta: TrainMeta { seed, ..TrainMeta::default() },
    })
}

impl<T: Scalar> ModelCheckpoint<T> {
    pub fn arch(&self) -> &SrArchitecture {
        &self.net.arch
    }

    pub fn scale(&self) -> usize {
        self.net.arch.scale
    }

    /// Per-parameter trainable flags in [`SrNet::param_names`] order.
    pub fn trainable_mask(&self) -> Vec<bool> {
        self.net.param_names().iter().map(|n| !self.frozen.contains(n)).collect()
    }

    /// Per-layer flags: does any parameter of the layer train?
    pub(crate) fn layer_grad_mask(&self) -> Vec<bool> {
        self.net
            .layers()
            .iter()
            .map(|(n, _)| !(self.frozen.contains(&format!("{n}.weight")) && self.frozen.contains(&format!("{n}.bias"))))
            .collect()
    }

    /// SHA-256 over parameter names and little-endian values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut buf = Vec::new();
        for (name, values) in self.net.param_names().iter().zip(self.net.params()) {
            h.update(name.as_bytes());
            buf.clear();
            for &v in values {
                v.write_le(&mut buf);
            }
            h.update(&buf);
        }
        hex::encode(h.finalize())
    }

    /// Super-resolves `lr`; output is `scale` times larger and clamped to
    /// `[0, 1]`.
    pub fn predict(&self, lr: &Image<T>) -> Result<Image<T>> {
        if lr.channels() != self.net.arch.channels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} channels, image has {}",
                self.net.arch.channels,
                lr.channels()
            )));
        }
        let out = self.net.forward(&lr.to_tensor());
        Image::from_tensor_clamped(&out, 0)
    }

    /// Freezes the pixel-shuffle stage convolutions and everything after them.
    pub fn freeze_upsampling(&mut self) {
        self.frozen.extend(upsampling_parameter_names(&self.net));
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = BTreeMap::new();
        for ((name, values), shape) in self.net.param_names().into_iter().zip(self.net.params()).zip(self.net.param_shapes()) {
            tensors.insert(name, NamedTensor { shape, values: values.to_vec() });
        }
        let mut meta = HashMap::new();
        meta.insert("format".into(), CHECKPOINT_FORMAT.into());
        meta.insert("version".into(), CHECKPOINT_VERSION.to_string());
        meta.insert("arch".into(), serde_json::to_string(&self.net.arch)?);
        meta.insert("frozen".into(), serde_json::to_string(&self.frozen)?);
        meta.insert("train_meta".into(), serde_json::to_string(&self.meta)?);
        archive::encode(&tensors, meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut tensors, meta) = archive::decode::<T>(bytes)?;
        let field = |k: &str| meta.get(k).ok_or_else(|| Error::Checkpoint(format!("missing metadata `{k}`")));
        if field("format")? != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint("not an SR checkpoint".into()));
        }
        let version: u32 = field("version")?.parse().map_err(|_| Error::Checkpoint("bad version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let arch: SrArchitecture = serde_json::from_str(field("arch")?)?;
        arch.validate()?;
        let frozen: BTreeSet<String> = serde_json::from_str(field("frozen")?)?;
        let train_meta: TrainMeta = serde_json::from_str(field("train_meta")?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = SrNet::<T>::new(arch, &mut rng);
        let names = net.param_names();
        let shapes = net.param_shapes();
        for ((name, slot), shape) in names.iter().zip(net.params_mut()).zip(shapes) {
            let t = tensors.remove(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape != shape {
                return Err(Error::Checkpoint(format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape)));
            }
            slot.copy_from_slice(&t.values);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        if let Some(bad) = frozen.iter().find(|n| !names.contains(n)) {
            return Err(Error::Checkpoint(format!("frozen mask names unknown parameter `{bad}`")));
        }
        Ok(Self { net, frozen, meta: train_meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Names frozen by [`ModelCheckpoint::freeze_upsampling`]: every parameter
/// from the first upsampler convolution to the output convolution.
pub fn upsampling_parameter_names<T: Scalar>(net: &SrNet<T>) -> Vec<String> {
    net.param_names().into_iter().filter(|n| n.starts_with("tail.")).collect()
}
