//! Versioned run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tta_sr::analysis::GPerCriterion;
use tta_sr::feature_index::{Aggregation, ExtractorTraining, DEFAULT_K_STORE, DEFAULT_TAP};
use tta_sr::imaging::{DegradationSpec, MetricMode};
use tta_sr::sr_model::{SrArchitecture, TrainSchedule};
use tta_sr::tta::AdaptationConfig;
use tta_sr::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Locations of inputs and artifacts, relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus_dir: PathBuf,
    pub extractor: PathBuf,
    pub index: PathBuf,
    pub baseline: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus_dir: "corpus".into(),
            extractor: "out/extractor.safetensors".into(),
            index: "out/index.json".into(),
            baseline: "out/baseline.safetensors".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 8 residual blocks, 64 features.
    #[default]
    Desk,
    /// 32 residual blocks, 256 features, residual scaling 0.1.
    Edsr,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Preset,
    pub n_resblocks: Option<usize>,
    pub n_feats: Option<usize>,
    pub residual_scaling: Option<f64>,
}

impl ModelConfig {
    pub fn arch(&self, scale: usize) -> SrArchitecture {
        let mut arch = match self.preset {
            Preset::Desk => SrArchitecture::desk(scale),
            Preset::Edsr => SrArchitecture::edsr(scale),
        };
        arch.n_resblocks = self.n_resblocks.unwrap_or(arch.n_resblocks);
        arch.n_feats = self.n_feats.unwrap_or(arch.n_feats);
        arch.residual_scaling = self.residual_scaling.unwrap_or(arch.residual_scaling);
        arch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub tap: String,
    pub aggregation: Aggregation,
    pub k_store: usize,
    pub training: ExtractorTraining,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { tap: DEFAULT_TAP.into(), aggregation: Aggregation::Mean, k_store: DEFAULT_K_STORE, training: ExtractorTraining::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Seeds every stage; per-section seeds are overwritten from it.
    pub seed: u64,
    pub metric: MetricMode,
    pub paths: Paths,
    pub degradation: DegradationSpec,
    pub model: ModelConfig,
    pub train: TrainSchedule,
    pub adapt: AdaptationConfig,
    pub extractor: ExtractorConfig,
    pub analysis: GPerCriterion,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            metric: MetricMode::Rgb,
            paths: Paths::default(),
            degradation: DegradationSpec::default(),
            model: ModelConfig::default(),
            train: TrainSchedule::default(),
            adapt: AdaptationConfig::default(),
            extractor: ExtractorConfig::default(),
            analysis: GPerCriterion::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!("config version {} is not supported (expected {CONFIG_VERSION})", cfg.version)));
        }
        cfg.base_dir = base_dir.into();
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::File { path: path.into(), source: e })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn with_base_dir(mut self, base_dir: impl Into<PathBuf>) -> Self {
        self.base_dir = base_dir.into();
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.adapt.seed = seed;
        self.extractor.training.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.arch().validate()?;
        self.adapt.validate()?;
        if self.degradation.scale != self.arch().scale {
            return Err(Error::InvalidConfig("degradation and model scales differ".into()));
        }
        Ok(())
    }

    pub fn arch(&self) -> SrArchitecture {
        self.model.arch(self.degradation.scale)
    }

    /// Resolves a configured path against the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.resolve(&self.paths.corpus_dir)
    }

    pub fn extractor_path(&self) -> PathBuf {
        self.resolve(&self.paths.extractor)
    }

    pub fn index_path(&self) -> PathBuf {
        self.resolve(&self.paths.index)
    }

    pub fn baseline_path(&self) -> PathBuf {
        self.resolve(&self.paths.baseline)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.paths.output_dir)
    }

    /// SHA-256 of the canonical JSON form without `paths`, so moving files
    /// or redirecting output keeps artifacts compatible.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(fields) = value.as_object_mut() {
            fields.remove("paths");
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&value).expect("config serializes")))
    }
}
