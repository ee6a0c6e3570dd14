use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{channel_scores_with, descending, Aggregation, FeatureExtractor, FilterSelection};
use crate::error::{Error, Result};
use crate::imaging::io::{decode_png, list_pngs, relative_id};
use crate::imaging::Image;
use crate::scalar::Scalar;

pub const INDEX_FORMAT: &str = "tta-sr-activation-index";
pub const INDEX_VERSION: u32 = 1;
pub const DEFAULT_K_STORE: usize = 16;
const CACHE_FLUSH_EVERY: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the corpus root, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub path: String,
    pub reason: String,
}

/// Scores of one corpus image, the input to ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageScores {
    pub id: String,
    pub path: String,
    pub sha256: String,
    pub scores: Vec<f64>,
}

/// For every tap channel, the `k_store` corpus images it activates most.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationIndex {
    pub format: String,
    pub version: u32,
    pub extractor_fingerprint: String,
    pub tap: String,
    pub aggregation: Aggregation,
    pub k_store: usize,
    /// Run configuration that produced the index, when built by the CLI.
    #[serde(default)]
    pub config_fingerprint: Option<String>,
    pub manifest: BTreeMap<String, ManifestEntry>,
    pub skipped: Vec<SkippedImage>,
    pub channels: Vec<Vec<RankEntry>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub k_store: usize,
    pub aggregation: Aggregation,
    /// Score cache keyed by content hash; makes interrupted builds resumable.
    pub cache: Option<PathBuf>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { k_store: DEFAULT_K_STORE, aggregation: Aggregation::Mean, cache: None }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ScoreCache {
    extractor_fingerprint: String,
    aggregation: Aggregation,
    scores: BTreeMap<String, Vec<f64>>,
}

impl ScoreCache {
    fn load(path: &Path, fingerprint: &str, aggregation: Aggregation) -> Self {
        let fresh = || ScoreCache { extractor_fingerprint: fingerprint.into(), aggregation, scores: BTreeMap::new() };
        let Ok(bytes) = std::fs::read(path) else { return fresh() };
        match serde_json::from_slice::<ScoreCache>(&bytes) {
            Ok(c) if c.extractor_fingerprint == fingerprint && c.aggregation == aggregation => c,
            _ => fresh(),
        }
    }

    fn store(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?).map_err(|e| Error::file(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::file(path, e))
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Top-`k` images of channel `c` under (score desc, id asc).
pub fn rank_channel(images: &[ImageScores], c: usize, k: usize) -> Vec<RankEntry> {
    let mut order: Vec<&ImageScores> = images.iter().collect();
    order.sort_by(|a, b| descending((a.scores[c], &a.id), (b.scores[c], &b.id)));
    order.into_iter().take(k).map(|s| RankEntry { id: s.id.clone(), score: s.scores[c] }).collect()
}

/// Ranks precomputed per-image scores into an index.
pub fn build_index_from_scores(
    extractor_fingerprint: &str,
    tap: &str,
    aggregation: Aggregation,
    k_store: usize,
    images: &[ImageScores],
    skipped: Vec<SkippedImage>,
) -> Result<ActivationIndex> {
    let Some(first) = images.first() else {
        return Err(Error::EmptyDataset);
    };
    let channels = first.scores.len();
    if let Some(bad) = images.iter().find(|s| s.scores.len() != channels) {
        return Err(Error::LengthMismatch { left: channels, right: bad.scores.len() });
    }
    let mut manifest = BTreeMap::new();
    for s in images {
        if manifest.insert(s.id.clone(), ManifestEntry { path: s.path.clone(), sha256: s.sha256.clone() }).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate image id `{}`", s.id)));
        }
    }
    Ok(ActivationIndex {
        format: INDEX_FORMAT.into(),
        version: INDEX_VERSION,
        extractor_fingerprint: extractor_fingerprint.into(),
        tap: tap.into(),
        aggregation,
        k_store,
        config_fingerprint: None,
        manifest,
        skipped,
        channels: (0..channels).map(|c| rank_channel(images, c, k_store)).collect(),
    })
}

enum Scored {
    Ok(ImageScores),
    Skipped(SkippedImage),
}

/// Scores every PNG under `root` on the full image and ranks the corpus.
/// Undecodable files are skipped and listed in `skipped`.
pub fn build_index<T: Scalar>(extractor: &FeatureExtractor<T>, root: impl AsRef<Path>, opts: &BuildOptions) -> Result<ActivationIndex> {
    let root = root.as_ref();
    let files = list_pngs(root)?;
    let fingerprint = extractor.fingerprint();
    let mut cache = match &opts.cache {
        Some(p) => ScoreCache::load(p, &fingerprint, opts.aggregation),
        None => ScoreCache { extractor_fingerprint: fingerprint.clone(), aggregation: opts.aggregation, scores: BTreeMap::new() },
    };
    let mut images = Vec::with_capacity(files.len());
    let mut skipped = Vec::new();
    for chunk in files.chunks(CACHE_FLUSH_EVERY) {
        let scored: Vec<Scored> = chunk
            .par_iter()
            .map(|path| {
                let id = relative_id(root, path);
                let skip = |reason: String| Scored::Skipped(SkippedImage { path: id.clone(), reason });
                let bytes = match std::fs::read(path) {
                    Ok(b) => b,
                    Err(e) => return skip(e.to_string()),
                };
                let sha256 = sha256_hex(&bytes);
                let scores = match cache.scores.get(&sha256) {
                    Some(s) => s.clone(),
                    None => match decode_png::<T>(&bytes).and_then(|img| channel_scores_with(extractor, &img, opts.aggregation)) {
                        Ok(s) => s,
                        Err(e) => return skip(e.to_string()),
                    },
                };
                Scored::Ok(ImageScores { path: id.clone(), id, sha256, scores })
            })
            .collect();
        for s in scored {
            match s {
                Scored::Ok(s) => {
                    cache.scores.entry(s.sha256.clone()).or_insert_with(|| s.scores.clone());
                    images.push(s);
                }
                Scored::Skipped(s) => {
                    log::warn!("skipping {}: {}", s.path, s.reason);
                    skipped.push(s);
                }
            }
        }
        if let Some(p) = &opts.cache {
            cache.store(p)?;
        }
    }
    build_index_from_scores(&fingerprint, &extractor.tap, opts.aggregation, opts.k_store, &images, skipped)
}

impl ActivationIndex {
    pub fn n_images(&self) -> usize {
        self.manifest.len()
    }

    /// Rejects queries from an extractor other than the one that built the index.
    pub fn check_extractor(&self, fingerprint: &str) -> Result<()> {
        if self.extractor_fingerprint != fingerprint {
            return Err(Error::FingerprintMismatch { expected: self.extractor_fingerprint.clone(), found: fingerprint.into() });
        }
        Ok(())
    }

    /// Checks ordering, list lengths and manifest resolution.
    pub fn validate(&self) -> Result<()> {
        if self.format != INDEX_FORMAT || self.version != INDEX_VERSION {
            return Err(Error::Checkpoint(format!("unsupported index {} v{}", self.format, self.version)));
        }
        let want = self.k_store.min(self.n_images());
        for (c, list) in self.channels.iter().enumerate() {
            if list.len() != want {
                return Err(Error::Checkpoint(format!("channel {c} lists {} images, expected {want}", list.len())));
            }
            if let Some(e) = list.iter().find(|e| !self.manifest.contains_key(&e.id)) {
                return Err(Error::UnknownImage(e.id.clone()));
            }
            for pair in list.windows(2) {
                if descending((pair[0].score, &pair[0].id), (pair[1].score, &pair[1].id)) != std::cmp::Ordering::Less {
                    return Err(Error::Checkpoint(format!("channel {c} ranking is not strictly ordered")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let index: Self = serde_json::from_slice(bytes)?;
        index.validate()?;
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read(path).map_err(|e| Error::file(path, e))?)
    }
}

/// For each selected filter, its top-`k` images. An image already taken by
/// an earlier filter is replaced by that filter's next-ranked image, so the
/// result holds `M * k` distinct ids whenever the index has enough images.
pub fn select_adaptation_set(index: &ActivationIndex, selection: &FilterSelection, k: usize) -> Result<Vec<String>> {
    if k > index.k_store {
        return Err(Error::KExceedsStore { requested: k, stored: index.k_store });
    }
    let mut taken = BTreeSet::new();
    let mut out = Vec::with_capacity(selection.filter_ids.len() * k);
    for &f in &selection.filter_ids {
        let list = index.channels.get(f).ok_or(Error::TooManyFilters { requested: f + 1, available: index.channels.len() })?;
        let mut added = 0;
        for e in list {
            if added == k {
                break;
            }
            if taken.insert(e.id.clone()) {
                out.push(e.id.clone());
                added += 1;
            }
        }
    }
    Ok(out)
}

/// Resolves corpus image ids to HR images.
pub trait HrSource<T>: Sync {
    fn ids(&self) -> Vec<String>;
    fn load(&self, id: &str) -> Result<Image<T>>;
}

/// Images on disk, resolved through an index manifest and verified against
/// their recorded content hashes.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    pub root: PathBuf,
    pub manifest: BTreeMap<String, ManifestEntry>,
}

impl DirectorySource {
    pub fn new(root: impl Into<PathBuf>, index: &ActivationIndex) -> Self {
        Self { root: root.into(), manifest: index.manifest.clone() }
    }
}

impl<T: Scalar> HrSource<T> for DirectorySource {
    fn ids(&self) -> Vec<String> {
        self.manifest.keys().cloned().collect()
    }

    fn load(&self, id: &str) -> Result<Image<T>> {
        let entry = self.manifest.get(id).ok_or_else(|| Error::UnknownImage(id.into()))?;
        let path = self.root.join(&entry.path);
        let bytes = std::fs::read(&path).map_err(|e| Error::file(&path, e))?;
        let found = sha256_hex(&bytes);
        if found != entry.sha256 {
            return Err(Error::FingerprintMismatch { expected: entry.sha256.clone(), found });
        }
        decode_png(&bytes)
    }
}

#[derive(Debug, Clone, Default)]
pub struct InMemorySource<T> {
    pub images: BTreeMap<String, Image<T>>,
}

impl<T: Scalar> HrSource<T> for InMemorySource<T> {
    fn ids(&self) -> Vec<String> {
        self.images.keys().cloned().collect()
    }

    fn load(&self, id: &str) -> Result<Image<T>> {
        self.images.get(id).cloned().ok_or_else(|| Error::UnknownImage(id.into()))
    }
}
