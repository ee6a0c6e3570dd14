//! Filter-activation scoring, the per-channel image ranking and adaptation
//! set retrieval.

mod extractor;
mod index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scalar::Scalar;

pub use extractor::{
    train_desk_extractor, ExtractorEpoch, ExtractorKind, ExtractorTraining, FeatureExtractor, Layer, OpSpec, Preprocess, DEFAULT_TAP,
};
pub use index::{
    build_index, build_index_from_scores, rank_channel, select_adaptation_set, ActivationIndex, BuildOptions, DirectorySource, HrSource,
    ImageScores, InMemorySource, ManifestEntry, RankEntry, SkippedImage, DEFAULT_K_STORE,
};

/// How a channel's activation map is reduced to one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

/// Spatial mean of the post-ReLU tap activations, one score per channel.
pub fn channel_scores<T: Scalar>(extractor: &FeatureExtractor<T>, img: &Image<T>) -> Result<Vec<f64>> {
    channel_scores_with(extractor, img, Aggregation::Mean)
}

pub fn channel_scores_with<T: Scalar>(extractor: &FeatureExtractor<T>, img: &Image<T>, aggregation: Aggregation) -> Result<Vec<f64>> {
    let t = extractor.tap_features(img)?;
    let hw = t.plane();
    Ok(t.data
        .chunks(hw)
        .map(|plane| match aggregation {
            Aggregation::Mean => plane.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64,
            Aggregation::Max => plane.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max),
        })
        .collect())
}

/// The most activated channels of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSelection {
    pub filter_ids: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Order used for all rankings: higher score first, then lower key.
pub(crate) fn descending<K: Ord>(a: (f64, K), b: (f64, K)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// The `m` highest-scoring channels; ties go to the lower channel index.
pub fn top_m_filters(scores: &[f64], m: usize) -> Result<FilterSelection> {
    if m > scores.len() {
        return Err(Error::TooManyFilters { requested: m, available: scores.len() });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| descending((scores[a], a), (scores[b], b)));
    order.truncate(m);
    Ok(FilterSelection { scores: order.iter().map(|&c| scores[c]).collect(), filter_ids: order })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lower_channel() {
        let sel = top_m_filters(&[0.1, 0.9, 0.5, 0.9], 2).unwrap();
        assert_eq!(sel.filter_ids, vec![1, 3]);
        assert_eq!(sel.scores, vec![0.9, 0.9]);
        assert!(top_m_filters(&[0.1, 0.2], 0).unwrap().filter_ids.is_empty());
        assert!(matches!(top_m_filters(&[0.1, 0.2], 3), Err(Error::TooManyFilters { requested: 3, available: 2 })));
    }

    #[test]
    fn desk_scores_have_tap_width() {
        let ext = FeatureExtractor::<f32>::desk(4, 1);
        let img = Image::from_fn(20, 24, 3, |y, x, c| ((y + x + c) % 7) as f32 / 6.0).unwrap();
        let s = channel_scores(&ext, &img).unwrap();
        assert_eq!(s.len(), 256);
        assert!(s.iter().all(|v| *v >= 0.0));
        let mx = channel_scores_with(&ext, &img, Aggregation::Max).unwrap();
        assert!(s.iter().zip(&mx).all(|(a, b)| a <= b));
        assert_eq!(s, channel_scores(&ext, &img).unwrap());
    }
}
