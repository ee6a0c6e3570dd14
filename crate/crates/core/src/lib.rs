//! Test-time adaptation for single-image super-resolution.
//!
//! A pretrained SR network is fine-tuned, per test image, on the corpus images
//! that most strongly activate the same feature-extractor filters as the
//! network's own prediction. Everything numeric is generic over [`Scalar`]
//! (`f32` for training and inference, `f64` for gradient checks); the aliases
//! below name the `f32` instantiations used by the command-line tools.

pub mod analysis;
pub mod archive;
pub mod error;
pub mod feature_index;
pub mod imaging;
pub mod nn;
pub mod scalar;
pub mod sr_model;
pub mod tensor;
pub mod tta;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Scalar;

pub type ImageF32 = imaging::Image<f32>;
pub type ImageF64 = imaging::Image<f64>;
pub type PairF32 = imaging::PairedSample<f32>;
pub type Checkpoint = sr_model::ModelCheckpoint<f32>;
pub type Checkpoint64 = sr_model::ModelCheckpoint<f64>;
pub type Extractor = feature_index::FeatureExtractor<f32>;
pub type AdaptationF32 = tta::Adaptation<f32>;
