//! Images, the known-kernel bicubic degradation model, aligned LR/HR crops and
//! fidelity metrics.

pub mod bicubic;
pub mod crop;
mod image;
pub mod io;
pub mod metrics;
pub mod synth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use self::bicubic::bicubic_downsample;
pub use self::crop::{aligned_random_crop, aligned_random_crop_with};
pub use self::image::Image;
pub use self::metrics::{psnr, ssim, MetricMode};

use crate::error::Result;
use crate::scalar::Scalar;

/// Resampling kernel of the degradation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Bicubic { a: f64 },
}

impl Kernel {
    pub fn a(&self) -> f64 {
        match *self {
            Kernel::Bicubic { a } => a,
        }
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Bicubic { a: -0.5 }
    }
}

/// Additive white Gaussian noise on the downscaled image. `sigma = 0` (the
/// default) disables it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub(crate) fn apply(&self, values: &mut [f64]) {
        if self.sigma <= 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.sigma).expect("finite sigma");
        for v in values {
            *v += normal.sample(&mut rng);
        }
    }
}

/// `I_LR = (I_HR * k) downsampled by s + N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    #[serde(default)]
    pub kernel: Kernel,
    pub scale: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl DegradationSpec {
    pub fn bicubic(scale: usize) -> Self {
        Self { kernel: Kernel::default(), scale, noise: NoiseSpec::default() }
    }
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self::bicubic(4)
    }
}

/// An HR image together with its degraded LR counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample<T> {
    pub id: String,
    pub hr: Image<T>,
    pub lr: Image<T>,
    pub spec: DegradationSpec,
}

impl<T: Scalar> PairedSample<T> {
    pub fn scale(&self) -> usize {
        self.spec.scale
    }
}

/// Crops `img` at the top-left so both sides are multiples of `scale`.
pub fn modcrop<T: Scalar>(img: &Image<T>, scale: usize) -> Result<Image<T>> {
    let (h, w, _) = img.dims();
    img.crop(0, 0, h - h % scale.max(1), w - w % scale.max(1))
}

pub fn make_pair<T: Scalar>(hr: Image<T>, spec: &DegradationSpec, id: impl Into<String>) -> Result<PairedSample<T>> {
    let lr = bicubic_downsample(&hr, spec)?;
    Ok(PairedSample { id: id.into(), hr, lr, spec: *spec })
}
