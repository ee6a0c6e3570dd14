use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::PairedSample;
use crate::scalar::Scalar;

/// Seeded aligned crop: an `lr_crop`-square LR window and the matching
/// `(lr_crop * s)`-square HR window, corners related by the scale factor.
pub fn aligned_random_crop<T: Scalar>(pair: &PairedSample<T>, lr_crop: usize, seed: u64) -> Result<PairedSample<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    aligned_random_crop_with(pair, lr_crop, &mut rng)
}

pub fn aligned_random_crop_with<T: Scalar, R: Rng + ?Sized>(
    pair: &PairedSample<T>,
    lr_crop: usize,
    rng: &mut R,
) -> Result<PairedSample<T>> {
    let (lh, lw, _) = pair.lr.dims();
    let available = lh.min(lw);
    if lr_crop == 0 || lr_crop > available {
        return Err(Error::CropTooLarge { crop: lr_crop, available });
    }
    let y0 = rng.random_range(0..=lh - lr_crop);
    let x0 = rng.random_range(0..=lw - lr_crop);
    aligned_crop_at(pair, y0, x0, lr_crop)
}

/// Deterministic aligned crop at LR corner `(y0, x0)`.
pub fn aligned_crop_at<T: Scalar>(pair: &PairedSample<T>, y0: usize, x0: usize, lr_crop: usize) -> Result<PairedSample<T>> {
    let s = pair.spec.scale;
    let lr = pair.lr.crop(y0, x0, lr_crop, lr_crop)?;
    let hr = pair.hr.crop(y0 * s, x0 * s, lr_crop * s, lr_crop * s)?;
    Ok(PairedSample { id: pair.id.clone(), hr, lr, spec: pair.spec })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{make_pair, DegradationSpec, Image};

    fn pair(h: usize, w: usize, s: usize) -> PairedSample<f32> {
        let hr = Image::from_fn(h, w, 3, |y, x, c| ((y * 7 + x * 3 + c * 11) % 17) as f32 / 16.0).unwrap();
        make_pair(hr, &DegradationSpec::bicubic(s), "p").unwrap()
    }

    #[test]
    fn crop_sizes_follow_scale() {
        let p = pair(160, 144, 4);
        let c = aligned_random_crop(&p, 32, 7).unwrap();
        assert_eq!(c.lr.dims(), (32, 32, 3));
        assert_eq!(c.hr.dims(), (128, 128, 3));
    }

    #[test]
    fn full_size_crop_is_identity() {
        let p = pair(64, 64, 4);
        let c = aligned_random_crop(&p, 16, 1).unwrap();
        assert_eq!(c.lr, p.lr);
        assert_eq!(c.hr, p.hr);
    }

    #[test]
    fn seeded_crops_repeat() {
        let p = pair(128, 128, 2);
        assert_eq!(aligned_random_crop(&p, 20, 99).unwrap(), aligned_random_crop(&p, 20, 99).unwrap());
    }

    #[test]
    fn oversized_crop_is_rejected() {
        let p = pair(64, 64, 4);
        assert!(matches!(aligned_random_crop(&p, 17, 0), Err(Error::CropTooLarge { crop: 17, available: 16 })));
    }
}
