//! Anti-aliased bicubic downscaling by an integer factor.
//!
//! Output sample `j` along an axis is centred at input coordinate
//! `(j + 0.5) * s - 0.5`. The Keys cubic with `a = -0.5` is stretched by `s`
//! (support `2s` on either side), taps that fall outside the image are
//! mirrored with edge repetition (`-1 -> 0`, `n -> n - 1`), and the weights of
//! every output sample are renormalised to sum to one. Rows are filtered
//! first, then columns, in `f64`; the result is clamped to `[0, 1]`.

use crate::error::{Error, Result};
use crate::imaging::image::Image;
use crate::imaging::DegradationSpec;
use crate::scalar::Scalar;

/// Keys cubic convolution kernel.
pub fn cubic(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Mirrors an out-of-range index back into `0..n` (edge sample repeated).
pub(crate) fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Per-output-sample `(input index, weight)` taps along one axis.
#[derive(Debug, Clone)]
pub struct AxisWeights {
    pub taps: Vec<Vec<(usize, f64)>>,
}

impl AxisWeights {
    pub fn new(in_len: usize, scale: usize, a: f64) -> Self {
        let out_len = in_len / scale;
        let s = scale as f64;
        let support = 2.0 * s;
        let taps = (0..out_len)
            .map(|j| {
                let center = (j as f64 + 0.5) * s - 0.5;
                let lo = (center - support).ceil() as isize;
                let hi = (center + support).floor() as isize;
                let raw: Vec<(isize, f64)> = (lo..=hi)
                    .map(|i| (i, cubic((i as f64 - center) / s, a)))
                    .filter(|(_, w)| *w != 0.0)
                    .collect();
                let total: f64 = raw.iter().map(|(_, w)| w).sum();
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
                for (i, w) in raw {
                    let idx = mirror(i, in_len);
                    match merged.iter_mut().find(|(k, _)| *k == idx) {
                        Some(slot) => slot.1 += w / total,
                        None => merged.push((idx, w / total)),
                    }
                }
                merged
            })
            .collect();
        Self { taps }
    }
}

/// Downscales `img` by `spec.scale` with the known bicubic kernel and adds
/// `spec.noise` (zero by default).
pub fn bicubic_downsample<T: Scalar>(img: &Image<T>, spec: &DegradationSpec) -> Result<Image<T>> {
    let s = spec.scale;
    if s < 2 {
        return Err(Error::UnsupportedScale(s));
    }
    let (h, w, c) = img.dims();
    if h < s {
        return Err(Error::DimensionTooSmall { what: "height", actual: h, min: s });
    }
    if w < s {
        return Err(Error::DimensionTooSmall { what: "width", actual: w, min: s });
    }
    let a = spec.kernel.a();
    let wx = AxisWeights::new(w, s, a);
    let wy = AxisWeights::new(h, s, a);
    let (oh, ow) = (h / s, w / s);
    let src = img.data();

    // horizontal pass: h x ow x c
    let mut tmp = vec![0.0f64; h * ow * c];
    for y in 0..h {
        for (j, taps) in wx.taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for &(i, wt) in taps {
                    acc += wt * src[(y * w + i) * c + ch].as_f64();
                }
                tmp[(y * ow + j) * c + ch] = acc;
            }
        }
    }
    // vertical pass
    let mut out = vec![0.0f64; oh * ow * c];
    for (j, taps) in wy.taps.iter().enumerate() {
        for x in 0..ow {
            for ch in 0..c {
                let mut acc = 0.0;
                for &(i, wt) in taps {
                    acc += wt * tmp[(i * ow + x) * c + ch];
                }
                out[(j * ow + x) * c + ch] = acc;
            }
        }
    }
    spec.noise.apply(&mut out);
    Image::from_clamped(oh, ow, c, out.into_iter().map(T::from_f64_lossy).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(cubic(0.0, -0.5), 1.0);
        assert_eq!(cubic(1.0, -0.5), 0.0);
        assert_eq!(cubic(2.0, -0.5), 0.0);
        assert!((cubic(0.5, -0.5) - 0.5625).abs() < 1e-15);
        assert!((cubic(1.5, -0.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn weights_partition_unity_everywhere() {
        for n in [2usize, 3, 5, 8, 17, 64] {
            for s in [2usize, 3, 4] {
                if n < s {
                    continue;
                }
                let ax = AxisWeights::new(n, s, -0.5);
                assert_eq!(ax.taps.len(), n / s);
                for taps in &ax.taps {
                    let total: f64 = taps.iter().map(|t| t.1).sum();
                    assert!((total - 1.0).abs() < 1e-12, "n={n} s={s}: {total}");
                    assert!(taps.iter().all(|t| t.0 < n));
                }
            }
        }
    }

    #[test]
    fn mirror_indices() {
        assert_eq!(mirror(-1, 5), 0);
        assert_eq!(mirror(-3, 5), 2);
        assert_eq!(mirror(5, 5), 4);
        assert_eq!(mirror(7, 5), 2);
        assert_eq!(mirror(-4, 2), 0);
    }
}
