use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// An `H x W x C` image with interleaved channels and values in `[0, 1]`.
///
/// `C` is 1 (gray) or 3 (RGB).
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    /// Validates shape, channel count and value range.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("channel count {channels} not in {{1, 3}}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage("empty image".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::InvalidImage(format!("value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Builds an image, clamping every value into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut data: Vec<T>) -> Result<Self> {
        for v in &mut data {
            *v = clamp01(*v);
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image from a per-pixel function returning channel values.
    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_clamped(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let p = (y * self.width + x) * self.channels;
                data.extend_from_slice(&self.data[p..p + self.channels]);
            }
        }
        Self { data, ..*self }
    }

    /// Sub-image with top-left corner `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::CropTooLarge {
                crop: height.max(width),
                available: (self.height - y0.min(self.height)).min(self.width - x0.min(self.width)),
            });
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for y in y0..y0 + height {
            let p = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[p..p + width * self.channels]);
        }
        Ok(Self { height, width, channels: self.channels, data })
    }

    /// ITU-R BT.601 luma in the studio-swing convention customary for SR
    /// evaluation: `(16 + 65.481 R + 128.553 G + 24.966 B) / 255`.
    pub fn to_luma(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let [kr, kg, kb] = [65.481 / 255.0, 128.553 / 255.0, 24.966 / 255.0];
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                let y = 16.0 / 255.0 + kr * p[0].as_f64() + kg * p[1].as_f64() + kb * p[2].as_f64();
                T::from_f64_lossy(y)
            })
            .collect();
        Self { height: self.height, width: self.width, channels: 1, data }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }

    /// `1 x C x H x W` network input.
    pub fn to_tensor(&self) -> Tensor<T> {
        let (h, w, c) = self.dims();
        let mut data = vec![T::zero(); h * w * c];
        for (i, px) in self.data.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                data[ch * h * w + i] = v;
            }
        }
        Tensor::from_vec(1, c, h, w, data)
    }

    /// Converts sample `index` of a network output to an image, clamping
    /// values into `[0, 1]`.
    pub fn from_tensor_clamped(t: &Tensor<T>, index: usize) -> Result<Self> {
        let (h, w, c) = (t.h, t.w, t.c);
        let src = t.sample(index);
        let mut data = vec![T::zero(); h * w * c];
        for ch in 0..c {
            for i in 0..h * w {
                data[i * c + ch] = src[ch * h * w + i];
            }
        }
        Self::from_clamped(h, w, c, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub(crate) fn clamp01<T: Scalar>(v: T) -> T {
    if v > T::one() {
        T::one()
    } else if v >= T::zero() {
        v
    } else {
        T::zero()
    }
}
