//! 8-bit PNG codec. Decoding divides by 255; encoding clamps and rounds half up.

use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::imaging::image::{clamp01, Image};
use crate::scalar::Scalar;

pub fn decode_png<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    let dynimg = image::load_from_memory(bytes)?;
    from_dynamic(dynimg)
}

pub fn load_png<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_png(&bytes)
}

fn from_dynamic<T: Scalar>(dynimg: DynamicImage) -> Result<Image<T>> {
    match dynimg.color() {
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16 => {
            let g = dynimg.to_luma8();
            let (w, h) = g.dimensions();
            let data = g.into_raw().into_iter().map(|v| T::from_f64_lossy(v as f64 / 255.0)).collect();
            Image::new(h as usize, w as usize, 1, data)
        }
        _ => {
            let rgb = dynimg.to_rgb8();
            let (w, h) = rgb.dimensions();
            let data = rgb.into_raw().into_iter().map(|v| T::from_f64_lossy(v as f64 / 255.0)).collect();
            Image::new(h as usize, w as usize, 3, data)
        }
    }
}

#[inline]
pub fn quantize<T: Scalar>(v: T) -> u8 {
    (clamp01(v).as_f64() * 255.0 + 0.5).floor() as u8
}

pub fn encode_png<T: Scalar>(img: &Image<T>) -> Result<Vec<u8>> {
    let (h, w, c) = img.dims();
    let raw: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let dynimg = if c == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer size"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer size"))
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynimg.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_png<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Rounds an image through 8-bit storage, as if saved and reloaded.
pub fn quantize_image<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (h, w, c) = img.dims();
    let data = img.data().iter().map(|&v| T::from_f64_lossy(quantize(v) as f64 / 255.0)).collect();
    Image::new(h, w, c, data).expect("quantized values are in range")
}

/// All `.png` files below `root`, sorted.
pub fn list_pngs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::file(&dir, e))? {
            let path = entry.map_err(|e| Error::file(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// `path` relative to `root` with `/` separators.
pub fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(quantize(0.5f64), 128);
        assert_eq!(quantize(127.5f64 / 255.0), 128);
        assert_eq!(quantize(1.0f64), 255);
        assert_eq!(quantize(0.0f64), 0);
    }

    #[test]
    fn png_roundtrip_is_exact_on_8bit_values() {
        let img = Image::<f32>::from_fn(5, 7, 3, |y, x, c| ((y * 31 + x * 7 + c * 101) % 256) as f32 / 255.0).unwrap();
        let back: Image<f32> = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
        let gray = Image::<f64>::from_fn(3, 2, 1, |y, x, _| (y * 2 + x) as f64 / 255.0).unwrap();
        let back: Image<f64> = decode_png(&encode_png(&gray).unwrap()).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!(back, gray);
    }
}
