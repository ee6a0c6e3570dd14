//! Seeded procedural image families.
//!
//! Each family is a distinct texture/structure regime rendered with random
//! colours, geometry and illumination, anti-aliased by 3x3 supersampling.
//! The family index doubles as a class label for training the small
//! feature-extractor classifier.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Smooth,
    Stripes,
    Checker,
    Shapes,
    Dots,
    Noise,
    Rings,
    Hatch,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Smooth,
        Family::Stripes,
        Family::Checker,
        Family::Shapes,
        Family::Dots,
        Family::Noise,
        Family::Rings,
        Family::Hatch,
    ];

    pub fn label(self) -> usize {
        Family::ALL.iter().position(|f| *f == self).expect("listed")
    }

    pub fn from_label(label: usize) -> Family {
        Family::ALL[label % Family::ALL.len()]
    }
}

type Pattern = Box<dyn Fn(f64, f64) -> f64>;

fn step(edge: f64, x: f64) -> f64 {
    if x < edge { 0.0 } else { 1.0 }
}

fn pattern(family: Family, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Pattern {
    let (hf, wf) = (h as f64, w as f64);
    match family {
        Family::Smooth => {
            let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(2..5))
                .map(|_| {
                    (
                        rng.random_range(0.0..hf),
                        rng.random_range(0.0..wf),
                        rng.random_range(0.15..0.45) * hf.max(wf),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let gy = rng.random_range(-1.0..1.0) / hf;
            let gx = rng.random_range(-1.0..1.0) / wf;
            Box::new(move |y, x| {
                let mut v = 0.5 + 0.5 * (gy * y + gx * x);
                for &(cy, cx, r, amp) in &blobs {
                    let d2 = ((y - cy).powi(2) + (x - cx).powi(2)) / (r * r);
                    v += 0.4 * amp * (-d2).exp();
                }
                v
            })
        }
        Family::Stripes => {
            let theta = rng.random_range(0.0..PI);
            let period = rng.random_range(3.0..12.0);
            let square = rng.random_bool(0.5);
            let (s, c) = theta.sin_cos();
            Box::new(move |y, x| {
                let t = (x * c + y * s) * 2.0 * PI / period;
                if square { step(0.0, t.sin()) } else { 0.5 + 0.5 * t.sin() }
            })
        }
        Family::Checker => {
            let theta = rng.random_range(0.0..PI / 2.0);
            let cell = rng.random_range(3.0..10.0);
            let (s, c) = theta.sin_cos();
            Box::new(move |y, x| {
                let u = ((x * c + y * s) / cell).floor() as i64;
                let v = ((-x * s + y * c) / cell).floor() as i64;
                ((u + v).rem_euclid(2)) as f64
            })
        }
        Family::Shapes => {
            let shapes: Vec<(bool, f64, f64, f64, f64, f64, f64)> = (0..rng.random_range(3..8))
                .map(|_| {
                    (
                        rng.random_bool(0.5),
                        rng.random_range(0.0..hf),
                        rng.random_range(0.0..wf),
                        rng.random_range(0.08..0.35) * hf,
                        rng.random_range(0.08..0.35) * wf,
                        rng.random_range(0.0..PI),
                        rng.random_range(0.0..1.0),
                    )
                })
                .collect();
            let bg = rng.random_range(0.0..1.0);
            Box::new(move |y, x| {
                let mut v = bg;
                for &(ellipse, cy, cx, ry, rx, rot, val) in &shapes {
                    let (s, c) = rot.sin_cos();
                    let (dy, dx) = (y - cy, x - cx);
                    let u = (dx * c + dy * s) / rx;
                    let w = (-dx * s + dy * c) / ry;
                    let inside = if ellipse { u * u + w * w <= 1.0 } else { u.abs() <= 1.0 && w.abs() <= 1.0 };
                    if inside {
                        v = val;
                    }
                }
                v
            })
        }
        Family::Dots => {
            let spacing = rng.random_range(5.0..12.0);
            let radius = spacing * rng.random_range(0.15..0.4);
            let jitter = rng.random_range(0.0..0.35) * spacing;
            let seed: u64 = rng.random();
            Box::new(move |y, x| {
                let (gy, gx) = ((y / spacing).floor(), (x / spacing).floor());
                let mut best = f64::INFINITY;
                for oy in -1..=1 {
                    for ox in -1..=1 {
                        let (cy0, cx0) = (gy + oy as f64, gx + ox as f64);
                        let hsh = hash2(cy0 as i64, cx0 as i64, seed);
                        let jy = (hsh & 0xffff) as f64 / 65535.0 - 0.5;
                        let jx = ((hsh >> 16) & 0xffff) as f64 / 65535.0 - 0.5;
                        let cy = (cy0 + 0.5) * spacing + jy * jitter;
                        let cx = (cx0 + 0.5) * spacing + jx * jitter;
                        best = best.min(((y - cy).powi(2) + (x - cx).powi(2)).sqrt());
                    }
                }
                if best <= radius { 1.0 } else { 0.0 }
            })
        }
        Family::Noise => {
            let base = rng.random_range(3.0..8.0);
            let octaves = rng.random_range(2..5);
            let seed: u64 = rng.random();
            Box::new(move |y, x| {
                let mut v = 0.0;
                let mut amp = 0.5;
                let mut freq = 1.0 / base;
                for o in 0..octaves {
                    v += amp * value_noise(y * freq, x * freq, seed.wrapping_add(o as u64));
                    amp *= 0.5;
                    freq *= 2.0;
                }
                v + 0.25
            })
        }
        Family::Rings => {
            let cy = rng.random_range(-0.25..1.25) * hf;
            let cx = rng.random_range(-0.25..1.25) * wf;
            let period = rng.random_range(3.0..10.0);
            Box::new(move |y, x| {
                let r = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
                0.5 + 0.5 * (2.0 * PI * r / period).cos()
            })
        }
        Family::Hatch => {
            let t1 = rng.random_range(0.0..PI);
            let t2 = t1 + rng.random_range(PI / 4.0..3.0 * PI / 4.0);
            let period = rng.random_range(4.0..10.0);
            let width = rng.random_range(0.15..0.35) * period;
            Box::new(move |y, x| {
                let line = |t: f64| {
                    let d = (x * t.cos() + y * t.sin()).rem_euclid(period);
                    d < width
                };
                if line(t1) || line(t2) { 0.0 } else { 1.0 }
            })
        }
    }
}

fn hash2(y: i64, x: i64, seed: u64) -> u64 {
    let mut h = seed ^ (y as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (x as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h
}

fn value_noise(y: f64, x: f64, seed: u64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (sy, sx) = (fy * fy * (3.0 - 2.0 * fy), fx * fx * (3.0 - 2.0 * fx));
    let corner = |dy: i64, dx: i64| (hash2(y0 as i64 + dy, x0 as i64 + dx, seed) & 0xffff) as f64 / 65535.0;
    let top = corner(0, 0) * (1.0 - sx) + corner(0, 1) * sx;
    let bottom = corner(1, 0) * (1.0 - sx) + corner(1, 1) * sx;
    top * (1.0 - sy) + bottom * sy
}

/// Renders one RGB image of `family`.
pub fn render<T: Scalar>(family: Family, height: usize, width: usize, seed: u64) -> Result<Image<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (family.label() as u64).wrapping_mul(0x1234_5678_9ABC));
    let p = pattern(family, height, width, &mut rng);
    let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
    let mut bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
    // keep some contrast between the two palette ends
    if fg.iter().zip(&bg).map(|(a, b)| (a - b).abs()).sum::<f64>() < 0.6 {
        bg = fg.map(|v| 1.0 - v);
    }
    let shade_y = rng.random_range(-0.15..0.15) / height as f64;
    let shade_x = rng.random_range(-0.15..0.15) / width as f64;
    const SS: usize = 3;
    let mut data = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            let mut v = 0.0;
            for sy in 0..SS {
                for sx in 0..SS {
                    let yy = y as f64 + (sy as f64 + 0.5) / SS as f64 - 0.5;
                    let xx = x as f64 + (sx as f64 + 0.5) / SS as f64 - 0.5;
                    v += p(yy, xx).clamp(0.0, 1.0);
                }
            }
            let t = v / (SS * SS) as f64;
            let shade = 1.0 + shade_y * (y as f64 - height as f64 / 2.0) + shade_x * (x as f64 - width as f64 / 2.0);
            for ch in 0..3 {
                data.push(T::from_f64_lossy(((bg[ch] * (1.0 - t) + fg[ch] * t) * shade).clamp(0.0, 1.0)));
            }
        }
    }
    Image::new(height, width, 3, data)
}

/// A labelled synthetic image.
#[derive(Debug, Clone)]
pub struct SynthImage<T> {
    pub id: String,
    pub family: Family,
    pub image: Image<T>,
}

/// `count` images cycling through all families, ids `"{prefix}{index:05}"`.
pub fn corpus<T: Scalar>(prefix: &str, count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<SynthImage<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let family = Family::from_label(i);
            let image = render(family, height, width, rng.random())?;
            Ok(SynthImage { id: format!("{prefix}{i:05}"), family, image })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic_and_valid() {
        for f in Family::ALL {
            let a: Image<f32> = render(f, 24, 20, 5).unwrap();
            let b: Image<f32> = render(f, 24, 20, 5).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.dims(), (24, 20, 3));
        }
    }

    #[test]
    fn families_are_not_flat() {
        for f in Family::ALL {
            let img: Image<f64> = render(f, 32, 32, 11).unwrap();
            let mean = img.mean();
            let var = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / img.data().len() as f64;
            assert!(var > 1e-4, "{f:?} variance {var}");
        }
    }

    #[test]
    fn corpus_labels_cycle() {
        let c = corpus::<f32>("t", 10, 8, 8, 1).unwrap();
        assert_eq!(c[9].family, Family::Stripes);
        assert_eq!(c[3].id, "t00003");
    }
}
