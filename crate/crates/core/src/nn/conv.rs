//! Stride-1, same-padding 2-D convolution via im2col + GEMM.

use rand::Rng;

use crate::scalar::{gemm, Scalar, Trans};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `out_ch x in_ch x kernel x kernel`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "only odd kernels keep `same` padding symmetric");
        Self {
            in_ch,
            out_ch,
            kernel,
            weight: vec![T::zero(); out_ch * in_ch * kernel * kernel],
            bias: vec![T::zero(); out_ch],
        }
    }

    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init_uniform<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let mut conv = Self::zeros(in_ch, out_ch, kernel);
        let bound = 1.0 / ((in_ch * kernel * kernel) as f64).sqrt();
        for w in conv.weight.iter_mut().chain(conv.bias.iter_mut()) {
            *w = T::from_f64_lossy(rng.random_range(-bound..bound));
        }
        conv
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_ch, self.out_ch, self.kernel)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    #[inline]
    fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    /// Weights of output filter `k`, flattened over input channels and window.
    pub fn filter(&self, k: usize) -> &[T] {
        let len = self.col_rows();
        &self.weight[k * len..(k + 1) * len]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.in_ch, "conv input channels");
        let hw = x.plane();
        let rows = self.col_rows();
        let mut out = Tensor::zeros(x.n, self.out_ch, x.h, x.w);
        let mut cols = vec![T::zero(); rows * hw];
        for i in 0..x.n {
            let y = out.sample_mut(i);
            for (o, chunk) in y.chunks_mut(hw).enumerate() {
                chunk.fill(self.bias[o]);
            }
            if self.kernel == 1 {
                gemm(self.out_ch, rows, hw, T::one(), &self.weight, Trans::No, x.sample(i), Trans::No, T::one(), y);
            } else {
                im2col(x.sample(i), x.c, x.h, x.w, self.kernel, &mut cols);
                gemm(self.out_ch, rows, hw, T::one(), &self.weight, Trans::No, &cols, Trans::No, T::one(), y);
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` (when given) and returns
    /// the input gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        mut grad: Option<&mut Conv2d<T>>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        assert_eq!(dy.c, self.out_ch);
        assert_eq!([x.n, x.h, x.w], [dy.n, dy.h, dy.w]);
        let hw = x.plane();
        let rows = self.col_rows();
        let mut cols = vec![T::zero(); if grad.is_some() { rows * hw } else { 0 }];
        let mut dcols = vec![T::zero(); if need_input_grad { rows * hw } else { 0 }];
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
        for i in 0..x.n {
            let g = dy.sample(i);
            if let Some(grad) = grad.as_deref_mut() {
                for (o, chunk) in g.chunks(hw).enumerate() {
                    let s: T = chunk.iter().copied().sum();
                    grad.bias[o] += s;
                }
                let xs = x.sample(i);
                let col_src: &[T] = if self.kernel == 1 {
                    xs
                } else {
                    im2col(xs, x.c, x.h, x.w, self.kernel, &mut cols);
                    &cols
                };
                // dW (out x rows) += dY (out x hw) * cols^T (hw x rows)
                gemm(self.out_ch, hw, rows, T::one(), g, Trans::No, col_src, Trans::Yes, T::one(), &mut grad.weight);
            }
            if let Some(dx) = dx.as_mut() {
                // dcols (rows x hw) = W^T (rows x out) * dY (out x hw)
                gemm(rows, self.out_ch, hw, T::one(), &self.weight, Trans::Yes, g, Trans::No, T::zero(), &mut dcols);
                let target = dx.sample_mut(i);
                if self.kernel == 1 {
                    target.copy_from_slice(&dcols);
                } else {
                    col2im(&dcols, x.c, x.h, x.w, self.kernel, target);
                }
            }
        }
        dx
    }
}

/// Unfolds a `c x h x w` image into `(c*k*k) x (h*w)` patch columns with
/// zero padding of `k/2`.
pub(crate) fn im2col<T: Scalar>(src: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &src[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * hw;
                let dst = &mut cols[row..row + hw];
                let dx = kx as isize - pad;
                let dy = ky as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    // valid x range: 0 <= x + dx < w
                    let x0 = (-dx).max(0) as usize;
                    let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
                    out[..x0.min(w)].fill(T::zero());
                    if x1 > x0 {
                        let s0 = (x0 as isize + dx) as usize;
                        out[x0..x1].copy_from_slice(&srow[s0..s0 + (x1 - x0)]);
                    }
                    out[x1.max(x0).min(w)..].fill(T::zero());
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub(crate) fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, dst: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    dst.fill(T::zero());
    for ch in 0..c {
        let plane = &mut dst[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * hw;
                let src = &cols[row..row + hw];
                let dx = kx as isize - pad;
                let dy = ky as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
                    if x1 <= x0 {
                        continue;
                    }
                    let s0 = (x0 as isize + dx) as usize;
                    let drow = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    for (d, &g) in drow.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d += g;
                    }
                }
            }
        }
    }
}
