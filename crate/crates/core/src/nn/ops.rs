//! Parameter-free layers and losses with hand-written backward passes.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `grad` in place where the ReLU output was not positive.
pub fn relu_backward_inplace<T: Scalar>(grad: &mut Tensor<T>, output: &Tensor<T>) {
    for (g, &y) in grad.data.iter_mut().zip(&output.data) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// `(n, c*r*r, h, w) -> (n, c, h*r, w*r)`, channel `c*r*r + i*r + j` feeding
/// sub-pixel `(i, j)`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Tensor<T> {
    assert_eq!(x.c % (r * r), 0, "pixel_shuffle channel count");
    let c = x.c / (r * r);
    let (h, w) = (x.h, x.w);
    let mut out = Tensor::zeros(x.n, c, h * r, w * r);
    let ow = w * r;
    for n in 0..x.n {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let src_c = ch * r * r + i * r + j;
                    let src = &x.data[((n * x.c + src_c) * h) * w..((n * x.c + src_c) * h + h) * w];
                    let base = (n * c + ch) * h * r * ow;
                    for y in 0..h {
                        let drow = base + (y * r + i) * ow + j;
                        for (xx, &v) in src[y * w..(y + 1) * w].iter().enumerate() {
                            out.data[drow + xx * r] = v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Tensor<T> {
    assert!(x.h.is_multiple_of(r) && x.w.is_multiple_of(r), "pixel_unshuffle spatial dims");
    let (h, w) = (x.h / r, x.w / r);
    let oc = x.c * r * r;
    let mut out = Tensor::zeros(x.n, oc, h, w);
    for n in 0..x.n {
        for ch in 0..x.c {
            let base = (n * x.c + ch) * x.h * x.w;
            for i in 0..r {
                for j in 0..r {
                    let dst_c = ch * r * r + i * r + j;
                    let dbase = (n * oc + dst_c) * h * w;
                    for y in 0..h {
                        for xx in 0..w {
                            out.data[dbase + y * w + xx] = x.data[base + (y * r + i) * x.w + xx * r + j];
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2x2 max pooling with stride 2 (odd trailing rows/cols dropped).
/// Returns the pooled tensor and the flat argmax index of every output.
pub fn max_pool2<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.n, x.c, oh, ow);
    let mut arg = vec![0usize; out.data.len()];
    for nc in 0..x.n * x.c {
        let base = nc * x.h * x.w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = base + 2 * y * x.w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * x.w + 2 * xx + dx;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                let o = nc * oh * ow + y * ow + xx;
                out.data[o] = x.data[best];
                arg[o] = best;
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward<T: Scalar>(grad: &Tensor<T>, argmax: &[usize], input_shape: [usize; 4]) -> Tensor<T> {
    let [n, c, h, w] = input_shape;
    let mut dx = Tensor::zeros(n, c, h, w);
    for (&g, &i) in grad.data.iter().zip(argmax) {
        dx.data[i] += g;
    }
    dx
}

/// Mean absolute error and its gradient with respect to `pred`.
///
/// The subgradient at zero residual is taken as zero.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> (f64, Tensor<T>) {
    assert!(pred.same_shape(target), "l1_loss shape mismatch");
    let count = pred.data.len() as f64;
    let inv = T::from_f64_lossy(1.0 / count);
    let mut grad = Tensor::zeros(pred.n, pred.c, pred.h, pred.w);
    let mut total = 0.0f64;
    for ((g, &p), &t) in grad.data.iter_mut().zip(&pred.data).zip(&target.data) {
        let d = p - t;
        total += d.abs().as_f64();
        *g = if d > T::zero() {
            inv
        } else if d < T::zero() {
            -inv
        } else {
            T::zero()
        };
    }
    (total / count, grad)
}

/// Softmax cross-entropy over `logits` (`n x classes`, row-major). Returns the
/// mean loss and the gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], classes: usize, labels: &[usize]) -> (f64, Vec<T>) {
    let n = labels.len();
    assert_eq!(logits.len(), n * classes);
    let mut grad = vec![T::zero(); logits.len()];
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits[i * classes..(i + 1) * classes];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += -(exps[label] / z).ln();
        for (j, e) in exps.iter().enumerate() {
            let p = e / z - if j == label { 1.0 } else { 0.0 };
            grad[i * classes + j] = T::from_f64_lossy(p / n as f64);
        }
    }
    (loss / n as f64, grad)
}
