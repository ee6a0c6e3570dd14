//! The EDSR-style generator and its backward pass.
//!
//! Layout and parameter names:
//!
//! ```text
//! head.0                      conv C -> F
//! body.{i}.body.0, .body.2    residual block i: conv, ReLU, conv, scaled skip
//! body.{n}                    closing body conv, plus global skip from head
//! tail.0.{2j}                 upsampler conv F -> F*r*r followed by pixel shuffle r
//! tail.1                      output conv F -> C
//! ```
//!
//! Inputs are shifted by -0.5 before the head and outputs by +0.5 after the
//! tail.

use rand::Rng;

use crate::nn::ops::{pixel_shuffle, pixel_unshuffle, relu_backward_inplace, relu_inplace};
use crate::nn::Conv2d;
use crate::scalar::Scalar;
use crate::sr_model::arch::SrArchitecture;
use crate::tensor::Tensor;

const MEAN_SHIFT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SrNet<T> {
    pub arch: SrArchitecture,
    pub head: Conv2d<T>,
    pub blocks: Vec<[Conv2d<T>; 2]>,
    pub body_tail: Conv2d<T>,
    pub upsamplers: Vec<Conv2d<T>>,
    pub tail: Conv2d<T>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache<T> {
    input: Tensor<T>,
    block_in: Vec<Tensor<T>>,
    block_mid: Vec<Tensor<T>>,
    body_in: Tensor<T>,
    up_in: Vec<Tensor<T>>,
    tail_in: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Positivity of every ReLU output; changes when a kink is crossed.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.block_mid.iter().flat_map(|t| t.data.iter().map(|&v| v > T::zero())).collect()
    }
}

impl<T: Scalar> SrNet<T> {
    pub fn new<R: Rng + ?Sized>(arch: SrArchitecture, rng: &mut R) -> Self {
        let f = arch.n_feats;
        let head = Conv2d::init_uniform(arch.channels, f, 3, rng);
        let blocks = (0..arch.n_resblocks)
            .map(|_| [Conv2d::init_uniform(f, f, 3, rng), Conv2d::init_uniform(f, f, 3, rng)])
            .collect();
        let body_tail = Conv2d::init_uniform(f, f, 3, rng);
        let upsamplers = arch.upsample_factors().iter().map(|r| Conv2d::init_uniform(f, f * r * r, 3, rng)).collect();
        let tail = Conv2d::init_uniform(f, arch.channels, 3, rng);
        Self { arch, head, blocks, body_tail, upsamplers, tail }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch,
            head: self.head.zeros_like(),
            blocks: self.blocks.iter().map(|[a, b]| [a.zeros_like(), b.zeros_like()]).collect(),
            body_tail: self.body_tail.zeros_like(),
            upsamplers: self.upsamplers.iter().map(Conv2d::zeros_like).collect(),
            tail: self.tail.zeros_like(),
        }
    }

    /// Every convolution with its layer name, in forward order.
    pub fn layers(&self) -> Vec<(String, &Conv2d<T>)> {
        let mut out = vec![("head.0".to_string(), &self.head)];
        for (i, [a, b]) in self.blocks.iter().enumerate() {
            out.push((format!("body.{i}.body.0"), a));
            out.push((format!("body.{i}.body.2"), b));
        }
        out.push((self.arch.body_output_layer(), &self.body_tail));
        for (j, u) in self.upsamplers.iter().enumerate() {
            out.push((format!("tail.0.{}", 2 * j), u));
        }
        out.push(("tail.1".to_string(), &self.tail));
        out
    }

    pub fn layers_mut(&mut self) -> Vec<(String, &mut Conv2d<T>)> {
        let body_name = self.arch.body_output_layer();
        let mut out = vec![("head.0".to_string(), &mut self.head)];
        for (i, [a, b]) in self.blocks.iter_mut().enumerate() {
            out.push((format!("body.{i}.body.0"), a));
            out.push((format!("body.{i}.body.2"), b));
        }
        out.push((body_name, &mut self.body_tail));
        for (j, u) in self.upsamplers.iter_mut().enumerate() {
            out.push((format!("tail.0.{}", 2 * j), u));
        }
        out.push(("tail.1".to_string(), &mut self.tail));
        out
    }

    pub fn layer(&self, name: &str) -> Option<&Conv2d<T>> {
        self.layers().into_iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Parameter names (`<layer>.weight`, `<layer>.bias`) in a fixed order.
    pub fn param_names(&self) -> Vec<String> {
        self.layers()
            .into_iter()
            .flat_map(|(n, _)| [format!("{n}.weight"), format!("{n}.bias")])
            .collect()
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers().into_iter().flat_map(|(_, c)| [&c.weight[..], &c.bias[..]]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|(_, c)| [&mut c.weight[..], &mut c.bias[..]])
            .collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers()
            .into_iter()
            .flat_map(|(_, c)| [vec![c.out_ch, c.in_ch, c.kernel, c.kernel], vec![c.out_ch]])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|(_, c)| c.param_count()).sum()
    }

    fn shift(x: &Tensor<T>, by: f64) -> Tensor<T> {
        let d = T::from_f64_lossy(by);
        Tensor::from_vec(x.n, x.c, x.h, x.w, x.data.iter().map(|&v| v + d).collect())
    }

    /// Inference forward pass (unclamped output).
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.forward_impl(x, None)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> (Tensor<T>, ForwardCache<T>) {
        let mut cache = ForwardCache {
            input: Tensor::zeros(0, 0, 0, 0),
            block_in: Vec::with_capacity(self.blocks.len()),
            block_mid: Vec::with_capacity(self.blocks.len()),
            body_in: Tensor::zeros(0, 0, 0, 0),
            up_in: Vec::with_capacity(self.upsamplers.len()),
            tail_in: Tensor::zeros(0, 0, 0, 0),
        };
        let y = self.forward_impl(x, Some(&mut cache));
        (y, cache)
    }

    fn forward_impl(&self, x: &Tensor<T>, mut cache: Option<&mut ForwardCache<T>>) -> Tensor<T> {
        assert_eq!(x.c, self.arch.channels, "input channels");
        let x0 = Self::shift(x, -MEAN_SHIFT);
        let head_out = self.head.forward(&x0);
        let res = T::from_f64_lossy(self.arch.residual_scaling);
        let mut r = head_out.clone();
        for [c1, c2] in &self.blocks {
            let mut t = c1.forward(&r);
            relu_inplace(&mut t);
            let mut u = c2.forward(&t);
            u.scale(res);
            u.add_assign(&r);
            if let Some(c) = cache.as_deref_mut() {
                c.block_in.push(std::mem::replace(&mut r, u));
                c.block_mid.push(t);
            } else {
                r = u;
            }
        }
        let mut b = self.body_tail.forward(&r);
        b.add_assign(&head_out);
        let factors = self.arch.upsample_factors();
        let mut u = b;
        let mut up_in = Vec::new();
        for (conv, &f) in self.upsamplers.iter().zip(&factors) {
            let next = pixel_shuffle(&conv.forward(&u), f);
            if cache.is_some() {
                up_in.push(std::mem::replace(&mut u, next));
            } else {
                u = next;
            }
        }
        let y = Self::shift(&self.tail.forward(&u), MEAN_SHIFT);
        if let Some(c) = cache {
            c.input = x0;
            c.body_in = r;
            c.up_in = up_in;
            c.tail_in = u;
        }
        y
    }

    /// Backpropagates `dy` into `grads`. Layers whose flag in `param_grad`
    /// (indexed like [`SrNet::layers`]) is false skip their weight gradients
    /// but still pass gradients through.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Tensor<T>, grads: &mut SrNet<T>, param_grad: &[bool]) {
        let n_layers = self.layers().len();
        assert_eq!(param_grad.len(), n_layers);
        fn step<T: Scalar>(conv: &Conv2d<T>, grad: &mut Conv2d<T>, x: &Tensor<T>, dy: &Tensor<T>, flag: bool) -> Tensor<T> {
            conv.backward(x, dy, flag.then_some(grad), true).expect("input gradient requested")
        }
        let mut idx = n_layers - 1;
        let mut du = step(&self.tail, &mut grads.tail, &cache.tail_in, dy, param_grad[idx]);
        let factors = self.arch.upsample_factors();
        for j in (0..self.upsamplers.len()).rev() {
            idx -= 1;
            let d = pixel_unshuffle(&du, factors[j]);
            du = step(&self.upsamplers[j], &mut grads.upsamplers[j], &cache.up_in[j], &d, param_grad[idx]);
        }
        idx -= 1;
        let db = du;
        let mut dr = step(&self.body_tail, &mut grads.body_tail, &cache.body_in, &db, param_grad[idx]);
        let res = T::from_f64_lossy(self.arch.residual_scaling);
        for i in (0..self.blocks.len()).rev() {
            let (i2, i1) = (idx - 1, idx - 2);
            idx -= 2;
            let [c1, c2] = &self.blocks[i];
            let [g1, g2] = &mut grads.blocks[i];
            let mut ds = dr.clone();
            ds.scale(res);
            let mut dt = step(c2, g2, &cache.block_mid[i], &ds, param_grad[i2]);
            relu_backward_inplace(&mut dt, &cache.block_mid[i]);
            let dri = step(c1, g1, &cache.block_in[i], &dt, param_grad[i1]);
            dr.add_assign(&dri);
        }
        dr.add_assign(&db);
        debug_assert_eq!(idx, 1);
        if param_grad[0] {
            self.head.backward(&cache.input, &dr, Some(&mut grads.head), false);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(scale: usize) -> SrArchitecture {
        SrArchitecture { n_resblocks: 2, n_feats: 4, scale, residual_scaling: 0.5, channels: 3 }
    }

    #[test]
    fn output_shape_scales_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in [2, 3, 4] {
            let net = SrNet::<f32>::new(tiny(s), &mut rng);
            let y = net.forward(&Tensor::zeros(2, 3, 5, 7));
            assert_eq!(y.shape(), [2, 3, 5 * s, 7 * s]);
        }
    }

    #[test]
    fn names_and_counts_agree_with_architecture() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = SrNet::<f32>::new(SrArchitecture::desk(4), &mut rng);
        assert_eq!(net.parameter_count(), SrArchitecture::desk(4).parameter_count());
        let names = net.param_names();
        assert_eq!(names.first().unwrap(), "head.0.weight");
        assert!(names.contains(&"body.7.body.2.bias".to_string()));
        assert!(names.contains(&"body.8.weight".to_string()));
        assert!(names.contains(&"tail.0.2.weight".to_string()));
        assert_eq!(names.last().unwrap(), "tail.1.bias");
    }

    #[test]
    fn train_and_inference_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = SrNet::<f64>::new(tiny(2), &mut rng);
        let x = Tensor::from_vec(1, 3, 4, 4, (0..48).map(|v| (v as f64 * 0.13).sin().abs()).collect());
        let (y, _) = net.forward_train(&x);
        assert_eq!(y, net.forward(&x));
    }
}
