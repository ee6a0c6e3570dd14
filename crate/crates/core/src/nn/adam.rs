use crate::scalar::Scalar;

/// Adam over a fixed list of parameter slices.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(sizes: &[usize]) -> Self {
        Self::with_betas(sizes, 0.9, 0.999)
    }

    pub fn with_betas(sizes: &[usize], beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    /// One update. Slices whose `trainable` flag is false are left untouched,
    /// moments included.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]], trainable: &[bool], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        assert_eq!(trainable.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step_size = T::from_f64_lossy(lr * c2.sqrt() / c1);
        let eps_hat = T::from_f64_lossy(self.eps * c2.sqrt());
        for (i, p) in params.iter_mut().enumerate() {
            if !trainable[i] {
                continue;
            }
            let g = grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                p[j] -= step_size * m[j] / (v[j].sqrt() + eps_hat);
            }
        }
    }
}
