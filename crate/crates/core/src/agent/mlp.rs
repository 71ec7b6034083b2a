use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected network with tanh hidden layers and a linear output.
/// Parameters are stored flat, layer by layer: weights (row-major,
/// out x in) followed by biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation outputs of every layer, input first.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input")
    }
}

/// Dot product with independent partial sums so the adds can pipeline.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && sizes.iter().all(|&s| s > 0) && params.len() == param_count(sizes))
            .then(|| Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    /// Sets the output layer's weights and biases to zero.
    pub fn zero_output_layer(&mut self) {
        let k = self.sizes.len();
        let last = self.sizes[k - 2] * self.sizes[k - 1] + self.sizes[k - 1];
        let n = self.params.len();
        self.params[n - last..].fill(0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            a = self.layer(&a, off, w[0], w[1], l + 1 < layers);
            off += w[0] * w[1] + w[1];
        }
        a
    }

    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let next = self.layer(acts.last().expect("input"), off, w[0], w[1], l + 1 < layers);
            acts.push(next);
            off += w[0] * w[1] + w[1];
        }
        ForwardCache { acts }
    }

    fn layer(&self, a: &[f64], off: usize, n_in: usize, n_out: usize, hidden: bool) -> Vec<f64> {
        debug_assert_eq!(a.len(), n_in);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (0..n_out)
            .map(|o| {
                let z = dot(&w[o * n_in..(o + 1) * n_in], a) + b[o];
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut delta = grad_out.to_vec();
        let mut off = self.params.len();
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let a = &cache.acts[l];
            let mut prev = vec![0.0; if l > 0 { n_in } else { 0 }];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(a) {
                    *g += d * x;
                }
                grads[off + n_in * n_out + o] += d;
                if l > 0 {
                    let w = &self.params[off + o * n_in..off + (o + 1) * n_in];
                    for (p, w) in prev.iter_mut().zip(w) {
                        *p += w * d;
                    }
                }
            }
            if l > 0 {
                for (p, x) in prev.iter_mut().zip(a) {
                    *p *= 1.0 - x * x;
                }
                delta = prev;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 5, 4, 2], &mut rng);
        let x = [0.3, -0.7, 0.2];
        let w = [1.3, -0.4];
        let loss = |m: &Mlp| m.forward(&x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let mut g = vec![0.0; net.n_params()];
        net.backward(&net.forward_cached(&x), &w, &mut g);
        let h = 1e-5;
        for k in 0..net.n_params() {
            let mut p = net.clone();
            p.params_mut()[k] += h;
            let mut q = net.clone();
            q.params_mut()[k] -= h;
            let fd = (loss(&p) - loss(&q)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8, "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn zeroed_output_layer_gives_zero_output() {
        let mut net = Mlp::new(&[3, 8, 2], &mut ChaCha8Rng::seed_from_u64(2));
        net.zero_output_layer();
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
