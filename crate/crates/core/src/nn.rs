//! Minimal dense layers with explicit backward passes, plus Adam.
//!
//! Activations are row-major batches: one sample (or node) per row.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Flat views of every trainable tensor, in a fixed order. Gradient holders
/// are values of the same type, so two instances line up tensor by tensor.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= k);
        }
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// `self <- (1 - tau) * self + tau * other`.
    fn soft_update_from(&mut self, other: &Self, tau: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `in x out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to `x`.
    pub fn backward(&self, x: &Array2<f64>, grad_out: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &x.t().dot(grad_out);
        grad.bias += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.weight.t())
    }
}

impl Parameters for Linear {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Linear layers with ReLU between them and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Inputs seen by each layer during a forward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        Self {
            layers: sizes.windows(2).map(|w| Linear::xavier(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            relu_inplace(&mut h);
            h = layer.forward(&h);
        }
        h
    }

    pub fn forward_trace(&self, x: &Array2<f64>) -> (Array2<f64>, MlpTrace) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.clone());
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            relu_inplace(&mut h);
            inputs.push(h.clone());
            h = layer.forward(&h);
        }
        (h, MlpTrace { inputs })
    }

    pub fn backward(&self, trace: &MlpTrace, grad_out: &Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let mut g = grad_out.clone();
        for k in (0..self.layers.len()).rev() {
            g = self.layers[k].backward(&trace.inputs[k], &g, &mut grad.layers[k]);
            if k > 0 {
                // The input of layer k is relu of the previous output.
                g.zip_mut_with(&trace.inputs[k], |gi, &a| {
                    if a <= 0.0 {
                        *gi = 0.0;
                    }
                });
            }
        }
        g
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

pub fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Parameters>(params: &P, lr: f64, eps: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(mlp: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (&mlp.forward(x) * w).sum()
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&[3, 5, 4, 2], &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.7 + j as f64 * 0.3);
        let w = Array2::from_shape_fn((4, 2), |(i, j)| 1.0 + i as f64 * 0.1 - j as f64 * 0.5);

        let (_, trace) = mlp.forward_trace(&x);
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&trace, &w, &mut grad);

        let h = 1e-6;
        let mut probe = mlp.clone();
        for (t, gt) in grad.tensors().iter().enumerate() {
            for i in 0..gt.len() {
                let orig = probe.tensors()[t][i];
                probe.tensors_mut()[t][i] = orig + h;
                let up = loss(&probe, &x, &w);
                probe.tensors_mut()[t][i] = orig - h;
                let down = loss(&probe, &x, &w);
                probe.tensors_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - gt[i]).abs() < 1e-6, "param {t}/{i}: fd {fd} vs {}", gt[i]);
            }
        }
        for i in 0..4 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (loss(&mlp, &xp, &w) - loss(&mlp, &xm, &w)) / (2.0 * h);
                assert!((fd - dx[[i, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn xavier_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Linear::xavier(256, 256, &mut rng);
        let bound = (6.0f64 / 512.0).sqrt();
        assert!(l.weight.iter().all(|w| w.abs() <= bound));
        assert!(l.weight.iter().any(|w| w.abs() > 0.9 * bound));
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = Linear {
            weight: array![[3.0, -2.0]],
            bias: array![1.0, 4.0],
        };
        let mut opt = Adam::new(&p, 0.1, 1e-8);
        for _ in 0..500 {
            let grads = Linear {
                weight: p.weight.mapv(|w| 2.0 * w),
                bias: p.bias.mapv(|b| 2.0 * b),
            };
            opt.step(&mut p, &grads);
        }
        assert!(p.global_norm() < 1e-2, "{:?}", p);
    }

    #[test]
    fn clip_norm_caps_the_global_norm() {
        let mut g = Linear {
            weight: array![[3.0, 0.0]],
            bias: array![0.0, 4.0],
        };
        let before = g.clip_norm(0.5);
        assert_eq!(before, 5.0);
        assert!((g.global_norm() - 0.5).abs() < 1e-12);
    }
}
