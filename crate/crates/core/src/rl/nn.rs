//! Dense tanh networks with hand-written backprop, plus Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `inputs x outputs`, so a batch forward pass is `x.dot(w) + b`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Uniform in ±1/sqrt(fan_in), scaled by `gain`; zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain / (inputs as f64).sqrt();
        let w = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..=bound));
        Self { w, b: Array1::zeros(outputs) }
    }

    pub fn zeros_like(&self) -> Self {
        Self { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.raw_dim()) }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Multi-layer perceptron; tanh after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Activations kept from a forward pass, input first.
pub struct ForwardCache {
    acts: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { out_gain } else { 1.0 };
                Linear::init(sizes[i], sizes[i + 1], gain, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).1
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (ForwardCache, Array2<f64>) {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.w) + &l.b;
            if i < last {
                z.mapv_inplace(f64::tanh);
                acts.push(z);
            } else {
                return (ForwardCache { acts }, z);
            }
        }
        unreachable!("at least one layer")
    }

    /// Gradients of a scalar loss given `d_out = dL/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> Vec<Linear> {
        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let input = &cache.acts[i];
            grads.push(Linear { w: input.t().dot(&delta), b: delta.sum_axis(Axis(0)) });
            if i > 0 {
                let mut d_in = delta.dot(&self.layers[i].w.t());
                // input is tanh output: d tanh = 1 - y^2
                d_in.zip_mut_with(input, |d, &y| *d *= 1.0 - y * y);
                delta = d_in;
            }
        }
        grads.reverse();
        grads
    }

    pub fn zeros_like(&self) -> Vec<Linear> {
        self.layers.iter().map(Linear::zeros_like).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter count mismatch");
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

/// Row-major weights then bias, layer by layer.
pub fn flatten(layers: &[Linear]) -> Vec<f64> {
    layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied()).collect()
}

pub fn grad_norm(grads: &[Linear]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.w.iter().chain(g.b.iter()))
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Scales gradients in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Linear], max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        for g in grads.iter_mut() {
            g.w.mapv_inplace(|v| v * s);
            g.b.mapv_inplace(|v| v * s);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Linear>,
    pub v: Vec<Linear>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-5, step: 0, m: net.zeros_like(), v: net.zeros_like() }
    }

    pub fn apply(&mut self, net: &mut Mlp, grads: &[Linear]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        };
        for (((layer, g), m), v) in net.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut layer.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}
