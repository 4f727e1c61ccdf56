//! Dense layers with cached forward passes and explicit backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Elu,
    Softplus,
    Linear,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Linear => z,
        }
    }

    /// Derivative at pre-activation `z` with output `a`.
    pub fn derivative(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => 1.0,
        }
    }
}

/// `a = act(x W + b)` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub activation: Activation,
}

/// Inputs, pre-activations and outputs of one layer on one batch.
pub struct LayerCache {
    pub z: Array2<f64>,
    pub a: Array2<f64>,
}

impl Dense {
    /// Fan-in scaled uniform weights `U(−1/√in, 1/√in)`, zero biases.
    pub fn new<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound));
        Self { w, b: Array1::zeros(outputs), activation }
    }

    pub fn zeros_like(&self) -> Self {
        Self { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.len()), activation: self.activation }
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> LayerCache {
        let z = x.dot(&self.w) + &self.b;
        let act = self.activation;
        let a = z.mapv(|v| act.apply(v));
        LayerCache { z, a }
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input when `need_input` is set.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        cache: &LayerCache,
        mut da: Array2<f64>,
        grad: &mut Dense,
        need_input: bool,
    ) -> Option<Array2<f64>> {
        if self.activation != Activation::Linear {
            let act = self.activation;
            ndarray::Zip::from(&mut da).and(&cache.z).and(&cache.a).for_each(|d, &z, &a| *d *= act.derivative(z, a));
        }
        grad.w += &x.t().dot(&da);
        grad.b += &da.sum_axis(Axis(0));
        need_input.then(|| da.dot(&self.w.t()))
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Forward pass through a stack; returns the per-layer caches.
pub fn stack_forward(layers: &[Dense], x: ArrayView2<f64>) -> Vec<LayerCache> {
    let mut caches: Vec<LayerCache> = Vec::with_capacity(layers.len());
    for layer in layers {
        let cache = match caches.last() {
            None => layer.forward(x),
            Some(prev) => layer.forward(prev.a.view()),
        };
        caches.push(cache);
    }
    caches
}

/// Backward pass through a stack given the gradient of its output.
pub fn stack_backward(
    layers: &[Dense],
    x: ArrayView2<f64>,
    caches: &[LayerCache],
    d_out: Array2<f64>,
    grads: &mut [Dense],
    need_input: bool,
) -> Option<Array2<f64>> {
    let mut d = d_out;
    for i in (0..layers.len()).rev() {
        let input = if i == 0 { x } else { caches[i - 1].a.view() };
        let need = i > 0 || need_input;
        match layers[i].backward(input, &caches[i], d, &mut grads[i], need) {
            Some(dx) => d = dx,
            None => return None,
        }
    }
    Some(d)
}
