//! Dense networks in double precision with hand-written reverse mode,
//! optional layer normalization, and the Adam optimizer.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Relu => u.max(0.0),
            Activation::Tanh => u.tanh(),
            Activation::Identity => u,
        }
    }

    /// Derivative given the pre-activation `u` and the output `a`.
    fn derivative(self, u: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Learned affine map applied after normalizing a hidden vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub norm: Option<LayerNorm>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn zeros_like(&self) -> Layer {
        Layer {
            weights: Array2::zeros(self.weights.raw_dim()),
            biases: Array1::zeros(self.biases.len()),
            norm: self.norm.as_ref().map(|n| LayerNorm {
                gain: Array1::zeros(n.gain.len()),
                bias: Array1::zeros(n.bias.len()),
            }),
            activation: self.activation,
        }
    }
}

/// A stack of dense layers. Gradients and optimizer moments reuse this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParameters {
    pub layers: Vec<Layer>,
}

/// How to build and initialize one layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub output_dim: usize,
    pub activation: Activation,
    pub layer_norm: bool,
    /// Uniform init half-width; `None` uses `1 / sqrt(fan_in)`.
    pub init_scale: Option<f64>,
}

/// Per-layer intermediates of a batched forward pass.
#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    /// Normalized pre-gain values and per-row inverse std, when normalized.
    normalized: Option<(Array2<f64>, Array1<f64>)>,
    pre_activation: Array2<f64>,
    output: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.layers.last().expect("network has layers").output
    }

    /// Pre-activation values of every layer, input side first.
    pub fn pre_activations(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.layers.iter().map(|l| &l.pre_activation)
    }
}

impl MlpParameters {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for spec in specs {
            let scale = spec.init_scale.unwrap_or(1.0 / (fan_in as f64).sqrt());
            let weights = Array2::from_shape_simple_fn((spec.output_dim, fan_in), || rng.random_range(-scale..=scale));
            let biases = Array1::from_shape_simple_fn(spec.output_dim, || rng.random_range(-scale..=scale));
            let norm = spec.layer_norm.then(|| LayerNorm {
                gain: Array1::ones(spec.output_dim),
                bias: Array1::zeros(spec.output_dim),
            });
            layers.push(Layer {
                weights,
                biases,
                norm,
                activation: spec.activation,
            });
            fan_in = spec.output_dim;
        }
        MlpParameters { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn zeros_like(&self) -> Self {
        MlpParameters {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    /// Check that layer shapes chain and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::usage("network has no layers"));
        }
        let mut prev = self.input_dim();
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.output_dim();
            if layer.input_dim() != prev || layer.biases.len() != out {
                return Err(Error::usage(format!("layer {i} shape does not chain")));
            }
            if let Some(n) = &layer.norm {
                if n.gain.len() != out || n.bias.len() != out {
                    return Err(Error::usage(format!("layer {i} normalization shape mismatch")));
                }
            }
            prev = out;
        }
        if self.buffers().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::domain("network has non-finite parameters"));
        }
        Ok(())
    }

    /// Flat views of every parameter tensor, in a fixed order.
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(4 * self.layers.len());
        for layer in &self.layers {
            out.push(layer.weights.as_slice().expect("standard layout"));
            out.push(layer.biases.as_slice().expect("standard layout"));
            if let Some(n) = &layer.norm {
                out.push(n.gain.as_slice().expect("standard layout"));
                out.push(n.bias.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(4 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.biases.as_slice_mut().expect("standard layout"));
            if let Some(n) = &mut layer.norm {
                out.push(n.gain.as_slice_mut().expect("standard layout"));
                out.push(n.bias.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    /// Batched forward pass over rows of `input`, keeping what backward needs.
    pub fn forward_cached(&self, input: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if input.ncols() != self.input_dim() {
            return Err(Error::usage(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights.t());
            z += &layer.biases;
            let normalized = layer.norm.as_ref().map(|n| {
                let (xhat, inv_std) = normalize_rows(&z);
                z = &xhat * &n.gain + &n.bias;
                (xhat, inv_std)
            });
            let act = layer.activation;
            let a = z.mapv(|u| act.apply(u));
            let next = a.clone();
            caches.push(LayerCache {
                input: x,
                normalized,
                pre_activation: z,
                output: a,
            });
            x = next;
        }
        Ok(ForwardCache { layers: caches })
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_dim() {
            return Err(Error::usage(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights.t());
            z += &layer.biases;
            if let Some(n) = &layer.norm {
                let (xhat, _) = normalize_rows(&z);
                z = &xhat * &n.gain + &n.bias;
            }
            let act = layer.activation;
            z.mapv_inplace(|u| act.apply(u));
            x = z;
        }
        Ok(x)
    }

    /// Single-sample forward pass.
    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass. `upstream` is the gradient of the scalar objective with
    /// respect to the network output (already summed/averaged over the batch
    /// as the caller wants). Returns parameter gradients and the input gradient.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> (MlpParameters, Array2<f64>) {
        let (grads, d_input) = self.backward_parts(cache, upstream, true, true);
        (grads.expect("requested"), d_input.expect("requested"))
    }

    /// Parameter gradients only.
    pub fn param_gradients(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> MlpParameters {
        self.backward_parts(cache, upstream, true, false).0.expect("requested")
    }

    /// Input gradient only.
    pub fn input_gradient(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> Array2<f64> {
        self.backward_parts(cache, upstream, false, true).1.expect("requested")
    }

    fn backward_parts(
        &self,
        cache: &ForwardCache,
        upstream: &Array2<f64>,
        want_params: bool,
        want_input: bool,
    ) -> (Option<MlpParameters>, Option<Array2<f64>>) {
        let mut grads = want_params.then(|| self.zeros_like());
        let mut delta = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let c = &cache.layers[i];
            let act = layer.activation;
            ndarray::Zip::from(&mut delta)
                .and(&c.pre_activation)
                .and(&c.output)
                .for_each(|d, &u, &a| *d *= act.derivative(u, a));
            if let (Some(n), Some((xhat, inv_std))) = (&layer.norm, &c.normalized) {
                if let Some(g) = grads.as_mut() {
                    let g = g.layers[i].norm.as_mut().expect("same structure");
                    g.gain = (&delta * xhat).sum_axis(Axis(0));
                    g.bias = delta.sum_axis(Axis(0));
                }
                let dxhat = &delta * &n.gain;
                delta = layer_norm_backward(&dxhat, xhat, inv_std);
            }
            if let Some(g) = grads.as_mut() {
                g.layers[i].weights = delta.t().dot(&c.input).as_standard_layout().into_owned();
                g.layers[i].biases = delta.sum_axis(Axis(0));
            }
            if i > 0 || want_input {
                delta = delta.dot(&layer.weights);
            }
        }
        (grads, want_input.then_some(delta))
    }
}

/// Per-row standardization with population variance.
fn normalize_rows(z: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let width = z.ncols() as f64;
    let mean = z.sum_axis(Axis(1)) / width;
    let centered = z - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / width;
    let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
    let xhat = &centered * &inv_std.view().insert_axis(Axis(1));
    (xhat, inv_std)
}

fn layer_norm_backward(dxhat: &Array2<f64>, xhat: &Array2<f64>, inv_std: &Array1<f64>) -> Array2<f64> {
    let width = dxhat.ncols() as f64;
    let mean_d = dxhat.sum_axis(Axis(1)) / width;
    let mean_dx = (dxhat * xhat).sum_axis(Axis(1)) / width;
    let mut out = dxhat - &mean_d.view().insert_axis(Axis(1));
    out -= &(xhat * &mean_dx.view().insert_axis(Axis(1)));
    out *= &inv_std.view().insert_axis(Axis(1));
    out
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: MlpParameters,
    pub second_moment: MlpParameters,
}

impl Adam {
    pub fn new(params: &MlpParameters) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, params: &mut MlpParameters, grads: &MlpParameters, lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powf(self.step as f64);
        let c2 = 1.0 - b2.powf(self.step as f64);
        let p = params.buffers_mut();
        let g = grads.buffers();
        let m = self.first_moment.buffers_mut();
        let v = self.second_moment.buffers_mut();
        for (((p, g), m), v) in p.into_iter().zip(g).zip(m).zip(v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// `target <- tau * online + (1 - tau) * target` for every parameter.
pub fn soft_update(target: &mut MlpParameters, online: &MlpParameters, tau: f64) {
    for (t, o) in target.buffers_mut().into_iter().zip(online.buffers()) {
        for (t, o) in t.iter_mut().zip(o) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
}
