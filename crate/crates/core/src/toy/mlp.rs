//! Small fully connected network with exact reverse-mode gradients.

use ndarray::{Array, Array1, Array2, ArrayView2, Axis, Dimension, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Silu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Affine layers with `activation` between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Per-layer intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre_activations: Vec<Array2<f64>>,
}

/// Gradient with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().chain(l.bias.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.mapv_inplace(|g| g * factor);
            l.bias.mapv_inplace(|g| g * factor);
        }
    }

    /// Rescales to `max_norm` when the global norm exceeds it; returns the pre-clip norm.
    pub fn clip_to_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
        .collect()
}

impl Mlp {
    /// Layer sizes `[in, hidden…, out]` with uniform `±1/√fan_in` initialisation.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return invalid(format!("layer sizes must have at least two positive entries, got {sizes:?}"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-bound..bound)),
                    bias: Array1::from_shape_fn(w[1], |_| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return invalid("a network needs at least one layer");
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.nrows() != l.bias.len() {
                return invalid(format!("layer {i}: weight has {} rows but bias has {}", l.weight.nrows(), l.bias.len()));
            }
            if i > 0 && layers[i - 1].weight.nrows() != l.weight.ncols() {
                return invalid(format!("layer {i} input width does not match layer {} output", i - 1));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return invalid(format!("layer {i} has non-finite parameters"));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.weight.nrows())).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return invalid(format!("expected {} parameters, got {}", self.num_params(), params.len()));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return invalid(format!("input width {} does not match network input {}", x.ncols(), self.input_dim()));
        }
        Ok(())
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len() - 1),
        };
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.weight.t()) + &l.bias;
            cache.inputs.push(h);
            if i == last {
                return Ok((z, cache));
            }
            h = z.mapv(|v| self.activation.apply(v));
            cache.pre_activations.push(z);
        }
        unreachable!("loop returns at the last layer")
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| crate::Error::Internal(e.to_string()))?;
        Ok(self.forward(view)?.row(0).to_vec())
    }

    /// Reverse pass for `∂L/∂output = grad_output`; returns parameter
    /// gradients and `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let batch = cache.inputs[0].nrows();
        if grad_output.nrows() != batch || grad_output.ncols() != self.output_dim() {
            return invalid("output gradient shape does not match the forward pass");
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.to_owned();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            grads.push(Layer {
                weight: g.t().dot(&cache.inputs[i]),
                bias: g.sum_axis(Axis(0)),
            });
            let g_in = g.dot(&l.weight);
            g = if i > 0 {
                let act = self.activation;
                let mut gi = g_in;
                gi.zip_mut_with(&cache.pre_activations[i - 1], |gv, z| *gv *= act.derivative(*z));
                gi
            } else {
                g_in
            };
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    /// `self ← (1 − rate)·self + rate·online`.
    pub fn soft_update(&mut self, online: &Mlp, rate: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.weight.zip_mut_with(&o.weight, |tv, ov| *tv = (1.0 - rate) * *tv + rate * ov);
            t.bias.zip_mut_with(&o.bias, |tv, ov| *tv = (1.0 - rate) * *tv + rate * ov);
        }
    }

    pub fn param_distance(&self, other: &Mlp) -> f64 {
        self.to_flat().iter().zip(other.to_flat()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn apply_update(&mut self, delta: &Gradients) {
        for (l, d) in self.layers.iter_mut().zip(&delta.layers) {
            l.weight += &d.weight;
            l.bias += &d.bias;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First-order optimiser with optional global-norm clipping.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    clip_norm: Option<f64>,
    first: Gradients,
    second: Gradients,
    steps: i32,
}

impl Optimizer {
    pub fn new(net: &Mlp, kind: OptimizerKind, lr: f64, clip_norm: Option<f64>) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return invalid(format!("learning rate must be positive, got {lr}"));
        }
        Ok(Self {
            kind,
            lr,
            clip_norm,
            first: net.zero_gradients(),
            second: net.zero_gradients(),
            steps: 0,
        })
    }

    /// Applies one descent step; returns the gradient norm before clipping.
    pub fn step(&mut self, net: &mut Mlp, mut grads: Gradients) -> f64 {
        let norm = match self.clip_norm {
            Some(c) => grads.clip_to_norm(c),
            None => grads.norm(),
        };
        match self.kind {
            OptimizerKind::Sgd => {
                grads.scale(-self.lr);
                net.apply_update(&grads);
            }
            OptimizerKind::Adam => {
                self.steps += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.steps);
                let c2 = 1.0 - ADAM_BETA2.powi(self.steps);
                let lr = self.lr;
                for ((g, (m, v)), p) in grads
                    .layers
                    .iter()
                    .zip(self.first.layers.iter_mut().zip(self.second.layers.iter_mut()))
                    .zip(net.layers.iter_mut())
                {
                    adam_update(&mut p.weight, &mut m.weight, &mut v.weight, &g.weight, lr, c1, c2);
                    adam_update(&mut p.bias, &mut m.bias, &mut v.bias, &g.bias, lr, c1, c2);
                }
            }
        }
        norm
    }
}

fn adam_update<D: Dimension>(
    param: &mut Array<f64, D>,
    first: &mut Array<f64, D>,
    second: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    Zip::from(param).and(first).and(second).and(grad).for_each(|p, m, v, g| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::new(&[3, 5, 2], Activation::Tanh, &mut rng_from_seed(0)).unwrap();
        net.set_flat(&vec![0.0; net.num_params()]).unwrap();
        assert_eq!(net.forward_one(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Layer { weight: Array2::eye(3), bias: Array1::zeros(3) };
        let net = Mlp::from_layers(vec![layer], Activation::Silu).unwrap();
        assert_eq!(net.forward_one(&[0.5, -1.5, 2.0]).unwrap(), vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::new(&[2, 4, 1], Activation::Tanh, &mut rng_from_seed(0)).unwrap();
        assert!(net.forward(array![[1.0, 2.0, 3.0]].view()).is_err());
        let bad = vec![
            Layer { weight: Array2::zeros((4, 2)), bias: Array1::zeros(4) },
            Layer { weight: Array2::zeros((1, 3)), bias: Array1::zeros(1) },
        ];
        assert!(Mlp::from_layers(bad, Activation::Tanh).is_err());
        assert!(Mlp::new(&[2], Activation::Tanh, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn soft_update_contracts_geometrically() {
        let online = Mlp::new(&[2, 8, 1], Activation::Tanh, &mut rng_from_seed(1)).unwrap();
        let mut target = Mlp::new(&[2, 8, 1], Activation::Tanh, &mut rng_from_seed(2)).unwrap();
        let d0 = target.param_distance(&online);
        for _ in 0..10 {
            target.soft_update(&online, 0.1);
        }
        assert!((target.param_distance(&online) - d0 * 0.9f64.powi(10)).abs() < 1e-12);
        target.soft_update(&online, 1.0);
        assert_eq!(target, online);
    }

    #[test]
    fn clipping_caps_norm() {
        let net = Mlp::new(&[2, 3, 1], Activation::Tanh, &mut rng_from_seed(3)).unwrap();
        let mut g = net.zero_gradients();
        g.layers[0].weight.fill(10.0);
        let before = g.clip_to_norm(20.0);
        assert!(before > 20.0);
        assert!((g.norm() - 20.0).abs() < 1e-12);
    }
}
