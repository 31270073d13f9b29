//! Dense feed-forward networks: seeded initialization, single-sample
//! forward and backward passes with inverted dropout, and a JSON artifact
//! format. Batching is left to the training loops, which accumulate
//! per-sample gradients.

mod adam;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{bce_prob, bce_with_logits, mse_loss};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, Scalar};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Slope [`LEAKY_SLOPE`] below zero.
    LeakyRelu,
    Tanh,
}

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks are drawn from this seed.
    Train(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T: Scalar> {
    layer_sizes: Vec<usize>,
    /// Row-major `out × in` per layer.
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    hidden_activation: Activation,
    output_activation: OutputActivation,
    dropout_p: Vec<T>,
}

/// Serialized form of a [`DenseNet`].
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetArtifact<T> {
    format_version: u32,
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: OutputActivation,
    dropout_p: Vec<T>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
}

impl<T: Scalar> Serialize for DenseNet<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetArtifact {
            format_version: FORMAT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            dropout_p: self.dropout_p.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for DenseNet<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = NetArtifact::<T>::deserialize(d)?;
        if a.format_version != FORMAT_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported network format version {}",
                a.format_version
            )));
        }
        let net = DenseNet {
            layer_sizes: a.layer_sizes,
            weights: a.weights,
            biases: a.biases,
            hidden_activation: a.hidden_activation,
            output_activation: a.output_activation,
            dropout_p: a.dropout_p,
        };
        net.validate().map_err(serde::de::Error::custom)?;
        Ok(net)
    }
}

/// Per-layer parameter gradients, shaped like the network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![T::zero(); w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn scale(&mut self, k: T) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x = *x * k);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(other.biases.iter()))
        {
            axpy(T::one(), b, a);
        }
    }

    /// Flattened in the same order as [`DenseNet::parameters`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    fn same_shape(&self, net: &DenseNet<T>) -> bool {
        self.weights.len() == net.weights.len()
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.len() == b.len())
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Intermediate values retained by [`DenseNet::forward`] for backprop.
#[derive(Clone, Debug, Default)]
pub struct Cache<T> {
    /// Input of each layer; the last entry is the network output.
    inputs: Vec<Vec<T>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<T>>,
    /// Dropout scale factors per hidden layer (0 or 1/(1-p)); empty when
    /// no dropout was applied.
    masks: Vec<Vec<T>>,
    /// Layer sizes of the producing network.
    sizes: Vec<usize>,
}

impl<T: Scalar> Cache<T> {
    pub fn output(&self) -> &[T] {
        self.inputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, bound: f64) -> T {
    T::of(rng.random_range(-bound..=bound))
}

impl<T: Scalar> DenseNet<T> {
    /// He-uniform weights for ReLU layers, Xavier-uniform otherwise; zero
    /// biases.
    pub fn init(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: OutputActivation,
        dropout_p: &[T],
        seed: u64,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes {layer_sizes:?} need at least two positive entries"
            )));
        }
        let n_layers = layer_sizes.len() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let relu = l + 1 < n_layers && matches!(hidden_activation, Activation::Relu | Activation::LeakyRelu);
            let bound = if relu {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            weights.push((0..fan_in * fan_out).map(|_| uniform(&mut rng, bound)).collect());
            biases.push(vec![T::zero(); fan_out]);
        }
        let net = Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
            dropout_p: dropout_p.to_vec(),
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let n_layers = sizes.len() - 1;
        if self.weights.len() != n_layers || self.biases.len() != n_layers {
            return Err(Error::Shape("parameter count does not match layer sizes".into()));
        }
        for l in 0..n_layers {
            if self.weights[l].len() != sizes[l] * sizes[l + 1] || self.biases[l].len() != sizes[l + 1] {
                return Err(Error::Shape(format!("layer {l} parameters do not chain")));
            }
        }
        if self.dropout_p.len() != n_layers - 1 {
            return Err(Error::Shape(format!(
                "{} dropout rates for {} hidden layers",
                self.dropout_p.len(),
                n_layers - 1
            )));
        }
        if !self.dropout_p.iter().all(|p| *p >= T::zero() && *p < T::one()) {
            return Err(Error::InvalidArgument("dropout rates must lie in [0, 1)".into()));
        }
        if !self.weights.iter().chain(&self.biases).all(|v| v.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn dropout_p(&self) -> &[T] {
        &self.dropout_p
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<T>] {
        &self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// All parameters, layer by layer: weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_parameters(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, network has {}",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            b.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn forward(&self, input: &[T], mode: Mode) -> Result<(Vec<T>, Cache<T>)> {
        let mut cache = Cache::default();
        self.forward_into(input, mode, &mut cache)?;
        Ok((cache.output().to_vec(), cache))
    }

    /// Eval-mode output without keeping a cache around.
    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(input, Mode::Eval)?.0)
    }

    /// Forward pass reusing the buffers of `cache`.
    pub fn forward_into(&self, input: &[T], mode: Mode, cache: &mut Cache<T>) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let n_layers = self.weights.len();
        let use_dropout = matches!(mode, Mode::Train(_)) && self.dropout_p.iter().any(|p| *p > T::zero());
        let mut rng = match mode {
            Mode::Train(seed) if use_dropout => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };

        cache.sizes.clone_from(&self.layer_sizes);
        cache.inputs.resize_with(n_layers + 1, Vec::new);
        cache.pre.resize_with(n_layers, Vec::new);
        cache.masks.resize_with(if use_dropout { n_layers - 1 } else { 0 }, Vec::new);
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(input);

        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (done, rest) = cache.inputs.split_at_mut(l + 1);
            let x = &done[l];
            let z = &mut cache.pre[l];
            z.clear();
            let w = &self.weights[l];
            for o in 0..fan_out {
                z.push(dot(&w[o * fan_in..(o + 1) * fan_in], x) + self.biases[l][o]);
            }
            let a = &mut rest[0];
            a.clear();
            if l + 1 < n_layers {
                match self.hidden_activation {
                    Activation::Relu => a.extend(z.iter().map(|v| v.max(T::zero()))),
                    Activation::LeakyRelu => {
                        let k = T::of(LEAKY_SLOPE);
                        a.extend(z.iter().map(|v| if *v > T::zero() { *v } else { k * *v }))
                    }
                    Activation::Tanh => a.extend(z.iter().map(|v| v.tanh())),
                }
                if let Some(rng) = rng.as_mut() {
                    let p = self.dropout_p[l];
                    let keep_scale = T::one() / (T::one() - p);
                    let mask = &mut cache.masks[l];
                    mask.clear();
                    let pf = p.f64();
                    for v in a.iter_mut() {
                        let m = if rng.random::<f64>() < pf { T::zero() } else { keep_scale };
                        mask.push(m);
                        *v = *v * m;
                    }
                }
            } else {
                match self.output_activation {
                    OutputActivation::Identity => a.extend_from_slice(z),
                    OutputActivation::Tanh => a.extend(z.iter().map(|v| v.tanh())),
                    OutputActivation::Sigmoid => a.extend(z.iter().map(|v| sigmoid(*v))),
                }
            }
        }
        if !cache.output().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(())
    }

    /// Gradients of a scalar loss w.r.t. parameters and input, given the
    /// loss gradient at the output.
    pub fn backward(&self, cache: &Cache<T>, grad_out: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(cache, grad_out, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`backward`](Self::backward) but adds into `grads`.
    /// ReLU's derivative at 0 is taken as 0.
    pub fn backward_into(&self, cache: &Cache<T>, grad_out: &[T], grads: &mut Gradients<T>) -> Result<Vec<T>> {
        let n_layers = self.weights.len();
        if cache.sizes != self.layer_sizes || cache.inputs.len() != n_layers + 1 {
            return Err(Error::Shape("cache was produced by a different network".into()));
        }
        if grad_out.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, network emits {}",
                grad_out.len(),
                self.output_dim()
            )));
        }
        if !grads.same_shape(self) {
            return Err(Error::Shape("gradient buffer does not match network".into()));
        }
        let out = cache.output();
        let mut delta: Vec<T> = match self.output_activation {
            OutputActivation::Identity => grad_out.to_vec(),
            OutputActivation::Tanh => grad_out.iter().zip(out).map(|(g, y)| *g * (T::one() - *y * *y)).collect(),
            OutputActivation::Sigmoid => grad_out.iter().zip(out).map(|(g, y)| *g * *y * (T::one() - *y)).collect(),
        };
        let mut upstream = Vec::new();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let x = &cache.inputs[l];
            let w = &self.weights[l];
            let gw = &mut grads.weights[l];
            for o in 0..fan_out {
                axpy(delta[o], x, &mut gw[o * fan_in..(o + 1) * fan_in]);
            }
            axpy(T::one(), &delta, &mut grads.biases[l]);
            upstream.clear();
            upstream.resize(fan_in, T::zero());
            for o in 0..fan_out {
                axpy(delta[o], &w[o * fan_in..(o + 1) * fan_in], &mut upstream);
            }
            if l == 0 {
                break;
            }
            // back through dropout and the hidden activation of layer l-1
            let z = &cache.pre[l - 1];
            delta.clear();
            delta.extend(upstream.iter().zip(z).enumerate().map(|(i, (g, zi))| {
                let d = match self.hidden_activation {
                    Activation::Relu => {
                        if *zi > T::zero() {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    Activation::LeakyRelu => {
                        if *zi > T::zero() {
                            T::one()
                        } else {
                            T::of(LEAKY_SLOPE)
                        }
                    }
                    Activation::Tanh => {
                        let t = zi.tanh();
                        T::one() - t * t
                    }
                };
                let m = cache.masks.get(l - 1).map_or(T::one(), |m| m[i]);
                *g * d * m
            }));
        }
        Ok(upstream)
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
