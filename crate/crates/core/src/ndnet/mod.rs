//! Minimal dense neural-network core: multilayer perceptrons with manual
//! reverse-mode gradients and an Adam optimizer.
//!
//! Everything downstream (classifier ensemble, actor, critics) is built from
//! the [`Mlp`] type here. Parameters are plain `f64` vectors, forward and
//! backward passes are handwritten loops, and determinism is exact: the same
//! seed and the same call sequence reproduce bit-identical parameters.
//!
//! Shape mismatches are programmer error and panic with a shape report;
//! recoverable failures (file I/O) return `Result`.

mod adam;
mod io;

pub use adam::{AdamState, ScalarAdam};
pub use io::{load_mlp, save_mlp};

use rand::Rng;

/// Element-wise nonlinearity applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    /// max(0, z); subgradient at 0 is defined as 0.
    Relu,
    Identity,
    /// 1 / (1 + exp(-z)), output strictly inside (0, 1).
    Logistic,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
            Activation::Logistic => logistic(z),
        }
    }

    /// Derivative expressed through the post-activation value `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Logistic => a * (1.0 - a),
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
            Activation::Logistic => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            2 => Some(Activation::Logistic),
            _ => None,
        }
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    // Split on sign so the exp never overflows.
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One dense layer: `a = act(W x + b)` with `W` row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// A dense multilayer perceptron. Consecutive layer dimensions chain
/// (`out_k == in_{k+1}`); the constructor enforces this by building from a
/// dimension list.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer parameter gradients, same shapes as the [`Mlp`] they came from.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

/// Post-activation values cached by [`Mlp::trace`]: `acts[0]` is the input,
/// `acts[k]` the output of layer `k-1`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub acts: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds at least the input")
    }
}

impl Mlp {
    /// Builds a network from a dimension chain, e.g. `[4, 64, 64, 1]`.
    /// Hidden layers use rectified-linear activations; the final layer uses
    /// `output_activation`. Weights and biases are drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], output_activation: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims, got {dims:?}");
        assert!(dims.iter().all(|&d| d > 0), "zero-size layer in {dims:?}");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (in_dim, out_dim) = (dims[k], dims[k + 1]);
            let act = if k == dims.len() - 2 { output_activation } else { Activation::Relu };
            let bound = 1.0 / (in_dim as f64).sqrt();
            let mut weights = vec![0.0; in_dim * out_dim];
            for w in &mut weights {
                *w = rng.gen_range(-bound..=bound);
            }
            let mut bias = vec![0.0; out_dim];
            for b in &mut bias {
                *b = rng.gen_range(-bound..=bound);
            }
            layers.push(Layer { weights, bias, in_dim, out_dim, activation: act });
        }
        Mlp { layers }
    }

    /// All-zero parameters; useful for tests and for targets that start blank.
    pub fn zeros(dims: &[usize], output_activation: Activation) -> Self {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut mlp = Mlp::new(dims, output_activation, &mut rng);
        for layer in &mut mlp.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        mlp
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().expect("mlp has layers").in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("mlp has layers").out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Deterministic forward pass. Panics on input length mismatch.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(
            input.len(),
            self.in_dim(),
            "forward: input length {} does not match first-layer in_dim {}",
            input.len(),
            self.in_dim()
        );
        let mut a = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            affine(layer, &a, &mut next);
            for z in &mut next {
                *z = layer.activation.apply(*z);
            }
            std::mem::swap(&mut a, &mut next);
        }
        a
    }

    /// Forward pass that keeps every post-activation for a later backward pass.
    pub fn trace(&self, input: &[f64]) -> ForwardTrace {
        assert_eq!(
            input.len(),
            self.in_dim(),
            "trace: input length {} does not match first-layer in_dim {}",
            input.len(),
            self.in_dim()
        );
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let mut z = Vec::new();
            affine(layer, acts.last().unwrap(), &mut z);
            for v in &mut z {
                *v = layer.activation.apply(*v);
            }
            acts.push(z);
        }
        ForwardTrace { acts }
    }

    /// Reverse-mode gradients from a cached trace. `upstream` is dL/d(output);
    /// returns parameter gradients and dL/d(input). The rectified-linear
    /// subgradient at 0 is 0. Panics on shape mismatch or non-finite upstream.
    pub fn backward_from_trace(&self, trace: &ForwardTrace, upstream: &[f64]) -> (MlpGrads, Vec<f64>) {
        let mut grads = MlpGrads::zeros_like(self);
        let input_grad = self.accumulate_from_trace(trace, upstream, &mut grads);
        (grads, input_grad)
    }

    /// Like [`Mlp::backward_from_trace`] but adds into an existing gradient
    /// accumulator, which is what batched losses want.
    pub fn accumulate_from_trace(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut MlpGrads,
    ) -> Vec<f64> {
        assert_eq!(
            upstream.len(),
            self.out_dim(),
            "backward: upstream gradient length {} does not match output dim {}",
            upstream.len(),
            self.out_dim()
        );
        assert!(
            upstream.iter().all(|g| g.is_finite()),
            "backward: non-finite upstream gradient"
        );
        assert_eq!(trace.acts.len(), self.layers.len() + 1, "trace does not match network depth");

        let mut delta = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let a_out = &trace.acts[k + 1];
            let a_in = &trace.acts[k];
            // dz = dL/da * act'(z)
            for (d, &a) in delta.iter_mut().zip(a_out.iter()) {
                *d *= layer.activation.derivative_from_output(a);
            }
            let g = &mut grads.layers[k];
            for (o, &dz) in delta.iter().enumerate() {
                g.bias[o] += dz;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, &x) in row.iter_mut().zip(a_in.iter()) {
                    *w += dz * x;
                }
            }
            // da_in = W^T dz
            let mut prev = vec![0.0; layer.in_dim];
            for (o, &dz) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, &w) in prev.iter_mut().zip(row.iter()) {
                    *p += w * dz;
                }
            }
            delta = prev;
        }
        delta
    }

    /// Convenience single-shot backward: runs the forward trace internally.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> (MlpGrads, Vec<f64>) {
        let trace = self.trace(input);
        self.backward_from_trace(&trace, upstream)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Polyak blend `self = (1 - tau) * self + tau * other`.
    pub fn blend_from(&mut self, other: &Mlp, tau: f64) {
        assert_eq!(self.layers.len(), other.layers.len(), "blend: depth mismatch");
        for (dst, src) in self.layers.iter_mut().zip(other.layers.iter()) {
            assert_eq!(dst.weights.len(), src.weights.len(), "blend: shape mismatch");
            for (d, s) in dst.weights.iter_mut().zip(src.weights.iter()) {
                *d += tau * (s - *d);
            }
            for (d, s) in dst.bias.iter_mut().zip(src.bias.iter()) {
                *d += tau * (s - *d);
            }
        }
    }
}

/// Four-accumulator dot product; the split lets the optimizer vectorize the
/// reduction despite float non-associativity.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < chunks {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut tail = 0.0;
    while i < a.len() {
        tail += a[i] * b[i];
        i += 1;
    }
    (s0 + s1) + (s2 + s3) + tail
}

#[inline]
fn affine(layer: &Layer, input: &[f64], out: &mut Vec<f64>) {
    debug_assert_eq!(input.len(), layer.in_dim);
    out.clear();
    out.reserve(layer.out_dim);
    for o in 0..layer.out_dim {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        out.push(layer.bias[o] + dot(row, input));
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrads { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= factor);
            l.bias.iter_mut().for_each(|b| *b *= factor);
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGrads, factor: f64) {
        assert_eq!(self.layers.len(), other.layers.len(), "grad add: depth mismatch");
        for (dst, src) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (d, s) in dst.weights.iter_mut().zip(src.weights.iter()) {
                *d += factor * s;
            }
            for (d, s) in dst.bias.iter_mut().zip(src.bias.iter()) {
                *d += factor * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }
}
