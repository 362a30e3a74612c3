//! Dense feed-forward networks with exact backpropagation.
//!
//! Layers compute `A = act(X * W^T + b)` over row-major batches. `backward`
//! returns the exact gradient of `sum_batch <upstream_row, output_row>`
//! with respect to every weight and bias, plus the gradient with respect to
//! the input batch so losses can flow through one network into another.
//! A central-difference checker ([`finite_diff_grad`]) is the reference
//! oracle the analytic path is tested against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Elementwise nonlinearity of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z` whose activation value was `a`.
    /// The relu subgradient at exactly 0 is taken as 0.
    pub fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }
}

/// One dense layer: `out_dim x in_dim` weights, per-output bias, activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    weights: Mat<T>,
    bias: Vec<T>,
    activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    /// Wraps explicit parameters; `weights` is `out_dim x in_dim`.
    pub fn new(weights: Mat<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::ShapeMismatch(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Mat<T> {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Mat<T> {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }
}

/// A stack of dense layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Seeded uniform initialization.
    ///
    /// `dims` lists layer widths input-first (so `[3, 5, 1]` is a 3-input,
    /// one-hidden-layer, scalar-output network); `activations` has one entry
    /// per weight layer. Weights are drawn uniformly from
    /// `[-sqrt(6 / (in + out)), sqrt(6 / (in + out)))` in row-major order,
    /// biases start at zero. Equal seeds give identical networks.
    pub fn init(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least an input and an output dimension".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter("layer dimensions must be >= 1".into()));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} activations for {} weight layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (w, &activation) in dims.windows(2).zip(activations) {
            let (in_dim, out_dim) = (w[0], w[1]);
            let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let data = (0..in_dim * out_dim)
                .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
                .collect();
            layers.push(DenseLayer {
                weights: Mat::from_vec(out_dim, in_dim, data)?,
                bias: vec![T::zero(); out_dim],
                activation,
            });
        }
        Ok(Mlp { layers })
    }

    /// Builds a network from explicit layers, checking the dimension chain.
    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// Runs the batch through every layer, keeping pre- and post-activation
    /// values for backpropagation.
    pub fn forward(&self, batch: &Mat<T>) -> Result<ForwardTrace<T>> {
        if batch.cols() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "batch width {} does not match network input {}",
                batch.cols(),
                self.in_dim()
            )));
        }
        if !batch.is_finite() {
            return Err(Error::NonFinite("forward input batch".into()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = batch;
        for layer in &self.layers {
            let mut z = current.matmul_nt(&layer.weights);
            z.add_row_bias(&layer.bias);
            let a = z.map(|v| layer.activation.apply(v));
            pre.push(z);
            post.push(a);
            current = post.last().expect("just pushed");
        }
        Ok(ForwardTrace {
            input: batch.clone(),
            pre,
            post,
        })
    }

    /// Exact gradients of `sum_batch <upstream_row, output_row>`.
    ///
    /// Returns per-layer weight and bias gradients plus the gradient with
    /// respect to the input batch. Callers fold any loss scaling (such as
    /// `1/n` for batch means) into `upstream`.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        upstream: &Mat<T>,
    ) -> Result<(GradientSet<T>, Mat<T>)> {
        if trace.pre.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "trace has {} layers, network has {}",
                trace.pre.len(),
                self.layers.len()
            )));
        }
        let out = trace.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(Error::ShapeMismatch(format!(
                "upstream is {}x{}, output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                out.rows(),
                out.cols()
            )));
        }

        let mut grads = vec![
            LayerGradient {
                weights: Mat::zeros(0, 0),
                bias: Vec::new(),
            };
            self.layers.len()
        ];
        let mut delta = hadamard_derivative(
            upstream,
            &trace.pre[self.layers.len() - 1],
            &trace.post[self.layers.len() - 1],
            self.layers[self.layers.len() - 1].activation,
        );
        let mut input_grad = None;
        for k in (0..self.layers.len()).rev() {
            let x_k = if k == 0 {
                &trace.input
            } else {
                &trace.post[k - 1]
            };
            grads[k] = LayerGradient {
                weights: delta.matmul_tn(x_k),
                bias: delta.col_sums(),
            };
            let upstream_prev = delta.matmul_nn(&self.layers[k].weights);
            if k == 0 {
                input_grad = Some(upstream_prev);
            } else {
                delta = hadamard_derivative(
                    &upstream_prev,
                    &trace.pre[k - 1],
                    &trace.post[k - 1],
                    self.layers[k - 1].activation,
                );
            }
        }
        Ok((
            GradientSet { layers: grads },
            input_grad.expect("loop visits layer 0"),
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("cannot parse network json: {e}")))
    }
}

fn hadamard_derivative<T: Scalar>(
    upstream: &Mat<T>,
    z: &Mat<T>,
    a: &Mat<T>,
    activation: Activation,
) -> Mat<T> {
    let mut out = upstream.clone();
    for ((o, &zv), &av) in out.data_mut().iter_mut().zip(z.data()).zip(a.data()) {
        *o = *o * activation.derivative(zv, av);
    }
    out
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    input: Mat<T>,
    pre: Vec<Mat<T>>,
    post: Vec<Mat<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Final activations, one row per batch instance.
    pub fn output(&self) -> &Mat<T> {
        self.post.last().expect("trace always has layers")
    }
}

/// Per-layer parameter gradients, shaped exactly like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub layers: Vec<LayerGradient<T>>,
}

/// Gradient block of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient<T> {
    pub weights: Mat<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        GradientSet {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Mat::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![T::zero(); l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn congruent_with(&self, mlp: &Mlp<T>) -> bool {
        self.layers.len() == mlp.layers.len()
            && self.layers.iter().zip(&mlp.layers).all(|(g, l)| {
                g.weights.rows() == l.out_dim()
                    && g.weights.cols() == l.in_dim()
                    && g.bias.len() == l.out_dim()
            })
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.is_finite() && g.bias.iter().all(|b| b.is_finite()))
    }

    /// Elementwise sum; shapes must agree.
    pub fn add_assign(&mut self, other: &GradientSet<T>) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch("gradient layer counts differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.rows() != b.weights.rows()
                || a.weights.cols() != b.weights.cols()
                || a.bias.len() != b.bias.len()
            {
                return Err(Error::ShapeMismatch("gradient blocks differ in shape".into()));
            }
            for (x, &y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                *x += y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Largest absolute entry, for convergence probes.
    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for g in &self.layers {
            for &x in g.weights.data().iter().chain(&g.bias) {
                m = m.max(x.abs());
            }
        }
        m
    }
}

/// Central finite-difference gradient of an arbitrary scalar loss.
///
/// For every parameter p the loss is evaluated at `p + eps` and `p - eps`
/// and the slope `(L+ - L-) / (2 eps)` recorded. Quadratic cost in the
/// parameter count; this is a test oracle, not a training path.
pub fn finite_diff_grad<T: Scalar>(
    mlp: &Mlp<T>,
    loss: impl Fn(&Mlp<T>) -> Result<T>,
    eps: T,
) -> Result<GradientSet<T>> {
    if !(eps.is_finite() && eps > T::zero()) {
        return Err(Error::InvalidParameter("finite-difference eps must be positive".into()));
    }
    let mut work = mlp.clone();
    let mut out = GradientSet::zeros_like(mlp);
    let two = T::from_f64_lossy(2.0);
    for l in 0..mlp.layers.len() {
        let n_params = mlp.layers[l].weights.data().len() + mlp.layers[l].bias.len();
        for i in 0..n_params {
            let original = param_get(&work, l, i);
            param_set(&mut work, l, i, original + eps);
            let plus = loss(&work)?;
            param_set(&mut work, l, i, original - eps);
            let minus = loss(&work)?;
            param_set(&mut work, l, i, original);
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(Error::NonFinite("finite-difference loss evaluation".into()));
            }
            param_set_grad(&mut out, l, i, (plus - minus) / (two * eps));
        }
    }
    Ok(out)
}

// Flat parameter indexing (weights first, then bias) for the checker.
fn param_get<T: Scalar>(net: &Mlp<T>, layer: usize, idx: usize) -> T {
    let l = &net.layers[layer];
    let nw = l.weights.data().len();
    if idx < nw {
        l.weights.data()[idx]
    } else {
        l.bias[idx - nw]
    }
}

fn param_set<T: Scalar>(net: &mut Mlp<T>, layer: usize, idx: usize, value: T) {
    let l = &mut net.layers[layer];
    let nw = l.weights.data().len();
    if idx < nw {
        l.weights.data_mut()[idx] = value;
    } else {
        l.bias[idx - nw] = value;
    }
}

fn param_set_grad<T: Scalar>(grads: &mut GradientSet<T>, layer: usize, idx: usize, value: T) {
    let g = &mut grads.layers[layer];
    let nw = g.weights.data().len();
    if idx < nw {
        g.weights.data_mut()[idx] = value;
    } else {
        g.bias[idx - nw] = value;
    }
}

// Serialization goes through a flat representation so files stay readable
// and loads re-validate shapes.
#[derive(Serialize, Deserialize)]
struct LayerRepr<T> {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    /// Row-major `out_dim x in_dim` weight buffer.
    weights: Vec<T>,
    bias: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr<T> {
    layers: Vec<LayerRepr<T>>,
}

impl<T: Scalar> Serialize for Mlp<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MlpRepr {
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr {
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    activation: l.activation,
                    weights: l.weights.data().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Mlp<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MlpRepr::<T>::deserialize(deserializer)?;
        let mut layers = Vec::with_capacity(repr.layers.len());
        for (k, l) in repr.layers.into_iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim {
                return Err(serde::de::Error::custom(format!(
                    "layer {k}: {} weights for a {}x{} matrix",
                    l.weights.len(),
                    l.out_dim,
                    l.in_dim
                )));
            }
            let weights = Mat::from_vec(l.out_dim, l.in_dim, l.weights)
                .map_err(serde::de::Error::custom)?;
            layers.push(
                DenseLayer::new(weights, l.bias, l.activation).map_err(serde::de::Error::custom)?,
            );
        }
        Mlp::from_layers(layers).map_err(serde::de::Error::custom)
    }
}
