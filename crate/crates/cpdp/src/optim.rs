//! Seeded minibatching and first-order optimizers.
//!
//! Everything here is deterministic: batch order is a pure function of
//! `(seed, epoch)`, and both optimizers are pure functions of their inputs,
//! so a rerun with equal seeds reproduces parameters bitwise.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GradientSet, Mlp};
use crate::scalar::Scalar;

/// Mixes a base seed with a stream index into an independent sub-seed.
///
/// Splitmix-style finalizer; distinct streams give unrelated generators so
/// parallel draws (source batches, target batches, per-point sweep runs)
/// never share a stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded permutation of `0..n`, distinct per `(seed, epoch)` pair.
pub fn permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Shuffled index batches covering `0..n` exactly once.
///
/// Every batch has `batch_size` indices except possibly the last.
pub fn minibatches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(n >= 1, "minibatches needs at least one instance");
    assert!(batch_size >= 1, "batch size must be at least 1");
    permutation(n, seed, epoch)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Adam hyperparameters.
///
/// The defaults follow common adversarial-training practice: a small
/// learning rate with a reduced first-moment decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps_stab: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParameter(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(self.eps_stab.is_finite() && self.eps_stab > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_stab must be positive, got {}",
                self.eps_stab
            )));
        }
        Ok(())
    }
}

/// Per-parameter Adam moment estimates for one network.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: GradientSet<T>,
    v: GradientSet<T>,
    timestep: u64,
    lr: T,
    beta1: T,
    beta2: T,
    eps_stab: T,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh zeroed moments shaped like `mlp`.
    pub fn new(mlp: &Mlp<T>, hyper: &AdamHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(AdamState {
            m: GradientSet::zeros_like(mlp),
            v: GradientSet::zeros_like(mlp),
            timestep: 0,
            lr: T::from_f64_lossy(hyper.lr),
            beta1: T::from_f64_lossy(hyper.beta1),
            beta2: T::from_f64_lossy(hyper.beta2),
            eps_stab: T::from_f64_lossy(hyper.eps_stab),
        })
    }

    /// Number of steps taken so far.
    pub fn timestep(&self) -> u64 {
        self.timestep
    }
}

fn check_step<T: Scalar>(mlp: &Mlp<T>, grads: &GradientSet<T>) -> Result<()> {
    if !grads.congruent_with(mlp) {
        return Err(Error::ShapeMismatch(
            "gradient set does not match network shape".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient set".into()));
    }
    Ok(())
}

/// Plain gradient descent: `theta <- theta - lr * g`.
pub fn sgd_step<T: Scalar>(mlp: &mut Mlp<T>, grads: &GradientSet<T>, lr: T) -> Result<()> {
    if !(lr.is_finite() && lr > T::zero()) {
        return Err(Error::InvalidParameter("sgd lr must be positive".into()));
    }
    check_step(mlp, grads)?;
    for (layer, g) in mlp.layers_mut().iter_mut().zip(&grads.layers) {
        for (p, &gv) in layer
            .weights_mut()
            .data_mut()
            .iter_mut()
            .zip(g.weights.data())
        {
            *p -= lr * gv;
        }
        for (p, &gv) in layer.bias_mut().iter_mut().zip(&g.bias) {
            *p -= lr * gv;
        }
    }
    Ok(())
}

/// One Adam update with bias-corrected moment estimates.
///
/// Exact recurrences, applied in this order:
/// `t <- t + 1`, `m <- b1 m + (1 - b1) g`, `v <- b2 v + (1 - b2) g^2`,
/// `m_hat = m / (1 - b1^t)`, `v_hat = v / (1 - b2^t)`,
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps_stab)`.
pub fn adam_step<T: Scalar>(
    mlp: &mut Mlp<T>,
    grads: &GradientSet<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    check_step(mlp, grads)?;
    if !state.m.congruent_with(mlp) {
        return Err(Error::ShapeMismatch(
            "adam state does not match network shape".into(),
        ));
    }
    state.timestep += 1;
    let one = T::one();
    let (lr, b1, b2, eps) = (state.lr, state.beta1, state.beta2, state.eps_stab);
    let bc1 = one - b1.powi(state.timestep as i32);
    let bc2 = one - b2.powi(state.timestep as i32);

    let update = move |params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T]| {
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };

    for (((layer, g), ml), vl) in mlp
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m.layers)
        .zip(&mut state.v.layers)
    {
        update(
            layer.weights_mut().data_mut(),
            g.weights.data(),
            ml.weights.data_mut(),
            vl.weights.data_mut(),
        );
        update(layer.bias_mut(), &g.bias, &mut ml.bias, &mut vl.bias);
    }
    Ok(())
}
