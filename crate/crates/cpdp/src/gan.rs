//! Adversarial adaptation of target metrics onto a source distribution.
//!
//! A generator maps target-project feature vectors into the source project's
//! metric space; a discriminator scores vectors as real-source versus
//! generated. The two are trained against each other on the minimax value
//!
//! `V(D, G) = E_real[ln D(x)] + E_fake[ln(1 - D(G(z)))]`
//!
//! with the discriminator ascending and the generator descending. The
//! discriminator loss reported here is `-V`, so the theoretical equilibrium
//! where `D == 1/2` everywhere sits at `d_loss = 2 ln 2` (`V = -2 ln 2`).
//! Probabilities are clamped to `[eps, 1 - eps]` inside every logarithm and
//! gradients are the exact gradients of the clamped loss: zero where the
//! clamp saturates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ProjectDataset;
use crate::error::{Error, Result};
use crate::eval;
use crate::linalg::Mat;
use crate::nn::{Activation, Mlp};
use crate::optim::{adam_step, derive_seed, permutation, AdamHyper, AdamState};
use crate::scalar::Scalar;

const GEN_STREAM: u64 = 1;
const DISC_STREAM: u64 = 2;
const SRC_SHUFFLE_STREAM: u64 = 3;
const TGT_SHUFFLE_STREAM: u64 = 4;

/// Generator/discriminator pair over a fixed feature width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GanModel<T> {
    generator: Mlp<T>,
    discriminator: Mlp<T>,
}

impl<T: Scalar> GanModel<T> {
    /// Pairs two networks, checking the adversarial wiring: the generator
    /// maps F -> F and the discriminator maps F -> 1.
    pub fn new(generator: Mlp<T>, discriminator: Mlp<T>) -> Result<Self> {
        if generator.in_dim() != generator.out_dim() {
            return Err(Error::ShapeMismatch(format!(
                "generator must preserve width, got {} -> {}",
                generator.in_dim(),
                generator.out_dim()
            )));
        }
        if discriminator.in_dim() != generator.out_dim() {
            return Err(Error::ShapeMismatch(format!(
                "discriminator input {} does not match generator output {}",
                discriminator.in_dim(),
                generator.out_dim()
            )));
        }
        if discriminator.out_dim() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "discriminator must emit one probability, got {}",
                discriminator.out_dim()
            )));
        }
        Ok(GanModel {
            generator,
            discriminator,
        })
    }

    pub fn generator(&self) -> &Mlp<T> {
        &self.generator
    }

    pub fn discriminator(&self) -> &Mlp<T> {
        &self.discriminator
    }

    /// Feature width both networks operate on.
    pub fn feature_count(&self) -> usize {
        self.generator.in_dim()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GanModel<T> = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("cannot parse gan model json: {e}")))?;
        GanModel::new(model.generator, model.discriminator)
    }
}

/// Builds the default architecture: relu hidden layers for both networks,
/// identity generator output, sigmoid discriminator output.
pub fn build<T: Scalar>(
    n_features: usize,
    hidden_dims: &[usize],
    seed: u64,
) -> Result<GanModel<T>> {
    build_with_output(n_features, hidden_dims, Activation::Identity, seed)
}

/// [`build`] with an explicit generator output activation, for feature
/// spaces with a known range (relu for nonnegative metrics, sigmoid for
/// min-max normalized ones).
pub fn build_with_output<T: Scalar>(
    n_features: usize,
    hidden_dims: &[usize],
    generator_output: Activation,
    seed: u64,
) -> Result<GanModel<T>> {
    if n_features == 0 {
        return Err(Error::InvalidParameter("n_features must be >= 1".into()));
    }
    let mut gen_dims = vec![n_features];
    gen_dims.extend_from_slice(hidden_dims);
    gen_dims.push(n_features);
    let mut gen_acts = vec![Activation::Relu; hidden_dims.len()];
    gen_acts.push(generator_output);

    let mut disc_dims = vec![n_features];
    disc_dims.extend_from_slice(hidden_dims);
    disc_dims.push(1);
    let mut disc_acts = vec![Activation::Relu; hidden_dims.len()];
    disc_acts.push(Activation::Sigmoid);

    GanModel::new(
        Mlp::init(&gen_dims, &gen_acts, derive_seed(seed, GEN_STREAM))?,
        Mlp::init(&disc_dims, &disc_acts, derive_seed(seed, DISC_STREAM))?,
    )
}

/// Generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    /// `mean ln(1 - D(G(z)))`, descended directly (the minimax form).
    Minimax,
    /// `-mean ln D(G(z))`, the heuristic with stronger early gradients.
    NonSaturating,
}

/// Whether the per-epoch trace includes an MMD probe (quadratic cost).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmdRecording {
    /// Record when the feature width is at most 200.
    Auto,
    On,
    Off,
}

/// Adversarial training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub d_steps_per_g_step: usize,
    pub loss_variant: LossVariant,
    pub optimizer: AdamHyper,
    /// Probability clamp used inside every logarithm.
    pub output_clamp_eps: f64,
    pub record_mmd: MmdRecording,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            epochs: 100,
            batch_size: 32,
            d_steps_per_g_step: 1,
            loss_variant: LossVariant::Minimax,
            optimizer: AdamHyper::default(),
            output_clamp_eps: 1e-7,
            record_mmd: MmdRecording::Auto,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::InvalidParameter(
                "d_steps_per_g_step must be >= 1".into(),
            ));
        }
        if !(self.output_clamp_eps > 0.0 && self.output_clamp_eps <= 0.1) {
            return Err(Error::InvalidParameter(format!(
                "output_clamp_eps must lie in (0, 0.1], got {}",
                self.output_clamp_eps
            )));
        }
        self.optimizer.validate()
    }
}

/// One epoch of the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean discriminator loss over the epoch's discriminator updates.
    pub d_loss: f64,
    /// Mean generator loss over the epoch's generator updates.
    pub g_loss: f64,
    /// Full-dataset discriminator accuracy at threshold 0.5 after the epoch.
    pub d_accuracy: f64,
    /// Divergence probe after the epoch, when recording is enabled.
    pub mmd: Option<f64>,
}

/// Per-epoch training history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    /// CSV with the fixed header `epoch,d_loss,g_loss,d_accuracy,mmd`.
    /// Floats are written in shortest round-trip form; a disabled MMD probe
    /// leaves the field empty.
    pub fn to_csv_string(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("epoch,d_loss,g_loss,d_accuracy,mmd\n");
        for r in &self.epochs {
            let _ = write!(out, "{},{},{},{},", r.epoch, r.d_loss, r.g_loss, r.d_accuracy);
            if let Some(m) = r.mmd {
                let _ = write!(out, "{m}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn clamp_prob<T: Scalar>(p: T, eps: T) -> T {
    p.max(eps).min(T::one() - eps)
}

fn in_band<T: Scalar>(p: T, eps: T) -> bool {
    p > eps && p < T::one() - eps
}

fn check_probs<T: Scalar>(name: &'static str, probs: &[T], eps: T) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::EmptyBatch(name));
    }
    if !(eps > T::zero() && eps < T::from_f64_lossy(0.5)) {
        return Err(Error::InvalidParameter(
            "probability clamp must lie in (0, 0.5)".into(),
        ));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite(name.into()));
    }
    Ok(())
}

/// Discriminator loss `-(mean ln D(real) + mean ln(1 - D(fake)))`.
///
/// This is the negated minimax value `-V`, so discriminator updates descend
/// it. Probabilities are clamped to `[eps, 1 - eps]` inside the logs.
pub fn d_loss<T: Scalar>(d_real: &[T], d_fake: &[T], clamp_eps: T) -> Result<T> {
    check_probs("d_loss real scores", d_real, clamp_eps)?;
    check_probs("d_loss fake scores", d_fake, clamp_eps)?;
    let one = T::one();
    let real_term = d_real
        .iter()
        .map(|&p| clamp_prob(p, clamp_eps).ln())
        .sum::<T>()
        / T::from_f64_lossy(d_real.len() as f64);
    let fake_term = d_fake
        .iter()
        .map(|&q| (one - clamp_prob(q, clamp_eps)).ln())
        .sum::<T>()
        / T::from_f64_lossy(d_fake.len() as f64);
    Ok(-(real_term + fake_term))
}

/// Generator loss under the chosen variant (clamped like [`d_loss`]).
pub fn g_loss<T: Scalar>(d_fake: &[T], variant: LossVariant, clamp_eps: T) -> Result<T> {
    check_probs("g_loss fake scores", d_fake, clamp_eps)?;
    let one = T::one();
    let n = T::from_f64_lossy(d_fake.len() as f64);
    Ok(match variant {
        LossVariant::Minimax => {
            d_fake
                .iter()
                .map(|&q| (one - clamp_prob(q, clamp_eps)).ln())
                .sum::<T>()
                / n
        }
        LossVariant::NonSaturating => {
            -(d_fake
                .iter()
                .map(|&q| clamp_prob(q, clamp_eps).ln())
                .sum::<T>())
                / n
        }
    })
}

// Exact derivatives of the clamped losses with respect to the raw
// discriminator outputs, as n x 1 upstream matrices. Outside the clamp band
// the loss is constant, so the derivative is zero.

fn d_loss_upstream_real<T: Scalar>(p: &[T], eps: T) -> Mat<T> {
    let n = T::from_f64_lossy(p.len() as f64);
    let data = p
        .iter()
        .map(|&pi| {
            if in_band(pi, eps) {
                -T::one() / (n * pi)
            } else {
                T::zero()
            }
        })
        .collect();
    Mat::from_vec(p.len(), 1, data).expect("column vector")
}

fn d_loss_upstream_fake<T: Scalar>(q: &[T], eps: T) -> Mat<T> {
    let one = T::one();
    let n = T::from_f64_lossy(q.len() as f64);
    let data = q
        .iter()
        .map(|&qi| {
            if in_band(qi, eps) {
                one / (n * (one - qi))
            } else {
                T::zero()
            }
        })
        .collect();
    Mat::from_vec(q.len(), 1, data).expect("column vector")
}

fn g_loss_upstream<T: Scalar>(q: &[T], variant: LossVariant, eps: T) -> Mat<T> {
    let one = T::one();
    let n = T::from_f64_lossy(q.len() as f64);
    let data = q
        .iter()
        .map(|&qi| {
            if !in_band(qi, eps) {
                T::zero()
            } else {
                match variant {
                    LossVariant::Minimax => -one / (n * (one - qi)),
                    LossVariant::NonSaturating => -one / (n * qi),
                }
            }
        })
        .collect();
    Mat::from_vec(q.len(), 1, data).expect("column vector")
}

/// Fraction of instances the discriminator classifies correctly at
/// threshold 0.5: source rows should score above it, generated target rows
/// below. A score of exactly 0.5 counts as incorrect.
pub fn discriminator_accuracy<T: Scalar>(
    model: &GanModel<T>,
    source: &ProjectDataset<T>,
    target: &ProjectDataset<T>,
) -> Result<f64> {
    if source.is_empty() && target.is_empty() {
        return Err(Error::EmptyBatch("discriminator_accuracy"));
    }
    let half = T::from_f64_lossy(0.5);
    let mut correct = 0usize;
    if !source.is_empty() {
        let p = model.discriminator.forward(&source.to_matrix())?;
        correct += p.output().data().iter().filter(|&&x| x > half).count();
    }
    if !target.is_empty() {
        let fake = model.generator.forward(&target.to_matrix())?;
        let q = model.discriminator.forward(fake.output())?;
        correct += q.output().data().iter().filter(|&&x| x < half).count();
    }
    Ok(correct as f64 / (source.len() + target.len()) as f64)
}

/// Runs the adversarial loop and returns the trained pair with its trace.
///
/// Each epoch pairs an independently shuffled truncated permutation of
/// source rows with one of target rows (`m = min(n_source, n_target)` each)
/// and walks them in lockstep batches. Per batch the discriminator takes
/// `d_steps_per_g_step` Adam updates on [`d_loss`], then the generator takes
/// one update on [`g_loss`] with gradients flowing through the frozen
/// discriminator. Labels are never read. `epochs == 0` returns the model
/// unchanged with an empty trace. Equal inputs and seeds reproduce the
/// result bitwise.
pub fn train<T: Scalar>(
    model: GanModel<T>,
    source: &ProjectDataset<T>,
    target: &ProjectDataset<T>,
    config: &GanConfig,
) -> Result<(GanModel<T>, TrainingTrace)> {
    config.validate()?;
    if source.is_empty() {
        return Err(Error::EmptyDataset(source.name().to_string()));
    }
    if target.is_empty() {
        return Err(Error::EmptyDataset(target.name().to_string()));
    }
    if source.feature_count() != target.feature_count() {
        return Err(Error::FeatureWidthMismatch {
            source_width: source.feature_count(),
            target_width: target.feature_count(),
        });
    }
    if source.feature_count() != model.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "model is built for {} features, datasets have {}",
            model.feature_count(),
            source.feature_count()
        )));
    }

    let mut trace = TrainingTrace::default();
    if config.epochs == 0 {
        return Ok((model, trace));
    }

    let mut model = model;
    let eps = T::from_f64_lossy(config.output_clamp_eps);
    let mut gen_state = AdamState::new(&model.generator, &config.optimizer)?;
    let mut disc_state = AdamState::new(&model.discriminator, &config.optimizer)?;

    let src_rows = source.to_matrix();
    let tgt_rows = target.to_matrix();
    let m = source.len().min(target.len());
    let src_seed = derive_seed(config.seed, SRC_SHUFFLE_STREAM);
    let tgt_seed = derive_seed(config.seed, TGT_SHUFFLE_STREAM);
    let record_mmd = match config.record_mmd {
        MmdRecording::On => true,
        MmdRecording::Off => false,
        MmdRecording::Auto => source.feature_count() <= 200,
    };

    for epoch in 0..config.epochs {
        let src_perm = permutation(source.len(), src_seed, epoch as u64);
        let tgt_perm = permutation(target.len(), tgt_seed, epoch as u64);
        let mut d_loss_sum = 0.0;
        let mut d_loss_count = 0usize;
        let mut g_loss_sum = 0.0;
        let mut g_loss_count = 0usize;

        for (sb, tb) in src_perm[..m]
            .chunks(config.batch_size)
            .zip(tgt_perm[..m].chunks(config.batch_size))
        {
            let real = src_rows.select_rows(sb);
            let noise = tgt_rows.select_rows(tb);

            // Discriminator phase: the generator is frozen, so the fake
            // batch is computed once.
            let fake = model.generator.forward(&noise)?.output().clone();
            for _ in 0..config.d_steps_per_g_step {
                let tr_real = model.discriminator.forward(&real)?;
                let tr_fake = model.discriminator.forward(&fake)?;
                let p = tr_real.output().data().to_vec();
                let q = tr_fake.output().data().to_vec();
                d_loss_sum += d_loss(&p, &q, eps)?.to_f64_lossy();
                d_loss_count += 1;

                let (mut grads, _) =
                    model
                        .discriminator
                        .backward(&tr_real, &d_loss_upstream_real(&p, eps))?;
                let (fake_grads, _) =
                    model
                        .discriminator
                        .backward(&tr_fake, &d_loss_upstream_fake(&q, eps))?;
                grads.add_assign(&fake_grads)?;
                adam_step(&mut model.discriminator, &grads, &mut disc_state)?;
            }

            // Generator phase: one update through the frozen discriminator.
            let tr_gen = model.generator.forward(&noise)?;
            let tr_disc = model.discriminator.forward(tr_gen.output())?;
            let q = tr_disc.output().data().to_vec();
            g_loss_sum += g_loss(&q, config.loss_variant, eps)?.to_f64_lossy();
            g_loss_count += 1;

            let upstream = g_loss_upstream(&q, config.loss_variant, eps);
            let (_, fake_grad) = model.discriminator.backward(&tr_disc, &upstream)?;
            let (gen_grads, _) = model.generator.backward(&tr_gen, &fake_grad)?;
            adam_step(&mut model.generator, &gen_grads, &mut gen_state)?;
        }

        let d_accuracy = discriminator_accuracy(&model, source, target)?;
        let mmd = if record_mmd {
            let adapted = model.generator.forward(&tgt_rows)?;
            Some(
                eval::mmd_matrices(adapted.output(), &src_rows, eval::Bandwidth::MedianHeuristic)?
                    .to_f64_lossy(),
            )
        } else {
            None
        };

        trace.epochs.push(EpochRecord {
            epoch: epoch + 1,
            d_loss: d_loss_sum / d_loss_count as f64,
            g_loss: g_loss_sum / g_loss_count as f64,
            d_accuracy,
            mmd,
        });
    }

    Ok((model, trace))
}

/// Maps every target instance through the generator, preserving ids,
/// labels, and column names. Deterministic: equal model and input give an
/// identical dataset.
pub fn transform<T: Scalar>(
    model: &GanModel<T>,
    target: &ProjectDataset<T>,
) -> Result<ProjectDataset<T>> {
    if target.feature_count() != model.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "model is built for {} features, target has {}",
            model.feature_count(),
            target.feature_count()
        )));
    }
    if target.is_empty() {
        return Ok(target.clone());
    }
    let out = model.generator.forward(&target.to_matrix())?;
    let rows = (0..target.len())
        .map(|r| out.output().row(r).to_vec())
        .collect();
    target.with_features(rows)
}
