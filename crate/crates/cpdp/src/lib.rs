//! Cross-project defect prediction by adversarial feature adaptation.
//!
//! The toolkit trains a generator to map an unlabeled target project's
//! software metrics onto a labeled source project's distribution while a
//! discriminator learns to tell them apart; a Gaussian naive Bayes model
//! fitted on the source then classifies the transformed target instances.
//! Distance-statistics normalization rules, an MMD divergence probe, and an
//! epoch-sweep evaluation harness round out the pipeline.
//!
//! Everything numeric is generic over [`Scalar`] (any float width with the
//! needed trait surface); the `*64`/`*32` aliases below pin the two widths
//! most callers want. All training and evaluation entry points are
//! deterministic functions of their inputs and seeds.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gan;
pub mod linalg;
pub mod nn;
pub mod normrules;
pub mod optim;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases; the default choice.
pub type Mat64 = linalg::Mat<f64>;
pub type ProjectDataset64 = dataset::ProjectDataset<f64>;
pub type Mlp64 = nn::Mlp<f64>;
pub type GanModel64 = gan::GanModel<f64>;
pub type NbModel64 = classifier::NbModel<f64>;

/// Single-precision aliases for memory-bound corpora.
pub type Mat32 = linalg::Mat<f32>;
pub type ProjectDataset32 = dataset::ProjectDataset<f32>;
pub type Mlp32 = nn::Mlp<f32>;
pub type GanModel32 = gan::GanModel<f32>;
pub type NbModel32 = classifier::NbModel<f32>;
