//! Teacher-student machine unlearning.
//!
//! A student initialised from a trained classifier is distilled towards an
//! *incompetent* teacher on the forget set and towards the original
//! (*competent*) model on a sample of the retain set. The crate also ships the
//! retrain-free randomness score (ZRF), a confidence-based membership
//! inference attack, the random-relabel baseline and an experiment harness
//! that wires everything together.
//!
//! Module map:
//!
//! - [`datamodel`]: datasets, forget specifications, partitions, unlearning sets.
//! - [`divergence`]: softmax, KL, JS and activation distance.
//! - [`models`]: hand-written MLP / CNN / LSTM classifiers, Adam, checkpoints.
//! - [`teachers`]: competent and incompetent teacher construction.
//! - [`unlearn`]: the unlearning loop, the amnesiac baseline, sequential requests.
//! - [`metrics`]: ZRF, membership inference, reports.
//! - [`experiment`]: config-driven runs, sweeps, timing and plots.

pub mod datamodel;
pub mod divergence;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod seeds;
pub mod teachers;
pub mod unlearn;

pub use error::{Error, Result};
