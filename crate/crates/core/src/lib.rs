//! Deep belief networks of restricted Boltzmann machines over
//! bag-of-visual-words image histograms.
//!
//! The crate is split along the training pipeline:
//!
//! - [`rbm`]: one RBM layer and the CD-k learning rule.
//! - [`oracle`]: exact enumeration on tiny binary RBMs, used as ground truth.
//! - [`dbn`]: the stacked classifier, greedy pre-training and backprop fine-tuning.
//! - [`features`]: images to normalized visual-word histograms.
//! - [`analysis`]: per-neuron category explicitness.
//! - [`harness`]: experiment drivers, synthetic data and CSV output.

pub mod analysis;
pub mod dbn;
pub mod error;
pub mod features;
pub mod harness;
pub mod oracle;
pub mod rbm;

pub use error::{Error, Result};

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
