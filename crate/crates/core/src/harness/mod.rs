//! Experiment drivers: configuration, synthetic data, the experiment
//! designs and CSV output.

pub mod config;
pub mod experiments;
pub mod output;
pub mod synth;

pub use config::{ExperimentConfig, ExperimentKind, Variant};
pub use experiments::{
    load_histogram_dataset, run_experiment, run_learning_curve, run_transfer, split_per_class, sweep_labeled_size,
    sweep_pretrain_epochs, Dataset, LearningCurve,
};
pub use synth::{synth_dataset, SyntheticSpec};
