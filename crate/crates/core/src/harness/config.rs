//! Experiment configuration as flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional and defaults to the synthetic benchmark; unknown or repeated
//! keys are errors. Lists are comma-separated, variants `;`-separated.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::dbn::{derive_seed, Architecture, FinetuneConfig, FinetuneMode};
use crate::error::{Error, Result};
use crate::harness::synth::SyntheticSpec;
use crate::rbm::{CdConfig, VisibleSampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    LearningCurve,
    PretrainSweep,
    LabeledSizeSweep,
    Transfer,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::LearningCurve => "learning_curve",
            ExperimentKind::PretrainSweep => "pretrain_sweep",
            ExperimentKind::LabeledSizeSweep => "labeled_size_sweep",
            ExperimentKind::Transfer => "transfer",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learning_curve" => Ok(ExperimentKind::LearningCurve),
            "pretrain_sweep" => Ok(ExperimentKind::PretrainSweep),
            "labeled_size_sweep" => Ok(ExperimentKind::LabeledSizeSweep),
            "transfer" => Ok(ExperimentKind::Transfer),
            _ => Err(Error::rejected(format!("unknown experiment kind {s:?}"))),
        }
    }
}

/// One learning-curve run: how the network starts and how it is fine-tuned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub pretrained: bool,
    pub mode: FinetuneMode,
    pub architecture: Architecture,
}

impl Variant {
    pub fn name(&self) -> String {
        format!(
            "{}_{}_{}",
            if self.pretrained { "pretrained" } else { "random" },
            self.mode,
            self.architecture
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let init = if self.pretrained { "pretrained" } else { "random" };
        write!(f, "{init}:{}:{}", self.mode, self.architecture)
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// `pretrained:full:201-100-5` or `random:top:201-5`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [init, mode, arch] = parts[..] else {
            return Err(Error::rejected(format!("variant {s:?} is not init:mode:architecture")));
        };
        let pretrained = match init {
            "pretrained" => true,
            "random" => false,
            _ => return Err(Error::rejected(format!("unknown initialization {init:?}"))),
        };
        Ok(Variant {
            pretrained,
            mode: mode.parse()?,
            architecture: arch.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub architecture: Architecture,
    pub init_scale: f64,
    pub cd: CdConfig,
    pub pretrain_epochs: usize,
    pub finetune: FinetuneConfig,
    /// Histogram CSV; when absent the synthetic generator is used.
    pub dataset: Option<PathBuf>,
    pub synth: SyntheticSpec,
    /// Pre-training dataset of the transfer experiment.
    pub pretrain_dataset: Option<PathBuf>,
    /// Prototype seed of the synthetic transfer source.
    pub transfer_prototype_seed: Option<u64>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub split_seed: Option<u64>,
    pub variants: Vec<Variant>,
    pub epoch_grid: Vec<usize>,
    pub sizes: Vec<usize>,
    pub pretrain_per_category: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let architecture: Architecture = "201-100-5".parse().expect("valid");
        ExperimentConfig {
            kind: ExperimentKind::LearningCurve,
            seed: 0,
            init_scale: 0.01,
            cd: CdConfig {
                learning_rate: 1.0,
                batch_size: 10,
                ..CdConfig::default()
            },
            pretrain_epochs: 200,
            finetune: FinetuneConfig {
                learning_rate: 1.0,
                ..FinetuneConfig::default()
            },
            dataset: None,
            synth: SyntheticSpec::default(),
            pretrain_dataset: None,
            transfer_prototype_seed: None,
            train_per_class: 100,
            test_per_class: 100,
            split_seed: None,
            variants: vec![
                Variant {
                    pretrained: true,
                    mode: FinetuneMode::FullNetwork,
                    architecture: architecture.clone(),
                },
                Variant {
                    pretrained: false,
                    mode: FinetuneMode::FullNetwork,
                    architecture: architecture.clone(),
                },
            ],
            architecture,
            epoch_grid: vec![0, 200],
            sizes: vec![1, 2, 4, 8, 16, 32, 64],
            pretrain_per_category: 100,
        }
    }
}

/// Seeds of the independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub split: u64,
    pub init: u64,
    pub cd: u64,
    pub finetune: u64,
    pub subset: u64,
}

fn parse_list<T: FromStr>(value: &str, sep: char) -> std::result::Result<Vec<T>, T::Err> {
    value
        .split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn join<T: ToString>(items: &[T], sep: &str) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::RejectedInput(msg) => err(format!("{key}: {msg}")),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::rejected(format!("cannot parse {value:?}")))
        }
        fn opt_seed(value: &str) -> Result<Option<u64>> {
            if value == "none" {
                Ok(None)
            } else {
                num(value).map(Some)
            }
        }
        fn list(value: &str) -> Result<Vec<usize>> {
            parse_list(value, ',').map_err(|_| Error::rejected(format!("cannot parse list {value:?}")))
        }
        let path = |v: &str| if v == "none" { None } else { Some(PathBuf::from(v)) };
        match key {
            "kind" => self.kind = value.parse()?,
            "seed" => self.seed = num(value)?,
            "architecture" => self.architecture = value.parse()?,
            "init_scale" => self.init_scale = num(value)?,
            "pretrain_epochs" => self.pretrain_epochs = num(value)?,
            "cd.k" => self.cd.k = num(value)?,
            "cd.learning_rate" => self.cd.learning_rate = num(value)?,
            "cd.momentum" => self.cd.momentum = num(value)?,
            "cd.final_momentum" => self.cd.final_momentum = num(value)?,
            "cd.momentum_switch_epoch" => self.cd.momentum_switch_epoch = num(value)?,
            "cd.weight_decay" => self.cd.weight_decay = num(value)?,
            "cd.batch_size" => self.cd.batch_size = num(value)?,
            "cd.visible_sampling" => {
                self.cd.visible_sampling = match value {
                    "mean_field" => VisibleSampling::MeanField,
                    "binary" => VisibleSampling::Binary,
                    _ => return Err(Error::rejected(format!("unknown visible sampling {value:?}"))),
                }
            }
            "finetune.mode" => self.finetune.mode = value.parse()?,
            "finetune.learning_rate" => self.finetune.learning_rate = num(value)?,
            "finetune.epochs" => self.finetune.epochs = num(value)?,
            "finetune.batch_size" => self.finetune.batch_size = num(value)?,
            "finetune.weight_decay" => self.finetune.weight_decay = num(value)?,
            "dataset" => self.dataset = path(value),
            "pretrain_dataset" => self.pretrain_dataset = path(value),
            "synth.n_classes" => self.synth.n_classes = num(value)?,
            "synth.k" => self.synth.k = num(value)?,
            "synth.samples_per_class" => self.synth.samples_per_class = num(value)?,
            "synth.words_per_image" => self.synth.words_per_image = num(value)?,
            "synth.concentration" => self.synth.concentration = num(value)?,
            "synth.prototype_sparsity" => self.synth.prototype_sparsity = num(value)?,
            "synth.mixing_weight" => self.synth.mixing_weight = num(value)?,
            "synth.prototype_seed" => self.synth.prototype_seed = opt_seed(value)?,
            "synth.background_seed" => self.synth.background_seed = opt_seed(value)?,
            "transfer.prototype_seed" => self.transfer_prototype_seed = opt_seed(value)?,
            "train_per_class" => self.train_per_class = num(value)?,
            "test_per_class" => self.test_per_class = num(value)?,
            "split_seed" => self.split_seed = opt_seed(value)?,
            "variants" => self.variants = parse_list(value, ';')?,
            "epoch_grid" => self.epoch_grid = list(value)?,
            "sizes" => self.sizes = list(value)?,
            "pretrain_per_category" => self.pretrain_per_category = num(value)?,
            _ => return Err(Error::rejected(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Canonical rendering; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let opt = |s: Option<u64>| s.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "none".into())
        };
        let sampling = match self.cd.visible_sampling {
            VisibleSampling::MeanField => "mean_field",
            VisibleSampling::Binary => "binary",
        };
        let entries: Vec<(&str, String)> = vec![
            ("kind", self.kind.to_string()),
            ("seed", self.seed.to_string()),
            ("architecture", self.architecture.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("cd.k", self.cd.k.to_string()),
            ("cd.learning_rate", self.cd.learning_rate.to_string()),
            ("cd.momentum", self.cd.momentum.to_string()),
            ("cd.final_momentum", self.cd.final_momentum.to_string()),
            ("cd.momentum_switch_epoch", self.cd.momentum_switch_epoch.to_string()),
            ("cd.weight_decay", self.cd.weight_decay.to_string()),
            ("cd.batch_size", self.cd.batch_size.to_string()),
            ("cd.visible_sampling", sampling.to_string()),
            ("finetune.mode", self.finetune.mode.to_string()),
            ("finetune.learning_rate", self.finetune.learning_rate.to_string()),
            ("finetune.epochs", self.finetune.epochs.to_string()),
            ("finetune.batch_size", self.finetune.batch_size.to_string()),
            ("finetune.weight_decay", self.finetune.weight_decay.to_string()),
            ("dataset", path(&self.dataset)),
            ("pretrain_dataset", path(&self.pretrain_dataset)),
            ("synth.n_classes", self.synth.n_classes.to_string()),
            ("synth.k", self.synth.k.to_string()),
            ("synth.samples_per_class", self.synth.samples_per_class.to_string()),
            ("synth.words_per_image", self.synth.words_per_image.to_string()),
            ("synth.concentration", self.synth.concentration.to_string()),
            ("synth.prototype_sparsity", self.synth.prototype_sparsity.to_string()),
            ("synth.mixing_weight", self.synth.mixing_weight.to_string()),
            ("synth.prototype_seed", opt(self.synth.prototype_seed)),
            ("synth.background_seed", opt(self.synth.background_seed)),
            ("transfer.prototype_seed", opt(self.transfer_prototype_seed)),
            ("train_per_class", self.train_per_class.to_string()),
            ("test_per_class", self.test_per_class.to_string()),
            ("split_seed", opt(self.split_seed)),
            ("variants", join(&self.variants, "; ")),
            ("epoch_grid", join(&self.epoch_grid, ",")),
            ("sizes", join(&self.sizes, ",")),
            ("pretrain_per_category", self.pretrain_per_category.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    /// SHA-256 of the canonical rendering, as lowercase hex.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn seeds(&self) -> Seeds {
        let s = self.seed;
        Seeds {
            data: s,
            split: self.split_seed.unwrap_or_else(|| derive_seed(s, 10)),
            init: derive_seed(s, 11),
            cd: derive_seed(s, 12),
            finetune: derive_seed(s, 13),
            subset: derive_seed(s, 14),
        }
    }

    /// Checks everything that can be checked before any compute, including
    /// that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.cd.validate()?;
        self.finetune.validate()?;
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::Validation("init_scale must be positive".into()));
        }
        if self.dataset.is_none() {
            self.synth.validate()?;
            if self.train_per_class + self.test_per_class > self.synth.samples_per_class {
                return Err(Error::Validation(format!(
                    "{} train + {} test per class exceeds {} synthetic samples per class",
                    self.train_per_class, self.test_per_class, self.synth.samples_per_class
                )));
            }
            if self.architecture.input_size() != self.synth.k + 1 {
                return Err(Error::Validation(format!(
                    "architecture input {} does not match K + 1 = {}",
                    self.architecture.input_size(),
                    self.synth.k + 1
                )));
            }
            if self.architecture.n_classes() != self.synth.n_classes {
                return Err(Error::Validation("architecture output does not match class count".into()));
            }
        }
        for p in self.dataset.iter().chain(&self.pretrain_dataset) {
            if !p.is_file() {
                return Err(Error::Validation(format!("dataset {} does not exist", p.display())));
            }
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Validation("per-class train and test counts must be positive".into()));
        }
        match self.kind {
            ExperimentKind::LearningCurve => {
                if self.variants.is_empty() {
                    return Err(Error::Validation("no variants requested".into()));
                }
                for v in &self.variants {
                    if v.pretrained && v.architecture.hidden_sizes().is_empty() {
                        return Err(Error::Validation(format!(
                            "variant {v} has no hidden layer to pre-train"
                        )));
                    }
                    if v.architecture.input_size() != self.architecture.input_size()
                        || v.architecture.n_classes() != self.architecture.n_classes()
                    {
                        return Err(Error::Validation(format!(
                            "variant {v} disagrees with the input/output sizes of {}",
                            self.architecture
                        )));
                    }
                }
            }
            ExperimentKind::PretrainSweep => {
                if self.epoch_grid.is_empty() || self.epoch_grid.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::Validation("epoch grid must be non-empty and sorted".into()));
                }
            }
            ExperimentKind::LabeledSizeSweep => {
                if self.sizes.is_empty() || self.sizes.contains(&0) {
                    return Err(Error::Validation("sizes must be non-empty and positive".into()));
                }
                if self.pretrain_per_category > self.train_per_class {
                    return Err(Error::Validation(format!(
                        "pre-training pool of {} per class exceeds {} training samples per class",
                        self.pretrain_per_category, self.train_per_class
                    )));
                }
                if let Some(&s) = self.sizes.iter().find(|&&s| s > self.pretrain_per_category) {
                    return Err(Error::Validation(format!(
                        "size {s} exceeds the pre-training pool of {} per class",
                        self.pretrain_per_category
                    )));
                }
            }
            ExperimentKind::Transfer => {
                if self.dataset.is_some() != self.pretrain_dataset.is_some() {
                    return Err(Error::Validation(
                        "transfer needs both dataset and pretrain_dataset, or neither".into(),
                    ));
                }
            }
        }
        if matches!(self.kind, ExperimentKind::PretrainSweep | ExperimentKind::LabeledSizeSweep | ExperimentKind::Transfer)
            && self.architecture.hidden_sizes().is_empty()
        {
            return Err(Error::Validation("this experiment needs at least one hidden layer".into()));
        }
        Ok(())
    }
}
