//! The four experiment designs: learning curves, pre-training epoch sweep,
//! labeled-size sweep and transfer pre-training.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dbn::{
    derive_seed, error_rate, finetune_with, init_random, mean_class_accuracy, pretrain_greedy,
    Architecture, DbnClassifier, FinetuneConfig, FinetuneMode,
};
use crate::error::{Error, Result};
use crate::features::dataset::{load_histograms, to_matrix};
use crate::features::HistogramSample;
use crate::harness::config::{ExperimentConfig, ExperimentKind, Variant};
use crate::harness::output::{fmt_f64, write_atomic, CsvDocument, Provenance};
use crate::harness::synth::{synth_dataset, SyntheticSpec};
use crate::rbm::CdConfig;

/// Reference values from the 13-scene benchmark, recorded in output
/// metadata for comparison; the synthetic benchmark does not reproduce them.
pub const REFERENCE_ONE_EPOCH_ERROR: f64 = 0.25;
pub const REFERENCE_FLIP_FRACTIONS: [f64; 5] = [0.482, 0.074, 0.004, 0.0, 0.0];

/// Reads a histogram CSV (see [`crate::features::dataset`]).
pub fn load_histogram_dataset(path: &Path) -> Result<Vec<HistogramSample>> {
    load_histograms(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    /// Labeled samples only; unlabeled rows are dropped.
    pub fn labeled(samples: &[HistogramSample]) -> Result<Self> {
        let kept: Vec<HistogramSample> = samples.iter().filter(|s| s.label.is_some()).cloned().collect();
        let labels = kept.iter().map(|s| s.label.unwrap()).collect();
        Ok(Dataset {
            x: to_matrix(&kept)?,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Disjoint train/test indices, both grouped by ascending class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn note(&self) -> String {
        format!("train={} test={} disjoint=true", self.train.len(), self.test.len())
    }
}

fn by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

/// Per class, shuffles the sample indices with `seed` and takes the first
/// `train_per_class` for training and the next `test_per_class` for testing.
pub fn split_per_class(labels: &[usize], train_per_class: usize, test_per_class: usize, seed: u64) -> Result<Split> {
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut members) in by_class(labels) {
        if members.len() < train_per_class + test_per_class {
            return Err(Error::Validation(format!(
                "class {class} has {} samples, {train_per_class} train + {test_per_class} test requested",
                members.len()
            )));
        }
        members.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64)));
        split.train.extend_from_slice(&members[..train_per_class]);
        split.test.extend_from_slice(&members[train_per_class..train_per_class + test_per_class]);
    }
    let train: HashSet<usize> = split.train.iter().copied().collect();
    if train.len() != split.train.len() || split.test.iter().any(|i| train.contains(i)) {
        return Err(Error::Validation("train/test split overlaps".into()));
    }
    Ok(split)
}

/// Seeded choice of `per_class` indices of each class from `pool`.
fn subset_per_class(pool: &[usize], labels: &[usize], per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let pool_labels: Vec<usize> = pool.iter().map(|&i| labels[i]).collect();
    let mut out = Vec::new();
    for (class, mut members) in by_class(&pool_labels) {
        if members.len() < per_class {
            return Err(Error::Validation(format!(
                "class {class} has {} pooled samples, {per_class} requested",
                members.len()
            )));
        }
        members.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64)));
        out.extend(members[..per_class].iter().map(|&m| pool[m]));
    }
    // Keep pool order, so a subset of the whole pool is the pool itself.
    out.sort_unstable();
    Ok(out)
}

/// Train and test sets of one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub split: Split,
}

fn synthetic_or_file(cfg: &ExperimentConfig, path: Option<&Path>, spec: &SyntheticSpec, seed: u64) -> Result<Vec<HistogramSample>> {
    match path {
        Some(p) => load_histogram_dataset(p),
        None => synth_dataset(spec, seed),
    }
    .and_then(|samples| {
        let dims = samples.first().map(|s| s.values.len()).unwrap_or(0);
        if dims != cfg.architecture.input_size() {
            return Err(Error::Validation(format!(
                "dataset has {dims} dimensions, architecture {} expects {}",
                cfg.architecture,
                cfg.architecture.input_size()
            )));
        }
        if let Some(l) = samples.iter().filter_map(|s| s.label).find(|&l| l >= cfg.architecture.n_classes()) {
            return Err(Error::Validation(format!(
                "label {l} out of range for {} classes",
                cfg.architecture.n_classes()
            )));
        }
        Ok(samples)
    })
}

fn split_dataset(cfg: &ExperimentConfig, samples: &[HistogramSample]) -> Result<Prepared> {
    let all = Dataset::labeled(samples)?;
    let split = split_per_class(&all.labels, cfg.train_per_class, cfg.test_per_class, cfg.seeds().split)?;
    Ok(Prepared {
        train: all.select(&split.train),
        test: all.select(&split.test),
        split,
    })
}

/// Loads or generates the configured dataset and splits it.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let samples = synthetic_or_file(cfg, cfg.dataset.as_deref(), &cfg.synth, cfg.seeds().data)?;
    split_dataset(cfg, &samples)
}

fn provenance(cfg: &ExperimentConfig, split: &Split) -> Provenance {
    Provenance::new(cfg.digest(), cfg.seed)
        .with_note("kind", cfg.kind)
        .with_note("split", split.note())
}

/// Random initialization, followed by greedy pre-training on `pretrain_x`
/// when `pretrain_epochs > 0`. With 0 epochs this is exactly the random
/// initialization.
pub fn initial_model(
    cfg: &ExperimentConfig,
    arch: &Architecture,
    pretrain_x: Option<ArrayView2<f64>>,
    pretrain_epochs: usize,
) -> Result<DbnClassifier> {
    let seeds = cfg.seeds();
    let model = init_random(arch, cfg.init_scale, seeds.init)?;
    match pretrain_x {
        Some(x) if pretrain_epochs > 0 => {
            let cd = CdConfig {
                seed: seeds.cd,
                ..cfg.cd.clone()
            };
            pretrain_greedy(&model, x, pretrain_epochs, &cd)
        }
        _ => Ok(model),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_error: f64,
    pub test_error: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub name: String,
    pub rows: Vec<CurveRow>,
    pub provenance: Provenance,
}

impl LearningCurve {
    pub fn test_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.test_error).collect()
    }

    pub fn final_test_error(&self) -> Option<f64> {
        self.rows.last().map(|r| r.test_error)
    }

    pub fn to_csv(&self) -> CsvDocument {
        let mut doc = CsvDocument::new(&self.provenance, &["epoch", "train_error", "test_error", "train_loss"]);
        for r in &self.rows {
            doc.row([
                r.epoch.to_string(),
                fmt_f64(r.train_error),
                fmt_f64(r.test_error),
                fmt_f64(r.train_loss),
            ]);
        }
        doc
    }
}

/// Fine-tunes `model` on `train`, recording the test error after each epoch.
pub fn curve(
    model: &DbnClassifier,
    train: &Dataset,
    test: &Dataset,
    ft: &FinetuneConfig,
) -> Result<(DbnClassifier, Vec<CurveRow>)> {
    let mut rows = Vec::with_capacity(ft.epochs);
    let (trained, _) = finetune_with(model, train.x.view(), &train.labels, ft, |stats, current| {
        rows.push(CurveRow {
            epoch: stats.epoch,
            train_error: stats.error,
            test_error: error_rate(current, test.x.view(), &test.labels)?,
            train_loss: stats.loss,
        });
        Ok(())
    })?;
    Ok((trained, rows))
}

fn finetune_cfg(cfg: &ExperimentConfig, mode: FinetuneMode) -> FinetuneConfig {
    FinetuneConfig {
        mode,
        seed: cfg.seeds().finetune,
        ..cfg.finetune.clone()
    }
}

/// One learning curve per configured variant. Pre-trained variants of the
/// same architecture share one pre-training run.
pub fn run_learning_curve(cfg: &ExperimentConfig) -> Result<Vec<LearningCurve>> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let mut pretrained: HashMap<Architecture, DbnClassifier> = HashMap::new();
    let mut curves = Vec::with_capacity(cfg.variants.len());
    for v in &cfg.variants {
        let model = if v.pretrained {
            match pretrained.get(&v.architecture) {
                Some(m) => m.clone(),
                None => {
                    let m = initial_model(cfg, &v.architecture, Some(data.train.x.view()), cfg.pretrain_epochs)?;
                    pretrained.insert(v.architecture.clone(), m.clone());
                    m
                }
            }
        } else {
            initial_model(cfg, &v.architecture, None, 0)?
        };
        let (_, rows) = curve(&model, &data.train, &data.test, &finetune_cfg(cfg, v.mode))?;
        curves.push(LearningCurve {
            name: v.name(),
            rows,
            provenance: provenance(cfg, &data.split)
                .with_note("variant", v)
                .with_note("reference_one_epoch_error_13_scenes", REFERENCE_ONE_EPOCH_ERROR),
        });
    }
    Ok(curves)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainSweepRow {
    pub pretrain_epochs: usize,
    pub train_error: f64,
    pub test_error: f64,
    pub mean_class_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSweep {
    pub rows: Vec<PretrainSweepRow>,
    pub provenance: Provenance,
}

impl PretrainSweep {
    pub fn to_csv(&self) -> CsvDocument {
        let columns = ["pretrain_epochs", "train_error", "test_error", "mean_class_accuracy"];
        let mut doc = CsvDocument::new(&self.provenance, &columns);
        for r in &self.rows {
            doc.row([
                r.pretrain_epochs.to_string(),
                fmt_f64(r.train_error),
                fmt_f64(r.test_error),
                fmt_f64(r.mean_class_accuracy),
            ]);
        }
        doc
    }
}

/// Fresh pre-training for each grid point, then identical fine-tuning of
/// the configured architecture.
pub fn sweep_pretrain_epochs(cfg: &ExperimentConfig, epoch_grid: &[usize]) -> Result<PretrainSweep> {
    let cfg = ExperimentConfig {
        kind: ExperimentKind::PretrainSweep,
        epoch_grid: epoch_grid.to_vec(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let data = prepare(&cfg)?;
    let ft = finetune_cfg(&cfg, cfg.finetune.mode);
    let mut rows = Vec::with_capacity(epoch_grid.len());
    for &epochs in epoch_grid {
        let model = initial_model(&cfg, &cfg.architecture, Some(data.train.x.view()), epochs)?;
        let (trained, curve_rows) = curve(&model, &data.train, &data.test, &ft)?;
        let (train_error, test_error) = match curve_rows.last() {
            Some(r) => (r.train_error, r.test_error),
            None => (
                error_rate(&trained, data.train.x.view(), &data.train.labels)?,
                error_rate(&trained, data.test.x.view(), &data.test.labels)?,
            ),
        };
        rows.push(PretrainSweepRow {
            pretrain_epochs: epochs,
            train_error,
            test_error,
            mean_class_accuracy: mean_class_accuracy(&trained, data.test.x.view(), &data.test.labels)?,
        });
    }
    Ok(PretrainSweep {
        rows,
        provenance: provenance(&cfg, &data.split),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSizeRow {
    /// Labeled examples per category.
    pub size: usize,
    pub pretrained_test_error: f64,
    pub control_test_error: f64,
    pub pretrained_mean_class_accuracy: f64,
    pub control_mean_class_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSizeSweep {
    pub rows: Vec<LabeledSizeRow>,
    pub provenance: Provenance,
}

impl LabeledSizeSweep {
    pub fn to_csv(&self) -> CsvDocument {
        let columns = [
            "size",
            "pretrained_test_error",
            "control_test_error",
            "pretrained_mean_class_accuracy",
            "control_mean_class_accuracy",
        ];
        let mut doc = CsvDocument::new(&self.provenance, &columns);
        for r in &self.rows {
            doc.row([
                r.size.to_string(),
                fmt_f64(r.pretrained_test_error),
                fmt_f64(r.control_test_error),
                fmt_f64(r.pretrained_mean_class_accuracy),
                fmt_f64(r.control_mean_class_accuracy),
            ]);
        }
        doc
    }
}

/// Pre-trains once on a pool of `pretrain_per_category` training samples
/// per class, then fine-tunes on seeded subsets of each size. Every size
/// is also fine-tuned from the random initialization as a control. The
/// test set never overlaps the pool.
pub fn sweep_labeled_size(cfg: &ExperimentConfig, sizes: &[usize], pretrain_per_category: usize) -> Result<LabeledSizeSweep> {
    let cfg = ExperimentConfig {
        kind: ExperimentKind::LabeledSizeSweep,
        sizes: sizes.to_vec(),
        pretrain_per_category,
        ..cfg.clone()
    };
    cfg.validate()?;
    let data = prepare(&cfg)?;
    let seeds = cfg.seeds();
    let all: Vec<usize> = (0..data.train.len()).collect();
    let pool = subset_per_class(&all, &data.train.labels, pretrain_per_category, seeds.subset)?;
    let pool_data = data.train.select(&pool);
    let pretrained = initial_model(&cfg, &cfg.architecture, Some(pool_data.x.view()), cfg.pretrain_epochs)?;
    let control = initial_model(&cfg, &cfg.architecture, None, 0)?;
    let ft = finetune_cfg(&cfg, cfg.finetune.mode);

    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let chosen = subset_per_class(&pool, &data.train.labels, size, derive_seed(seeds.subset, size as u64))?;
        let subset = data.train.select(&chosen);
        let mut result = [(0.0, 0.0); 2];
        for (slot, start) in result.iter_mut().zip([&pretrained, &control]) {
            let (trained, _) = curve(start, &subset, &data.test, &ft)?;
            *slot = (
                error_rate(&trained, data.test.x.view(), &data.test.labels)?,
                mean_class_accuracy(&trained, data.test.x.view(), &data.test.labels)?,
            );
        }
        rows.push(LabeledSizeRow {
            size,
            pretrained_test_error: result[0].0,
            control_test_error: result[1].0,
            pretrained_mean_class_accuracy: result[0].1,
            control_mean_class_accuracy: result[1].1,
        });
    }
    Ok(LabeledSizeSweep {
        rows,
        provenance: provenance(&cfg, &data.split).with_note("pretrain_pool", pool.len()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    /// Pre-trained on the source dataset, fine-tuned on the target.
    pub transfer: LearningCurve,
    /// Pre-trained and fine-tuned on the target.
    pub same_set: LearningCurve,
}

/// The source and target datasets of the configured transfer experiment.
///
/// Synthetic target and source share the background distribution but have
/// different class prototypes.
pub fn transfer_datasets(cfg: &ExperimentConfig) -> Result<(Vec<HistogramSample>, Vec<HistogramSample>)> {
    let seeds = cfg.seeds();
    if let (Some(source), Some(target)) = (&cfg.pretrain_dataset, &cfg.dataset) {
        return Ok((load_histogram_dataset(source)?, load_histogram_dataset(target)?));
    }
    let shared_background = Some(cfg.synth.background_seed.unwrap_or(seeds.data));
    let target = SyntheticSpec {
        background_seed: shared_background,
        ..cfg.synth.clone()
    };
    let source = SyntheticSpec {
        background_seed: shared_background,
        prototype_seed: Some(
            cfg.transfer_prototype_seed
                .unwrap_or_else(|| derive_seed(seeds.data, 100)),
        ),
        ..cfg.synth.clone()
    };
    Ok((
        synth_dataset(&source, derive_seed(seeds.data, 101))?,
        synth_dataset(&target, seeds.data)?,
    ))
}

/// Pre-training input drawn from `source`: the training split when every
/// sample is labeled (so identical source and target give identical
/// pre-training data), otherwise every sample.
fn pretrain_pool(cfg: &ExperimentConfig, source: &[HistogramSample]) -> Result<Array2<f64>> {
    if source.iter().all(|s| s.label.is_some()) {
        Ok(split_dataset(cfg, source)?.train.x)
    } else {
        to_matrix(source)
    }
}

/// Transfer pre-training against same-set pre-training with identical
/// initialization and fine-tuning budgets.
pub fn run_transfer(cfg: &ExperimentConfig, source: &[HistogramSample], target: &[HistogramSample]) -> Result<TransferResult> {
    let cfg = ExperimentConfig {
        kind: ExperimentKind::Transfer,
        ..cfg.clone()
    };
    cfg.validate()?;
    let (source_dims, target_dims) = (
        source.first().map(|s| s.values.len()),
        target.first().map(|s| s.values.len()),
    );
    if source_dims != target_dims {
        return Err(Error::Validation(format!(
            "source has {source_dims:?} dimensions, target has {target_dims:?}"
        )));
    }
    if target_dims != Some(cfg.architecture.input_size()) {
        return Err(Error::Validation(format!(
            "target has {target_dims:?} dimensions, architecture expects {}",
            cfg.architecture.input_size()
        )));
    }
    let data = split_dataset(&cfg, target)?;
    let ft = finetune_cfg(&cfg, cfg.finetune.mode);
    let mut curves = Vec::with_capacity(2);
    for (name, pool) in [
        ("transfer", pretrain_pool(&cfg, source)?),
        ("same_set", data.train.x.clone()),
    ] {
        let model = initial_model(&cfg, &cfg.architecture, Some(pool.view()), cfg.pretrain_epochs)?;
        let (_, rows) = curve(&model, &data.train, &data.test, &ft)?;
        curves.push(LearningCurve {
            name: name.to_string(),
            rows,
            provenance: provenance(&cfg, &data.split)
                .with_note("variant", name)
                .with_note("pretrain_samples", pool.nrows()),
        });
    }
    let same_set = curves.pop().unwrap();
    let transfer = curves.pop().unwrap();
    Ok(TransferResult { transfer, same_set })
}

/// Runs the configured experiment and writes its CSV files, plus the
/// canonical config, into `out`. Returns the written paths.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut docs: Vec<(String, CsvDocument)> = Vec::new();
    match cfg.kind {
        ExperimentKind::LearningCurve => {
            for c in run_learning_curve(cfg)? {
                docs.push((format!("curve_{}.csv", c.name), c.to_csv()));
            }
        }
        ExperimentKind::PretrainSweep => {
            docs.push(("pretrain_sweep.csv".into(), sweep_pretrain_epochs(cfg, &cfg.epoch_grid)?.to_csv()));
        }
        ExperimentKind::LabeledSizeSweep => {
            let sweep = sweep_labeled_size(cfg, &cfg.sizes, cfg.pretrain_per_category)?;
            docs.push(("labeled_size_sweep.csv".into(), sweep.to_csv()));
        }
        ExperimentKind::Transfer => {
            let (source, target) = transfer_datasets(cfg)?;
            let result = run_transfer(cfg, &source, &target)?;
            docs.push(("transfer_transfer.csv".into(), result.transfer.to_csv()));
            docs.push(("transfer_same_set.csv".into(), result.same_set.to_csv()));
        }
    }
    let mut written = Vec::with_capacity(docs.len() + 1);
    let config_path = out.join("config.txt");
    write_atomic(&config_path, cfg.to_text().as_bytes())?;
    written.push(config_path);
    for (name, doc) in docs {
        let path = out.join(name);
        doc.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Variant list covering 0 to 3 hidden layers for the configured input and
/// output sizes, each random-init and pre-trained where possible.
pub fn depth_variants(input: usize, hidden: &[usize], classes: usize, mode: FinetuneMode) -> Result<Vec<Variant>> {
    let mut out = Vec::new();
    for depth in 0..=hidden.len().min(3) {
        let mut sizes = vec![input];
        sizes.extend_from_slice(&hidden[..depth]);
        sizes.push(classes);
        let architecture = Architecture::new(sizes)?;
        for pretrained in [true, false] {
            if pretrained && depth == 0 {
                continue;
            }
            out.push(Variant {
                pretrained,
                mode,
                architecture: architecture.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A configuration small enough for unit tests.
    fn tiny() -> ExperimentConfig {
        let architecture: Architecture = "21-8-3".parse().unwrap();
        ExperimentConfig {
            architecture: architecture.clone(),
            synth: SyntheticSpec {
                n_classes: 3,
                k: 20,
                samples_per_class: 12,
                words_per_image: 40,
                ..SyntheticSpec::default()
            },
            train_per_class: 6,
            test_per_class: 6,
            pretrain_epochs: 3,
            pretrain_per_category: 6,
            finetune: FinetuneConfig {
                epochs: 4,
                ..ExperimentConfig::default().finetune
            },
            variants: vec![
                format!("pretrained:full:{architecture}").parse().unwrap(),
                format!("random:full:{architecture}").parse().unwrap(),
                "random:top:21-3".parse().unwrap(),
            ],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn split_is_disjoint_and_balanced() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let s = split_per_class(&labels, 4, 5, 9).unwrap();
        assert_eq!(s.train.len(), 12);
        assert_eq!(s.test.len(), 15);
        let train: HashSet<_> = s.train.iter().collect();
        assert!(s.test.iter().all(|i| !train.contains(i)));
        for c in 0..3 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == c).count(), 4);
        }
        assert_eq!(s, split_per_class(&labels, 4, 5, 9).unwrap());
        assert!(matches!(split_per_class(&labels, 6, 5, 9), Err(Error::Validation(_))));
    }

    #[test]
    fn learning_curve_rows_per_variant() {
        let cfg = ExperimentConfig {
            finetune: FinetuneConfig {
                epochs: 1,
                ..tiny().finetune
            },
            ..tiny()
        };
        let curves = run_learning_curve(&cfg).unwrap();
        assert_eq!(curves.len(), 3);
        for c in &curves {
            assert_eq!(c.rows.len(), 1);
            assert_eq!(c.rows[0].epoch, 1);
            assert!((0.0..=1.0).contains(&c.rows[0].test_error));
        }
    }

    #[test]
    fn learning_curve_epochs_increase() {
        let curves = run_learning_curve(&tiny()).unwrap();
        for c in curves {
            let epochs: Vec<usize> = c.rows.iter().map(|r| r.epoch).collect();
            assert_eq!(epochs, vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn zero_pretrain_epochs_is_the_random_baseline() {
        let cfg = tiny();
        let sweep = sweep_pretrain_epochs(&cfg, &[0]).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        let baseline = ExperimentConfig {
            variants: vec![format!("random:full:{}", cfg.architecture).parse().unwrap()],
            ..cfg.clone()
        };
        let curve = &run_learning_curve(&baseline).unwrap()[0];
        assert_eq!(Some(sweep.rows[0].test_error), curve.final_test_error());
        assert_eq!(sweep_pretrain_epochs(&cfg, &[0, 2, 5]).unwrap().rows.len(), 3);
    }

    #[test]
    fn labeled_sweep_full_pool_matches_standard_run() {
        let cfg = tiny();
        let sweep = sweep_labeled_size(&cfg, &[2, 6], 6).unwrap();
        assert_eq!(sweep.rows.len(), 2);
        let standard = ExperimentConfig {
            variants: vec![
                format!("pretrained:full:{}", cfg.architecture).parse().unwrap(),
                format!("random:full:{}", cfg.architecture).parse().unwrap(),
            ],
            ..cfg.clone()
        };
        let curves = run_learning_curve(&standard).unwrap();
        assert_eq!(Some(sweep.rows[1].pretrained_test_error), curves[0].final_test_error());
        assert_eq!(Some(sweep.rows[1].control_test_error), curves[1].final_test_error());
        assert!(sweep_labeled_size(&cfg, &[7], 6).is_err());
    }

    #[test]
    fn transfer_with_identical_data_coincides() {
        let cfg = tiny();
        let data = synth_dataset(&cfg.synth, 0).unwrap();
        let r = run_transfer(&cfg, &data, &data).unwrap();
        assert_eq!(r.transfer.rows, r.same_set.rows);
    }

    #[test]
    fn transfer_rejects_dimension_mismatch() {
        let cfg = tiny();
        let target = synth_dataset(&cfg.synth, 0).unwrap();
        let source = synth_dataset(&SyntheticSpec { k: 30, ..cfg.synth.clone() }, 0).unwrap();
        assert!(matches!(run_transfer(&cfg, &source, &target), Err(Error::Validation(_))));
    }

    #[test]
    fn synthetic_transfer_sources_share_background_only() {
        let (source, target) = transfer_datasets(&tiny()).unwrap();
        assert_eq!(source.len(), target.len());
        assert_ne!(source, target);
    }

    #[test]
    fn experiment_outputs_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let a = run_experiment(&cfg, &dir.path().join("a")).unwrap();
        let b = run_experiment(&cfg, &dir.path().join("b")).unwrap();
        assert_eq!(a.len(), 4);
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
        let text = std::fs::read_to_string(&a[1]).unwrap();
        assert!(text.starts_with("# tool="));
        assert!(text.contains(&format!("# config_digest={}", cfg.digest())));
        assert!(text.contains("# split=train=18 test=18 disjoint=true"));
        let reparsed = ExperimentConfig::load(&a[0]).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn invalid_config_fails_before_compute() {
        let cfg = ExperimentConfig {
            train_per_class: 0,
            ..tiny()
        };
        assert!(matches!(run_learning_curve(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn depth_variants_cover_all_depths() {
        let v = depth_variants(201, &[100, 50, 25], 5, FinetuneMode::FullNetwork).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v[0].architecture.to_string(), "201-5");
        assert!(!v[0].pretrained);
    }
}
