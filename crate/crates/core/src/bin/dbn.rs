use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dbn_core::analysis::{best_neurons, flip_polarity, layer_activities};
use dbn_core::dbn::{self, Architecture, DbnClassifier, FinetuneConfig, FinetuneMode};
use dbn_core::features::dataset::{labels, to_matrix};
use dbn_core::features::{
    image_histogram, learn_codebook, save_histograms, Codebook, FeatureConfig, GrayImage, HistogramSample,
    PatchConfig,
};
use dbn_core::harness::experiments::{curve, initial_model, run_experiment, Dataset};
use dbn_core::harness::output::{fmt_f64, CsvDocument, Provenance};
use dbn_core::harness::{load_histogram_dataset, synth_dataset, ExperimentConfig, ExperimentKind};
use dbn_core::{Error, Result};

#[derive(Parser)]
#[command(name = "dbn", version, about = "Deep belief networks over bag-of-visual-words histograms")]
struct Cli {
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn PGM images into a histogram CSV. Each subdirectory of `images`
    /// is one category; images directly inside it are unlabeled.
    Features {
        #[arg(long)]
        images: PathBuf,
        /// Reuse a saved vocabulary instead of learning one.
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        grid: usize,
        #[arg(long, default_value_t = 0.25)]
        sigma: f64,
        #[arg(long, default_value_t = 16)]
        patch_size: usize,
        #[arg(long, default_value_t = 8)]
        spacing: usize,
    },
    /// Greedy layer-wise pre-training; writes `pretrained.dbnm`.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        architecture: Option<Architecture>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Supervised fine-tuning; writes `finetuned.dbnm` and `finetune_curve.csv`.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Held-out data evaluated after every epoch.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        mode: Option<FinetuneMode>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Print the classification error of a model on a labeled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Per-neuron explicitness report at one layer (0 is the input).
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layer: usize,
    },
    /// Learning curves, pre-training epoch sweep or labeled-size sweep.
    Sweep {
        #[arg(long, value_enum)]
        kind: Option<SweepKind>,
    },
    /// Transfer pre-training against same-set pre-training.
    Transfer {
        /// Source dataset for pre-training; synthetic when omitted.
        #[arg(long, requires = "data")]
        pretrain_data: Option<PathBuf>,
        #[arg(long, requires = "pretrain_data")]
        data: Option<PathBuf>,
    },
    /// Write the configured synthetic dataset to `synthetic.csv`.
    Synth,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    LearningCurve,
    PretrainEpochs,
    LabeledSize,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })
}

fn labeled(path: &Path) -> Result<Dataset> {
    let samples = load_histogram_dataset(path)?;
    let x = to_matrix(&samples)?;
    let y = labels(&samples)?;
    Ok(Dataset { x, labels: y })
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        paths.push(
            entry
                .map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?
                .path(),
        );
    }
    paths.sort();
    Ok(paths)
}

fn is_pgm(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// `(image, label)` pairs; category labels follow sorted directory names.
fn collect_images(root: &Path) -> Result<Vec<(GrayImage, Option<usize>)>> {
    let mut out = Vec::new();
    let mut category = 0;
    for path in read_dir_sorted(root)? {
        if path.is_dir() {
            for file in read_dir_sorted(&path)?.into_iter().filter(|p| is_pgm(p)) {
                out.push((GrayImage::load_pgm(&file)?, Some(category)));
            }
            category += 1;
        } else if is_pgm(&path) {
            out.push((GrayImage::load_pgm(&path)?, None));
        }
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("no PGM images under {}", root.display())));
    }
    Ok(out)
}

/// Missing inputs are usage errors, not runtime failures.
fn require_inputs(command: &Command) -> Result<()> {
    let paths: Vec<&PathBuf> = match command {
        Command::Features { codebook, .. } => codebook.iter().collect(),
        Command::Pretrain { data, .. } => vec![data],
        Command::Finetune { model, data, test, .. } => [model, data].into_iter().chain(test).collect(),
        Command::Eval { model, data } | Command::Analyze { model, data, .. } => vec![model, data],
        Command::Transfer { pretrain_data, data } => pretrain_data.iter().chain(data).collect(),
        Command::Sweep { .. } | Command::Synth => Vec::new(),
    };
    match paths.into_iter().find(|p| !p.is_file()) {
        Some(p) => Err(Error::Validation(format!("{} does not exist", p.display()))),
        None => Ok(()),
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(p) = cli.config.as_ref().filter(|p| !p.is_file()) {
        return Err(Error::Validation(format!("config {} does not exist", p.display())));
    }
    require_inputs(&cli.command)?;
    let mut cfg = config(cli)?;
    let out = &cli.out;
    let provenance = |cfg: &ExperimentConfig| Provenance::new(cfg.digest(), cfg.seed);
    match &cli.command {
        Command::Synth => {
            cfg.synth.validate()?;
            create_out(out)?;
            let samples = synth_dataset(&cfg.synth, cfg.seeds().data)?;
            let path = out.join("synthetic.csv");
            save_histograms(&path, &samples, &provenance(&cfg))?;
            println!("wrote {}", path.display());
        }
        Command::Features {
            images,
            codebook,
            k,
            grid,
            sigma,
            patch_size,
            spacing,
        } => {
            let fcfg = FeatureConfig {
                patch: PatchConfig {
                    patch_size: *patch_size,
                    grid_spacing: *spacing,
                    ..PatchConfig::default()
                },
                k: *k,
                grid: *grid,
                smoothing_sigma: *sigma,
                seed: cfg.seed,
                ..FeatureConfig::default()
            };
            fcfg.patch.validate()?;
            let images = collect_images(images)?;
            create_out(out)?;
            let codebook = match codebook {
                Some(p) => Codebook::load(p)?,
                None => {
                    let imgs: Vec<GrayImage> = images.iter().map(|(i, _)| i.clone()).collect();
                    let cb = learn_codebook(&imgs, &fcfg)?;
                    cb.save(&out.join("codebook.bin"))?;
                    cb
                }
            };
            let samples = images
                .iter()
                .map(|(img, label)| image_histogram(img, &codebook, &fcfg, *label))
                .collect::<Result<Vec<HistogramSample>>>()?;
            let prov = provenance(&cfg)
                .with_note("k", codebook.k())
                .with_note("grid", fcfg.grid);
            let path = out.join("histograms.csv");
            save_histograms(&path, &samples, &prov)?;
            println!("wrote {} ({} images)", path.display(), samples.len());
        }
        Command::Pretrain {
            data,
            architecture,
            epochs,
        } => {
            let samples = load_histogram_dataset(data)?;
            let x = to_matrix(&samples)?;
            let arch = architecture.clone().unwrap_or_else(|| cfg.architecture.clone());
            if arch.input_size() != x.ncols() {
                return Err(Error::Validation(format!(
                    "architecture {arch} expects {} inputs, data has {}",
                    arch.input_size(),
                    x.ncols()
                )));
            }
            let model = initial_model(&cfg, &arch, Some(x.view()), epochs.unwrap_or(cfg.pretrain_epochs))?;
            create_out(out)?;
            let path = out.join("pretrained.dbnm");
            model.save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Finetune {
            model,
            data,
            test,
            mode,
            epochs,
        } => {
            let model = DbnClassifier::load(model)?;
            let train = labeled(data)?;
            let test = match test {
                Some(p) => labeled(p)?,
                None => train.clone(),
            };
            let ft = FinetuneConfig {
                mode: mode.unwrap_or(cfg.finetune.mode),
                epochs: epochs.unwrap_or(cfg.finetune.epochs),
                seed: cfg.seeds().finetune,
                ..cfg.finetune.clone()
            };
            let (trained, rows) = curve(&model, &train, &test, &ft)?;
            create_out(out)?;
            let mut doc = CsvDocument::new(
                &provenance(&cfg).with_note("mode", ft.mode),
                &["epoch", "train_error", "test_error", "train_loss"],
            );
            for r in &rows {
                doc.row([
                    r.epoch.to_string(),
                    fmt_f64(r.train_error),
                    fmt_f64(r.test_error),
                    fmt_f64(r.train_loss),
                ]);
            }
            doc.write(&out.join("finetune_curve.csv"))?;
            let path = out.join("finetuned.dbnm");
            trained.save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Eval { model, data } => {
            let model = DbnClassifier::load(model)?;
            let d = labeled(data)?;
            println!("error_rate={}", dbn::error_rate(&model, d.x.view(), &d.labels)?);
            println!(
                "mean_class_accuracy={}",
                dbn::mean_class_accuracy(&model, d.x.view(), &d.labels)?
            );
        }
        Command::Analyze { model, data, layer } => {
            let model = DbnClassifier::load(model)?;
            let d = labeled(data)?;
            let activities = layer_activities(&model, d.x.view(), &d.labels, *layer)?;
            let (flipped, fraction) = flip_polarity(&activities);
            let report = best_neurons(&flipped)?;
            let prov = provenance(&cfg)
                .with_note("layer", layer)
                .with_note("flipped_fraction", fmt_f64(fraction));
            create_out(out)?;
            let path = out.join(format!("explicitness_layer{layer}.csv"));
            report.to_csv(&prov).write(&path)?;
            println!("flipped_fraction={fraction}");
            println!("wrote {}", path.display());
        }
        Command::Sweep { kind } => {
            if let Some(kind) = kind {
                cfg.kind = match kind {
                    SweepKind::LearningCurve => ExperimentKind::LearningCurve,
                    SweepKind::PretrainEpochs => ExperimentKind::PretrainSweep,
                    SweepKind::LabeledSize => ExperimentKind::LabeledSizeSweep,
                };
            }
            if cfg.kind == ExperimentKind::Transfer {
                return Err(Error::Validation("use the transfer subcommand for transfer experiments".into()));
            }
            for p in run_experiment(&cfg, out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Transfer { pretrain_data, data } => {
            cfg.kind = ExperimentKind::Transfer;
            if pretrain_data.is_some() {
                cfg.pretrain_dataset = pretrain_data.clone();
                cfg.dataset = data.clone();
            }
            for p in run_experiment(&cfg, out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
