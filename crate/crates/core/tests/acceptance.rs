//! Acceptance suite: runs every criterion in sequence, prints one
//! PASS/FAIL line each and exits non-zero if any fails.
//!
//! Runs without the libtest harness so that the summary is always shown
//! and each criterion is timed without competing test threads.

mod common;

use std::time::{Duration, Instant};

use common::{backprop_check, cosine, gaussian_layer, log_likelihood_fn, layer_params, max_relative_error, mean_cd_update, median, random_binary};
use dbn_core::analysis::{best_neurons, flip_polarity, input_baseline, layer_activities, performance_parameter};
use dbn_core::dbn::{self, DbnClassifier, FinetuneConfig};
use dbn_core::features::dataset::{histograms_to_csv, parse_histograms};
use dbn_core::features::patches::patches_along;
use dbn_core::features::{
    build_histogram, extract_patch_pyramid, image_histogram, learn_codebook, Codebook, FeatureConfig, GrayImage,
    PatchConfig,
};
use dbn_core::harness::experiments::{
    initial_model, prepare, run_experiment, run_learning_curve, run_transfer, sweep_pretrain_epochs,
    transfer_datasets, REFERENCE_FLIP_FRACTIONS,
};
use dbn_core::harness::output::Provenance;
use dbn_core::harness::{ExperimentConfig, SyntheticSpec};
use dbn_core::oracle::{exact_gradient, TinyRbm};
use dbn_core::rbm::VisibleSampling;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn benchmark(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    }
}

fn oracle_self_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let layer = gaussian_layer(4, 3, 1.0, 100 + seed);
        let data = random_binary(10, 4, 200 + seed);
        let analytic = exact_gradient(&TinyRbm::new(layer.clone()).unwrap(), data.view())
            .unwrap()
            .to_vec();
        let rel = max_relative_error(&layer_params(&layer), &analytic, 1e-5, 1e-4, log_likelihood_fn(&layer, &data));
        worst = worst.max(rel);
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e} over 10 models"))
}

fn cd_validity() -> Outcome {
    let layer = gaussian_layer(3, 3, 1.0, 1);
    let data = random_binary(8, 3, 77);
    let exact = exact_gradient(&TinyRbm::new(layer.clone()).unwrap(), data.view())
        .unwrap()
        .to_vec();
    let cos = |k: usize, seed: u64| cosine(&mean_cd_update(&layer, &data, k, 20_000, VisibleSampling::Binary, seed), &exact);
    let (c1, c10, c20) = (cos(1, 11), cos(10, 12), cos(20, 13));
    outcome(
        c10 >= 0.9 && c20 >= c1,
        format!("cos(CD-1)={c1:.5} cos(CD-10)={c10:.5} cos(CD-20)={c20:.5}"),
    )
}

fn backprop_correctness() -> Outcome {
    let a = backprop_check("10-8-5-3", 0.0002, 1);
    let b = backprop_check("10-8-6-4-3", 0.0002, 2);
    outcome(
        a <= 1e-4 && b <= 1e-4,
        format!("max relative error 10-8-5-3: {a:.2e}, 10-8-6-4-3: {b:.2e}"),
    )
}

/// First 1-based epoch at which `errors` is at most `threshold`; one past
/// the end if never.
fn epochs_to_reach(errors: &[f64], threshold: f64) -> f64 {
    errors
        .iter()
        .position(|&e| e <= threshold)
        .map_or(errors.len() + 1, |p| p + 1) as f64
}

fn shorter_supervised_phase() -> Outcome {
    let (mut pre, mut rand) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let curves = run_learning_curve(&benchmark(seed)).unwrap();
        let (p, r) = (curves[0].test_errors(), curves[1].test_errors());
        let threshold = 1.1 * p[p.len() - 1];
        pre.push(epochs_to_reach(&p, threshold));
        rand.push(epochs_to_reach(&r, threshold));
    }
    let (mp, mr) = (median(&pre), median(&rand));
    outcome(
        mp <= 0.5 * mr,
        format!("median epochs to threshold: pre-trained {mp} vs random {mr} (per seed {pre:?} vs {rand:?})"),
    )
}

fn pretraining_helps_after_one_epoch() -> Outcome {
    let (mut e0, mut e200) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let cfg = ExperimentConfig {
            finetune: FinetuneConfig {
                epochs: 1,
                ..benchmark(seed).finetune
            },
            ..benchmark(seed)
        };
        let sweep = sweep_pretrain_epochs(&cfg, &[0, 200]).unwrap();
        e0.push(sweep.rows[0].test_error);
        e200.push(sweep.rows[1].test_error);
    }
    let (m0, m200) = (median(&e0), median(&e200));
    outcome(
        m200 <= m0,
        format!("median 1-epoch test error: 200 pre-train epochs {m200:.3} vs 0 {m0:.3}"),
    )
}

fn overtraining() -> Outcome {
    let cfg = benchmark(0);
    let data = prepare(&cfg).unwrap();
    let model = initial_model(&cfg, &cfg.architecture, Some(data.train.x.view()), cfg.pretrain_epochs).unwrap();
    // 10 per class: the training split is grouped by class.
    let per_class = 100;
    let subset: Vec<usize> = (0..5).flat_map(|c| c * per_class..c * per_class + 10).collect();
    let small = data.train.select(&subset);
    let ft = FinetuneConfig {
        epochs: 50,
        seed: cfg.seeds().finetune,
        ..cfg.finetune.clone()
    };
    let (_, trace) = dbn::finetune(&model, small.x.view(), &small.labels, &ft).unwrap();
    let first_zero = trace.iter().find(|s| s.error == 0.0).map(|s| s.epoch);
    outcome(
        first_zero.is_some(),
        format!("train error on 50 samples first 0 at epoch {first_zero:?}"),
    )
}

fn transfer_matches_same_set() -> Outcome {
    let mut diffs = Vec::new();
    for seed in SEEDS {
        let cfg = benchmark(seed);
        let (source, target) = transfer_datasets(&cfg).unwrap();
        let r = run_transfer(&cfg, &source, &target).unwrap();
        diffs.push((r.transfer.final_test_error().unwrap() - r.same_set.final_test_error().unwrap()).abs());
    }
    let m = median(&diffs);
    outcome(m <= 0.02, format!("median |transfer - same-set| final error {m:.3} ({diffs:?})"))
}

/// Independent scan over every candidate threshold and orientation.
fn brute_force_score(a: &[f64], inside: &[bool]) -> f64 {
    let mut cuts: Vec<f64> = a.to_vec();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut candidates = vec![cuts[0] - 1.0, cuts[cuts.len() - 1] + 1.0];
    candidates.extend(cuts.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    let pos = inside.iter().filter(|&&b| b).count() as f64;
    let neg = inside.len() as f64 - pos;
    let mut best: f64 = 0.0;
    for t in candidates {
        let tp = a.iter().zip(inside).filter(|(&v, &i)| i && v > t).count() as f64;
        let tn = a.iter().zip(inside).filter(|(&v, &i)| !i && v <= t).count() as f64;
        let fn_ = pos - tp;
        let fp = neg - tn;
        let above = (tp / pos + tn / neg) / 2.0;
        let below = (fn_ / pos + fp / neg) / 2.0;
        best = best.max(above).max(below);
    }
    best
}

fn explicitness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut machinery_ok = true;
    for _ in 0..200 {
        let n = rng.random_range(2..16);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
        let mut inside: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        inside[0] = true;
        inside[1] = false;
        let s = performance_parameter(&a, &inside).unwrap().score;
        let cubed: Vec<f64> = a.iter().map(|v| v * v * v + v).collect();
        let flipped: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        machinery_ok &= s == brute_force_score(&a, &inside)
            && (0.5..=1.0).contains(&s)
            && performance_parameter(&cubed, &inside).unwrap().score == s
            && performance_parameter(&flipped, &inside).unwrap().score == s;
    }

    let (mut hidden, mut input) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let cfg = benchmark(seed);
        let data = prepare(&cfg).unwrap();
        let model = initial_model(&cfg, &cfg.architecture, Some(data.train.x.view()), cfg.pretrain_epochs).unwrap();
        let ft = FinetuneConfig {
            seed: cfg.seeds().finetune,
            ..cfg.finetune.clone()
        };
        let (model, _) = dbn::finetune(&model, data.train.x.view(), &data.train.labels, &ft).unwrap();
        let top = model.n_hidden_layers();
        let acts = layer_activities(&model, data.test.x.view(), &data.test.labels, top).unwrap();
        hidden.push(median(&best_neurons(&acts).unwrap().best_scores()));
        input.push(median(&input_baseline(data.test.x.view(), &data.test.labels).unwrap().best_scores()));
    }
    let (mh, mi) = (median(&hidden), median(&input));
    outcome(
        machinery_ok && mh >= mi,
        format!("200 instances ok={machinery_ok}; median best score top hidden {mh:.4} vs input {mi:.4}"),
    )
}

fn polarity_trend() -> Outcome {
    let (mut first, mut third) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let cfg = ExperimentConfig {
            architecture: "201-100-50-25-5".parse().unwrap(),
            ..benchmark(seed)
        };
        let data = prepare(&cfg).unwrap();
        let pretrained: DbnClassifier =
            initial_model(&cfg, &cfg.architecture, Some(data.train.x.view()), cfg.pretrain_epochs).unwrap();
        // Measured on the trained network: pre-training followed by the
        // variant's full-network fine-tuning run.
        let ft = FinetuneConfig {
            seed: cfg.seeds().finetune,
            ..cfg.finetune.clone()
        };
        let (model, _) = dbn::finetune(&pretrained, data.train.x.view(), &data.train.labels, &ft).unwrap();
        let fraction = |layer| {
            let acts = layer_activities(&model, data.train.x.view(), &data.train.labels, layer).unwrap();
            flip_polarity(&acts).1
        };
        first.push(fraction(1));
        third.push(fraction(3));
    }
    let (m1, m3) = (median(&first), median(&third));
    outcome(
        m1 >= m3,
        format!(
            "median flipped fraction layer 1 {m1:.3} vs layer 3 {m3:.3} (reference, not asserted: {REFERENCE_FLIP_FRACTIONS:?})"
        ),
    )
}

fn closed_form_patch_count(mut w: usize, mut h: usize, n: usize, l: usize) -> usize {
    let mut total = 0;
    while w >= n && h >= n {
        total += ((w - n) / l + 1) * ((h - n) / l + 1);
        w /= 2;
        h /= 2;
    }
    total
}

fn pipeline_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let patch = PatchConfig {
        patch_size: 8,
        grid_spacing: 4,
        ..PatchConfig::default()
    };
    let mut images = Vec::new();
    let mut counts_ok = true;
    for _ in 0..20 {
        let (w, h) = (rng.random_range(8..90), rng.random_range(8..90));
        let img = GrayImage::from_fn(w, h, |x, y| {
            (0.5 + 0.4 * ((x as f64 * 0.3).sin() * (y as f64 * 0.2).cos())) * rng.random_range(0.8..1.0)
        })
        .unwrap();
        let got = extract_patch_pyramid(&img, &patch).unwrap().len();
        counts_ok &= got == closed_form_patch_count(w, h, 8, 4);
        counts_ok &= patches_along(w, 8, 4) == (w - 8) / 4 + 1;
        images.push(img);
    }

    let mut sums_ok = true;
    let mut samples = Vec::new();
    for grid in [1, 2, 4] {
        let cfg = FeatureConfig {
            patch: patch.clone(),
            k: 6,
            grid,
            kmeans_iters: 20,
            seed: 3,
            ..FeatureConfig::default()
        };
        let codebook = learn_codebook(&images, &cfg).unwrap();
        for (i, img) in images.iter().enumerate() {
            let hist = image_histogram(img, &codebook, &cfg, Some(i % 3)).unwrap();
            sums_ok &= (hist.values.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
            if grid == 2 {
                samples.push(hist);
            }
        }
        let bytes = codebook.to_bytes();
        sums_ok &= Codebook::from_bytes(&bytes).unwrap().to_bytes() == bytes;
    }

    let words: Vec<(usize, (f64, f64))> = (0..50).map(|i| (i * 7 % 201, (i as f64, 2.0 * i as f64))).collect();
    let dims = build_histogram(&words, (64, 128), 200, 4, 0.25).unwrap().values.len();

    let text = histograms_to_csv(&samples, &Provenance::new("acceptance", 0)).unwrap();
    let back = parse_histograms(&text).unwrap();
    let csv_exact = back.len() == samples.len()
        && back.iter().zip(&samples).all(|(a, b)| {
            a.label == b.label && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
        });
    let model = dbn::init_random(&"21-7-5-3".parse().unwrap(), 0.3, 5).unwrap();
    let model_exact = DbnClassifier::from_bytes(&model.to_bytes()).unwrap().to_bytes() == model.to_bytes();

    let tiny = ExperimentConfig {
        architecture: "21-6-3".parse().unwrap(),
        synth: SyntheticSpec {
            n_classes: 3,
            k: 20,
            samples_per_class: 10,
            words_per_image: 30,
            ..SyntheticSpec::default()
        },
        train_per_class: 5,
        test_per_class: 5,
        pretrain_epochs: 3,
        finetune: FinetuneConfig {
            epochs: 3,
            ..ExperimentConfig::default().finetune
        },
        variants: vec!["pretrained:full:21-6-3".parse().unwrap(), "random:top:21-6-3".parse().unwrap()],
        seed: 4,
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&tiny, &dir.path().join("a")).unwrap();
    let b = run_experiment(&tiny, &dir.path().join("b")).unwrap();
    let rerun_identical = a.len() == b.len()
        && a.iter().zip(&b).all(|(x, y)| std::fs::read(x).unwrap() == std::fs::read(y).unwrap());

    outcome(
        counts_ok && sums_ok && dims == 3201 && csv_exact && model_exact && rerun_identical,
        format!(
            "patch counts {counts_ok}, sums/codebook {sums_ok}, K=200 g=4 dims {dims}, csv round trip {csv_exact}, \
             model round trip {model_exact}, rerun identical {rerun_identical}"
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 10] = [
        ("oracle self-consistency", oracle_self_consistency, Some(Duration::from_secs(5))),
        ("CD validity", cd_validity, Some(Duration::from_secs(60))),
        ("backprop correctness", backprop_correctness, Some(Duration::from_secs(10))),
        ("pre-training shortens supervised phase", shorter_supervised_phase, Some(Duration::from_secs(300))),
        ("pre-training helps after one epoch", pretraining_helps_after_one_epoch, Some(Duration::from_secs(300))),
        ("overtraining to zero train error", overtraining, None),
        ("transfer matches same-set pre-training", transfer_matches_same_set, Some(Duration::from_secs(600))),
        ("explicitness machinery", explicitness, None),
        ("polarity-flip trend", polarity_trend, None),
        ("pipeline invariants", pipeline_invariants, None),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run);
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => {
                let in_time = budget.is_none_or(|b| elapsed < b);
                let mut detail = o.detail;
                if !in_time {
                    detail.push_str(&format!("; exceeded {:?} budget", budget.unwrap()));
                }
                (o.pass && in_time, detail)
            }
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<40} {} [{:.1}s] {}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            detail
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
