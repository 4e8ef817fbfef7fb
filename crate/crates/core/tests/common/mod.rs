//! Helpers shared by the integration tests.
#![allow(dead_code)]

use dbn_core::dbn::{self, DbnClassifier};
use dbn_core::oracle::{exact_log_likelihood, TinyRbm};
use dbn_core::rbm::{cd_step, CdConfig, CdDelta, RbmLayer, VisibleSampling};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Average CD-k parameter change (learning rate 1, no momentum or decay).
pub fn mean_cd_update(
    layer: &RbmLayer,
    data: &Array2<f64>,
    k: usize,
    reps: usize,
    sampling: VisibleSampling,
    seed: u64,
) -> Vec<f64> {
    let cfg = CdConfig {
        k,
        learning_rate: 1.0,
        momentum: 0.0,
        weight_decay: 0.0,
        visible_sampling: sampling,
        ..CdConfig::default()
    };
    let zero = CdDelta::zeros_like(layer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; layer.parameter_count()];
    for _ in 0..reps {
        let (_, d) = cd_step(layer, data.view(), &cfg, &zero, &mut rng).unwrap();
        for (a, x) in acc.iter_mut().zip(d.to_vec()) {
            *a += x;
        }
    }
    acc.iter().map(|a| a / reps as f64).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn gaussian_layer(nv: usize, nh: usize, std: f64, seed: u64) -> RbmLayer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, std).unwrap();
    RbmLayer::new(
        Array2::from_shape_fn((nh, nv), |_| n.sample(&mut rng)),
        Array1::from_shape_fn(nv, |_| n.sample(&mut rng)),
        Array1::from_shape_fn(nh, |_| n.sample(&mut rng)),
    )
    .unwrap()
}

pub fn random_binary(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| if rng.random::<bool>() { 1.0 } else { 0.0 })
}

/// Layer with its parameters replaced by `params` (weights, visible bias,
/// hidden bias, row-major).
pub fn layer_from_params(shape: &RbmLayer, params: &[f64]) -> RbmLayer {
    let (nv, nh) = (shape.n_visible(), shape.n_hidden());
    let w = Array2::from_shape_vec((nh, nv), params[..nh * nv].to_vec()).unwrap();
    let b = Array1::from_vec(params[nh * nv..nh * nv + nv].to_vec());
    let c = Array1::from_vec(params[nh * nv + nv..].to_vec());
    RbmLayer::new(w, b, c).unwrap()
}

pub fn layer_params(layer: &RbmLayer) -> Vec<f64> {
    let mut p: Vec<f64> = layer.weights().iter().copied().collect();
    p.extend(layer.visible_bias().iter());
    p.extend(layer.hidden_bias().iter());
    p
}

/// Largest relative error between `analytic` and central differences of
/// `f` with step `h`; the denominator is floored at `floor`.
pub fn max_relative_error(
    params: &[f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// Exact log-likelihood as a function of flattened RBM parameters.
pub fn log_likelihood_fn<'a>(shape: &'a RbmLayer, data: &'a Array2<f64>) -> impl FnMut(&[f64]) -> f64 + 'a {
    move |p| {
        let m = TinyRbm::new(layer_from_params(shape, p)).unwrap();
        exact_log_likelihood(&m, data.view()).unwrap()
    }
}

/// Worst relative error of the backprop gradient on a random model,
/// inputs and labels.
pub fn backprop_check(arch: &str, weight_decay: f64, seed: u64) -> f64 {
    let arch: dbn::Architecture = arch.parse().unwrap();
    let model = dbn::init_random(&arch, 0.5, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let x = Array2::from_shape_fn((7, arch.input_size()), |_| rng.random::<f64>());
    let labels: Vec<usize> = (0..7).map(|_| rng.random_range(0..arch.n_classes())).collect();
    let analytic = dbn::gradient(&model, x.view(), &labels, weight_decay).unwrap().to_vec();
    let params = model.feedforward_params();
    max_relative_error(&params, &analytic, 1e-5, 1e-8, |p| {
        let m: DbnClassifier = model.with_feedforward_params(p).unwrap();
        dbn::objective(&m, x.view(), &labels, weight_decay).unwrap()
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
