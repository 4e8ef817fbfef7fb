//! A single restricted Boltzmann machine layer trained with CD-k.
//!
//! Visible units take real values in `[0, 1]` and are treated as
//! probabilities; hidden units are stochastic binary. During the Gibbs chain
//! hidden states are sampled while visible reconstructions stay mean-field
//! unless [`VisibleSampling::Binary`] is selected.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::logistic;

/// Weights are stored `n_hidden x n_visible`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmLayer {
    pub(crate) weights: Array2<f64>,
    pub(crate) visible_bias: Array1<f64>,
    pub(crate) hidden_bias: Array1<f64>,
}

impl RbmLayer {
    pub fn new(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
    ) -> Result<Self> {
        let (nh, nv) = weights.dim();
        if nh != hidden_bias.len() || nv != visible_bias.len() {
            return Err(Error::rejected(format!(
                "weights are {nh}x{nv} but biases have lengths {} (hidden) and {} (visible)",
                hidden_bias.len(),
                visible_bias.len()
            )));
        }
        let layer = RbmLayer {
            weights,
            visible_bias,
            hidden_bias,
        };
        if !layer.is_finite() {
            return Err(Error::rejected("layer parameters must be finite"));
        }
        Ok(layer)
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        RbmLayer {
            weights: Array2::zeros((n_hidden, n_visible)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
        }
    }

    /// Gaussian weights with standard deviation `std`, zero biases.
    pub fn random<R: Rng + ?Sized>(n_visible: usize, n_hidden: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("standard deviation must be finite and >= 0");
        RbmLayer {
            weights: Array2::from_shape_fn((n_hidden, n_visible), |_| normal.sample(rng)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
        }
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|x| x.is_finite())
            && self.visible_bias.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite())
    }

    /// `p(h_i = 1 | v) = logistic(c_i + W_i . v)`.
    pub fn hidden_probs(&self, v: &[f64]) -> Result<Array1<f64>> {
        check_vector(v, self.n_visible(), "visible")?;
        if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::rejected("visible values must lie in [0, 1]"));
        }
        let v = ArrayView2::from_shape((1, v.len()), v).expect("contiguous slice");
        Ok(self.hidden_probs_batch(v).remove_axis(Axis(0)))
    }

    /// `p(v_j = 1 | h) = logistic(b_j + W^T_j . h)`.
    pub fn visible_probs(&self, h: &[f64]) -> Result<Array1<f64>> {
        check_vector(h, self.n_hidden(), "hidden")?;
        let h = ArrayView2::from_shape((1, h.len()), h).expect("contiguous slice");
        Ok(self.visible_probs_batch(h).remove_axis(Axis(0)))
    }

    /// Row-wise [`hidden_probs`](Self::hidden_probs) without input checks.
    pub(crate) fn hidden_probs_batch(&self, v: ArrayView2<f64>) -> Array2<f64> {
        let mut act = v.dot(&self.weights.t());
        act += &self.hidden_bias;
        act.mapv_inplace(logistic);
        act
    }

    pub(crate) fn visible_probs_batch(&self, h: ArrayView2<f64>) -> Array2<f64> {
        let mut act = h.dot(&self.weights);
        act += &self.visible_bias;
        act.mapv_inplace(logistic);
        act
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.visible_bias.len() + self.hidden_bias.len()
    }
}

fn check_vector(x: &[f64], expected: usize, what: &str) -> Result<()> {
    if x.len() != expected {
        return Err(Error::rejected(format!(
            "{what} vector has length {} but the layer expects {expected}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::rejected(format!("{what} vector contains non-finite values")));
    }
    Ok(())
}

/// How visible units are reconstructed inside the Gibbs chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VisibleSampling {
    /// Reconstructions are the visible probabilities themselves.
    #[default]
    MeanField,
    /// Reconstructions are Bernoulli samples (binary-binary RBM).
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdConfig {
    /// Number of Gibbs steps.
    pub k: usize,
    pub learning_rate: f64,
    /// Momentum used for the first `momentum_switch_epoch` epochs.
    pub momentum: f64,
    /// Momentum used afterwards.
    pub final_momentum: f64,
    pub momentum_switch_epoch: usize,
    /// L2 penalty applied to weights only.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub visible_sampling: VisibleSampling,
}

impl Default for CdConfig {
    fn default() -> Self {
        CdConfig {
            k: 1,
            learning_rate: 0.01,
            momentum: 0.5,
            final_momentum: 0.9,
            momentum_switch_epoch: 5,
            weight_decay: 0.0002,
            batch_size: 100,
            seed: 0,
            visible_sampling: VisibleSampling::MeanField,
        }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::rejected("CD k must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::rejected("CD learning rate must be finite and non-negative"));
        }
        for m in [self.momentum, self.final_momentum] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::rejected(format!("momentum {m} outside [0, 1)")));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::rejected("weight decay must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::rejected("batch size must be positive"));
        }
        Ok(())
    }
}

/// Parameter increment carried between CD steps for momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct CdDelta {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl CdDelta {
    pub fn zeros_like(layer: &RbmLayer) -> Self {
        CdDelta {
            weights: Array2::zeros(layer.weights.raw_dim()),
            visible_bias: Array1::zeros(layer.n_visible()),
            hidden_bias: Array1::zeros(layer.n_hidden()),
        }
    }

    /// Flattened as weights (row-major), visible bias, hidden bias.
    pub fn to_vec(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(self.visible_bias.iter())
            .chain(self.hidden_bias.iter())
            .copied()
            .collect()
    }
}

/// Draws an independent Bernoulli sample per entry.
pub fn sample_bernoulli<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::rejected("probabilities must lie in [0, 1]"));
    }
    Ok(p.iter().map(|&x| bernoulli(x, rng)).collect())
}

#[inline]
fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

fn sample_matrix<R: Rng + ?Sized>(p: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn(p.raw_dim(), |ix| bernoulli(p[ix], rng))
}

/// One CD-k update on a mini-batch (rows of `batch`).
///
/// Positive statistics use the data-clamped hidden probabilities. The chain
/// samples hidden states, and the negative statistics use the final
/// reconstruction together with its hidden probabilities.
pub fn cd_step<R: Rng + ?Sized>(
    layer: &RbmLayer,
    batch: ArrayView2<f64>,
    cfg: &CdConfig,
    prev_delta: &CdDelta,
    rng: &mut R,
) -> Result<(RbmLayer, CdDelta)> {
    cfg.validate()?;
    let (n, nv) = batch.dim();
    if n == 0 {
        return Err(Error::rejected("CD batch is empty"));
    }
    if nv != layer.n_visible() {
        return Err(Error::rejected(format!(
            "batch vectors have length {nv} but the layer has {} visible units",
            layer.n_visible()
        )));
    }
    if batch.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::rejected("visible values must lie in [0, 1]"));
    }
    if prev_delta.weights.dim() != layer.weights.dim()
        || prev_delta.visible_bias.len() != nv
        || prev_delta.hidden_bias.len() != layer.n_hidden()
    {
        return Err(Error::rejected("previous delta does not match the layer shape"));
    }

    let pos_hidden = layer.hidden_probs_batch(batch);
    let mut hidden_state = sample_matrix(&pos_hidden, rng);
    let mut recon = Array2::zeros((0, 0));
    let mut neg_hidden = Array2::zeros((0, 0));
    for step in 0..cfg.k {
        recon = layer.visible_probs_batch(hidden_state.view());
        if cfg.visible_sampling == VisibleSampling::Binary {
            recon = sample_matrix(&recon, rng);
        }
        neg_hidden = layer.hidden_probs_batch(recon.view());
        if step + 1 < cfg.k {
            hidden_state = sample_matrix(&neg_hidden, rng);
        }
    }

    let scale = 1.0 / n as f64;
    let pos_w = pos_hidden.t().dot(&batch);
    let neg_w = neg_hidden.t().dot(&recon);
    let grad_w = (pos_w - neg_w) * scale - &layer.weights * cfg.weight_decay;
    let grad_vb = (batch.sum_axis(Axis(0)) - recon.sum_axis(Axis(0))) * scale;
    let grad_hb = (pos_hidden.sum_axis(Axis(0)) - neg_hidden.sum_axis(Axis(0))) * scale;

    let delta = CdDelta {
        weights: &prev_delta.weights * cfg.momentum + grad_w * cfg.learning_rate,
        visible_bias: &prev_delta.visible_bias * cfg.momentum + grad_vb * cfg.learning_rate,
        hidden_bias: &prev_delta.hidden_bias * cfg.momentum + grad_hb * cfg.learning_rate,
    };
    let updated = RbmLayer {
        weights: &layer.weights + &delta.weights,
        visible_bias: &layer.visible_bias + &delta.visible_bias,
        hidden_bias: &layer.hidden_bias + &delta.hidden_bias,
    };
    if !updated.is_finite() {
        return Err(Error::NumericOverflow("CD update produced non-finite parameters".into()));
    }
    Ok((updated, delta))
}

/// Mean squared distance between each input and its deterministic
/// (mean-field both ways) reconstruction.
pub fn reconstruction_error(layer: &RbmLayer, data: ArrayView2<f64>) -> Result<f64> {
    if data.nrows() == 0 {
        return Err(Error::rejected("reconstruction error of an empty data set"));
    }
    if data.ncols() != layer.n_visible() {
        return Err(Error::rejected(format!(
            "data vectors have length {} but the layer has {} visible units",
            data.ncols(),
            layer.n_visible()
        )));
    }
    let hidden = layer.hidden_probs_batch(data);
    let recon = layer.visible_probs_batch(hidden.view());
    let total: f64 = (&recon - &data).mapv(|d| d * d).sum();
    Ok(total / data.nrows() as f64)
}

/// Trains `layer` for `epochs` sweeps over `data`, shuffling once per epoch.
///
/// Momentum switches from `cfg.momentum` to `cfg.final_momentum` once
/// `cfg.momentum_switch_epoch` epochs have completed.
pub fn train_layer(
    layer: &RbmLayer,
    data: ArrayView2<f64>,
    epochs: usize,
    cfg: &CdConfig,
) -> Result<RbmLayer> {
    cfg.validate()?;
    if epochs == 0 {
        return Ok(layer.clone());
    }
    if data.nrows() == 0 {
        return Err(Error::rejected("cannot train on an empty data set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = layer.clone();
    let mut delta = CdDelta::zeros_like(layer);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut step_cfg = cfg.clone();
    for epoch in 0..epochs {
        step_cfg.momentum = if epoch < cfg.momentum_switch_epoch {
            cfg.momentum
        } else {
            cfg.final_momentum
        };
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(Axis(0), chunk);
            let (next, next_delta) = cd_step(&current, batch.view(), &step_cfg, &delta, &mut rng)?;
            current = next;
            delta = next_delta;
        }
    }
    Ok(current)
}
