//! Stacked RBM classifier with a softmax label layer.
//!
//! Training happens in two phases: [`pretrain_greedy`] fits each RBM layer
//! with contrastive divergence on the deterministic outputs of the layers
//! below it, then [`finetune`] minimizes cross-entropy by mini-batch gradient
//! descent, either through the whole network or on the label layer alone.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rbm::{self, CdConfig, RbmLayer};

/// Layer sizes from input to output, e.g. `1001-500-13`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Architecture {
    layer_sizes: Vec<usize>,
}

pub const MAX_HIDDEN_LAYERS: usize = 3;

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::rejected("architecture needs at least input and output sizes"));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::rejected("layer sizes must be positive"));
        }
        if layer_sizes.len() - 2 > MAX_HIDDEN_LAYERS {
            return Err(Error::rejected(format!(
                "at most {MAX_HIDDEN_LAYERS} hidden layers are supported"
            )));
        }
        Ok(Architecture { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }

    /// Parameters including the (unused at inference) visible biases of each RBM.
    pub fn parameter_count(&self) -> usize {
        let sizes = &self.layer_sizes;
        let rbm: usize = sizes[..sizes.len() - 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[0] + w[1])
            .sum();
        let top = sizes[sizes.len() - 2];
        let classes = self.n_classes();
        rbm + top * classes + classes
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let sizes = s
            .split('-')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::rejected(format!("bad layer size {p:?} in architecture {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Architecture::new(sizes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbnClassifier {
    pub(crate) rbm_layers: Vec<RbmLayer>,
    /// `n_classes x top_hidden`.
    pub(crate) label_weights: Array2<f64>,
    pub(crate) label_bias: Array1<f64>,
}

impl DbnClassifier {
    pub fn from_parts(
        rbm_layers: Vec<RbmLayer>,
        label_weights: Array2<f64>,
        label_bias: Array1<f64>,
    ) -> Result<Self> {
        for pair in rbm_layers.windows(2) {
            if pair[0].n_hidden() != pair[1].n_visible() {
                return Err(Error::rejected("adjacent RBM layers do not chain"));
            }
        }
        let top = rbm_layers.last().map(|l| l.n_hidden()).unwrap_or(label_weights.ncols());
        if label_weights.ncols() != top || label_weights.nrows() != label_bias.len() {
            return Err(Error::rejected("label layer does not match the top hidden layer"));
        }
        if label_bias.is_empty() || top == 0 {
            return Err(Error::rejected("label layer must be non-empty"));
        }
        if rbm_layers.len() > MAX_HIDDEN_LAYERS {
            return Err(Error::rejected("too many hidden layers"));
        }
        let model = DbnClassifier {
            rbm_layers,
            label_weights,
            label_bias,
        };
        if !model.is_finite() {
            return Err(Error::rejected("model parameters must be finite"));
        }
        Ok(model)
    }

    pub fn zeros(arch: &Architecture) -> Self {
        let sizes = arch.layer_sizes();
        let rbm_layers = sizes[..sizes.len() - 1]
            .windows(2)
            .map(|w| RbmLayer::zeros(w[0], w[1]))
            .collect();
        DbnClassifier {
            rbm_layers,
            label_weights: Array2::zeros((arch.n_classes(), sizes[sizes.len() - 2])),
            label_bias: Array1::zeros(arch.n_classes()),
        }
    }

    pub fn architecture(&self) -> Architecture {
        let mut sizes = vec![self.input_size()];
        sizes.extend(self.rbm_layers.iter().map(|l| l.n_hidden()));
        sizes.push(self.n_classes());
        Architecture { layer_sizes: sizes }
    }

    pub fn input_size(&self) -> usize {
        self.rbm_layers
            .first()
            .map(|l| l.n_visible())
            .unwrap_or(self.label_weights.ncols())
    }

    pub fn n_classes(&self) -> usize {
        self.label_bias.len()
    }

    pub fn n_hidden_layers(&self) -> usize {
        self.rbm_layers.len()
    }

    pub fn rbm_layers(&self) -> &[RbmLayer] {
        &self.rbm_layers
    }

    pub fn label_weights(&self) -> &Array2<f64> {
        &self.label_weights
    }

    pub fn label_bias(&self) -> &Array1<f64> {
        &self.label_bias
    }

    pub fn is_finite(&self) -> bool {
        self.rbm_layers.iter().all(|l| l.is_finite())
            && self.label_weights.iter().all(|x| x.is_finite())
            && self.label_bias.iter().all(|x| x.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.rbm_layers.iter().map(|l| l.parameter_count()).sum::<usize>()
            + self.label_weights.len()
            + self.label_bias.len()
    }

    /// Parameters that take part in classification, in backprop order:
    /// each RBM's weights (row-major) and hidden bias, then label weights
    /// and label bias. RBM visible biases are excluded.
    pub fn feedforward_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.rbm_layers {
            out.extend(l.weights.iter());
            out.extend(l.hidden_bias.iter());
        }
        out.extend(self.label_weights.iter());
        out.extend(self.label_bias.iter());
        out
    }

    /// Inverse of [`feedforward_params`](Self::feedforward_params).
    pub fn with_feedforward_params(&self, params: &[f64]) -> Result<Self> {
        let expected = self.feedforward_params().len();
        if params.len() != expected {
            return Err(Error::rejected(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        let mut model = self.clone();
        let mut it = params.iter().copied();
        for l in &mut model.rbm_layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.hidden_bias.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
        model.label_weights.iter_mut().for_each(|w| *w = it.next().unwrap());
        model.label_bias.iter_mut().for_each(|w| *w = it.next().unwrap());
        if !model.is_finite() {
            return Err(Error::rejected("model parameters must be finite"));
        }
        Ok(model)
    }

    fn check_inputs(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_size() {
            return Err(Error::rejected(format!(
                "inputs have {} dimensions but the model expects {}",
                x.ncols(),
                self.input_size()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::rejected("inputs contain non-finite values"));
        }
        Ok(())
    }

    /// Mean-field activations of every hidden layer; index 0 is the input.
    pub(crate) fn hidden_activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.rbm_layers.len() + 1);
        acts.push(x.to_owned());
        for layer in &self.rbm_layers {
            let next = layer.hidden_probs_batch(acts.last().unwrap().view());
            acts.push(next);
        }
        acts
    }

    /// Activations of hidden layer `layer_index` (0 = input passthrough).
    pub fn activations_at(&self, x: ArrayView2<f64>, layer_index: usize) -> Result<Array2<f64>> {
        self.check_inputs(x)?;
        if layer_index > self.rbm_layers.len() {
            return Err(Error::rejected(format!(
                "layer index {layer_index} but the model has {} hidden layers",
                self.rbm_layers.len()
            )));
        }
        let mut act = x.to_owned();
        for layer in &self.rbm_layers[..layer_index] {
            act = layer.hidden_probs_batch(act.view());
        }
        Ok(act)
    }

    fn label_probs(&self, top: ArrayView2<f64>) -> Array2<f64> {
        let mut logits = top.dot(&self.label_weights.t());
        logits += &self.label_bias;
        softmax_rows(&mut logits);
        logits
    }

    /// Class probabilities for each row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(x)?;
        let top = self.activations_at(x, self.rbm_layers.len())?;
        Ok(self.label_probs(top.view()))
    }

    pub fn forward(&self, v: &[f64]) -> Result<Array1<f64>> {
        let x = ArrayView2::from_shape((1, v.len()), v).expect("contiguous slice");
        Ok(self.forward_batch(x)?.remove_axis(Axis(0)))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let probs = self.forward_batch(x)?;
        Ok(probs.rows().into_iter().map(|r| argmax(r.iter().copied())).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = self.architecture();
        let mut out = Vec::with_capacity(12 + 4 * arch.layer_sizes.len() + 8 * self.parameter_count());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(arch.layer_sizes.len() as u32).to_le_bytes());
        for &n in &arch.layer_sizes {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        let mut put = |xs: &mut dyn Iterator<Item = &f64>| {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        for l in &self.rbm_layers {
            put(&mut l.weights.iter());
            put(&mut l.visible_bias.iter());
            put(&mut l.hidden_bias.iter());
        }
        put(&mut self.label_weights.iter());
        put(&mut self.label_bias.iter());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MODEL_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "bad magic, expected \"DBNM\"".into(),
            });
        }
        let version = r.u32("format version")?;
        if version != MODEL_VERSION {
            return Err(Error::Format {
                offset: 4,
                msg: format!("unsupported format version {version}, expected {MODEL_VERSION}"),
            });
        }
        let count_at = r.pos;
        let count = r.u32("layer count")? as usize;
        if !(2..=MAX_HIDDEN_LAYERS + 2).contains(&count) {
            return Err(Error::Format {
                offset: count_at,
                msg: format!("invalid layer count {count}"),
            });
        }
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            sizes.push(r.u32("layer size")? as usize);
        }
        let arch = Architecture::new(sizes).map_err(|e| Error::Format {
            offset: count_at,
            msg: e.to_string(),
        })?;
        let mut model = DbnClassifier::zeros(&arch);
        for l in &mut model.rbm_layers {
            r.fill(l.weights.iter_mut())?;
            r.fill(l.visible_bias.iter_mut())?;
            r.fill(l.hidden_bias.iter_mut())?;
        }
        r.fill(model.label_weights.iter_mut())?;
        r.fill(model.label_bias.iter_mut())?;
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos,
                msg: format!("{} trailing bytes after parameters", bytes.len() - r.pos),
            });
        }
        if !model.is_finite() {
            return Err(Error::Format {
                offset: count_at,
                msg: "model contains non-finite parameters".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::harness::output::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const MODEL_MAGIC: &[u8; 4] = b"DBNM";
pub const MODEL_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos,
                msg: format!("stream truncated while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn fill<'b>(&mut self, dst: impl Iterator<Item = &'b mut f64>) -> Result<()> {
        for x in dst {
            *x = f64::from_le_bytes(self.take(8, "parameters")?.try_into().unwrap());
        }
        Ok(())
    }
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Gaussian weights with standard deviation `scale`, zero biases.
pub fn init_random(arch: &Architecture, scale: f64, seed: u64) -> Result<DbnClassifier> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::rejected("initialization scale must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = DbnClassifier::zeros(arch);
    for l in &mut model.rbm_layers {
        *l = RbmLayer::random(l.n_visible(), l.n_hidden(), scale, &mut rng);
    }
    let normal = Normal::new(0.0, scale).unwrap();
    model.label_weights.mapv_inplace(|_| normal.sample(&mut rng));
    Ok(model)
}

/// Greedy layer-wise CD training of every RBM layer. Layer `i + 1` is
/// trained on the hidden probabilities of the already-trained layers below.
pub fn pretrain_greedy(
    model: &DbnClassifier,
    data: ArrayView2<f64>,
    epochs_per_layer: usize,
    cfg: &CdConfig,
) -> Result<DbnClassifier> {
    if model.rbm_layers.is_empty() {
        return Err(Error::Unsupported(
            "a network without hidden layers has no unsupervised phase".into(),
        ));
    }
    model.check_inputs(data)?;
    cfg.validate()?;
    if epochs_per_layer == 0 {
        return Ok(model.clone());
    }
    let mut out = model.clone();
    let mut input = data.to_owned();
    for (index, layer) in out.rbm_layers.iter_mut().enumerate() {
        let layer_cfg = CdConfig {
            seed: derive_seed(cfg.seed, index as u64),
            ..cfg.clone()
        };
        *layer = rbm::train_layer(layer, input.view(), epochs_per_layer, &layer_cfg)?;
        input = layer.hidden_probs_batch(input.view());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FinetuneMode {
    /// Backpropagate through every layer.
    #[default]
    FullNetwork,
    /// Update only the label layer.
    TopLayerOnly,
}

impl fmt::Display for FinetuneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinetuneMode::FullNetwork => "full",
            FinetuneMode::TopLayerOnly => "top",
        })
    }
}

impl FromStr for FinetuneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_network" => Ok(FinetuneMode::FullNetwork),
            "top" | "top_layer_only" => Ok(FinetuneMode::TopLayerOnly),
            _ => Err(Error::rejected(format!("unknown fine-tune mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub mode: FinetuneMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            mode: FinetuneMode::FullNetwork,
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 10,
            weight_decay: 0.0002,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::rejected("fine-tune learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::rejected("fine-tune batch size must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::rejected("fine-tune weight decay must be non-negative"));
        }
        Ok(())
    }
}

/// Training-set statistics recorded after each fine-tune epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy, without the weight-decay term.
    pub loss: f64,
    pub error: f64,
}

/// Gradient of the fine-tuning objective, laid out like
/// [`DbnClassifier::feedforward_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct DbnGradient {
    /// `(weights, hidden_bias)` per RBM layer.
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub label_weights: Array2<f64>,
    pub label_bias: Array1<f64>,
}

impl DbnGradient {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, c) in &self.layers {
            out.extend(w.iter());
            out.extend(c.iter());
        }
        out.extend(self.label_weights.iter());
        out.extend(self.label_bias.iter());
        out
    }
}

fn check_labels(model: &DbnClassifier, x: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    model.check_inputs(x)?;
    if x.nrows() == 0 {
        return Err(Error::rejected("labeled data set is empty"));
    }
    if labels.len() != x.nrows() {
        return Err(Error::rejected(format!(
            "{} labels for {} samples",
            labels.len(),
            x.nrows()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= model.n_classes()) {
        return Err(Error::rejected(format!(
            "label {bad} outside [0, {})",
            model.n_classes()
        )));
    }
    Ok(())
}

fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[[i, y]].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / labels.len() as f64
}

fn one_hot_residual(probs: &Array2<f64>, labels: &[usize]) -> Array2<f64> {
    let mut d = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        d[[i, y]] -= 1.0;
    }
    d / labels.len() as f64
}

/// Objective: mean cross-entropy plus `0.5 * weight_decay * ||W||^2` over
/// every weight matrix (biases are not decayed).
pub fn objective(
    model: &DbnClassifier,
    x: ArrayView2<f64>,
    labels: &[usize],
    weight_decay: f64,
) -> Result<f64> {
    check_labels(model, x, labels)?;
    let probs = model.forward_batch(x)?;
    let mut sq = model.label_weights.mapv(|w| w * w).sum();
    for l in &model.rbm_layers {
        sq += l.weights.mapv(|w| w * w).sum();
    }
    Ok(cross_entropy(&probs, labels) + 0.5 * weight_decay * sq)
}

/// Backpropagated gradient of [`objective`] with respect to every
/// feed-forward parameter.
pub fn gradient(
    model: &DbnClassifier,
    x: ArrayView2<f64>,
    labels: &[usize],
    weight_decay: f64,
) -> Result<DbnGradient> {
    check_labels(model, x, labels)?;
    Ok(backprop(model, x, labels, weight_decay, true))
}

fn backprop(
    model: &DbnClassifier,
    x: ArrayView2<f64>,
    labels: &[usize],
    weight_decay: f64,
    full: bool,
) -> DbnGradient {
    let acts = model.hidden_activations(x);
    let top = acts.last().unwrap();
    let (label_weights, label_bias, dz) = label_gradient(model, top.view(), labels, weight_decay);

    let mut layers = Vec::new();
    if full {
        let mut upstream = dz.dot(&model.label_weights);
        for (index, layer) in model.rbm_layers.iter().enumerate().rev() {
            let out = &acts[index + 1];
            let pre = upstream * &out.mapv(|a| a * (1.0 - a));
            let gw = pre.t().dot(&acts[index]) + &layer.weights * weight_decay;
            let gc = pre.sum_axis(Axis(0));
            upstream = if index > 0 {
                pre.dot(&layer.weights)
            } else {
                Array2::zeros((0, 0))
            };
            layers.push((gw, gc));
        }
        layers.reverse();
    }
    DbnGradient {
        layers,
        label_weights,
        label_bias,
    }
}

/// Label-layer gradient given top hidden activations; also returns the
/// logit residual for further backpropagation.
fn label_gradient(
    model: &DbnClassifier,
    top: ArrayView2<f64>,
    labels: &[usize],
    weight_decay: f64,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let probs = model.label_probs(top);
    let dz = one_hot_residual(&probs, labels);
    let gw = dz.t().dot(&top) + &model.label_weights * weight_decay;
    let gb = dz.sum_axis(Axis(0));
    (gw, gb, dz)
}

/// Fraction of rows whose argmax class differs from the label.
pub fn error_rate(model: &DbnClassifier, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(model, x, labels)?;
    let predicted = model.predict(x)?;
    let wrong = predicted.iter().zip(labels).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Mean over classes present in `labels` of the per-class accuracy.
pub fn mean_class_accuracy(model: &DbnClassifier, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(model, x, labels)?;
    let predicted = model.predict(x)?;
    let mut hits = vec![0usize; model.n_classes()];
    let mut totals = vec![0usize; model.n_classes()];
    for (&p, &y) in predicted.iter().zip(labels) {
        totals[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let present: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

pub fn finetune(
    model: &DbnClassifier,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &FinetuneConfig,
) -> Result<(DbnClassifier, Vec<EpochStats>)> {
    finetune_with(model, x, labels, cfg, |_, _| Ok(()))
}

/// Like [`finetune`], calling `on_epoch` with the statistics and model after
/// every epoch.
pub fn finetune_with<F>(
    model: &DbnClassifier,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &FinetuneConfig,
    mut on_epoch: F,
) -> Result<(DbnClassifier, Vec<EpochStats>)>
where
    F: FnMut(&EpochStats, &DbnClassifier) -> Result<()>,
{
    cfg.validate()?;
    check_labels(model, x, labels)?;
    let mut current = model.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((current, trace));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let full = cfg.mode == FinetuneMode::FullNetwork;

    // In top-only mode the hidden features never change.
    let top_features = if full {
        None
    } else {
        Some(current.activations_at(x, current.n_hidden_layers())?)
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let grad = match &top_features {
                Some(features) => {
                    let batch = features.select(Axis(0), chunk);
                    let (gw, gb, _) =
                        label_gradient(&current, batch.view(), &batch_labels, cfg.weight_decay);
                    DbnGradient {
                        layers: Vec::new(),
                        label_weights: gw,
                        label_bias: gb,
                    }
                }
                None => {
                    let batch = x.select(Axis(0), chunk);
                    backprop(&current, batch.view(), &batch_labels, cfg.weight_decay, true)
                }
            };
            apply_gradient(&mut current, &grad, cfg.learning_rate);
        }
        if !current.is_finite() {
            return Err(Error::NumericOverflow(format!(
                "fine-tuning diverged in epoch {epoch}"
            )));
        }
        let probs = current.forward_batch(x)?;
        let wrong = probs
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(r, &y)| argmax(r.iter().copied()) != y)
            .count();
        let stats = EpochStats {
            epoch,
            loss: cross_entropy(&probs, labels),
            error: wrong as f64 / labels.len() as f64,
        };
        trace.push(stats);
        on_epoch(&stats, &current)?;
    }
    Ok((current, trace))
}

fn apply_gradient(model: &mut DbnClassifier, grad: &DbnGradient, lr: f64) {
    for (layer, (gw, gc)) in model.rbm_layers.iter_mut().zip(&grad.layers) {
        layer.weights.scaled_add(-lr, gw);
        layer.hidden_bias.scaled_add(-lr, gc);
    }
    model.label_weights.scaled_add(-lr, &grad.label_weights);
    model.label_bias.scaled_add(-lr, &grad.label_bias);
}
