//! Exact inference for tiny binary-binary RBMs by exhaustive enumeration.
//!
//! Energy: `E(v, h) = -v.b - h.c - h^T W v`. All sums over states are
//! accumulated with log-sum-exp.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::rbm::RbmLayer;

/// Enumeration ceiling: `n_visible + n_hidden` may not exceed this.
pub const MAX_UNITS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TinyRbm {
    layer: RbmLayer,
}

impl TinyRbm {
    pub fn new(layer: RbmLayer) -> Result<Self> {
        let units = layer.n_visible() + layer.n_hidden();
        if units > MAX_UNITS {
            return Err(Error::rejected(format!(
                "tiny RBM has {units} units, enumeration limit is {MAX_UNITS}"
            )));
        }
        Ok(TinyRbm { layer })
    }

    pub fn layer(&self) -> &RbmLayer {
        &self.layer
    }

    pub fn n_visible(&self) -> usize {
        self.layer.n_visible()
    }

    pub fn n_hidden(&self) -> usize {
        self.layer.n_hidden()
    }

    fn energy(&self, v: &[f64], h: &[f64]) -> f64 {
        let l = &self.layer;
        let mut e = 0.0;
        for (j, &vj) in v.iter().enumerate() {
            e -= vj * l.visible_bias[j];
        }
        for (i, &hi) in h.iter().enumerate() {
            if hi == 0.0 {
                continue;
            }
            let mut a = l.hidden_bias[i];
            for (j, &vj) in v.iter().enumerate() {
                a += l.weights[[i, j]] * vj;
            }
            e -= a;
        }
        e
    }
}

/// Gradient of the mean log-likelihood, shaped like the RBM parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl RbmGradient {
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

fn bits(state: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((state >> i) & 1) as f64).collect()
}

fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log Z = log sum_{v,h} exp(-E(v, h))`.
pub fn exact_log_partition(m: &TinyRbm) -> f64 {
    let (nv, nh) = (m.n_visible(), m.n_hidden());
    let hidden: Vec<Vec<f64>> = (0..1usize << nh).map(|s| bits(s, nh)).collect();
    log_sum_exp((0..1usize << nv).flat_map(|vs| {
        let v = bits(vs, nv);
        hidden.iter().map(move |h| -m.energy(&v, h)).collect::<Vec<_>>()
    }))
}

/// `log sum_h exp(-E(v, h))` for one visible vector.
fn log_unnormalized_marginal(m: &TinyRbm, v: &[f64]) -> f64 {
    let nh = m.n_hidden();
    log_sum_exp((0..1usize << nh).map(|hs| -m.energy(v, &bits(hs, nh))))
}

fn check_data(m: &TinyRbm, data: ArrayView2<f64>) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::rejected("oracle data set is empty"));
    }
    if data.ncols() != m.n_visible() {
        return Err(Error::rejected(format!(
            "data vectors have length {} but the model has {} visible units",
            data.ncols(),
            m.n_visible()
        )));
    }
    if data.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::rejected("oracle data must be binary"));
    }
    Ok(())
}

/// Mean over `data` of `log p(v)`.
pub fn exact_log_likelihood(m: &TinyRbm, data: ArrayView2<f64>) -> Result<f64> {
    check_data(m, data)?;
    let log_z = exact_log_partition(m);
    let total: f64 = data
        .rows()
        .into_iter()
        .map(|row| log_unnormalized_marginal(m, &row.to_vec()) - log_z)
        .sum();
    Ok(total / data.nrows() as f64)
}

/// Exact gradient of [`exact_log_likelihood`]: data expectation under
/// `p(h | v)` minus model expectation under `p(v, h)`.
pub fn exact_gradient(m: &TinyRbm, data: ArrayView2<f64>) -> Result<RbmGradient> {
    check_data(m, data)?;
    let (nv, nh) = (m.n_visible(), m.n_hidden());
    let mut grad = RbmGradient {
        weights: Array2::zeros((nh, nv)),
        visible_bias: Array1::zeros(nv),
        hidden_bias: Array1::zeros(nh),
    };

    let n = data.nrows() as f64;
    for row in data.rows() {
        let v = row.to_vec();
        let ph = m.layer.hidden_probs(&v)?;
        for i in 0..nh {
            grad.hidden_bias[i] += ph[i] / n;
            for j in 0..nv {
                grad.weights[[i, j]] += ph[i] * v[j] / n;
            }
        }
        for j in 0..nv {
            grad.visible_bias[j] += v[j] / n;
        }
    }

    let log_z = exact_log_partition(m);
    let hidden: Vec<Vec<f64>> = (0..1usize << nh).map(|s| bits(s, nh)).collect();
    for vs in 0..1usize << nv {
        let v = bits(vs, nv);
        for h in &hidden {
            let p = (-m.energy(&v, h) - log_z).exp();
            for i in 0..nh {
                grad.hidden_bias[i] -= p * h[i];
                for j in 0..nv {
                    grad.weights[[i, j]] -= p * h[i] * v[j];
                }
            }
            for j in 0..nv {
                grad.visible_bias[j] -= p * v[j];
            }
        }
    }
    Ok(grad)
}
