//! How explicitly individual neurons represent categories.
//!
//! A neuron's performance parameter for a category is the best achievable
//! balanced accuracy, `(TPR + TNR) / 2`, of thresholding its activity, over
//! all thresholds and both orientations.

use std::fmt;

use ndarray::{Array2, ArrayView2};

use crate::dbn::{init_random, Architecture, DbnClassifier};
use crate::error::{Error, Result};
use crate::harness::output::{fmt_f64, CsvDocument, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMatrix {
    /// `n_samples x n_neurons`.
    pub activities: Array2<f64>,
    pub labels: Vec<usize>,
    /// 0 is the raw input.
    pub layer_index: usize,
}

impl ActivityMatrix {
    pub fn new(activities: Array2<f64>, labels: Vec<usize>, layer_index: usize) -> Result<Self> {
        if activities.nrows() != labels.len() {
            return Err(Error::rejected(format!(
                "{} activity rows for {} labels",
                activities.nrows(),
                labels.len()
            )));
        }
        if activities.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::rejected("activities must lie in [0, 1]"));
        }
        Ok(ActivityMatrix {
            activities,
            labels,
            layer_index,
        })
    }

    pub fn n_neurons(&self) -> usize {
        self.activities.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Orientation {
    /// Activity above the threshold predicts the category.
    AboveIsCategory,
    BelowIsCategory,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::AboveIsCategory => "above_is_category",
            Orientation::BelowIsCategory => "below_is_category",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceScore {
    /// In `[0.5, 1]`.
    pub score: f64,
    pub threshold: f64,
    pub orientation: Orientation,
}

impl PerformanceScore {
    /// Balanced accuracy of this threshold rule on the given data.
    pub fn evaluate(&self, activity: &[f64], in_category: &[bool]) -> f64 {
        let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
        for (&a, &inside) in activity.iter().zip(in_category) {
            let predicted = match self.orientation {
                Orientation::AboveIsCategory => a > self.threshold,
                Orientation::BelowIsCategory => a < self.threshold,
            };
            if inside {
                pos += 1;
                tp += predicted as usize;
            } else {
                neg += 1;
                tn += !predicted as usize;
            }
        }
        balanced(tp, pos, tn, neg)
    }
}

fn balanced(tp: usize, pos: usize, tn: usize, neg: usize) -> f64 {
    (tp as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0
}

/// Best threshold rule separating `in_category` samples by activity.
///
/// Candidate thresholds are the midpoints between consecutive distinct
/// activity values plus one sentinel below the minimum and one above the
/// maximum. Ties prefer the lower threshold, then `AboveIsCategory`.
pub fn performance_parameter(activity: &[f64], in_category: &[bool]) -> Result<PerformanceScore> {
    if activity.len() != in_category.len() {
        return Err(Error::rejected(format!(
            "{} activities for {} membership flags",
            activity.len(),
            in_category.len()
        )));
    }
    if activity.iter().any(|a| !a.is_finite()) {
        return Err(Error::rejected("activities must be finite"));
    }
    let pos = in_category.iter().filter(|&&b| b).count();
    let neg = in_category.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::rejected("both in-category and out-of-category samples are required"));
    }

    let mut order: Vec<usize> = (0..activity.len()).collect();
    order.sort_by(|&a, &b| activity[a].total_cmp(&activity[b]));

    // Sweep thresholds upward. `pos_below`/`neg_below` count samples whose
    // activity is below the current threshold.
    let min = activity[order[0]];
    let max = activity[order[order.len() - 1]];
    let mut best = PerformanceScore {
        score: f64::NEG_INFINITY,
        threshold: f64::NAN,
        orientation: Orientation::AboveIsCategory,
    };
    let mut consider = |threshold: f64, pos_below: usize, neg_below: usize| {
        let above = balanced(pos - pos_below, pos, neg_below, neg);
        let below = balanced(pos_below, pos, neg - neg_below, neg);
        for (score, orientation) in [
            (above, Orientation::AboveIsCategory),
            (below, Orientation::BelowIsCategory),
        ] {
            if score > best.score {
                best = PerformanceScore {
                    score,
                    threshold,
                    orientation,
                };
            }
        }
    };
    consider(min - 1.0, 0, 0);
    let (mut pos_below, mut neg_below) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let value = activity[order[i]];
        while i < order.len() && activity[order[i]] == value {
            if in_category[order[i]] {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() {
            value + (activity[order[i]] - value) / 2.0
        } else {
            max + 1.0
        };
        consider(threshold, pos_below, neg_below);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitnessReport {
    /// Distinct labels in ascending order.
    pub categories: Vec<usize>,
    /// `scores[c][n]`: neuron `n` against `categories[c]`.
    pub scores: Vec<Vec<PerformanceScore>>,
    /// Best neuron per category (lowest index on ties).
    pub best_neuron: Vec<usize>,
    pub layer_index: usize,
}

impl ExplicitnessReport {
    pub fn best_scores(&self) -> Vec<f64> {
        self.best_neuron
            .iter()
            .zip(&self.scores)
            .map(|(&n, row)| row[n].score)
            .collect()
    }

    pub fn to_csv(&self, provenance: &Provenance) -> CsvDocument {
        let columns = ["category", "neuron", "score", "threshold", "orientation"];
        let mut doc = CsvDocument::new(provenance, &columns);
        let line = |c: usize, n: usize, s: &PerformanceScore| {
            vec![
                c.to_string(),
                n.to_string(),
                fmt_f64(s.score),
                fmt_f64(s.threshold),
                s.orientation.to_string(),
            ]
        };
        for (c, row) in self.categories.iter().zip(&self.scores) {
            for (n, s) in row.iter().enumerate() {
                doc.row(line(*c, n, s));
            }
        }
        doc.raw("");
        doc.raw("# best neuron per category");
        doc.raw(&columns.join(","));
        for ((c, row), &n) in self.categories.iter().zip(&self.scores).zip(&self.best_neuron) {
            doc.row(line(*c, n, &row[n]));
        }
        doc
    }
}

/// Scores every neuron against every category present in the labels.
pub fn best_neurons(am: &ActivityMatrix) -> Result<ExplicitnessReport> {
    let mut categories = am.labels.clone();
    categories.sort_unstable();
    categories.dedup();
    if categories.len() < 2 {
        return Err(Error::rejected("explicitness needs at least two categories"));
    }
    if am.n_neurons() == 0 {
        return Err(Error::rejected("activity matrix has no neurons"));
    }
    let columns: Vec<Vec<f64>> = am.activities.columns().into_iter().map(|c| c.to_vec()).collect();
    let mut scores = Vec::with_capacity(categories.len());
    let mut best_neuron = Vec::with_capacity(categories.len());
    for &category in &categories {
        let inside: Vec<bool> = am.labels.iter().map(|&l| l == category).collect();
        let row = columns
            .iter()
            .map(|col| performance_parameter(col, &inside))
            .collect::<Result<Vec<_>>>()?;
        let best = row
            .iter()
            .enumerate()
            .fold(0, |b, (i, s)| if s.score > row[b].score { i } else { b });
        best_neuron.push(best);
        scores.push(row);
    }
    Ok(ExplicitnessReport {
        categories,
        scores,
        best_neuron,
        layer_index: am.layer_index,
    })
}

/// Replaces every column with mean above 0.5 by `1 - activity`; returns the
/// fraction of columns flipped.
pub fn flip_polarity(am: &ActivityMatrix) -> (ActivityMatrix, f64) {
    let mut out = am.clone();
    let n = am.activities.nrows().max(1) as f64;
    let mut flipped = 0;
    for mut col in out.activities.columns_mut() {
        if col.sum() / n > 0.5 {
            col.mapv_inplace(|a| 1.0 - a);
            flipped += 1;
        }
    }
    let fraction = if am.n_neurons() == 0 {
        0.0
    } else {
        flipped as f64 / am.n_neurons() as f64
    };
    (out, fraction)
}

/// Mean-field activities at hidden layer `layer_index` (0 = the inputs).
pub fn layer_activities(
    model: &DbnClassifier,
    x: ArrayView2<f64>,
    labels: &[usize],
    layer_index: usize,
) -> Result<ActivityMatrix> {
    let acts = model.activations_at(x, layer_index)?;
    ActivityMatrix::new(acts, labels.to_vec(), layer_index)
}

/// Explicitness of the raw input dimensions.
pub fn input_baseline(x: ArrayView2<f64>, labels: &[usize]) -> Result<ExplicitnessReport> {
    best_neurons(&ActivityMatrix::new(x.to_owned(), labels.to_vec(), 0)?)
}

/// Explicitness at the top hidden layer of an untrained, randomly
/// initialized network.
pub fn random_control(
    arch: &Architecture,
    x: ArrayView2<f64>,
    labels: &[usize],
    init_scale: f64,
    seed: u64,
) -> Result<ExplicitnessReport> {
    let model = init_random(arch, init_scale, seed)?;
    let top = model.n_hidden_layers();
    best_neurons(&layer_activities(&model, x, labels, top)?)
}
