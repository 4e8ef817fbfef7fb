//! Seeded synthetic bag-of-words datasets.
//!
//! Each class has a word-distribution prototype drawn from a symmetric
//! Dirichlet. A sample draws its own word distribution from a Dirichlet
//! centered on the class prototype, mixes it with a background distribution
//! shared by all classes, then draws `words_per_image` words from the result.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;

use crate::error::{Error, Result};
use crate::features::HistogramSample;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    /// Vocabulary size; samples have `k + 1` values, the last always 0.
    pub k: usize,
    pub samples_per_class: usize,
    pub words_per_image: usize,
    /// Concentration of each sample's Dirichlet around its class prototype.
    /// Larger values give samples closer to the prototype.
    pub concentration: f64,
    /// Symmetric Dirichlet parameter of the prototypes themselves. Small
    /// values give sparse, easily distinguished prototypes.
    pub prototype_sparsity: f64,
    /// Weight of the shared background distribution, in `[0, 1]`.
    pub mixing_weight: f64,
    /// Seed of the class prototypes; defaults to the dataset seed.
    pub prototype_seed: Option<u64>,
    /// Seed of the background distribution; defaults to the dataset seed.
    pub background_seed: Option<u64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 5,
            k: 200,
            samples_per_class: 200,
            words_per_image: 200,
            concentration: 20.0,
            prototype_sparsity: 0.1,
            mixing_weight: 0.5,
            prototype_seed: None,
            background_seed: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.k == 0 || self.samples_per_class == 0 || self.words_per_image == 0 {
            return Err(Error::rejected("synthetic counts must be positive"));
        }
        for (name, v) in [
            ("concentration", self.concentration),
            ("prototype sparsity", self.prototype_sparsity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::rejected(format!("{name} must be positive and finite")));
            }
        }
        if !(0.0..=1.0).contains(&self.mixing_weight) {
            return Err(Error::rejected("mixing weight must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.k + 1
    }
}

fn derive(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dirichlet draw via normalized Gamma variates. Falls back to the largest
/// parameter's coordinate when every variate underflows.
fn dirichlet(alpha: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = x.iter().sum();
    if total > 0.0 && total.is_finite() {
        x.iter_mut().for_each(|v| *v /= total);
    } else {
        let top = alpha
            .iter()
            .enumerate()
            .fold(0, |b, (i, &a)| if a > alpha[b] { i } else { b });
        x = vec![0.0; alpha.len()];
        x[top] = 1.0;
    }
    x
}

/// Class prototypes (`n_classes x k`) for a spec and seed.
pub fn prototypes(spec: &SyntheticSpec, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = derive(spec.prototype_seed.unwrap_or(seed), 1);
    (0..spec.n_classes)
        .map(|_| dirichlet(&vec![spec.prototype_sparsity; spec.k], &mut rng))
        .collect()
}

/// The shared background distribution (flatter than the prototypes).
pub fn background(spec: &SyntheticSpec, seed: u64) -> Vec<f64> {
    let mut rng = derive(spec.background_seed.unwrap_or(seed), 2);
    dirichlet(&vec![1.0; spec.k], &mut rng)
}

/// Labeled samples, class-major: all samples of class 0, then class 1, ...
pub fn synth_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Vec<HistogramSample>> {
    spec.validate()?;
    let protos = prototypes(spec, seed);
    let bg = background(spec, seed);
    let mut rng = derive(seed, 3);
    // Keep every coordinate's shape parameter strictly positive.
    let floor = 1e-3 / spec.k as f64;
    let mut out = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for (class, proto) in protos.iter().enumerate() {
        let alpha: Vec<f64> = proto.iter().map(|p| spec.concentration * p + floor).collect();
        for _ in 0..spec.samples_per_class {
            let own = dirichlet(&alpha, &mut rng);
            let mixed: Vec<f64> = own
                .iter()
                .zip(&bg)
                .map(|(p, b)| (1.0 - spec.mixing_weight) * p + spec.mixing_weight * b)
                .collect();
            let words = WeightedIndex::new(&mixed).map_err(|e| Error::NumericOverflow(e.to_string()))?;
            let mut values = vec![0.0; spec.dims()];
            for _ in 0..spec.words_per_image {
                values[words.sample(&mut rng)] += 1.0;
            }
            values.iter_mut().for_each(|v| *v /= spec.words_per_image as f64);
            out.push(HistogramSample {
                values,
                label: Some(class),
                grid: 1,
                k: spec.k,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_classes: 3,
            k: 20,
            samples_per_class: 10,
            words_per_image: 50,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn samples_are_normalized_with_empty_low_variance_bin() {
        let data = synth_dataset(&small(), 4).unwrap();
        assert_eq!(data.len(), 30);
        for s in &data {
            assert_eq!(s.values.len(), 21);
            assert_eq!(s.low_variance_share(), 0.0);
            assert!((s.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Counts of 50 words: every value is a multiple of 1/50.
            assert!(s.values.iter().all(|v| (v * 50.0 - (v * 50.0).round()).abs() < 1e-9));
        }
        assert_eq!(data[0].label, Some(0));
        assert_eq!(data[29].label, Some(2));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_dataset(&small(), 9).unwrap(), synth_dataset(&small(), 9).unwrap());
        assert_ne!(synth_dataset(&small(), 9).unwrap(), synth_dataset(&small(), 10).unwrap());
    }

    #[test]
    fn shared_background_seed() {
        let a = SyntheticSpec {
            background_seed: Some(77),
            ..small()
        };
        assert_eq!(background(&a, 1), background(&a, 2));
        assert_ne!(prototypes(&a, 1), prototypes(&a, 2));
    }

    #[test]
    fn dirichlet_is_on_the_simplex() {
        let mut rng = derive(0, 0);
        for alpha in [0.01, 0.5, 30.0] {
            let x = dirichlet(&[alpha; 7], &mut rng);
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(x.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn dirichlet_mean_matches_parameters() {
        let mut rng = derive(1, 0);
        let alpha = [1.0, 2.0, 7.0];
        let n = 20_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            for (m, v) in mean.iter_mut().zip(dirichlet(&alpha, &mut rng)) {
                *m += v / n as f64;
            }
        }
        for (m, a) in mean.iter().zip(alpha) {
            assert!((m - a / 10.0).abs() < 0.01, "{mean:?}");
        }
    }

    #[test]
    fn validation() {
        let bad = [
            SyntheticSpec { n_classes: 0, ..small() },
            SyntheticSpec { mixing_weight: 1.5, ..small() },
            SyntheticSpec { concentration: 0.0, ..small() },
            SyntheticSpec { words_per_image: 0, ..small() },
        ];
        for spec in bad {
            assert!(synth_dataset(&spec, 0).is_err());
        }
    }
}
