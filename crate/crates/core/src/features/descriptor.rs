use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const SPATIAL_CELLS: usize = 4;
pub const ORIENTATION_BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = SPATIAL_CELLS * SPATIAL_CELLS * ORIENTATION_BINS;

/// Entries are clamped at this value between the two normalizations.
const CLAMP: f64 = 0.2;

/// 4x4 cells x 8 orientation bins of gradient magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    /// Set for flat patches; `values` is then all zeros.
    pub low_variance: bool,
}

impl Descriptor {
    pub fn low_variance() -> Self {
        Descriptor {
            values: vec![0.0; DESCRIPTOR_LEN],
            low_variance: true,
        }
    }
}

fn variance(pixels: &[f64]) -> f64 {
    let n = pixels.len() as f64;
    let mean = pixels.iter().sum::<f64>() / n;
    pixels.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n
}

fn normalize(values: &mut [f64]) -> bool {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    values.iter_mut().for_each(|v| *v /= norm);
    true
}

/// Gradient-orientation descriptor of a square patch.
///
/// Gradients are central differences (one-sided at the border). Each pixel
/// votes its gradient magnitude into one of 8 orientation bins of the cell
/// it falls in. Patches with variance below `variance_threshold`, or with no
/// gradient at all, are flagged low-variance.
pub fn describe_patch(pixels: &[f64], width: usize, height: usize, variance_threshold: f64) -> Result<Descriptor> {
    if width != height {
        return Err(Error::rejected(format!("patch is {width}x{height}, expected square")));
    }
    let n = width;
    if n < SPATIAL_CELLS {
        return Err(Error::rejected(format!("patch side {n} is below {SPATIAL_CELLS}")));
    }
    if pixels.len() != n * n {
        return Err(Error::rejected(format!("{} pixels for a {n}x{n} patch", pixels.len())));
    }
    if variance(pixels) < variance_threshold {
        return Ok(Descriptor::low_variance());
    }

    let at = |x: usize, y: usize| pixels[y * n + x];
    let mut values = vec![0.0; DESCRIPTOR_LEN];
    let bin_width = 2.0 * PI / ORIENTATION_BINS as f64;
    for y in 0..n {
        for x in 0..n {
            let gx = at((x + 1).min(n - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(n - 1)) - at(x, y.saturating_sub(1));
            let magnitude = gx.hypot(gy);
            if magnitude == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += 2.0 * PI;
            }
            let bin = ((angle / bin_width) as usize).min(ORIENTATION_BINS - 1);
            let cell = (y * SPATIAL_CELLS / n) * SPATIAL_CELLS + x * SPATIAL_CELLS / n;
            values[cell * ORIENTATION_BINS + bin] += magnitude;
        }
    }
    if !normalize(&mut values) {
        return Ok(Descriptor::low_variance());
    }
    values.iter_mut().for_each(|v| *v = v.min(CLAMP));
    normalize(&mut values);
    Ok(Descriptor {
        values,
        low_variance: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_patch_is_low_variance() {
        let d = describe_patch(&[0.4; 64], 8, 8, 1e-4).unwrap();
        assert!(d.low_variance);
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_ramp_uses_one_bin() {
        let n = 16;
        let pixels: Vec<f64> = (0..n * n).map(|i| (i % n) as f64 / n as f64).collect();
        let d = describe_patch(&pixels, n, n, 1e-4).unwrap();
        assert!(!d.low_variance);
        for (i, &v) in d.values.iter().enumerate() {
            if i % ORIENTATION_BINS == 0 {
                assert!((v - 0.25).abs() < 1e-12);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn random_patches_are_unit_norm_and_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(4..24);
            let pixels: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
            let d = describe_patch(&pixels, n, n, 1e-4).unwrap();
            assert!(!d.low_variance);
            let norm = d.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
            assert!(d.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn clamping_caps_entries_before_renormalization() {
        // Single-orientation input: before renormalization every nonzero
        // entry is clamped to 0.2, so they end up equal.
        let n = 8;
        let pixels: Vec<f64> = (0..n * n).map(|i| (i / n) as f64 / n as f64).collect();
        let d = describe_patch(&pixels, n, n, 0.0).unwrap();
        let nonzero: Vec<f64> = d.values.iter().copied().filter(|&v| v > 0.0).collect();
        assert_eq!(nonzero.len(), 16);
        assert!(nonzero.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn rejects_non_square_and_tiny() {
        assert!(describe_patch(&[0.0; 12], 4, 3, 0.0).is_err());
        assert!(describe_patch(&[0.0; 9], 3, 3, 0.0).is_err());
        assert!(describe_patch(&[0.0; 15], 4, 4, 0.0).is_err());
    }
}
