use crate::error::{Error, Result};

pub const SUPPORTED_GRIDS: [usize; 3] = [1, 2, 4];

/// Normalized visual-word histogram of one image.
///
/// Layout: cell `c` (row-major over the `grid x grid` partition) occupies
/// indices `c*K .. (c+1)*K`; index `grid^2 * K` is the global low-variance bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSample {
    pub values: Vec<f64>,
    pub label: Option<usize>,
    pub grid: usize,
    pub k: usize,
}

impl HistogramSample {
    pub fn expected_len(grid: usize, k: usize) -> usize {
        grid * grid * k + 1
    }

    pub fn low_variance_share(&self) -> f64 {
        self.values[self.grid * self.grid * self.k]
    }
}

/// Splits each word's unit mass over the grid cells.
///
/// With `smoothing_sigma > 0` the weights are a Gaussian of the distance
/// from the patch center to each cell center, with per-axis standard
/// deviation `smoothing_sigma` times the cell size. With `smoothing_sigma == 0`
/// the whole mass goes to the nearest cell center.
pub fn build_histogram(
    words: &[(usize, (f64, f64))],
    img_dims: (usize, usize),
    k: usize,
    grid: usize,
    smoothing_sigma: f64,
) -> Result<HistogramSample> {
    if words.is_empty() {
        return Err(Error::rejected("no words to histogram"));
    }
    if !SUPPORTED_GRIDS.contains(&grid) {
        return Err(Error::rejected(format!("grid {grid} not in {{1, 2, 4}}")));
    }
    if k == 0 {
        return Err(Error::rejected("vocabulary size must be positive"));
    }
    if !(smoothing_sigma.is_finite() && smoothing_sigma >= 0.0) {
        return Err(Error::rejected("smoothing sigma must be non-negative"));
    }
    let (width, height) = img_dims;
    if width == 0 || height == 0 {
        return Err(Error::rejected("image dimensions must be positive"));
    }
    if let Some(&(w, _)) = words.iter().find(|(w, _)| *w > k) {
        return Err(Error::rejected(format!("word index {w} outside [0, {k}]")));
    }

    let cells = grid * grid;
    let (cell_w, cell_h) = (width as f64 / grid as f64, height as f64 / grid as f64);
    let centers: Vec<(f64, f64)> = (0..cells)
        .map(|c| (((c % grid) as f64 + 0.5) * cell_w, ((c / grid) as f64 + 0.5) * cell_h))
        .collect();

    let mut values = vec![0.0; cells * k + 1];
    let mut weights = vec![0.0; cells];
    for &(word, (x, y)) in words {
        if word == k {
            values[cells * k] += 1.0;
            continue;
        }
        // Squared distances in units of cell size.
        let d2: Vec<f64> = centers
            .iter()
            .map(|&(cx, cy)| ((x - cx) / cell_w).powi(2) + ((y - cy) / cell_h).powi(2))
            .collect();
        if grid == 1 {
            weights[0] = 1.0;
        } else if smoothing_sigma == 0.0 {
            let nearest = d2
                .iter()
                .enumerate()
                .fold(0, |best, (i, &d)| if d < d2[best] { i } else { best });
            weights.iter_mut().for_each(|w| *w = 0.0);
            weights[nearest] = 1.0;
        } else {
            let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
            let s2 = 2.0 * smoothing_sigma * smoothing_sigma;
            for (w, d) in weights.iter_mut().zip(&d2) {
                *w = (-(d - min) / s2).exp();
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
        for (c, &w) in weights.iter().enumerate() {
            values[c * k + word] += w;
        }
    }
    let total = words.len() as f64;
    values.iter_mut().for_each(|v| *v /= total);
    Ok(HistogramSample {
        values,
        label: None,
        grid,
        k,
    })
}
