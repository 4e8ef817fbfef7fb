use crate::error::{Error, Result};
use crate::features::GrayImage;

/// Dense patch sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchConfig {
    /// Side length N of the square patches, in pixels.
    pub patch_size: usize,
    /// Grid spacing l between patch origins, in pixels.
    pub grid_spacing: usize,
    /// Patches whose pixel variance falls below this are mapped to the
    /// low-variance word.
    pub variance_threshold: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            patch_size: 16,
            grid_spacing: 8,
            variance_threshold: 1e-4,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 4 {
            return Err(Error::rejected("patch size must be at least 4"));
        }
        if self.grid_spacing == 0 {
            return Err(Error::rejected("grid spacing must be positive"));
        }
        if !(self.variance_threshold.is_finite() && self.variance_threshold >= 0.0) {
            return Err(Error::rejected("variance threshold must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Row-major, `size x size`.
    pub pixels: Vec<f64>,
    pub size: usize,
    /// Patch center in original-image pixel coordinates.
    pub center: (f64, f64),
    /// Pyramid level; 0 is the original image.
    pub level: usize,
}

/// Number of patch origins along one axis of length `dim`.
pub fn patches_along(dim: usize, patch_size: usize, spacing: usize) -> usize {
    if dim < patch_size {
        0
    } else {
        (dim - patch_size) / spacing + 1
    }
}

/// Extracts patches on a regular grid at every level of a 2x box pyramid,
/// down to the last level that still fits one patch.
pub fn extract_patch_pyramid(img: &GrayImage, cfg: &PatchConfig) -> Result<Vec<Patch>> {
    cfg.validate()?;
    let n = cfg.patch_size;
    if img.width() < n || img.height() < n {
        return Err(Error::rejected(format!(
            "{}x{} image is smaller than one {n}x{n} patch",
            img.width(),
            img.height()
        )));
    }
    let mut out = Vec::new();
    let mut level_img = Some(img.clone());
    let mut level = 0;
    while let Some(current) = level_img.filter(|im| im.width() >= n && im.height() >= n) {
        let scale = (1usize << level) as f64;
        let nx = patches_along(current.width(), n, cfg.grid_spacing);
        let ny = patches_along(current.height(), n, cfg.grid_spacing);
        for py in 0..ny {
            for px in 0..nx {
                let (x0, y0) = (px * cfg.grid_spacing, py * cfg.grid_spacing);
                let mut pixels = Vec::with_capacity(n * n);
                for y in y0..y0 + n {
                    for x in x0..x0 + n {
                        pixels.push(current.get(x, y));
                    }
                }
                let half = n as f64 / 2.0;
                out.push(Patch {
                    pixels,
                    size: n,
                    center: ((x0 as f64 + half) * scale, (y0 as f64 + half) * scale),
                    level,
                });
            }
        }
        level_img = current.downsample();
        level += 1;
    }
    Ok(out)
}
