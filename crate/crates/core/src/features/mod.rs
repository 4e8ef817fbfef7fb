//! Image to histogram pipeline: patch pyramid, gradient-orientation
//! descriptors, k-means vocabulary with an extra low-variance word, and
//! spatially gridded normalized histograms.

pub mod dataset;
pub mod descriptor;
pub mod histogram;
pub mod image;
pub mod kmeans;
pub mod patches;

pub use dataset::{load_histograms, parse_histograms, save_histograms};
pub use descriptor::{describe_patch, Descriptor, DESCRIPTOR_LEN};
pub use histogram::{build_histogram, HistogramSample};
pub use image::GrayImage;
pub use kmeans::{kmeans_codebook, quantize, Codebook};
pub use patches::{extract_patch_pyramid, Patch, PatchConfig};

use crate::error::{Error, Result};

/// Everything needed to turn images into histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub patch: PatchConfig,
    /// Vocabulary size K (excluding the low-variance word).
    pub k: usize,
    pub grid: usize,
    pub smoothing_sigma: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            patch: PatchConfig::default(),
            k: 200,
            grid: 1,
            smoothing_sigma: 0.25,
            kmeans_iters: 100,
            seed: 0,
        }
    }
}

/// Descriptor and original-image center of every pyramid patch.
pub fn image_descriptors(img: &GrayImage, cfg: &PatchConfig) -> Result<Vec<(Descriptor, (f64, f64))>> {
    extract_patch_pyramid(img, cfg)?
        .into_iter()
        .map(|p| {
            describe_patch(&p.pixels, p.size, p.size, cfg.variance_threshold).map(|d| (d, p.center))
        })
        .collect()
}

/// Learns a K-word vocabulary from the patches of `images`.
pub fn learn_codebook(images: &[GrayImage], cfg: &FeatureConfig) -> Result<Codebook> {
    if images.is_empty() {
        return Err(Error::rejected("no images to learn a vocabulary from"));
    }
    let mut descriptors = Vec::new();
    for img in images {
        descriptors.extend(image_descriptors(img, &cfg.patch)?.into_iter().map(|(d, _)| d));
    }
    kmeans_codebook(&descriptors, cfg.k, cfg.seed, cfg.kmeans_iters)
}

pub fn image_histogram(
    img: &GrayImage,
    codebook: &Codebook,
    cfg: &FeatureConfig,
    label: Option<usize>,
) -> Result<HistogramSample> {
    let words = image_descriptors(img, &cfg.patch)?
        .into_iter()
        .map(|(d, center)| quantize(&d, codebook).map(|w| (w, center)))
        .collect::<Result<Vec<_>>>()?;
    let mut h = build_histogram(
        &words,
        (img.width(), img.height()),
        codebook.k(),
        cfg.grid,
        cfg.smoothing_sigma,
    )?;
    h.label = label;
    Ok(h)
}
