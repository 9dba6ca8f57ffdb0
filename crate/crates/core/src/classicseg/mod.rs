//! The classical superpixel baseline: SLIC partitioning, stain separation,
//! Lab/LBP histogram features with circular-neighborhood context, and a
//! linear one-vs-rest SVM over tissue labels.

mod color;
mod features;
mod lbp;
mod slic;
mod svm;

pub use color::{
    color_deconvolution, color_deconvolution_real, od_to_value, optical_density, rgb_pixel_to_lab,
    rgb_to_lab, LabImage, StainImages, StainMatrix,
};
pub use features::{
    default_ring_radii, neighborhood_features, read_feature_dump, write_feature_dump, BLOCK_LEN,
    FEATURE_LEN, LAB_BINS, LBP_BINS,
};
pub use lbp::{lbp_histogram, lbp_map};
pub use slic::{slic, SuperpixelMap};
pub use svm::{
    linear_svm_predict, linear_svm_train, subsample_per_label, LinearSvm, SvmConfig,
};

use crate::error::Result;
use crate::mask::LabelMask;
use image::RgbImage;

/// Knobs of the baseline pipeline.
#[derive(Debug, Clone, Copy)]
pub struct BaselineParams {
    pub target_area: usize,
    pub compactness: f64,
    pub slic_iters: usize,
    pub ring_radii: (f64, f64),
    /// Per-label per-image sample cap for SVM training.
    pub samples_per_label: usize,
    pub svm: SvmConfig,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            target_area: 3000,
            compactness: 10.0,
            slic_iters: 10,
            ring_radii: default_ring_radii(3000),
            samples_per_label: 2000,
            svm: SvmConfig::default(),
        }
    }
}

/// Modal pixel label per superpixel; ties break toward the smaller index.
/// Ignored pixels do not vote; a fully ignored superpixel maps to the ignore
/// label.
pub fn majority_labels(mask: &LabelMask, sp: &SuperpixelMap, num_classes: usize) -> Vec<u8> {
    let mut counts = vec![0u64; sp.num_superpixels * num_classes];
    for y in 0..sp.height {
        for x in 0..sp.width {
            let v = mask.get(y, x);
            if (v as usize) < num_classes {
                counts[sp.labels[y * sp.width + x] as usize * num_classes + v as usize] += 1;
            }
        }
    }
    (0..sp.num_superpixels)
        .map(|s| {
            let row = &counts[s * num_classes..(s + 1) * num_classes];
            let mut best = (crate::mask::IGNORE, 0u64);
            for (label, &n) in row.iter().enumerate() {
                if n > best.1 {
                    best = (label as u8, n);
                }
            }
            best.0
        })
        .collect()
}

/// Superpixels plus their feature vectors for one image.
pub struct CaseFeaturesRaw {
    pub superpixels: SuperpixelMap,
    pub features: Vec<Vec<f32>>,
}

pub fn extract_features(img: &RgbImage, params: &BaselineParams) -> Result<CaseFeaturesRaw> {
    let sp = slic(img, params.target_area, params.compactness, params.slic_iters)?;
    let lab = rgb_to_lab(img);
    let stains = color_deconvolution(img, &StainMatrix::he_default())?;
    let features = neighborhood_features(&lab, &stains, &sp, params.ring_radii)?;
    Ok(CaseFeaturesRaw { superpixels: sp, features })
}

/// Train the baseline on (image, mask) pairs: superpixel features against
/// majority labels, subsampled per label per image.
pub fn baseline_train(
    images: &[RgbImage],
    masks: &[LabelMask],
    num_classes: usize,
    params: &BaselineParams,
    seed: u64,
) -> Result<LinearSvm> {
    let mut all_features = Vec::new();
    let mut all_labels = Vec::new();
    for (i, (img, mask)) in images.iter().zip(masks).enumerate() {
        let raw = extract_features(img, params)?;
        let labels = majority_labels(mask, &raw.superpixels, num_classes);
        let mut feats = Vec::new();
        let mut labs = Vec::new();
        for (f, &l) in raw.features.into_iter().zip(&labels) {
            if (l as usize) < num_classes {
                feats.push(f);
                labs.push(l as usize);
            }
        }
        let (feats, labs) =
            subsample_per_label(&feats, &labs, params.samples_per_label, seed ^ (i as u64 + 1));
        all_features.extend(feats);
        all_labels.extend(labs);
    }
    linear_svm_train(&all_features, &all_labels, num_classes, &params.svm, seed)
}

/// Segment an image with a trained baseline: per-superpixel prediction
/// rasterized back to pixels.
pub fn baseline_predict(
    img: &RgbImage,
    model: &LinearSvm,
    params: &BaselineParams,
) -> Result<(LabelMask, SuperpixelMap)> {
    let raw = extract_features(img, params)?;
    let preds = linear_svm_predict(model, &raw.features);
    let mut mask = LabelMask::new(raw.superpixels.height, raw.superpixels.width, 0);
    for y in 0..raw.superpixels.height {
        for x in 0..raw.superpixels.width {
            let s = raw.superpixels.labels[y * raw.superpixels.width + x] as usize;
            mask.set(y, x, preds[s] as u8);
        }
    }
    Ok((mask, raw.superpixels))
}
