//! Label masks: 2-D arrays of tissue-label indices.
//!
//! Labels 0..C-1 are tissue classes, 255 marks pixels excluded from loss and
//! scoring. The fixed label convention for the default 8-class setup is:
//! 0 background, 1 benign epithelium, 2 malignant epithelium, 3 normal
//! stroma, 4 desmoplastic stroma, 5 secretion, 6 necrosis, 7 blood.

use crate::error::{Error, Result};
use image::GrayImage;
use std::path::Path;

/// Sentinel for pixels excluded from loss and scoring.
pub const IGNORE: u8 = 255;

/// Number of tissue labels in the default convention.
pub const NUM_LABELS: usize = 8;

/// Fixed RGB palette for overlays, one triple per label.
pub const PALETTE: [[u8; 3]; NUM_LABELS] = [
    [255, 255, 255], // 0 background
    [0, 160, 0],     // 1 benign epithelium
    [220, 0, 0],     // 2 malignant epithelium
    [255, 192, 203], // 3 normal stroma
    [255, 150, 0],   // 4 desmoplastic stroma
    [240, 240, 0],   // 5 secretion
    [130, 70, 20],   // 6 necrosis
    [150, 0, 60],    // 7 blood
];

/// 2-D array of label indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, fill: u8) -> Self {
        LabelMask { height, width, data: vec![fill; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::data(format!(
                "mask data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(LabelMask { height, width, data })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.data[row * self.width + col] = v;
    }

    /// Counts per label index (ignore pixels under index 255 are not counted).
    pub fn histogram(&self, num_classes: usize) -> Vec<u64> {
        let mut h = vec![0u64; num_classes];
        for &v in &self.data {
            if (v as usize) < num_classes {
                h[v as usize] += 1;
            }
        }
        h
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = img.dimensions();
        Ok(LabelMask { height: h as usize, width: w as usize, data: img.into_raw() })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .ok_or_else(|| Error::internal("mask buffer size mismatch"))?;
        img.save(path)?;
        Ok(())
    }

    /// Render the mask through the fixed palette. Ignore pixels come out black.
    pub fn to_overlay(&self) -> image::RgbImage {
        let mut out = image::RgbImage::new(self.width as u32, self.height as u32);
        for r in 0..self.height {
            for c in 0..self.width {
                let v = self.get(r, c) as usize;
                let rgb = if v < NUM_LABELS { PALETTE[v] } else { [0, 0, 0] };
                out.put_pixel(c as u32, r as u32, image::Rgb(rgb));
            }
        }
        out
    }
}
