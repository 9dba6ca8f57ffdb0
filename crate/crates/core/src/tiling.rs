//! Overlapping patch grids over large rasters, context-bordered patch pairs,
//! and stitching of per-patch class scores back to full size.
//!
//! Patches that run past the raster edge are completed with symmetric
//! (edge-inclusive mirror) padding. Overlapping predictions are resolved by
//! averaging class-score vectors before the argmax.

use crate::error::{Error, Result};
use crate::mask::LabelMask;
use crate::tensor::Tensor;
use image::RgbImage;
use std::path::Path;

/// Default patch side.
pub const PATCH_SIZE: usize = 256;
/// Default overlap between neighboring patches.
pub const OVERLAP: usize = 56;
/// Default context border added around a patch for the coarse instance.
pub const CONTEXT_BORDER: usize = 64;

/// Placement of overlapping patches over one region of interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub roi_height: usize,
    pub roi_width: usize,
    pub patch: usize,
    pub stride: usize,
    /// Top-left corners, sorted row-major.
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    if extent <= patch {
        return vec![0];
    }
    let n = (extent - patch).div_ceil(stride) + 1;
    (0..n).map(|i| i * stride).collect()
}

impl PatchGrid {
    pub fn new(roi_height: usize, roi_width: usize, patch: usize, stride: usize) -> Result<Self> {
        if roi_height == 0 || roi_width == 0 {
            return Err(Error::data("empty image"));
        }
        if patch == 0 || stride == 0 || stride > patch {
            return Err(Error::config(format!(
                "invalid grid geometry: patch {patch}, stride {stride}"
            )));
        }
        let rows = axis_origins(roi_height, patch, stride);
        let cols = axis_origins(roi_width, patch, stride);
        let mut origins = Vec::with_capacity(rows.len() * cols.len());
        for &r in &rows {
            for &c in &cols {
                origins.push((r, c));
            }
        }
        Ok(PatchGrid { roi_height, roi_width, patch, stride, origins })
    }

    /// Grid with the default 256-pixel patches at 56-pixel overlap.
    pub fn standard(roi_height: usize, roi_width: usize) -> Result<Self> {
        PatchGrid::new(roi_height, roi_width, PATCH_SIZE, PATCH_SIZE - OVERLAP)
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Padding (top, left, bottom, right) needed to complete patch `idx`.
    pub fn pad_spec(&self, idx: usize) -> (usize, usize, usize, usize) {
        let (r, c) = self.origins[idx];
        let bottom = (r + self.patch).saturating_sub(self.roi_height);
        let right = (c + self.patch).saturating_sub(self.roi_width);
        (0, 0, bottom, right)
    }

    pub fn save_manifest(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# patch manifest: roi {}x{}, patch {}, stride {}",
            self.roi_height, self.roi_width, self.patch, self.stride
        );
        for (i, &(r, c)) in self.origins.iter().enumerate() {
            let (pt, pl, pb, pr) = self.pad_spec(i);
            let _ = writeln!(s, "{i}\t{r}\t{c}\t{pt},{pl},{pb},{pr}");
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Fold an out-of-range index back into [0, n) by edge-inclusive mirroring:
/// ..., 2, 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
pub fn mirror_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    let period = 2 * n as isize;
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    let m = m as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Read a square window with symmetric padding outside the raster.
pub fn extract_image_window(img: &RgbImage, row0: isize, col0: isize, size: usize) -> RgbImage {
    let (w, h) = img.dimensions();
    let mut out = RgbImage::new(size as u32, size as u32);
    for y in 0..size {
        let sy = mirror_index(row0 + y as isize, h as usize) as u32;
        for x in 0..size {
            let sx = mirror_index(col0 + x as isize, w as usize) as u32;
            out.put_pixel(x as u32, y as u32, *img.get_pixel(sx, sy));
        }
    }
    out
}

pub fn extract_mask_window(mask: &LabelMask, row0: isize, col0: isize, size: usize) -> LabelMask {
    let mut out = LabelMask::new(size, size, 0);
    for y in 0..size {
        let sy = mirror_index(row0 + y as isize, mask.height);
        for x in 0..size {
            let sx = mirror_index(col0 + x as isize, mask.width);
            out.set(y, x, mask.get(sy, sx));
        }
    }
    out
}

/// A patch and its context-bordered twin, centered on the same region.
#[derive(Debug, Clone)]
pub struct PatchPair {
    pub index: usize,
    pub inner: RgbImage,
    pub context: RgbImage,
}

/// Cut every grid patch out of the image (and congruently out of the mask).
pub fn extract_patches(
    img: &RgbImage,
    mask: Option<&LabelMask>,
    grid: &PatchGrid,
) -> Result<Vec<(RgbImage, Option<LabelMask>)>> {
    let (w, h) = img.dimensions();
    if (h as usize, w as usize) != (grid.roi_height, grid.roi_width) {
        return Err(Error::data(format!(
            "grid is {}x{} but image is {h}x{w}",
            grid.roi_height, grid.roi_width
        )));
    }
    if let Some(m) = mask {
        if m.height != grid.roi_height || m.width != grid.roi_width {
            return Err(Error::data("mask does not match image size"));
        }
    }
    Ok(grid
        .origins
        .iter()
        .map(|&(r, c)| {
            let image = extract_image_window(img, r as isize, c as isize, grid.patch);
            let m = mask.map(|m| extract_mask_window(m, r as isize, c as isize, grid.patch));
            (image, m)
        })
        .collect())
}

/// The patch at `idx` plus its context window with `border` extra pixels on
/// every side. The center crop of the context equals the inner patch exactly.
pub fn make_context(img: &RgbImage, grid: &PatchGrid, idx: usize, border: usize) -> Result<PatchPair> {
    let &(r, c) = grid
        .origins
        .get(idx)
        .ok_or_else(|| Error::data(format!("patch index {idx} outside grid of {}", grid.len())))?;
    let inner = extract_image_window(img, r as isize, c as isize, grid.patch);
    let context = extract_image_window(
        img,
        r as isize - border as isize,
        c as isize - border as isize,
        grid.patch + 2 * border,
    );
    Ok(PatchPair { index: idx, inner, context })
}

/// Full-size class scores and the argmax label mask produced by stitching.
#[derive(Debug, Clone)]
pub struct Stitched {
    pub mask: LabelMask,
    /// Mean class scores, shaped [1, C, H, W].
    pub scores: Tensor<f32>,
    /// Per-pixel contribution counts.
    pub coverage: Vec<u32>,
}

/// Average overlapping per-patch class scores and take the per-pixel argmax.
/// `scores[i]` must be shaped [1, C, patch, patch] and correspond to
/// `grid.origins[i]`; padded regions outside the ROI are discarded.
pub fn stitch(grid: &PatchGrid, scores: &[Tensor<f32>]) -> Result<Stitched> {
    if scores.len() != grid.len() {
        let missing = scores.len().min(grid.len());
        return Err(Error::data(format!(
            "{} score blocks for {} grid patches (first missing index {missing})",
            scores.len(),
            grid.len()
        )));
    }
    let c = scores
        .first()
        .map(|s| s.channels())
        .ok_or_else(|| Error::data("empty grid"))?;
    let (hh, ww, p) = (grid.roi_height, grid.roi_width, grid.patch);
    let mut sum = vec![0.0f32; c * hh * ww];
    let mut count = vec![0u32; hh * ww];
    for (i, block) in scores.iter().enumerate() {
        if block.shape != [1, c, p, p] {
            return Err(Error::data(format!(
                "score block {i} has shape {:?}, expected [1, {c}, {p}, {p}]",
                block.shape
            )));
        }
        let (r0, c0) = grid.origins[i];
        for y in 0..p {
            let ry = r0 + y;
            if ry >= hh {
                continue;
            }
            for x in 0..p {
                let cx = c0 + x;
                if cx >= ww {
                    continue;
                }
                for ch in 0..c {
                    sum[(ch * hh + ry) * ww + cx] += block.at(0, ch, y, x);
                }
                count[ry * ww + cx] += 1;
            }
        }
    }
    let mut mask = LabelMask::new(hh, ww, 0);
    for y in 0..hh {
        for x in 0..ww {
            let n = count[y * ww + x];
            debug_assert!(n > 0, "grid must cover every pixel");
            let mut best = (0usize, f32::NEG_INFINITY);
            for ch in 0..c {
                let v = &mut sum[(ch * hh + y) * ww + x];
                *v /= n as f32;
                if *v > best.1 {
                    best = (ch, *v);
                }
            }
            mask.set(y, x, best.0 as u8);
        }
    }
    Ok(Stitched {
        mask,
        scores: Tensor::from_vec([1, c, hh, ww], sum)?,
        coverage: count,
    })
}

/// Downscale by an integer factor with box filtering (for magnification
/// selection upstream of the patch pipeline).
pub fn downscale(img: &RgbImage, factor: usize) -> Result<RgbImage> {
    if factor == 0 {
        return Err(Error::config("downscale factor must be positive"));
    }
    let (w, h) = img.dimensions();
    let (oh, ow) = (h as usize / factor, w as usize / factor);
    if oh == 0 || ow == 0 {
        return Err(Error::data("image smaller than the downscale factor"));
    }
    let mut out = RgbImage::new(ow as u32, oh as u32);
    let area = (factor * factor) as u32;
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = [0u32; 3];
            for dy in 0..factor {
                for dx in 0..factor {
                    let p = img.get_pixel((x * factor + dx) as u32, (y * factor + dy) as u32);
                    for ch in 0..3 {
                        acc[ch] += p[ch] as u32;
                    }
                }
            }
            out.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([
                    ((acc[0] + area / 2) / area) as u8,
                    ((acc[1] + area / 2) / area) as u8,
                    ((acc[2] + area / 2) / area) as u8,
                ]),
            );
        }
    }
    Ok(out)
}
