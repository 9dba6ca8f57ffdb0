//! Per-superpixel descriptors: L*a*b* color histograms plus LBP texture
//! histograms on the two stain channels, computed over the superpixel and two
//! circular neighborhoods around its centroid, then concatenated.

use super::color::{LabImage, StainImages};
use super::lbp::lbp_map;
use super::slic::SuperpixelMap;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const LAB_BINS: usize = 32;
pub const LBP_BINS: usize = 256;
/// One region block: three Lab histograms plus two LBP histograms.
pub const BLOCK_LEN: usize = 3 * LAB_BINS + 2 * LBP_BINS;
/// [superpixel | ring 1 | ring 2].
pub const FEATURE_LEN: usize = 3 * BLOCK_LEN;

/// Default inner ring radius: twice the radius of a circle with the standard
/// 3000-pixel superpixel area.
pub fn default_ring_radii(target_area: usize) -> (f64, f64) {
    let r1 = 2.0 * (target_area as f64 / std::f64::consts::PI).sqrt();
    (r1, 2.0 * r1)
}

fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((v - lo) / (hi - lo) * bins as f64).floor();
    (t.max(0.0) as usize).min(bins - 1)
}

#[derive(Default, Clone)]
struct RegionAccum {
    lab: [Vec<u32>; 3],
    lbp_h: Vec<u32>,
    lbp_e: Vec<u32>,
    count: u64,
}

impl RegionAccum {
    fn new() -> Self {
        RegionAccum {
            lab: [vec![0; LAB_BINS], vec![0; LAB_BINS], vec![0; LAB_BINS]],
            lbp_h: vec![0; LBP_BINS],
            lbp_e: vec![0; LBP_BINS],
            count: 0,
        }
    }

    fn push(&mut self, lab: &LabImage, lbp_h: &[u8], lbp_e: &[u8], i: usize) {
        self.lab[0][bin_index(lab.l[i], 0.0, 100.0, LAB_BINS)] += 1;
        self.lab[1][bin_index(lab.a[i], -128.0, 127.0, LAB_BINS)] += 1;
        self.lab[2][bin_index(lab.b[i], -128.0, 127.0, LAB_BINS)] += 1;
        self.lbp_h[lbp_h[i] as usize] += 1;
        self.lbp_e[lbp_e[i] as usize] += 1;
        self.count += 1;
    }

    /// L1-normalized block, or all-zero for an empty region.
    fn normalized(&self, out: &mut Vec<f32>) {
        for hist in self.lab.iter().map(|h| h.as_slice()).chain([
            self.lbp_h.as_slice(),
            self.lbp_e.as_slice(),
        ]) {
            let total: u64 = hist.iter().map(|&v| v as u64).sum();
            if total == 0 {
                out.extend(std::iter::repeat(0.0f32).take(hist.len()));
            } else {
                out.extend(hist.iter().map(|&v| v as f32 / total as f32));
            }
        }
    }
}

/// Feature vectors per superpixel, each of length [`FEATURE_LEN`].
pub fn neighborhood_features(
    lab: &LabImage,
    stains: &StainImages,
    sp: &SuperpixelMap,
    radii: (f64, f64),
) -> Result<Vec<Vec<f32>>> {
    let (r1, r2) = radii;
    if !(r2 > r1 && r1 > 0.0) {
        return Err(Error::config(format!("ring radii must satisfy 0 < r1 < r2, got {r1}, {r2}")));
    }
    let (h, w) = (sp.height, sp.width);
    if lab.height != h || lab.width != w || stains.height != h || stains.width != w {
        return Err(Error::data("feature rasters disagree on size"));
    }
    let lbp_h = lbp_map(&stains.hematoxylin, h, w);
    let lbp_e = lbp_map(&stains.eosin, h, w);

    let mut sp_acc: Vec<RegionAccum> = vec![RegionAccum::new(); sp.num_superpixels];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            sp_acc[sp.labels[i] as usize].push(lab, &lbp_h, &lbp_e, i);
        }
    }

    let mut features = Vec::with_capacity(sp.num_superpixels);
    for s in 0..sp.num_superpixels {
        let (cy, cx) = sp.centroids[s];
        let mut ring1 = RegionAccum::new();
        let mut ring2 = RegionAccum::new();
        let y_lo = ((cy - r2).floor().max(0.0)) as usize;
        let y_hi = ((cy + r2).ceil() as usize).min(h - 1);
        let x_lo = ((cx - r2).floor().max(0.0)) as usize;
        let x_hi = ((cx + r2).ceil() as usize).min(w - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                if d2 > r2 * r2 {
                    continue;
                }
                let i = y * w + x;
                if d2 <= r1 * r1 {
                    // Ring 1 excludes the superpixel's own pixels.
                    if sp.labels[i] != s as u32 {
                        ring1.push(lab, &lbp_h, &lbp_e, i);
                    }
                } else {
                    ring2.push(lab, &lbp_h, &lbp_e, i);
                }
            }
        }
        let mut v = Vec::with_capacity(FEATURE_LEN);
        sp_acc[s].normalized(&mut v);
        ring1.normalized(&mut v);
        ring2.normalized(&mut v);
        debug_assert_eq!(v.len(), FEATURE_LEN);
        features.push(v);
    }
    Ok(features)
}

/// Write feature vectors as binary records (u32 superpixel id, u32 dim,
/// 32-bit floats), with a text header describing the block layout alongside.
pub fn write_feature_dump(path: &Path, features: &[Vec<f32>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (id, v) in features.iter().enumerate() {
        f.write_all(&(id as u32).to_le_bytes())?;
        f.write_all(&(v.len() as u32).to_le_bytes())?;
        for x in v {
            f.write_all(&x.to_le_bytes())?;
        }
    }
    let header = format!(
        "feature dump layout\nrecords: (u32 superpixel id, u32 dim, dim x f32 little-endian)\n\
         blocks: [superpixel | ring1 | ring2], each {BLOCK_LEN} values\n\
         block layout: L*({LAB_BINS}) a*({LAB_BINS}) b*({LAB_BINS}) lbp_hematoxylin({LBP_BINS}) lbp_eosin({LBP_BINS})\n\
         every histogram is L1-normalized or all-zero\n"
    );
    std::fs::write(path.with_extension("hdr"), header)?;
    Ok(())
}

pub fn read_feature_dump(path: &Path) -> Result<Vec<(u32, Vec<f32>)>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    let mut b4 = [0u8; 4];
    loop {
        match f.read_exact(&mut b4) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let id = u32::from_le_bytes(b4);
        f.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            f.read_exact(&mut b4)?;
            v.push(f32::from_le_bytes(b4));
        }
        out.push((id, v));
    }
    Ok(out)
}
