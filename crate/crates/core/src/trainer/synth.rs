//! Synthetic stand-in dataset: Voronoi-partitioned images whose cells carry
//! class-specific color and stripe-texture statistics over deliberately
//! imbalanced class frequencies.

use crate::mask::LabelMask;
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Anchor colors per class; chosen so every class pair separates on at least
/// one channel by a wide margin.
const ANCHORS: [[f64; 3]; 8] = [
    [235.0, 235.0, 235.0],
    [70.0, 140.0, 90.0],
    [170.0, 60.0, 120.0],
    [240.0, 180.0, 200.0],
    [230.0, 140.0, 60.0],
    [230.0, 220.0, 100.0],
    [120.0, 80.0, 40.0],
    [150.0, 30.0, 50.0],
];

/// Geometric class-frequency profile ratio (deliberate imbalance).
const CLASS_RATIO: f64 = 0.65;

pub struct SynthDataset {
    pub images: Vec<RgbImage>,
    pub masks: Vec<LabelMask>,
}

fn sample_class(rng: &mut impl Rng, num_classes: usize) -> u8 {
    let norm: f64 = (0..num_classes).map(|c| CLASS_RATIO.powi(c as i32)).sum();
    let mut u: f64 = rng.gen_range(0.0..1.0) * norm;
    for c in 0..num_classes {
        let p = CLASS_RATIO.powi(c as i32);
        if u < p {
            return c as u8;
        }
        u -= p;
    }
    (num_classes - 1) as u8
}

fn render(size: usize, num_classes: usize, rng: &mut ChaCha8Rng) -> (RgbImage, LabelMask) {
    let n_sites = rng.gen_range(8..=14);
    let sites: Vec<(f64, f64, u8)> = (0..n_sites)
        .map(|_| {
            (
                rng.gen_range(0.0..size as f64),
                rng.gen_range(0.0..size as f64),
                sample_class(rng, num_classes),
            )
        })
        .collect();
    let mut img = RgbImage::new(size as u32, size as u32);
    let mut mask = LabelMask::new(size, size, 0);
    for y in 0..size {
        for x in 0..size {
            let mut best = (0usize, f64::INFINITY);
            for (i, &(sy, sx, _)) in sites.iter().enumerate() {
                let d = (sy - y as f64).powi(2) + (sx - x as f64).powi(2);
                if d < best.1 {
                    best = (i, d);
                }
            }
            let class = sites[best.0].2;
            mask.set(y, x, class);
            let c = class as usize;
            // Class-specific stripes plus per-pixel noise on the anchor color.
            let theta = c as f64 * std::f64::consts::PI / 8.0;
            let period = 4.0 + c as f64;
            let proj = y as f64 * theta.cos() + x as f64 * theta.sin();
            let stripe = 12.0 * (2.0 * std::f64::consts::PI * proj / period).sin();
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let noise: f64 = rng.gen_range(-6.0..6.0);
                px[ch] = (ANCHORS[c][ch] + stripe + noise).clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    (img, mask)
}

/// Generate `num_images` square images with matching label masks;
/// deterministic under `seed`.
pub fn synth_dataset(num_images: usize, size: usize, num_classes: usize, seed: u64) -> SynthDataset {
    assert!(num_classes >= 2 && num_classes <= ANCHORS.len());
    let mut images = Vec::with_capacity(num_images);
    let mut masks = Vec::with_capacity(num_images);
    for i in 0..num_images {
        // Independent stream per image so subsets are stable.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)));
        let (img, mask) = render(size, num_classes, &mut rng);
        images.push(img);
        masks.push(mask);
    }
    SynthDataset { images, masks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_within_range_and_deterministic() {
        let a = synth_dataset(3, 64, 8, 42);
        for m in &a.masks {
            assert!(m.data.iter().all(|&v| v < 8));
        }
        let b = synth_dataset(3, 64, 8, 42);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x, y);
        }
        for (x, y) in a.masks.iter().zip(&b.masks) {
            assert_eq!(x, y);
        }
        let c = synth_dataset(3, 64, 8, 43);
        assert!(a.images.iter().zip(&c.images).any(|(x, y)| x != y));
    }

    #[test]
    fn class_frequencies_are_imbalanced() {
        let d = synth_dataset(24, 96, 8, 7);
        let mut counts = vec![0u64; 8];
        for m in &d.masks {
            for (i, &c) in m.histogram(8).iter().enumerate() {
                counts[i] += c;
            }
        }
        assert!(counts[0] > counts[7], "{counts:?}");
        assert!(counts.iter().all(|&c| c > 0), "every class appears: {counts:?}");
    }

    #[test]
    fn pairwise_mean_colors_separable_by_a_stump() {
        // For every class pair, a single-channel threshold on per-cell mean
        // color must separate the cells with accuracy > 0.9.
        let d = synth_dataset(24, 96, 8, 11);
        // Collect per-image per-class mean colors as "cells".
        let mut cells: Vec<(u8, [f64; 3])> = Vec::new();
        for (img, mask) in d.images.iter().zip(&d.masks) {
            let mut acc = vec![([0.0f64; 3], 0u64); 8];
            for y in 0..mask.height {
                for x in 0..mask.width {
                    let c = mask.get(y, x) as usize;
                    let p = img.get_pixel(x as u32, y as u32);
                    for ch in 0..3 {
                        acc[c].0[ch] += p[ch] as f64;
                    }
                    acc[c].1 += 1;
                }
            }
            for (c, (sum, n)) in acc.into_iter().enumerate() {
                if n > 200 {
                    cells.push((c as u8, [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64]));
                }
            }
        }
        for a in 0..8u8 {
            for b in a + 1..8 {
                let xs: Vec<(f64, bool)> = Vec::new();
                let mut best_acc = 0.0f64;
                for ch in 0..3 {
                    let mut pts: Vec<(f64, bool)> = cells
                        .iter()
                        .filter(|(c, _)| *c == a || *c == b)
                        .map(|(c, m)| (m[ch], *c == a))
                        .collect();
                    if pts.is_empty() {
                        continue;
                    }
                    pts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
                    let total = pts.len() as f64;
                    // Try every threshold between consecutive points.
                    for split in 0..=pts.len() {
                        let left_a = pts[..split].iter().filter(|p| p.1).count() as f64;
                        let right_a = pts[split..].iter().filter(|p| p.1).count() as f64;
                        let n_a = left_a + right_a;
                        let n_b = total - n_a;
                        let acc1 = (left_a + (n_b - (split as f64 - left_a))) / total;
                        let acc2 = (right_a + (split as f64 - left_a)) / total;
                        best_acc = best_acc.max(acc1).max(acc2);
                    }
                }
                drop(xs);
                assert!(best_acc > 0.9, "classes {a} vs {b}: stump accuracy {best_acc}");
            }
        }
    }
}
