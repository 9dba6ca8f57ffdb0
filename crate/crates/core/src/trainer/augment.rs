//! Geometric augmentation applied identically to image and mask.
//!
//! Rotations and flips are exact index remaps; the crop transform takes a
//! random 224x224 window and mirror-pads it back to the original side, so
//! label values are never blended.

use crate::error::{Error, Result};
use crate::mask::LabelMask;
use crate::tiling::mirror_index;
use image::RgbImage;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentationSpec {
    pub rotations: bool,
    pub hflip: bool,
    pub crop: bool,
    /// Copies produced per source sample by [`augment_dataset`].
    pub multiplicity: usize,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec { rotations: true, hflip: true, crop: true, multiplicity: 5 }
    }
}

/// Crop side used by the crop-and-repad transform on 256 inputs.
pub const CROP_SIDE_FRACTION: (usize, usize) = (7, 8); // 224/256

/// One sampled geometric transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transform {
    /// Quarter turns, counter-clockwise: 0..=3.
    pub quarter_turns: u8,
    pub hflip: bool,
    /// Crop origin (row, col) and side, applied before rotation.
    pub crop: Option<(usize, usize, usize)>,
}

impl Transform {
    pub const IDENTITY: Transform = Transform { quarter_turns: 0, hflip: false, crop: None };

    pub fn sample(spec: &AugmentationSpec, side: usize, rng: &mut impl Rng) -> Self {
        let quarter_turns = if spec.rotations { rng.gen_range(0..4) } else { 0 };
        let hflip = spec.hflip && rng.gen_bool(0.5);
        let crop = if spec.crop && rng.gen_bool(0.5) {
            let crop_side = side * CROP_SIDE_FRACTION.0 / CROP_SIDE_FRACTION.1;
            let max = side - crop_side;
            Some((rng.gen_range(0..=max), rng.gen_range(0..=max), crop_side))
        } else {
            None
        };
        Transform { quarter_turns, hflip, crop }
    }

    /// Source coordinates (row, col) for output pixel (r, c) on a square of
    /// side n.
    fn source(&self, r: usize, c: usize, n: usize) -> (usize, usize) {
        // Invert the output chain: crop-pad, then rotation, then flip.
        let (mut r, mut c) = (r, c);
        if self.hflip {
            c = n - 1 - c;
        }
        for _ in 0..self.quarter_turns {
            // One clockwise step inverts one counter-clockwise output turn.
            let (nr, nc) = (c, n - 1 - r);
            r = nr;
            c = nc;
        }
        if let Some((r0, c0, side)) = self.crop {
            let pad = (n - side) / 2;
            let rr = mirror_index(r as isize - pad as isize, side) + r0;
            let cc = mirror_index(c as isize - pad as isize, side) + c0;
            (rr, cc)
        } else {
            (r, c)
        }
    }
}

/// Apply one transform to an image/mask pair. Inputs must be square and of
/// equal size.
pub fn augment(
    image: &RgbImage,
    mask: &LabelMask,
    t: Transform,
) -> Result<(RgbImage, LabelMask)> {
    let (w, h) = image.dimensions();
    if w != h {
        return Err(Error::config("augmentation requires square inputs"));
    }
    if (mask.height, mask.width) != (h as usize, w as usize) {
        return Err(Error::data("image and mask sizes disagree"));
    }
    let n = h as usize;
    let mut out_img = RgbImage::new(w, h);
    let mut out_mask = LabelMask::new(n, n, 0);
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = t.source(r, c, n);
            out_img.put_pixel(c as u32, r as u32, *image.get_pixel(sc as u32, sr as u32));
            out_mask.set(r, c, mask.get(sr, sc));
        }
    }
    Ok((out_img, out_mask))
}

/// Materialize `multiplicity` copies per source pair: the first copy is the
/// identity, the rest are sampled transforms.
pub fn augment_dataset(
    pairs: &[(RgbImage, LabelMask)],
    spec: &AugmentationSpec,
    rng: &mut impl Rng,
) -> Result<Vec<(RgbImage, LabelMask)>> {
    let mut out = Vec::with_capacity(pairs.len() * spec.multiplicity);
    for (img, mask) in pairs {
        for k in 0..spec.multiplicity {
            let t = if k == 0 {
                Transform::IDENTITY
            } else {
                Transform::sample(spec, img.height() as usize, rng)
            };
            out.push(augment(img, mask, t)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_pair(n: usize) -> (RgbImage, LabelMask) {
        let img = RgbImage::from_fn(n as u32, n as u32, |x, y| {
            image::Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8])
        });
        let mask =
            LabelMask::from_vec(n, n, (0..n * n).map(|i| (i % 5) as u8).collect()).unwrap();
        (img, mask)
    }

    #[test]
    fn identity_is_unchanged() {
        let (img, mask) = toy_pair(32);
        let (ai, am) = augment(&img, &mask, Transform::IDENTITY).unwrap();
        assert_eq!(ai, img);
        assert_eq!(am, mask);
    }

    #[test]
    fn rot180_twice_is_identity() {
        let (img, mask) = toy_pair(32);
        let rot180 = Transform { quarter_turns: 2, hflip: false, crop: None };
        let (i1, m1) = augment(&img, &mask, rot180).unwrap();
        let (i2, m2) = augment(&i1, &m1, rot180).unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn hflip_is_an_involution() {
        let (img, mask) = toy_pair(24);
        let flip = Transform { quarter_turns: 0, hflip: true, crop: None };
        let (i1, m1) = augment(&img, &mask, flip).unwrap();
        assert_ne!(i1, img);
        let (i2, m2) = augment(&i1, &m1, flip).unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn rotations_and_flips_preserve_label_histograms() {
        let (img, mask) = toy_pair(40);
        let base = mask.histogram(5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = AugmentationSpec { crop: false, ..Default::default() };
        for _ in 0..20 {
            let t = Transform::sample(&spec, 40, &mut rng);
            let (_, am) = augment(&img, &mask, t).unwrap();
            assert_eq!(am.histogram(5), base, "transform {t:?}");
        }
    }

    #[test]
    fn crop_introduces_no_new_labels() {
        let (img, mask) = toy_pair(64);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = AugmentationSpec::default();
        for _ in 0..20 {
            let t = Transform::sample(&spec, 64, &mut rng);
            let (_, am) = augment(&img, &mask, t).unwrap();
            let base = mask.histogram(8);
            for (label, &n) in am.histogram(8).iter().enumerate() {
                assert!(n == 0 || base[label] > 0);
            }
        }
    }

    #[test]
    fn dataset_multiplicity() {
        let pairs = vec![toy_pair(16), toy_pair(16), toy_pair(16)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = augment_dataset(&pairs, &AugmentationSpec::default(), &mut rng).unwrap();
        assert_eq!(out.len(), 15);
        // First copy of each source is the identity.
        assert_eq!(out[0].0, pairs[0].0);
        assert_eq!(out[5].0, pairs[1].0);
    }

    #[test]
    fn non_square_inputs_are_rejected() {
        let img = RgbImage::new(10, 12);
        let mask = LabelMask::new(12, 10, 0);
        assert!(augment(&img, &mask, Transform::IDENTITY).is_err());
    }
}
