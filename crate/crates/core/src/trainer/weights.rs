//! Inverse class probability loss weighting: w_c = N / (C * n_c) over
//! non-ignored pixels; classes absent from the stream get weight zero and
//! drop out of the loss.

use crate::error::{Error, Result};
use crate::mask::LabelMask;

pub fn class_weights<'a>(
    masks: impl IntoIterator<Item = &'a LabelMask>,
    num_classes: usize,
) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; num_classes];
    for m in masks {
        for (i, &c) in m.histogram(num_classes).iter().enumerate() {
            counts[i] += c;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::data("all pixels ignored: class weights undefined"));
    }
    Ok(counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { total as f64 / (num_classes as f64 * n as f64) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::IGNORE;

    fn mask_with_counts(counts: &[usize]) -> LabelMask {
        let mut data = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            data.extend(std::iter::repeat(label as u8).take(n));
        }
        LabelMask::from_vec(1, data.len(), data).unwrap()
    }

    #[test]
    fn formula_evaluation() {
        let m = mask_with_counts(&[900, 100]);
        let w = class_weights([&m], 2).unwrap();
        assert!((w[0] - 1000.0 / 1800.0).abs() < 1e-12);
        assert!((w[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_counts_give_unit_weights() {
        let m = mask_with_counts(&[50, 50, 50, 50]);
        let w = class_weights([&m], 4).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn absent_class_gets_zero_weight() {
        let m = mask_with_counts(&[60, 0, 40]);
        let w = class_weights([&m], 3).unwrap();
        assert_eq!(w[1], 0.0);
        assert!((w[0] - 100.0 / 180.0).abs() < 1e-12);
        assert!((w[2] - 100.0 / 120.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_counts_sum_to_total() {
        // sum_c w_c * n_c = N when every class is present.
        let m = mask_with_counts(&[10, 20, 30, 40]);
        let w = class_weights([&m], 4).unwrap();
        let n = [10.0, 20.0, 30.0, 40.0];
        let total: f64 = w.iter().zip(&n).map(|(a, b)| a * b).sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn all_ignored_is_a_data_error() {
        let m = LabelMask::from_vec(1, 3, vec![IGNORE; 3]).unwrap();
        assert!(class_weights([&m], 2).is_err());
    }
}
