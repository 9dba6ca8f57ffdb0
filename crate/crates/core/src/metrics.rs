//! Confusion-matrix scoring: global pixel accuracy, per-class and mean IoU,
//! per-class and macro F1.
//!
//! Macro averages run over classes present in the ground truth; classes never
//! seen in the ground truth are excluded rather than scored zero.

use crate::error::{Error, Result};
use crate::mask::{LabelMask, IGNORE};

/// C x C counts; entry (g, p) counts pixels with ground truth g predicted p.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn add(&mut self, gt: usize, pred: usize, n: u64) {
        self.counts[gt * self.num_classes + pred] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Add per-pixel counts for one (prediction, ground truth) pair.
    /// Ignored ground-truth pixels are skipped.
    pub fn accumulate(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<()> {
        if pred.height != gt.height || pred.width != gt.width {
            return Err(Error::data(format!(
                "prediction {}x{} does not match ground truth {}x{}",
                pred.height, pred.width, gt.height, gt.width
            )));
        }
        let c = self.num_classes as u8;
        for row in 0..gt.height {
            for col in 0..gt.width {
                let g = gt.get(row, col);
                if g == IGNORE {
                    continue;
                }
                let p = pred.get(row, col);
                if g >= c {
                    return Err(Error::data(format!(
                        "ground-truth label {g} >= {c} at ({row}, {col})"
                    )));
                }
                if p >= c {
                    return Err(Error::data(format!(
                        "predicted label {p} >= {c} at ({row}, {col})"
                    )));
                }
                self.counts[g as usize * self.num_classes + p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Merge independently accumulated partial matrices (associative and
    /// commutative).
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::config("confusion matrices disagree on class count"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn scores(&self) -> Result<Scores> {
        let c = self.num_classes;
        if self.total() == 0 {
            return Err(Error::data("confusion matrix is empty"));
        }
        let mut per_class = Vec::with_capacity(c);
        let mut trace = 0u64;
        for k in 0..c {
            let tp = self.get(k, k);
            trace += tp;
            let gt_count: u64 = (0..c).map(|p| self.get(k, p)).sum();
            let pred_count: u64 = (0..c).map(|g| self.get(g, k)).sum();
            let fp = pred_count - tp;
            let fn_ = gt_count - tp;
            let present = gt_count > 0;
            let denom_iou = (tp + fp + fn_) as f64;
            let iou = if denom_iou > 0.0 { tp as f64 / denom_iou } else { 0.0 };
            let denom_f1 = (2 * tp + fp + fn_) as f64;
            let f1 = if denom_f1 > 0.0 { 2.0 * tp as f64 / denom_f1 } else { 0.0 };
            let accuracy = if present { tp as f64 / gt_count as f64 } else { 0.0 };
            per_class.push(ClassScore { class: k, present, gt_count, iou, f1, accuracy });
        }
        let present: Vec<&ClassScore> = per_class.iter().filter(|s| s.present).collect();
        let n_present = present.len().max(1) as f64;
        Ok(Scores {
            pixel_accuracy: trace as f64 / self.total() as f64,
            mean_iou: present.iter().map(|s| s.iou).sum::<f64>() / n_present,
            macro_f1: present.iter().map(|s| s.f1).sum::<f64>() / n_present,
            per_class,
            scored_pixels: self.total(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub class: usize,
    pub present: bool,
    pub gt_count: u64,
    pub iou: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub pixel_accuracy: f64,
    pub mean_iou: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScore>,
    pub scored_pixels: u64,
}

impl Scores {
    /// Machine-readable report: one row per class plus a summary row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,present,gt_pixels,iou,f1,accuracy\n");
        for cs in &self.per_class {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6}\n",
                cs.class, cs.present, cs.gt_count, cs.iou, cs.f1, cs.accuracy
            ));
        }
        s.push_str(&format!(
            "summary,,{},{:.6},{:.6},{:.6}\n",
            self.scored_pixels, self.mean_iou, self.macro_f1, self.pixel_accuracy
        ));
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("class  present  gt_pixels      iou       f1  accuracy\n");
        for cs in &self.per_class {
            s.push_str(&format!(
                "{:5}  {:7}  {:9}  {:.4}  {:.4}  {:.4}\n",
                cs.class, cs.present, cs.gt_count, cs.iou, cs.f1, cs.accuracy
            ));
        }
        s.push_str(&format!(
            "PA {:.4}  mIOU {:.4}  macro-F1 {:.4} over {} pixels\n",
            self.pixel_accuracy, self.mean_iou, self.macro_f1, self.scored_pixels
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(values: &[u8]) -> LabelMask {
        LabelMask::from_vec(1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let mut cm = ConfusionMatrix::new(4);
        let m = mask(&[0, 1, 2, 3, 2, 1]);
        cm.accumulate(&m, &m).unwrap();
        let s = cm.scores().unwrap();
        assert_eq!(s.pixel_accuracy, 1.0);
        assert_eq!(s.mean_iou, 1.0);
        assert_eq!(s.macro_f1, 1.0);
    }

    #[test]
    fn four_pixel_hand_example() {
        // pred [0,0,1,1] vs gt [0,1,1,1].
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&mask(&[0, 0, 1, 1]), &mask(&[0, 1, 1, 1])).unwrap();
        assert_eq!(cm.get(0, 0), 1);
        assert_eq!(cm.get(1, 0), 1);
        assert_eq!(cm.get(1, 1), 2);
        assert_eq!(cm.get(0, 1), 0);
        let s = cm.scores().unwrap();
        assert!((s.pixel_accuracy - 0.75).abs() < 1e-15);
        assert!((s.per_class[0].iou - 0.5).abs() < 1e-15);
        assert!((s.per_class[1].iou - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.mean_iou - 7.0 / 12.0).abs() < 1e-15);
        assert!((s.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.per_class[1].f1 - 0.8).abs() < 1e-15);
        assert!((s.macro_f1 - 11.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn ignored_pixels_are_excluded() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&mask(&[0, 1, 0]), &mask(&[0, IGNORE, 1])).unwrap();
        assert_eq!(cm.total(), 2);
    }

    #[test]
    fn out_of_range_label_names_coordinates() {
        let mut cm = ConfusionMatrix::new(2);
        let err = cm.accumulate(&mask(&[0, 5]), &mask(&[0, 1])).unwrap_err().to_string();
        assert!(err.contains("(0, 1)"), "{err}");
    }

    #[test]
    fn accumulation_order_invariance_and_merge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(LabelMask, LabelMask)> = (0..6)
            .map(|_| {
                let p: Vec<u8> = (0..40).map(|_| rng.gen_range(0..5)).collect();
                let g: Vec<u8> = (0..40).map(|_| rng.gen_range(0..5)).collect();
                (mask(&p), mask(&g))
            })
            .collect();
        let mut forward = ConfusionMatrix::new(5);
        for (p, g) in &pairs {
            forward.accumulate(p, g).unwrap();
        }
        let mut backward = ConfusionMatrix::new(5);
        for (p, g) in pairs.iter().rev() {
            backward.accumulate(p, g).unwrap();
        }
        assert_eq!(forward, backward);
        // Merge of partials equals the single pass.
        let mut left = ConfusionMatrix::new(5);
        let mut right = ConfusionMatrix::new(5);
        for (i, (p, g)) in pairs.iter().enumerate() {
            if i % 2 == 0 { &mut left } else { &mut right }.accumulate(p, g).unwrap();
        }
        left.merge(&right).unwrap();
        assert_eq!(left, forward);
    }

    #[test]
    fn algebraic_inequalities_on_random_matrices() {
        // miou <= pa and f1 >= iou per class, over 1000 random matrices.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let c = rng.gen_range(2..6);
            let mut cm = ConfusionMatrix::new(c);
            for g in 0..c {
                for p in 0..c {
                    cm.add(g, p, rng.gen_range(0..50));
                }
            }
            if cm.total() == 0 {
                continue;
            }
            let s = cm.scores().unwrap();
            assert!(s.mean_iou <= s.pixel_accuracy + 1e-12, "{s:?}");
            for cs in &s.per_class {
                assert!(cs.f1 + 1e-12 >= cs.iou);
            }
        }
    }

    #[test]
    fn permuting_classes_permutes_per_class_and_keeps_macros() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cm = ConfusionMatrix::new(4);
        for g in 0..4 {
            for p in 0..4 {
                cm.add(g, p, rng.gen_range(1..30));
            }
        }
        let perm = [2usize, 0, 3, 1];
        let mut permuted = ConfusionMatrix::new(4);
        for g in 0..4 {
            for p in 0..4 {
                permuted.add(perm[g], perm[p], cm.get(g, p));
            }
        }
        let s = cm.scores().unwrap();
        let sp = permuted.scores().unwrap();
        assert!((s.pixel_accuracy - sp.pixel_accuracy).abs() < 1e-15);
        assert!((s.mean_iou - sp.mean_iou).abs() < 1e-15);
        assert!((s.macro_f1 - sp.macro_f1).abs() < 1e-15);
        for k in 0..4 {
            assert!((s.per_class[k].iou - sp.per_class[perm[k]].iou).abs() < 1e-15);
        }
    }

    #[test]
    fn stream_equals_pixel_concatenation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut streamed = ConfusionMatrix::new(3);
        let mut all_p = Vec::new();
        let mut all_g = Vec::new();
        for _ in 0..4 {
            let p: Vec<u8> = (0..25).map(|_| rng.gen_range(0..3)).collect();
            let g: Vec<u8> = (0..25).map(|_| rng.gen_range(0..3)).collect();
            streamed.accumulate(&mask(&p), &mask(&g)).unwrap();
            all_p.extend(p);
            all_g.extend(g);
        }
        let mut concat = ConfusionMatrix::new(3);
        concat.accumulate(&mask(&all_p), &mask(&all_g)).unwrap();
        assert_eq!(streamed.scores().unwrap(), concat.scores().unwrap());
    }

    #[test]
    fn csv_has_class_rows_and_summary() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&mask(&[0, 1]), &mask(&[0, 1])).unwrap();
        let csv = cm.scores().unwrap().to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().starts_with("summary"));
    }
}
