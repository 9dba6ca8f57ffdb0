//! One-vs-rest linear SVM trained by subgradient descent on the regularized
//! hinge loss. Each epoch applies the full-batch subgradient, so training is
//! deterministic and invariant under duplication of the training set.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major [num_classes, dim].
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, Copy)]
pub struct SvmConfig {
    /// L2 regularization strength (lambda).
    pub regularization: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { regularization: 1e-4, epochs: 200, learning_rate: 0.5 }
    }
}

impl LinearSvm {
    /// Margin scores of one sample for every class.
    pub fn margins(&self, x: &[f32]) -> Vec<f32> {
        (0..self.num_classes)
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                let dot: f32 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                dot + self.bias[k]
            })
            .collect()
    }

    pub fn predict(&self, x: &[f32]) -> usize {
        let m = self.margins(x);
        let mut best = (0usize, f32::NEG_INFINITY);
        for (k, &v) in m.iter().enumerate() {
            if v > best.1 {
                best = (k, v);
            }
        }
        best.0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        use crate::tensor::{save_archive, ArchiveEntry};
        let entries = vec![
            ArchiveEntry::new(
                "svm.weight",
                vec![self.num_classes as u32, self.dim as u32],
                self.weights.clone(),
            ),
            ArchiveEntry::new("svm.bias", vec![self.num_classes as u32], self.bias.clone()),
        ];
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        save_archive(&mut f, &entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        use crate::tensor::load_archive;
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let entries = load_archive(&mut f)?;
        let weight = entries
            .iter()
            .find(|e| e.name == "svm.weight")
            .ok_or_else(|| Error::data("archive has no svm.weight"))?;
        let bias = entries
            .iter()
            .find(|e| e.name == "svm.bias")
            .ok_or_else(|| Error::data("archive has no svm.bias"))?;
        let (k, d) = (weight.dims[0] as usize, weight.dims[1] as usize);
        Ok(LinearSvm {
            num_classes: k,
            dim: d,
            weights: weight.data.clone(),
            bias: bias.data.clone(),
        })
    }
}

/// Train one-vs-rest hinge + L2. `_seed` is kept for interface stability;
/// the full-batch subgradient needs no sampling.
pub fn linear_svm_train(
    features: &[Vec<f32>],
    labels: &[usize],
    num_classes: usize,
    config: &SvmConfig,
    _seed: u64,
) -> Result<LinearSvm> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::data("features and labels disagree or are empty"));
    }
    let distinct: std::collections::HashSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::config("SVM training needs at least two classes present"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::data(format!("label {bad} >= {num_classes}")));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::data("inconsistent feature dimensions"));
    }
    let n = features.len() as f64;
    let mut model = LinearSvm {
        num_classes,
        dim,
        weights: vec![0.0; num_classes * dim],
        bias: vec![0.0; num_classes],
    };
    let lr = config.learning_rate as f32;
    let lambda = config.regularization as f32;
    let mut grad_w = vec![0.0f32; num_classes * dim];
    let mut grad_b = vec![0.0f32; num_classes];
    for _ in 0..config.epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        grad_b.iter_mut().for_each(|g| *g = 0.0);
        for (x, &label) in features.iter().zip(labels) {
            let margins = model.margins(x);
            for k in 0..num_classes {
                let y = if label == k { 1.0f32 } else { -1.0 };
                if y * margins[k] < 1.0 {
                    let g = &mut grad_w[k * dim..(k + 1) * dim];
                    for (gv, &xv) in g.iter_mut().zip(x) {
                        *gv -= y * xv;
                    }
                    grad_b[k] -= y;
                }
            }
        }
        let inv_n = (1.0 / n) as f32;
        for k in 0..num_classes {
            let row = &mut model.weights[k * dim..(k + 1) * dim];
            let g = &grad_w[k * dim..(k + 1) * dim];
            for (w, &gv) in row.iter_mut().zip(g) {
                *w -= lr * (lambda * *w + gv * inv_n);
            }
            model.bias[k] -= lr * grad_b[k] * inv_n;
        }
    }
    Ok(model)
}

pub fn linear_svm_predict(model: &LinearSvm, features: &[Vec<f32>]) -> Vec<usize> {
    features.iter().map(|x| model.predict(x)).collect()
}

/// Cap the number of samples per label (deterministic under `seed`): the
/// per-image balancing step of the baseline pipeline.
pub fn subsample_per_label(
    features: &[Vec<f32>],
    labels: &[usize],
    cap: usize,
    seed: u64,
) -> (Vec<Vec<f32>>, Vec<usize>) {
    let mut by_label: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (_, mut idx) in by_label {
        if idx.len() > cap {
            idx.shuffle(&mut rng);
            idx.truncate(cap);
            idx.sort_unstable();
        }
        keep.extend(idx);
    }
    keep.sort_unstable();
    (
        keep.iter().map(|&i| features[i].clone()).collect(),
        keep.iter().map(|&i| labels[i]).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n_per: usize, centers: &[[f32; 2]], seed: u64) -> (Vec<Vec<f32>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..n_per {
                xs.push(vec![
                    c[0] + rng.gen_range(-0.4..0.4),
                    c[1] + rng.gen_range(-0.4..0.4),
                ]);
                ys.push(k);
            }
        }
        (xs, ys)
    }

    #[test]
    fn separable_blobs_reach_perfect_training_accuracy() {
        let (xs, ys) = blobs(40, &[[-2.0, 0.0], [2.0, 0.0]], 3);
        let m = linear_svm_train(&xs, &ys, 2, &SvmConfig::default(), 0).unwrap();
        let pred = linear_svm_predict(&m, &xs);
        let acc = pred.iter().zip(&ys).filter(|(a, b)| a == b).count() as f64 / ys.len() as f64;
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn duplicating_the_training_set_leaves_margins_unchanged() {
        let (xs, ys) = blobs(30, &[[-1.5, 1.0], [1.5, -1.0], [0.0, 2.5]], 5);
        let m1 = linear_svm_train(&xs, &ys, 3, &SvmConfig::default(), 0).unwrap();
        let mut xs2 = xs.clone();
        xs2.extend(xs.iter().cloned());
        let mut ys2 = ys.clone();
        ys2.extend(ys.iter().copied());
        let m2 = linear_svm_train(&xs2, &ys2, 3, &SvmConfig::default(), 7).unwrap();
        // Held-out probes.
        let (probe, _) = blobs(10, &[[-1.5, 1.0], [1.5, -1.0], [0.0, 2.5]], 11);
        for x in &probe {
            let a = m1.margins(x);
            let b = m2.margins(x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-3, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn single_class_data_is_a_configuration_error() {
        let xs = vec![vec![1.0f32, 2.0]; 5];
        let ys = vec![1usize; 5];
        assert!(linear_svm_train(&xs, &ys, 3, &SvmConfig::default(), 0).is_err());
    }

    #[test]
    fn subsampling_caps_each_label() {
        let xs: Vec<Vec<f32>> = (0..100).map(|i| vec![i as f32]).collect();
        let ys: Vec<usize> = (0..100).map(|i| if i < 80 { 0 } else { 1 }).collect();
        let (sx, sy) = subsample_per_label(&xs, &ys, 30, 1);
        assert_eq!(sy.iter().filter(|&&l| l == 0).count(), 30);
        assert_eq!(sy.iter().filter(|&&l| l == 1).count(), 20);
        assert_eq!(sx.len(), 50);
        // Deterministic.
        let (sx2, _) = subsample_per_label(&xs, &ys, 30, 1);
        assert_eq!(sx, sx2);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (xs, ys) = blobs(20, &[[-2.0, 0.0], [2.0, 0.0]], 9);
        let m = linear_svm_train(&xs, &ys, 2, &SvmConfig::default(), 0).unwrap();
        let p = dir.path().join("svm.ckpt");
        m.save(&p).unwrap();
        assert_eq!(LinearSvm::load(&p).unwrap(), m);
    }
}
