//! Training loop: SGD with the fixed hyperparameter set, inverse-frequency
//! loss weighting, on-the-fly augmentation, periodic validation, and
//! best-by-validation checkpointing.

mod augment;
mod sgd;
mod synth;
mod weights;

pub use augment::{augment, augment_dataset, AugmentationSpec, Transform};
pub use sgd::SgdState;
pub use synth::{synth_dataset, SynthDataset};
pub use weights::class_weights;

use crate::error::{Error, Result};
use crate::mask::{LabelMask, IGNORE};
use crate::metrics::ConfusionMatrix;
use crate::netgraph::{parse_bool, parse_f64, parse_kv, parse_usize};
use crate::netgraph::SegmentationModel;
use crate::tensor::{Tape, Tensor, WceTargets};
use crate::tiling::extract_image_window;
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Steps between validation passes (also the checkpointing cadence).
    pub val_interval: usize,
    pub augment: AugmentationSpec,
    /// Assert that every tape value and gradient stays finite, every step.
    pub check_finite: bool,
    /// Stop once a validation pass reaches both thresholds (pa, miou).
    pub early_stop: Option<(f64, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0005,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 10,
            max_steps: 3000,
            seed: 0,
            validation_fraction: 0.1,
            val_interval: 200,
            augment: AugmentationSpec::default(),
            check_finite: true,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || self.momentum < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::config("rates must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.val_interval == 0 {
            return Err(Error::config("batch_size and val_interval must be positive"));
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "validation_fraction = {}", self.validation_fraction);
        let _ = writeln!(s, "val_interval = {}", self.val_interval);
        let _ = writeln!(s, "augment_rotations = {}", self.augment.rotations);
        let _ = writeln!(s, "augment_hflip = {}", self.augment.hflip);
        let _ = writeln!(s, "augment_crop = {}", self.augment.crop);
        let _ = writeln!(s, "augment_multiplicity = {}", self.augment.multiplicity);
        let _ = writeln!(s, "check_finite = {}", self.check_finite);
        s
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (key, value) in parse_kv(text)? {
            match key.as_str() {
                "learning_rate" => cfg.learning_rate = parse_f64(&key, &value)?,
                "momentum" => cfg.momentum = parse_f64(&key, &value)?,
                "weight_decay" => cfg.weight_decay = parse_f64(&key, &value)?,
                "batch_size" => cfg.batch_size = parse_usize(&key, &value)?,
                "max_steps" => cfg.max_steps = parse_usize(&key, &value)?,
                "seed" => cfg.seed = parse_usize(&key, &value)? as u64,
                "validation_fraction" => cfg.validation_fraction = parse_f64(&key, &value)?,
                "val_interval" => cfg.val_interval = parse_usize(&key, &value)?,
                "augment_rotations" => cfg.augment.rotations = parse_bool(&key, &value)?,
                "augment_hflip" => cfg.augment.hflip = parse_bool(&key, &value)?,
                "augment_crop" => cfg.augment.crop = parse_bool(&key, &value)?,
                "augment_multiplicity" => cfg.augment.multiplicity = parse_usize(&key, &value)?,
                "check_finite" => cfg.check_finite = parse_bool(&key, &value)?,
                _ => return Err(Error::config(format!("unknown train config key '{key}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }
}

/// Seed-deterministic split into (train, validation) index sets.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5057_1157));
    let n_val = ((n as f64) * validation_fraction).round() as usize;
    let val = idx.split_off(n - n_val.min(n));
    (idx, val)
}

/// Pack images into a [B, 3, H, W] tensor scaled to [0, 1].
pub fn images_to_tensor(images: &[&RgbImage]) -> Result<Tensor<f32>> {
    let first = images.first().ok_or_else(|| Error::data("empty image batch"))?;
    let (w, h) = first.dimensions();
    let (h, w) = (h as usize, w as usize);
    let mut t = Tensor::zeros([images.len(), 3, h, w]);
    for (b, img) in images.iter().enumerate() {
        if img.dimensions() != (w as u32, h as u32) {
            return Err(Error::data("image batch sizes disagree"));
        }
        for y in 0..h {
            for x in 0..w {
                let p = img.get_pixel(x as u32, y as u32);
                for ch in 0..3 {
                    *t.at_mut(b, ch, y, x) = p[ch] as f32 / 255.0;
                }
            }
        }
    }
    Ok(t)
}

/// Mirror-pad each patch-sized image out to `patch + 2 * border` for the
/// coarse context instance.
fn context_images(images: &[&RgbImage], border: usize) -> Vec<RgbImage> {
    images
        .iter()
        .map(|img| {
            let side = img.width() as usize + 2 * border;
            extract_image_window(img, -(border as isize), -(border as isize), side)
        })
        .collect()
}

/// Per-instance input tensors for a batch of patch-sized samples, largest
/// context first.
pub fn instance_batch(
    images: &[&RgbImage],
    model: &SegmentationModel<f32>,
) -> Result<Vec<Tensor<f32>>> {
    let sizes = model.config.instance_input_sizes();
    let patch = *sizes.last().unwrap();
    for img in images {
        if img.width() as usize != patch || img.height() as usize != patch {
            return Err(Error::data(format!(
                "training samples must be {patch}x{patch}, got {}x{}",
                img.height(),
                img.width()
            )));
        }
    }
    sizes
        .iter()
        .map(|&s| {
            if s == patch {
                images_to_tensor(images)
            } else {
                let ctx = context_images(images, (s - patch) / 2);
                images_to_tensor(&ctx.iter().collect::<Vec<_>>())
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValScores {
    pub step: usize,
    pub pixel_accuracy: f64,
    pub mean_iou: f64,
    pub macro_f1: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub steps_run: usize,
    pub final_loss: f64,
    pub best_val: Option<ValScores>,
    pub log_path: PathBuf,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
}

/// Validation over full patches with the current weights.
pub fn evaluate(
    model: &SegmentationModel<f32>,
    images: &[RgbImage],
    masks: &[LabelMask],
) -> Result<crate::metrics::Scores> {
    let mut cm = ConfusionMatrix::new(model.config.num_classes);
    for (img, mask) in images.iter().zip(masks) {
        let inputs = instance_batch(&[img], model)?;
        let logits = model.predict_logits(&inputs, false)?;
        let pred = argmax_mask(&logits, 0);
        cm.accumulate(&pred, mask)?;
    }
    cm.scores()
}

/// Per-pixel argmax of one batch element of a [N, C, H, W] score tensor.
pub fn argmax_mask(logits: &Tensor<f32>, batch_index: usize) -> LabelMask {
    let [_, c, h, w] = logits.shape;
    let mut mask = LabelMask::new(h, w, 0);
    for y in 0..h {
        for x in 0..w {
            let mut best = (0usize, f32::NEG_INFINITY);
            for ch in 0..c {
                let v = logits.at(batch_index, ch, y, x);
                if v > best.1 {
                    best = (ch, v);
                }
            }
            mask.set(y, x, best.0 as u8);
        }
    }
    mask
}

/// Run SGD training. Deterministic under `cfg.seed` (single-threaded).
/// Writes `train.log`, `best.ckpt`, and `last.ckpt` under `out_dir`.
pub fn train(
    model: &mut SegmentationModel<f32>,
    train_images: &[RgbImage],
    train_masks: &[LabelMask],
    val_images: &[RgbImage],
    val_masks: &[LabelMask],
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_images.is_empty() || train_images.len() != train_masks.len() {
        return Err(Error::data("empty or inconsistent training set"));
    }
    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join("train.log");
    let best_path = out_dir.join("best.ckpt");
    let last_path = out_dir.join("last.ckpt");
    let mut log = String::new();
    let _ = writeln!(
        log,
        "# seed={} lr={} momentum={} weight_decay={} batch_size={} max_steps={}",
        cfg.seed, cfg.learning_rate, cfg.momentum, cfg.weight_decay, cfg.batch_size, cfg.max_steps
    );

    let num_classes = model.config.num_classes;
    let weights_f64 = class_weights(train_masks.iter(), num_classes)?;
    let weights: Vec<f32> = weights_f64.iter().map(|&w| w as f32).collect();
    let _ = writeln!(
        log,
        "# class_weights={}",
        weights_f64.iter().map(|w| format!("{w:.6}")).collect::<Vec<_>>().join(",")
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_images.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut optimizer = SgdState::new(&model.params);
    let mut best_val: Option<ValScores> = None;
    let mut final_loss = f64::NAN;
    let mut steps_run = 0usize;

    'steps: for step in 1..=cfg.max_steps {
        // Assemble the batch, reshuffling at epoch boundaries.
        let mut batch_idx = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let mut batch_imgs = Vec::with_capacity(cfg.batch_size);
        let mut batch_masks = Vec::with_capacity(cfg.batch_size);
        for &i in &batch_idx {
            let t = Transform::sample(&cfg.augment, train_images[i].width() as usize, &mut rng);
            let (img, mask) = augment(&train_images[i], &train_masks[i], t)?;
            batch_imgs.push(img);
            batch_masks.push(mask);
        }
        let img_refs: Vec<&RgbImage> = batch_imgs.iter().collect();
        let inputs = instance_batch(&img_refs, model)?;
        let targets = WceTargets::from_masks(&batch_masks)?;

        let mut tape = Tape::new();
        let input_vars: Vec<_> = inputs.into_iter().map(|t| tape.leaf(t, false)).collect();
        let mut bound = model.new_binding();
        let logits = model.forward_train(&mut tape, &input_vars, &mut bound)?;
        let loss = tape.wce_loss(logits, &targets, &weights, Some(IGNORE))?;
        let loss_value = tape.value(loss).data[0] as f64;
        if !loss_value.is_finite() {
            let _ = writeln!(log, "step={step} loss=NaN ABORT batch={batch_idx:?}");
            std::fs::write(&log_path, &log)?;
            return Err(Error::numerics(format!(
                "non-finite loss at step {step}; offending batch indices {batch_idx:?}"
            )));
        }
        tape.backward(loss)?;
        if cfg.check_finite {
            tape.assert_all_finite().map_err(|e| {
                Error::numerics(format!("step {step}, batch {batch_idx:?}: {e}"))
            })?;
        }
        let grads: Vec<Option<Tensor<f32>>> =
            bound.iter().map(|b| b.and_then(|v| tape.grad(v).cloned())).collect();
        drop(tape);
        optimizer.step(
            &mut model.params,
            &grads,
            cfg.learning_rate,
            cfg.momentum,
            cfg.weight_decay,
        )?;
        final_loss = loss_value;
        steps_run = step;

        let mut line = format!("step={step} loss={loss_value:.6} lr={}", cfg.learning_rate);
        if step % cfg.val_interval == 0 || step == cfg.max_steps {
            if !val_images.is_empty() {
                let scores = evaluate(model, val_images, val_masks)?;
                let _ = write!(
                    line,
                    " val_pa={:.4} val_miou={:.4} val_f1={:.4}",
                    scores.pixel_accuracy, scores.mean_iou, scores.macro_f1
                );
                let v = ValScores {
                    step,
                    pixel_accuracy: scores.pixel_accuracy,
                    mean_iou: scores.mean_iou,
                    macro_f1: scores.macro_f1,
                };
                if best_val.as_ref().is_none_or(|b| v.mean_iou > b.mean_iou) {
                    model.save_checkpoint(&best_path)?;
                    best_val = Some(v.clone());
                }
                if let Some((pa, miou)) = cfg.early_stop {
                    if v.pixel_accuracy >= pa && v.mean_iou >= miou {
                        log.push_str(&line);
                        log.push('\n');
                        break 'steps;
                    }
                }
            } else {
                model.save_checkpoint(&best_path)?;
            }
        }
        log.push_str(&line);
        log.push('\n');
    }

    model.save_checkpoint(&last_path)?;
    if best_val.is_none() && !log.contains("val_pa") {
        // No validation ran; keep best == last.
        model.save_checkpoint(&best_path)?;
    }
    std::fs::write(&log_path, &log)?;
    Ok(TrainReport {
        steps_run,
        final_loss,
        best_val,
        log_path,
        best_checkpoint: best_path,
        last_checkpoint: last_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.max_steps = 123;
        cfg.augment.crop = false;
        let back = TrainConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (a_train, a_val) = split_indices(100, 0.1, 9);
        let (b_train, b_val) = split_indices(100, 0.1, 9);
        assert_eq!(a_train, b_train);
        assert_eq!(a_val, b_val);
        assert_eq!(a_val.len(), 10);
        let mut all: Vec<usize> = a_train.iter().chain(&a_val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn image_batch_is_scaled() {
        let img = RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 51]));
        let t = images_to_tensor(&[&img]).unwrap();
        assert_eq!(t.shape, [1, 3, 2, 2]);
        assert_eq!(t.at(0, 0, 0, 0), 1.0);
        assert_eq!(t.at(0, 1, 0, 0), 0.0);
        assert!((t.at(0, 2, 0, 0) - 0.2).abs() < 1e-6);
    }
}
