//! Case-level diagnosis from tissue-label segmentations: frequency and
//! co-occurrence histograms over superpixel labels, four classification
//! tasks, and repeated stratified cross-validation with SVM and MLP
//! classifiers.

use crate::classicseg::{majority_labels, SuperpixelMap, SvmConfig};
use crate::error::{Error, Result};
use crate::mask::{LabelMask, IGNORE};
use crate::netgraph::layers::{ParamKind, ParamStore};
use crate::tensor::{Tape, Tensor, WceTargets};
use crate::trainer::SgdState;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Modal pixel label per superpixel (ties toward the smaller label index).
pub fn superpixel_labels(mask: &LabelMask, sp: &SuperpixelMap, num_classes: usize) -> Vec<u8> {
    majority_labels(mask, sp, num_classes)
}

/// Frequency and co-occurrence histograms of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseFeatures {
    /// Superpixel-count frequencies, summing to 1.
    pub frequency: Vec<f64>,
    /// Upper triangle (incl. diagonal) of the symmetric label-pair counts
    /// over region-adjacency edges, summing to 1 (all-zero when flagged).
    pub cooccurrence: Vec<f64>,
    /// Set when no adjacency edge joins two kept superpixels.
    pub zero_adjacency: bool,
}

/// Index of the unordered pair (a, b), a <= b, in the packed upper triangle.
pub fn pair_index(a: usize, b: usize, num_classes: usize) -> usize {
    debug_assert!(a <= b && b < num_classes);
    a * num_classes - a * (a + 1) / 2 + b
}

pub fn pair_count(num_classes: usize) -> usize {
    num_classes * (num_classes + 1) / 2
}

/// Histograms over per-superpixel labels and the region adjacency graph.
/// Labels listed in `excluded` (and ignore labels) drop out of both
/// histograms before normalization.
pub fn case_features(
    labels: &[u8],
    adjacency: &[Vec<u32>],
    num_classes: usize,
    excluded: &[u8],
) -> Result<CaseFeatures> {
    if labels.is_empty() {
        return Err(Error::data("case has no superpixels"));
    }
    if adjacency.len() != labels.len() {
        return Err(Error::data("adjacency does not match superpixel count"));
    }
    let keep = |l: u8| (l as usize) < num_classes && !excluded.contains(&l);
    let mut frequency = vec![0.0f64; num_classes];
    let mut kept = 0u64;
    for &l in labels {
        if keep(l) {
            frequency[l as usize] += 1.0;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::data("every superpixel label excluded"));
    }
    for v in frequency.iter_mut() {
        *v /= kept as f64;
    }
    let mut cooccurrence = vec![0.0f64; pair_count(num_classes)];
    let mut edges = 0u64;
    for (s, neighbors) in adjacency.iter().enumerate() {
        for &t in neighbors {
            let t = t as usize;
            if t <= s {
                continue; // each undirected edge once
            }
            let (a, b) = (labels[s], labels[t]);
            if keep(a) && keep(b) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                cooccurrence[pair_index(lo as usize, hi as usize, num_classes)] += 1.0;
                edges += 1;
            }
        }
    }
    let zero_adjacency = edges == 0;
    if !zero_adjacency {
        for v in cooccurrence.iter_mut() {
            *v /= edges as f64;
        }
    }
    Ok(CaseFeatures { frequency, cooccurrence, zero_adjacency })
}

/// Stroma labels dropped by the "no stroma" feature variant.
pub const STROMA_LABELS: [u8; 2] = [3, 4];

impl CaseFeatures {
    pub fn to_vector(&self) -> Vec<f32> {
        self.frequency.iter().chain(&self.cooccurrence).map(|&v| v as f32).collect()
    }
}

/// The four diagnostic categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnosis {
    Benign,
    Atypia,
    Dcis,
    Invasive,
}

impl Diagnosis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" => Ok(Diagnosis::Benign),
            "atypia" => Ok(Diagnosis::Atypia),
            "dcis" => Ok(Diagnosis::Dcis),
            "invasive" => Ok(Diagnosis::Invasive),
            _ => Err(Error::data(format!("unknown diagnosis '{s}'"))),
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            Diagnosis::Benign => "benign",
            Diagnosis::Atypia => "atypia",
            Diagnosis::Dcis => "dcis",
            Diagnosis::Invasive => "invasive",
        }
    }
}

/// The four classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskId {
    FourClass,
    InvasiveVsRest,
    BenignVsRest,
    AtypiaVsDcis,
}

impl TaskId {
    pub const ALL: [TaskId; 4] =
        [TaskId::FourClass, TaskId::InvasiveVsRest, TaskId::BenignVsRest, TaskId::AtypiaVsDcis];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::FourClass => "four_class",
            TaskId::InvasiveVsRest => "invasive_vs_rest",
            TaskId::BenignVsRest => "benign_vs_rest",
            TaskId::AtypiaVsDcis => "atypia_vs_dcis",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TaskId::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown task '{s}'")))
    }

    pub fn num_classes(&self) -> usize {
        match self {
            TaskId::FourClass => 4,
            _ => 2,
        }
    }

    /// Task class for a diagnosis; None excludes the case from the task.
    pub fn class_of(&self, d: Diagnosis) -> Option<usize> {
        match self {
            TaskId::FourClass => Some(match d {
                Diagnosis::Benign => 0,
                Diagnosis::Atypia => 1,
                Diagnosis::Dcis => 2,
                Diagnosis::Invasive => 3,
            }),
            TaskId::InvasiveVsRest => Some(if d == Diagnosis::Invasive { 1 } else { 0 }),
            TaskId::BenignVsRest => match d {
                Diagnosis::Invasive => None,
                Diagnosis::Benign => Some(0),
                _ => Some(1),
            },
            TaskId::AtypiaVsDcis => match d {
                Diagnosis::Atypia => Some(0),
                Diagnosis::Dcis => Some(1),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Svm,
    Mlp,
}

impl ClassifierKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Mlp => "mlp",
        }
    }
}

/// One-hidden-layer perceptron over case features, trained with the compute
/// core's SGD. The output layer starts at zero, so an untrained model
/// predicts class 0 for everything.
pub struct Mlp {
    params: ParamStore<f32>,
    pub hidden: usize,
    pub dim: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 64, epochs: 300, learning_rate: 0.2, momentum: 0.9 }
    }
}

fn features_to_tensor(features: &[Vec<f32>], dim: usize) -> Result<Tensor<f32>> {
    let mut t = Tensor::zeros([features.len(), dim, 1, 1]);
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::data("feature dimension varies across cases"));
        }
        t.data[i * dim..(i + 1) * dim].copy_from_slice(f);
    }
    Ok(t)
}

pub fn mlp_train(
    features: &[Vec<f32>],
    labels: &[usize],
    num_classes: usize,
    cfg: &MlpConfig,
    seed: u64,
) -> Result<Mlp> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::data("features and labels disagree or are empty"));
    }
    let dim = features[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let std1 = (2.0 / dim as f64).sqrt();
    let w1 = params.add(
        "mlp.w1".into(),
        Tensor::randn([cfg.hidden, dim, 1, 1], std1, &mut rng),
        ParamKind::Weight,
    );
    let b1 = params.add("mlp.b1".into(), Tensor::zeros([1, cfg.hidden, 1, 1]), ParamKind::Bias);
    let w2 = params.add(
        "mlp.w2".into(),
        Tensor::zeros([num_classes, cfg.hidden, 1, 1]),
        ParamKind::Weight,
    );
    let b2 = params.add("mlp.b2".into(), Tensor::zeros([1, num_classes, 1, 1]), ParamKind::Bias);

    let x = features_to_tensor(features, dim)?;
    let targets = WceTargets {
        batch: labels.len(),
        height: 1,
        width: 1,
        data: labels.iter().map(|&l| l as u8).collect(),
    };
    let weights = vec![1.0f32; num_classes];
    let mut optimizer = SgdState::new(&params);
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), false);
        let slots: Vec<_> = [w1, b1, w2, b2]
            .iter()
            .map(|&id| tape.leaf(params.slots[id].value.clone(), true))
            .collect();
        let geom = crate::tensor::ConvGeom::unit();
        let h = tape.conv2d(xv, slots[0], Some(slots[1]), geom)?;
        let h = tape.relu(h);
        let logits = tape.conv2d(h, slots[2], Some(slots[3]), geom)?;
        let loss = tape.wce_loss(logits, &targets, &weights, None)?;
        if !tape.value(loss).data[0].is_finite() {
            return Err(Error::numerics(format!("MLP loss became non-finite at epoch {epoch}")));
        }
        tape.backward(loss)?;
        let grads: Vec<Option<Tensor<f32>>> =
            slots.iter().map(|&v| tape.grad(v).cloned()).collect();
        optimizer.step(&mut params, &grads, cfg.learning_rate, cfg.momentum, 0.0)?;
    }
    Ok(Mlp { params, hidden: cfg.hidden, dim, num_classes })
}

pub fn mlp_predict(model: &Mlp, features: &[Vec<f32>]) -> Result<Vec<usize>> {
    let x = features_to_tensor(features, model.dim)?;
    let mut tape = Tape::new();
    let xv = tape.leaf(x, false);
    let vars: Vec<_> =
        model.params.slots.iter().map(|s| tape.leaf(s.value.clone(), false)).collect();
    let geom = crate::tensor::ConvGeom::unit();
    let h = tape.conv2d(xv, vars[0], Some(vars[1]), geom)?;
    let h = tape.relu(h);
    let logits = tape.conv2d(h, vars[2], Some(vars[3]), geom)?;
    let lv = tape.value(logits);
    let [n, c, _, _] = lv.shape;
    Ok((0..n)
        .map(|i| {
            let mut best = (0usize, f32::NEG_INFINITY);
            for k in 0..c {
                let v = lv.at(i, k, 0, 0);
                if v > best.1 {
                    best = (k, v);
                }
            }
            best.0
        })
        .collect())
}

impl Mlp {
    pub fn weight_snapshot(&self) -> Vec<Vec<f32>> {
        self.params.slots.iter().map(|s| s.value.to_f32_vec()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRecord {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub mean_accuracy: f64,
    /// Case-level accuracy per repeat.
    pub per_repeat: Vec<f64>,
    pub records: Vec<CvRecord>,
}

/// Stratified fold assignment: every case lands in exactly one test fold.
fn stratified_folds(
    classes: &[usize],
    num_classes: usize,
    folds: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut fold_of = vec![0usize; classes.len()];
    for k in 0..num_classes {
        let mut idx: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == k).collect();
        idx.shuffle(rng);
        for (j, &i) in idx.iter().enumerate() {
            fold_of[i] = j % folds;
        }
    }
    fold_of
}

/// Subsample to the minority-class count within the training portion.
fn balance_training(
    idx: &[usize],
    classes: &[usize],
    num_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut per: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in idx {
        per[classes[i]].push(i);
    }
    let minority = per.iter().filter(|v| !v.is_empty()).map(|v| v.len()).min().unwrap_or(0);
    let mut out = Vec::new();
    for mut v in per {
        v.shuffle(rng);
        v.truncate(minority);
        out.extend(v);
    }
    out.sort_unstable();
    out
}

/// Repeated stratified cross-validation with per-fold training-set balancing.
/// Deterministic under `seed`.
pub fn cross_validate(
    features: &[Vec<f32>],
    classes: &[usize],
    num_classes: usize,
    classifier: ClassifierKind,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<CvResult> {
    if features.len() != classes.len() || features.is_empty() {
        return Err(Error::data("features and classes disagree or are empty"));
    }
    for k in 0..num_classes {
        let n = classes.iter().filter(|&&c| c == k).count();
        if n < folds {
            return Err(Error::config(format!(
                "class {k} has {n} cases, fewer than {folds} folds"
            )));
        }
    }
    let mut records = Vec::new();
    let mut per_repeat = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((repeat as u64 + 1) * 0x9E37_79B9));
        let fold_of = stratified_folds(classes, num_classes, folds, &mut rng);
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..folds {
            let train_idx: Vec<usize> =
                (0..classes.len()).filter(|&i| fold_of[i] != fold).collect();
            let test_idx: Vec<usize> =
                (0..classes.len()).filter(|&i| fold_of[i] == fold).collect();
            let train_idx = balance_training(&train_idx, classes, num_classes, &mut rng);
            let train_f: Vec<Vec<f32>> = train_idx.iter().map(|&i| features[i].clone()).collect();
            let train_y: Vec<usize> = train_idx.iter().map(|&i| classes[i]).collect();
            let test_f: Vec<Vec<f32>> = test_idx.iter().map(|&i| features[i].clone()).collect();
            let preds = match classifier {
                ClassifierKind::Svm => {
                    let cfg = SvmConfig::default();
                    let m = crate::classicseg::linear_svm_train(
                        &train_f,
                        &train_y,
                        num_classes,
                        &cfg,
                        seed,
                    )?;
                    crate::classicseg::linear_svm_predict(&m, &test_f)
                }
                ClassifierKind::Mlp => {
                    let m = mlp_train(
                        &train_f,
                        &train_y,
                        num_classes,
                        &MlpConfig::default(),
                        seed ^ (fold as u64),
                    )?;
                    mlp_predict(&m, &test_f)?
                }
            };
            let fold_correct =
                preds.iter().zip(&test_idx).filter(|(p, &i)| **p == classes[i]).count();
            records.push(CvRecord {
                repeat,
                fold,
                accuracy: fold_correct as f64 / test_idx.len().max(1) as f64,
            });
            correct += fold_correct;
            total += test_idx.len();
        }
        per_repeat.push(correct as f64 / total as f64);
    }
    let mean_accuracy = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
    Ok(CvResult { mean_accuracy, per_repeat, records })
}

/// One line of a case manifest: id, mask path, superpixel-map path, diagnosis.
#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub case_id: String,
    pub mask_path: String,
    pub superpixel_path: String,
    pub diagnosis: Diagnosis,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::data(format!(
                "manifest line {}: expected 4 comma-separated fields",
                lineno + 1
            )));
        }
        rows.push(ManifestRow {
            case_id: parts[0].to_string(),
            mask_path: parts[1].to_string(),
            superpixel_path: parts[2].to_string(),
            diagnosis: Diagnosis::parse(parts[3])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_indexing_is_a_bijection() {
        let mut seen = std::collections::HashSet::new();
        for a in 0..8 {
            for b in a..8 {
                assert!(seen.insert(pair_index(a, b, 8)));
            }
        }
        assert_eq!(seen.len(), 36);
        assert!(seen.iter().all(|&i| i < 36));
    }

    #[test]
    fn single_label_case() {
        let labels = vec![2u8; 5];
        let adjacency = vec![vec![1], vec![0, 2], vec![1, 3], vec![2, 4], vec![3]];
        let f = case_features(&labels, &adjacency, 8, &[]).unwrap();
        assert_eq!(f.frequency[2], 1.0);
        assert_eq!(f.cooccurrence[pair_index(2, 2, 8)], 1.0);
        assert!(!f.zero_adjacency);
        assert!((f.frequency.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((f.cooccurrence.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_cooccurrence_is_dominated_by_the_cross_pair() {
        // 2x2 grid of superpixels labeled A B / B A: all 4 edges cross.
        let labels = vec![1u8, 5, 5, 1];
        let adjacency = vec![vec![1, 2], vec![0, 3], vec![0, 3], vec![1, 2]];
        let f = case_features(&labels, &adjacency, 8, &[]).unwrap();
        assert_eq!(f.cooccurrence[pair_index(1, 5, 8)], 1.0);
        assert_eq!(f.frequency[1], 0.5);
        assert_eq!(f.frequency[5], 0.5);
    }

    #[test]
    fn zero_adjacency_is_flagged() {
        let labels = vec![0u8, 1];
        let adjacency = vec![vec![], vec![]];
        let f = case_features(&labels, &adjacency, 8, &[]).unwrap();
        assert!(f.zero_adjacency);
        assert!(f.cooccurrence.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stroma_exclusion_equals_relabeling_to_ignore() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 30;
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..8)).collect();
            let half: Vec<Vec<u32>> = (0..n)
                .map(|i| (0..n as u32).filter(|&j| j as usize != i && rng.gen_bool(0.15)).collect())
                .collect();
            // Symmetrize.
            let mut adj = half.clone();
            for (i, neighbors) in half.iter().enumerate() {
                for &j in neighbors {
                    if !adj[j as usize].contains(&(i as u32)) {
                        adj[j as usize].push(i as u32);
                    }
                }
            }
            let a = case_features(&labels, &adj, 8, &STROMA_LABELS);
            let relabeled: Vec<u8> = labels
                .iter()
                .map(|&l| if STROMA_LABELS.contains(&l) { IGNORE } else { l })
                .collect();
            let b = case_features(&relabeled, &adj, 8, &[]);
            match (a, b) {
                (Ok(a), Ok(b)) => assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                (a, b) => panic!("variants disagree: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn feature_extraction_invariant_to_id_permutation() {
        let labels = vec![0u8, 1, 2, 1];
        let adjacency = vec![vec![1, 2], vec![0, 3], vec![0], vec![1]];
        let base = case_features(&labels, &adjacency, 8, &[]).unwrap();
        // Permute superpixel ids with the inverse applied to adjacency.
        let perm = [2usize, 0, 3, 1];
        let mut plabels = vec![0u8; 4];
        let mut padj = vec![Vec::new(); 4];
        for i in 0..4 {
            plabels[perm[i]] = labels[i];
            padj[perm[i]] = adjacency[i].iter().map(|&j| perm[j as usize] as u32).collect();
        }
        let permuted = case_features(&plabels, &padj, 8, &[]).unwrap();
        assert_eq!(base, permuted);
    }

    #[test]
    fn fold_assignment_is_a_partition_and_balancing_keeps_test_folds() {
        let classes: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fold_of = stratified_folds(&classes, 2, 10, &mut rng);
        for fold in 0..10 {
            let n = fold_of.iter().filter(|&&f| f == fold).count();
            assert_eq!(n, 4, "fold {fold}");
        }
        // Balancing only touches the training side.
        let train: Vec<usize> = (0..40).filter(|&i| fold_of[i] != 0).collect();
        let balanced = balance_training(&train, &classes, 2, &mut rng);
        assert!(balanced.iter().all(|i| train.contains(i)));
    }

    #[test]
    fn mlp_xor_and_determinism() {
        let features = vec![
            vec![0.0f32, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let labels = vec![0usize, 1, 1, 0];
        // Replicate the four corners with jitter for a stable fit.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            for (f, &l) in features.iter().zip(&labels) {
                let mut v = f.clone();
                for x in v.iter_mut() {
                    *x += rand::Rng::gen_range(&mut rng, -0.05..0.05);
                }
                xs.push(v);
                ys.push(l);
            }
        }
        let m = mlp_train(&xs, &ys, 2, &MlpConfig::default(), 7).unwrap();
        let preds = mlp_predict(&m, &xs).unwrap();
        let acc = preds.iter().zip(&ys).filter(|(a, b)| a == b).count() as f64 / ys.len() as f64;
        assert_eq!(acc, 1.0, "nonlinearly separable corners");

        // Same seed, same weights.
        let m2 = mlp_train(&xs, &ys, 2, &MlpConfig::default(), 7).unwrap();
        assert_eq!(m.weight_snapshot(), m2.weight_snapshot());

        // Zero-epoch training: the zero output layer predicts class 0, which
        // is chance level on a balanced set.
        let cfg = MlpConfig { epochs: 0, ..Default::default() };
        let m0 = mlp_train(&xs, &ys, 2, &cfg, 7).unwrap();
        let preds = mlp_predict(&m0, &xs).unwrap();
        assert!(preds.iter().all(|&p| p == 0));
        let acc = preds.iter().zip(&ys).filter(|(a, b)| a == b).count() as f64 / ys.len() as f64;
        assert!((acc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn manifest_parsing() {
        let text = "# cases\ncase1, m1.png, s1.bin, benign\ncase2, m2.png, s2.bin, DCIS\n";
        let rows = parse_manifest(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].diagnosis, Diagnosis::Dcis);
        assert!(parse_manifest("a,b,c\n").is_err());
    }

    #[test]
    fn task_mappings() {
        assert_eq!(TaskId::FourClass.class_of(Diagnosis::Invasive), Some(3));
        assert_eq!(TaskId::InvasiveVsRest.class_of(Diagnosis::Benign), Some(0));
        assert_eq!(TaskId::InvasiveVsRest.class_of(Diagnosis::Invasive), Some(1));
        assert_eq!(TaskId::BenignVsRest.class_of(Diagnosis::Invasive), None);
        assert_eq!(TaskId::BenignVsRest.class_of(Diagnosis::Atypia), Some(1));
        assert_eq!(TaskId::AtypiaVsDcis.class_of(Diagnosis::Benign), None);
    }
}
