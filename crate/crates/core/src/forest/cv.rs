//! Stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train, ForestParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Stream used for fold assignment; tree streams count up from 0.
const FOLD_STREAM: u64 = u64::MAX;
const PERMUTE_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// 0 when nothing was predicted onset.
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldMetrics>,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

/// Fold index per row. Each class is shuffled and dealt round-robin, the
/// dealing position carrying over from one class to the next, so class
/// proportions and fold sizes differ by at most one row.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::arg("k must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(FOLD_STREAM);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::arg(format!(
                "class {} has {} rows, fewer than k={k}; use a smaller k",
                if class { "onset" } else { "regular" },
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// Labels shuffled by a seeded permutation (class counts preserved).
pub fn permuted_labels(labels: &[bool], seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PERMUTE_STREAM);
    let mut out = labels.to_vec();
    out.shuffle(&mut rng);
    out
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fold `f` trains on the other folds with seed `seed + f`.
pub fn cross_validate(data: &Dataset, k: usize, params: &ForestParams, seed: u64) -> Result<CvReport> {
    let folds = stratified_folds(&data.labels(), k, seed)?;
    let mut metrics = Vec::with_capacity(k);
    for f in 0..k {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == f).collect();
        let model = train(&data.subset(&train_idx), params, seed.wrapping_add(f as u64))?;
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for &i in &test_idx {
            let row = &data.rows()[i];
            let predicted = model.predict_proba(&row.values)? >= 0.5;
            match (predicted, row.label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        metrics.push(FoldMetrics {
            fold: f,
            n_test: test_idx.len(),
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        });
    }
    let mean = |g: fn(&FoldMetrics) -> f64| metrics.iter().map(g).sum::<f64>() / k as f64;
    Ok(CvReport {
        k,
        seed,
        mean_precision: mean(|m| m.precision),
        mean_recall: mean(|m| m.recall),
        folds: metrics,
    })
}
