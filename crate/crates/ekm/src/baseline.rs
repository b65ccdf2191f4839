//! Tuned Euclidean k-NN baseline: a grid over the neighbor count and the
//! scaling option, assessed by stratified cross-validation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{scale_apply, scale_fit, stratified_folds, Dataset, LabeledExample};
use crate::error::{EkmError, Result};
use crate::fitness::vote;
use crate::seeds;

/// Baseline grid settings; the defaults reproduce the tuned-k-NN
/// comparison setup (k in {1, 3, 5}, scaling on or off, 10-fold CV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub folds: usize,
    pub neighbor_grid: Vec<usize>,
    pub master_seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { folds: 10, neighbor_grid: vec![1, 3, 5], master_seed: 0 }
    }
}

/// One grid cell: a (k, scaling) setting with its per-fold errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub k: usize,
    pub scaled: bool,
    pub fold_test_errors: Vec<f64>,
    /// Leave-one-out errors within each training fold.
    pub fold_train_errors: Vec<f64>,
    pub mean_test_error: f64,
    pub mean_train_error: f64,
}

/// Full baseline outcome: every grid cell plus the selected best cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineReport {
    pub dataset: String,
    pub config: BaselineConfig,
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the lowest mean test error; ties keep the
    /// earlier cell (smaller k first, unscaled before scaled).
    pub best: usize,
}

impl BaselineReport {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean k-NN vote among `train`; `exclude` drops the training example
/// with that source index (leave-one-out). Distance ties break by
/// ascending source index, vote ties by the nearest neighbor's class.
pub fn knn_predict(
    train: &[LabeledExample],
    x: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> usize {
    let mut order: Vec<(f64, usize, usize)> = train
        .iter()
        .enumerate()
        .filter(|(_, e)| exclude != Some(e.source_index))
        .map(|(i, e)| (squared_euclidean(&e.features, x), e.source_index, i))
        .collect();
    order.sort_unstable_by(|a, b| crate::fitness::cmp_d2(a.0, b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    let ranked: Vec<usize> = order.into_iter().map(|(_, _, i)| i).collect();
    vote(train, &ranked)
}

struct FoldData {
    train: Vec<LabeledExample>,
    test: Vec<LabeledExample>,
}

impl FoldData {
    fn test_error(&self, k: usize) -> f64 {
        let wrong = self
            .test
            .par_iter()
            .filter(|e| knn_predict(&self.train, &e.features, k, None) != e.label)
            .count();
        wrong as f64 / self.test.len() as f64
    }

    fn train_error_loo(&self, k: usize) -> f64 {
        let wrong = self
            .train
            .par_iter()
            .filter(|e| knn_predict(&self.train, &e.features, k, Some(e.source_index)) != e.label)
            .count();
        wrong as f64 / self.train.len() as f64
    }
}

/// Grid-searched Euclidean k-NN under stratified cross-validation.
///
/// The fold plan is derived from the master seed exactly as the EKM
/// experiment derives it, so per-fold errors are paired between the two.
/// Train errors are leave-one-out within the training fold; test neighbors
/// come from the training fold only.
pub fn run_knn_baseline(dataset: &Dataset, config: &BaselineConfig) -> Result<BaselineReport> {
    if config.neighbor_grid.is_empty() {
        return Err(EkmError::Config("neighbor grid is empty".into()));
    }
    if let Some(&k) = config.neighbor_grid.iter().find(|&&k| k == 0) {
        return Err(EkmError::Config(format!("neighbor count {k} must be positive")));
    }
    let mut fold_rng = ChaCha8Rng::seed_from_u64(seeds::fold_plan_seed(config.master_seed));
    let plan = stratified_folds(dataset, config.folds, &mut fold_rng)?;

    // Materialize each fold once per scaling variant. Training examples are
    // re-indexed 0..n within their fold (leave-one-out exclusion works on
    // these); test examples get an index that never collides.
    let build = |scaled: bool| -> Vec<FoldData> {
        (0..config.folds)
            .map(|f| {
                let train_idx = plan.train_indices(f);
                let train: Vec<LabeledExample> = train_idx
                    .iter()
                    .enumerate()
                    .map(|(local, &i)| LabeledExample {
                        features: dataset.examples[i].features.clone(),
                        label: dataset.examples[i].label,
                        source_index: local,
                    })
                    .collect();
                let test: Vec<LabeledExample> = plan
                    .test_indices(f)
                    .iter()
                    .map(|&i| LabeledExample {
                        features: dataset.examples[i].features.clone(),
                        label: dataset.examples[i].label,
                        source_index: usize::MAX,
                    })
                    .collect();
                if scaled {
                    let params = scale_fit(&train);
                    FoldData {
                        train: scale_apply(&params, &train),
                        test: scale_apply(&params, &test),
                    }
                } else {
                    FoldData { train, test }
                }
            })
            .collect()
    };
    let variants = [build(false), build(true)];

    let mut cells = Vec::new();
    for &k in &config.neighbor_grid {
        for scaled in [false, true] {
            let folds = &variants[usize::from(scaled)];
            let fold_test_errors: Vec<f64> = folds.iter().map(|fd| fd.test_error(k)).collect();
            let fold_train_errors: Vec<f64> =
                folds.iter().map(|fd| fd.train_error_loo(k)).collect();
            let mean_test_error =
                fold_test_errors.iter().sum::<f64>() / fold_test_errors.len() as f64;
            let mean_train_error =
                fold_train_errors.iter().sum::<f64>() / fold_train_errors.len() as f64;
            cells.push(GridCell {
                k,
                scaled,
                fold_test_errors,
                fold_train_errors,
                mean_test_error,
                mean_train_error,
            });
        }
    }

    let mut best = 0;
    for (i, cell) in cells.iter().enumerate() {
        if cell.mean_test_error < cells[best].mean_test_error {
            best = i;
        }
    }

    Ok(BaselineReport { dataset: dataset.name.clone(), config: config.clone(), cells, best })
}
