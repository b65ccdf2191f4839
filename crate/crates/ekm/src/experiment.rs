//! The cross-validation protocol: per fold, several independently seeded
//! evolutions; the runs with the best training error are kept and their
//! test errors averaged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coevo::{coevolve, select_final, CoevoConfig};
use crate::data::{scale_apply, scale_fit, stratified_folds, Dataset, LabeledExample, ScalingParams};
use crate::error::{EkmError, Result};
use crate::fitness::classify_nn;
use crate::kernel::KernelExpr;
use crate::model::Classifier;
use crate::seeds;

/// Protocol settings around the co-evolution itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub folds: usize,
    pub runs_per_fold: usize,
    /// Runs kept per fold, selected by lowest training error.
    pub keep_best: usize,
    /// Min-max scale features (fit on each training fold) before evolving.
    pub scale_features: bool,
    pub master_seed: u64,
    pub coevo: CoevoConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            folds: 10,
            runs_per_fold: 10,
            keep_best: 5,
            scale_features: false,
            master_seed: 0,
            coevo: CoevoConfig::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.coevo.validate()?;
        if self.folds < 2 {
            return Err(EkmError::Config("folds must be at least 2".into()));
        }
        if self.runs_per_fold == 0 {
            return Err(EkmError::Config("runs_per_fold must be positive".into()));
        }
        if self.keep_best == 0 || self.keep_best > self.runs_per_fold {
            return Err(EkmError::Config(format!(
                "keep_best {} must be in [1, runs_per_fold {}]",
                self.keep_best, self.runs_per_fold
            )));
        }
        Ok(())
    }
}

/// One evolution run inside one fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub fold: usize,
    pub run: usize,
    pub seed: u64,
    /// Whole-training-set 1-NN error of the selected final model.
    pub train_error: f64,
    pub test_error: f64,
    pub kernel: String,
    pub kernel_size: usize,
    /// Generation the final model was taken from.
    pub generation: usize,
    /// Prototype positions in the original dataset.
    pub prototype_indices: Vec<usize>,
    /// Whether this run is among the fold's kept best.
    pub kept: bool,
}

/// Aggregates of one fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub runs: Vec<RunSummary>,
    /// Mean test error over the kept runs.
    pub test_error: f64,
    /// Mean training error over the kept runs.
    pub train_error: f64,
}

/// Whole-experiment report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub config: ProtocolConfig,
    pub folds: Vec<FoldReport>,
    /// Per-fold kept-run test errors (one value per fold, for pairing).
    pub fold_test_errors: Vec<f64>,
    /// Mean over the fold means: the best-half test error.
    pub test_error: f64,
    pub train_error: f64,
    /// Mean size of the kept kernels, over all folds.
    pub mean_kernel_size: f64,
}

struct CellResult {
    summary: RunSummary,
    final_kernel: KernelExpr,
    final_prototypes: Vec<LabeledExample>,
    scaling: Option<ScalingParams>,
}

fn run_cell(
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    config: &ProtocolConfig,
    fold: usize,
    run: usize,
) -> Result<CellResult> {
    let seed = seeds::run_seed(config.master_seed, fold, run);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut train = dataset.subset(train_idx, format!("{}-fold{fold}", dataset.name));
    let mut test: Vec<LabeledExample> = test_idx
        .iter()
        .map(|&i| dataset.examples[i].clone())
        .collect();
    let scaling = if config.scale_features {
        let params = scale_fit(&train.examples);
        train.examples = scale_apply(&params, &train.examples);
        test = scale_apply(&params, &test);
        Some(params)
    } else {
        None
    };

    let trace = coevolve(&train, &config.coevo, &mut rng)?;
    let chosen = select_final(&trace);
    let prototypes = chosen.prototype_subset.gather(&train);

    let wrong = test
        .iter()
        .filter(|e| classify_nn(&chosen.best_kernel, &prototypes, &e.features, 1) != e.label)
        .count();
    let test_error = wrong as f64 / test.len() as f64;

    let prototype_indices: Vec<usize> =
        chosen.prototype_subset.indices().iter().map(|&i| train_idx[i]).collect();

    Ok(CellResult {
        summary: RunSummary {
            fold,
            run,
            seed,
            train_error: chosen.train_error,
            test_error,
            kernel: chosen.best_kernel.format(),
            kernel_size: chosen.best_size,
            generation: chosen.generation,
            prototype_indices,
            kept: false,
        },
        final_kernel: chosen.best_kernel.clone(),
        final_prototypes: prototypes,
        scaling,
    })
}

/// Runs the full protocol and, as a convenience, returns the best kept
/// model of the whole experiment (lowest train error, ties by lower seed)
/// alongside the report.
pub fn run_ekm_experiment_with_model(
    dataset: &Dataset,
    config: &ProtocolConfig,
) -> Result<(ExperimentReport, Classifier)> {
    config.validate()?;
    let mut fold_rng = ChaCha8Rng::seed_from_u64(seeds::fold_plan_seed(config.master_seed));
    let plan = stratified_folds(dataset, config.folds, &mut fold_rng)?;

    let cells: Vec<(usize, usize)> = (0..config.folds)
        .flat_map(|f| (0..config.runs_per_fold).map(move |r| (f, r)))
        .collect();
    let train_sets: Vec<Vec<usize>> = (0..config.folds).map(|f| plan.train_indices(f)).collect();

    // Independent (fold, run) cells in parallel; each owns its seeded RNG
    // stream, so the collected order (and every number in it) matches a
    // sequential execution.
    let results: Vec<Result<CellResult>> = cells
        .par_iter()
        .map(|&(fold, run)| {
            run_cell(dataset, &train_sets[fold], plan.test_indices(fold), config, fold, run)
        })
        .collect();
    let mut by_cell = Vec::with_capacity(results.len());
    for r in results {
        by_cell.push(r?);
    }

    let mut folds = Vec::with_capacity(config.folds);
    let mut fold_test_errors = Vec::with_capacity(config.folds);
    let mut kept_sizes = Vec::new();
    let mut best_overall: Option<usize> = None;

    for fold in 0..config.folds {
        let base = fold * config.runs_per_fold;
        let cell_range = base..base + config.runs_per_fold;

        // Keep the runs with lowest training error; ties by lower seed.
        let mut order: Vec<usize> = cell_range.clone().collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&by_cell[a].summary, &by_cell[b].summary);
            sa.train_error.total_cmp(&sb.train_error).then(sa.seed.cmp(&sb.seed))
        });
        for &i in order.iter().take(config.keep_best) {
            by_cell[i].summary.kept = true;
            kept_sizes.push(by_cell[i].summary.kernel_size as f64);
            let candidate = &by_cell[i].summary;
            let better = match best_overall {
                None => true,
                Some(j) => {
                    let cur = &by_cell[j].summary;
                    candidate.train_error < cur.train_error
                        || (candidate.train_error == cur.train_error
                            && candidate.seed < cur.seed)
                }
            };
            if better {
                best_overall = Some(i);
            }
        }

        let kept: Vec<&RunSummary> =
            cell_range.clone().map(|i| &by_cell[i].summary).filter(|s| s.kept).collect();
        let test_error = kept.iter().map(|s| s.test_error).sum::<f64>() / kept.len() as f64;
        let train_error = kept.iter().map(|s| s.train_error).sum::<f64>() / kept.len() as f64;
        fold_test_errors.push(test_error);
        folds.push(FoldReport {
            fold,
            runs: cell_range.map(|i| by_cell[i].summary.clone()).collect(),
            test_error,
            train_error,
        });
    }

    let test_error = fold_test_errors.iter().sum::<f64>() / fold_test_errors.len() as f64;
    let train_error =
        folds.iter().map(|f| f.train_error).sum::<f64>() / folds.len() as f64;
    let mean_kernel_size = kept_sizes.iter().sum::<f64>() / kept_sizes.len() as f64;

    let report = ExperimentReport {
        dataset: dataset.name.clone(),
        config: config.clone(),
        folds,
        fold_test_errors,
        test_error,
        train_error,
        mean_kernel_size,
    };

    let best = &by_cell[best_overall.expect("keep_best >= 1 guarantees a kept run")];
    let model = Classifier::new(
        dataset.name.clone(),
        dataset.dimension,
        dataset.label_names.clone(),
        best.final_kernel.clone(),
        best.final_prototypes.clone(),
        best.scaling.clone(),
    )?;
    Ok((report, model))
}

/// Runs the full cross-validation protocol: `runs_per_fold` seeded
/// evolutions per fold, `keep_best` kept by training error, their test
/// errors averaged per fold and then across folds.
pub fn run_ekm_experiment(dataset: &Dataset, config: &ProtocolConfig) -> Result<ExperimentReport> {
    run_ekm_experiment_with_model(dataset, config).map(|(report, _)| report)
}
