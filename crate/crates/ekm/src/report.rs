//! Report persistence and the combined comparison table (CSV and
//! markdown).
//!
//! All emitted files are deterministic byte-for-byte given the same inputs:
//! no timestamps, stable field order, shortest-round-trip float formatting.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineReport;
use crate::error::{EkmError, Result};
use crate::experiment::ExperimentReport;
use crate::stats::{paired_t_test, PairedTTest, TestVerdict};

pub fn write_experiment_json(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    write_pretty(report, path)
}

pub fn write_baseline_json(report: &BaselineReport, path: impl AsRef<Path>) -> Result<()> {
    write_pretty(report, path)
}

pub fn load_experiment_json(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn load_baseline_json(path: impl AsRef<Path>) -> Result<BaselineReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_pretty<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One comparison row: tuned k-NN against EKM on a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub knn_best_k: usize,
    pub knn_best_scaled: bool,
    pub knn_train_error: f64,
    pub knn_test_error: f64,
    pub ekm_train_error: f64,
    /// Mean test error of the kept (best-half) runs.
    pub ekm_test_error: f64,
    pub ekm_mean_size: f64,
    /// Statistically better side at the given significance level.
    pub winner: Winner,
    pub t_test: PairedTTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    Knn,
    Ekm,
    Tie,
}

/// Pairs an experiment report with its baseline and runs the per-fold
/// paired t-test. Both must come from the same fold plan.
pub fn build_row(
    ekm: &ExperimentReport,
    baseline: &BaselineReport,
    alpha: f64,
) -> Result<ReportRow> {
    if ekm.dataset != baseline.dataset {
        return Err(EkmError::InvalidInput(format!(
            "mismatched reports: EKM is for '{}', baseline for '{}'",
            ekm.dataset, baseline.dataset
        )));
    }
    let best = baseline.best_cell();
    if best.fold_test_errors.len() != ekm.fold_test_errors.len() {
        return Err(EkmError::InvalidInput(format!(
            "fold counts differ: baseline {} vs EKM {}",
            best.fold_test_errors.len(),
            ekm.fold_test_errors.len()
        )));
    }
    let t_test = paired_t_test(&best.fold_test_errors, &ekm.fold_test_errors, alpha)?;
    let winner = match t_test.verdict {
        TestVerdict::ABetter => Winner::Knn,
        TestVerdict::BBetter => Winner::Ekm,
        TestVerdict::Tie => Winner::Tie,
    };
    Ok(ReportRow {
        dataset: ekm.dataset.clone(),
        knn_best_k: best.k,
        knn_best_scaled: best.scaled,
        knn_train_error: best.mean_train_error,
        knn_test_error: best.mean_test_error,
        ekm_train_error: ekm.train_error,
        ekm_test_error: ekm.test_error,
        ekm_mean_size: ekm.mean_kernel_size,
        winner,
        t_test,
    })
}

/// Output format for the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

fn winner_str(w: Winner) -> &'static str {
    match w {
        Winner::Knn => "knn",
        Winner::Ekm => "ekm",
        Winner::Tie => "tie",
    }
}

/// Writes the comparison table in the given formats and returns the paths
/// written. CSV values use full round-trip precision; the markdown table
/// is rounded for reading.
pub fn emit_report(
    rows: &[ReportRow],
    dir: impl AsRef<Path>,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        let path = match format {
            ReportFormat::Csv => {
                let path = dir.join("report.csv");
                fs::write(&path, render_csv(rows))?;
                path
            }
            ReportFormat::Markdown => {
                let path = dir.join("report.md");
                fs::write(&path, render_markdown(rows))?;
                path
            }
        };
        written.push(path);
    }
    Ok(written)
}

fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "dataset,knn_best_k,knn_best_scaling,knn_train_error,knn_test_error,\
         ekm_train_error,ekm_best_half_test_error,ekm_mean_size,winner\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.knn_best_k,
            if r.knn_best_scaled { "yes" } else { "no" },
            r.knn_train_error,
            r.knn_test_error,
            r.ekm_train_error,
            r.ekm_test_error,
            r.ekm_mean_size,
            winner_str(r.winner),
        ));
    }
    out
}

fn render_markdown(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    out.push_str("| Dataset | k-NN best conf. | k-NN train | k-NN test | EKM train | EKM best-half test | Mean size | Winner |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | k={}, scaling {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.1} | {} |\n",
            r.dataset,
            r.knn_best_k,
            if r.knn_best_scaled { "yes" } else { "no" },
            r.knn_train_error,
            r.knn_test_error,
            r.ekm_train_error,
            r.ekm_test_error,
            r.ekm_mean_size,
            winner_str(r.winner),
        ));
    }
    out
}
