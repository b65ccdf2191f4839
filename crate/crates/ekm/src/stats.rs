//! Paired two-tailed Student's t-test for comparing per-fold error rates.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{EkmError, Result};

/// Who wins a paired comparison of error rates (lower error is better).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestVerdict {
    ABetter,
    BBetter,
    Tie,
}

/// Outcome of a paired t-test, with the statistic and critical value kept
/// for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedTTest {
    pub mean_diff: f64,
    /// May be infinite when the differences have zero variance and a
    /// nonzero mean.
    pub t_stat: f64,
    pub dof: usize,
    pub critical: f64,
    pub verdict: TestVerdict,
}

/// Paired two-tailed Student's t-test on per-fold error vectors.
///
/// All differences zero is a tie. Zero variance with a nonzero mean is
/// treated as significant (the t statistic diverges). Otherwise the verdict
/// is decided by comparing `|t|` against the two-tailed critical value of
/// the t-distribution with `n - 1` degrees of freedom, and the winner is
/// the side with the lower mean error.
pub fn paired_t_test(errors_a: &[f64], errors_b: &[f64], alpha: f64) -> Result<PairedTTest> {
    if errors_a.len() != errors_b.len() {
        return Err(EkmError::InvalidInput(format!(
            "paired samples differ in length: {} vs {}",
            errors_a.len(),
            errors_b.len()
        )));
    }
    let n = errors_a.len();
    if n < 2 {
        return Err(EkmError::InvalidInput("paired t-test needs at least 2 pairs".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(EkmError::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }

    let diffs: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);

    let dof = n - 1;
    let dist = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| EkmError::InvalidInput(format!("t-distribution: {e}")))?;
    let critical = dist.inverse_cdf(1.0 - alpha / 2.0);

    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(PairedTTest {
            mean_diff: 0.0,
            t_stat: 0.0,
            dof,
            critical,
            verdict: TestVerdict::Tie,
        });
    }

    let t_stat = if var == 0.0 {
        // Degenerate but nonzero mean: the limit is +/- infinity.
        f64::INFINITY.copysign(mean)
    } else {
        mean / (var.sqrt() / (n as f64).sqrt())
    };

    let verdict = if t_stat.abs() > critical {
        if mean < 0.0 {
            TestVerdict::ABetter
        } else {
            TestVerdict::BBetter
        }
    } else {
        TestVerdict::Tie
    };
    Ok(PairedTTest { mean_diff: mean, t_stat, dof, critical, verdict })
}
