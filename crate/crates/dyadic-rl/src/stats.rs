//! Small statistics helpers shared by the validator and the harness.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Pearson chi-square test of independence/homogeneity on a contingency
/// table of counts. Returns `None` when the table is degenerate (fewer than
/// two non-empty rows or columns).
pub fn chi_square_p(table: &[Vec<u64>]) -> Option<f64> {
    let n_rows = table.len();
    let n_cols = table.first()?.len();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..n_cols)
        .map(|j| table.iter().map(|r| r[j] as f64).sum())
        .collect();
    let total: f64 = row_sums.iter().sum();
    let live_rows = row_sums.iter().filter(|&&s| s > 0.0).count();
    let live_cols = col_sums.iter().filter(|&&s| s > 0.0).count();
    if total == 0.0 || live_rows < 2 || live_cols < 2 {
        return None;
    }
    let mut stat = 0.0;
    for i in 0..n_rows {
        for j in 0..n_cols {
            let expected = row_sums[i] * col_sums[j] / total;
            if expected > 0.0 {
                let diff = table[i][j] as f64 - expected;
                stat += diff * diff / expected;
            }
        }
    }
    let dof = ((live_rows - 1) * (live_cols - 1)) as f64;
    let dist = ChiSquared::new(dof).ok()?;
    Some(1.0 - dist.cdf(stat))
}

/// Mean and standard error of a sample. A single observation gets SE = 0 by
/// convention.
pub fn mean_se(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty sample"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
