//! Small statistical helpers for the ablation comparisons.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{OrcaError, Result};

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PairedTTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Two-sided paired t-test on matched samples (e.g. per-seed metrics of two
/// variants). Requires at least two pairs.
pub fn paired_t_test(xs: &[f64], ys: &[f64]) -> Result<PairedTTest> {
    if xs.len() != ys.len() {
        return Err(OrcaError::data("paired t-test needs equal-length samples"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(OrcaError::data("paired t-test needs at least 2 pairs"));
    }
    let diffs: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    if se == 0.0 {
        // All differences identical; degenerate but well-defined direction.
        let p = if mean == 0.0 { 1.0 } else { 0.0 };
        return Ok(PairedTTest { t: if mean == 0.0 { 0.0 } else { f64::INFINITY * mean.signum() }, p, df: n - 1 });
    }
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| OrcaError::data(format!("t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(PairedTTest { t, p, df: n - 1 })
}
