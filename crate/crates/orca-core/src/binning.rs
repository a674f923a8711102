//! Dwell-time discretization: equidistant binning on `log(t + offset)`.
//!
//! Continuous dwell seconds are split into `M` non-overlapping intervals for
//! classification. Boundaries are equal-width in log space, fit on the
//! training split only and frozen. Each bin also stores the median training
//! dwell (in seconds), used to map a predicted bin back to a regression value.
//!
//! Conventions:
//! - natural log of `t + log_offset`, default offset 1 so `t = 0` stays finite;
//! - half-open intervals `[lo, hi)`, so a value exactly on boundary `b_k`
//!   belongs to bin `k + 1`;
//! - an empty bin's median falls back to the bin's log-midpoint mapped back
//!   to seconds.

use serde::{Deserialize, Serialize};

use crate::error::{OrcaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    #[serde(rename = "M")]
    pub m: usize,
    pub log_offset: f64,
    /// M-1 strictly increasing interior boundaries, in log-seconds space.
    pub boundaries: Vec<f64>,
    /// Per-bin median dwell, in seconds.
    pub medians: Vec<f64>,
}

impl BinningSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(OrcaError::config("binning requires M >= 2"));
        }
        if self.boundaries.len() != self.m - 1 || self.medians.len() != self.m {
            return Err(OrcaError::config("binning spec has inconsistent lengths"));
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OrcaError::config("bin boundaries must be strictly increasing"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: BinningSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn median_of(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Fit an `m`-bin log-equidistant spec on training dwell values.
///
/// Boundaries divide `[min, max]` of `log(t + log_offset)` into `m`
/// equal-width intervals; medians are computed per bin from the training
/// values, with empty bins falling back to the interval midpoint.
pub fn build_binning(train_dwell_seconds: &[f64], m: usize, log_offset: f64) -> Result<BinningSpec> {
    if train_dwell_seconds.is_empty() {
        return Err(OrcaError::data("no dwell observations"));
    }
    if m < 2 {
        return Err(OrcaError::config("binning requires M >= 2"));
    }
    for &t in train_dwell_seconds {
        if !(t >= 0.0) {
            return Err(OrcaError::data(format!("negative or NaN dwell value {t}")));
        }
        if t + log_offset <= 0.0 {
            return Err(OrcaError::config(format!(
                "log_offset {log_offset} does not keep dwell value {t} positive"
            )));
        }
    }

    let logs: Vec<f64> = train_dwell_seconds.iter().map(|&t| (t + log_offset).ln()).collect();
    let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Err(OrcaError::data("degenerate range"));
    }

    let width = (hi - lo) / m as f64;
    let boundaries: Vec<f64> = (1..m).map(|i| lo + i as f64 * width).collect();

    let mut partial = BinningSpec {
        m,
        log_offset,
        boundaries,
        medians: vec![0.0; m],
    };

    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); m];
    for (&t, &logv) in train_dwell_seconds.iter().zip(&logs) {
        let k = bin_of_log(logv, &partial.boundaries);
        per_bin[k].push(t);
    }
    for (k, values) in per_bin.iter_mut().enumerate() {
        partial.medians[k] = if values.is_empty() {
            let bin_lo = if k == 0 { lo } else { partial.boundaries[k - 1] };
            let bin_hi = if k == m - 1 { hi } else { partial.boundaries[k] };
            (0.5 * (bin_lo + bin_hi)).exp() - log_offset
        } else {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            median_of(values)
        };
    }
    Ok(partial)
}

fn bin_of_log(logv: f64, boundaries: &[f64]) -> usize {
    // First boundary strictly greater than logv; [lo, hi) half-open.
    boundaries.partition_point(|&b| b <= logv)
}

/// Map dwell seconds to its bin index under the half-open convention, with
/// the first and last bins open-ended.
pub fn assign_bin(t: f64, spec: &BinningSpec) -> Result<usize> {
    if !(t >= 0.0) {
        return Err(OrcaError::data(format!("negative or NaN dwell value {t}")));
    }
    Ok(bin_of_log((t + spec.log_offset).ln(), &spec.boundaries))
}

/// Median dwell seconds of bin `k`.
pub fn bin_median(k: usize, spec: &BinningSpec) -> Result<f64> {
    spec.medians
        .get(k)
        .copied()
        .ok_or_else(|| OrcaError::config(format!("bin index {k} out of range (M={})", spec.m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_inputs_are_a_degenerate_range() {
        let err = build_binning(&[3.0, 3.0, 3.0], 2, 1.0).unwrap_err();
        assert!(err.to_string().contains("degenerate range"));
    }

    #[test]
    fn m_below_two_is_rejected() {
        assert!(build_binning(&[1.0, 2.0], 1, 1.0).is_err());
    }

    #[test]
    fn empty_input_is_rejected() {
        let err = build_binning(&[], 4, 1.0).unwrap_err();
        assert!(err.to_string().contains("no dwell observations"));
    }

    #[test]
    fn exponential_grid_two_bins() {
        // t in {1, e, e^2, e^3} with a vanishing offset: log range [0, 3],
        // single boundary at 1.5, members {1, e} and {e^2, e^3}.
        let e = std::f64::consts::E;
        let t = [1.0, e, e * e, e * e * e];
        let spec = build_binning(&t, 2, 1e-12).unwrap();
        assert_relative_eq!(spec.boundaries[0], 1.5, epsilon = 1e-9);
        assert_relative_eq!(spec.medians[0], (1.0 + e) / 2.0, epsilon = 1e-6);
        assert_relative_eq!(spec.medians[1], (e * e + e * e * e) / 2.0, epsilon = 1e-6);
        // Hand-checked values from the grid above.
        assert_relative_eq!(spec.medians[0], 1.859, epsilon = 1e-3);
        assert_relative_eq!(spec.medians[1], 13.737, epsilon = 1e-3);
    }

    #[test]
    fn eight_bins_on_lognormal_sample_are_all_populated() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, LogNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let dist = LogNormal::new(3.0, 1.0).unwrap();
        let t: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        let spec = build_binning(&t, 8, 1.0).unwrap();
        // Brute-force histogram over the sample.
        let mut counts = [0usize; 8];
        for &v in &t {
            counts[assign_bin(v, &spec).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "all 8 bins populated: {counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), t.len());
    }

    #[test]
    fn boundary_value_falls_in_upper_bin() {
        let t = [1.0, std::f64::consts::E, 7.389056099, 20.085536923];
        let spec = build_binning(&t, 2, 1e-12).unwrap();
        // Boundary is at log t = 1.5; t = e^1.5 sits exactly on it.
        let t_at_boundary = 1.5f64.exp() - spec.log_offset;
        assert_eq!(assign_bin(t_at_boundary, &spec).unwrap(), 1);
    }

    #[test]
    fn zero_maps_to_lowest_bin() {
        let spec = build_binning(&[0.0, 10.0, 100.0, 1000.0], 4, 1.0).unwrap();
        assert_eq!(assign_bin(0.0, &spec).unwrap(), 0);
    }

    #[test]
    fn negative_dwell_is_rejected() {
        let spec = build_binning(&[1.0, 10.0], 2, 1.0).unwrap();
        assert!(assign_bin(-0.5, &spec).is_err());
    }

    #[test]
    fn assign_matches_linear_scan_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let train: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..500.0)).collect();
        let spec = build_binning(&train, 8, 1.0).unwrap();
        for _ in 0..1000 {
            let t: f64 = rng.gen_range(0.0..600.0);
            let logv = (t + spec.log_offset).ln();
            // Linear scan over boundaries.
            let mut expect = spec.m - 1;
            for (k, &b) in spec.boundaries.iter().enumerate() {
                if logv < b {
                    expect = k;
                    break;
                }
            }
            assert_eq!(assign_bin(t, &spec).unwrap(), expect, "t = {t}");
        }
    }

    #[test]
    fn median_round_trip_and_out_of_range() {
        let t = [1.0, 2.0, 5.0, 40.0, 200.0, 800.0];
        let spec = build_binning(&t, 4, 1.0).unwrap();
        for k in 0..spec.m {
            let med = bin_median(k, &spec).unwrap();
            assert_eq!(assign_bin(med, &spec).unwrap(), k, "bin {k} median {med}");
        }
        assert!(bin_median(4, &spec).is_err());
    }

    #[test]
    fn empty_bin_median_is_interval_midpoint() {
        // Values cluster at the extremes; middle bins of an M=4 fit are empty.
        let t = [0.0, 0.1, 999.0, 1000.0];
        let spec = build_binning(&t, 4, 1.0).unwrap();
        let logs: Vec<f64> = t.iter().map(|&v| (v + 1.0).ln()).collect();
        let lo = logs[0];
        let hi = logs[3];
        let width = (hi - lo) / 4.0;
        for k in 1..3 {
            let mid = lo + (k as f64 + 0.5) * width;
            assert_relative_eq!(spec.medians[k], mid.exp() - 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn json_round_trip_uses_documented_keys() {
        let spec = build_binning(&[1.0, 5.0, 25.0, 125.0], 4, 1.0).unwrap();
        let json = spec.to_json().unwrap();
        assert!(json.contains("\"M\""));
        assert!(json.contains("\"log_offset\""));
        assert!(json.contains("\"boundaries\""));
        assert!(json.contains("\"medians\""));
        let back = BinningSpec::from_json(&json).unwrap();
        assert_eq!(back, spec);
    }
}
