//! Joint-angle error statistics against a reference sweep.

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Width of the reference-angle bins used for the bias.
pub const JOINT_BIN_WIDTH_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinResidual {
    /// Lower edge of the bin, degrees.
    pub from_deg: f64,
    pub samples: usize,
    pub mean_residual_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointErrorStats {
    /// Largest |mean residual| over the reference-angle bins.
    pub bias_deg: f64,
    /// Sample standard deviation of the residuals.
    pub std_deg: f64,
    /// Largest bin-mean deviation from the best-fit line, percent of the
    /// reference range. Averaging per bin keeps sample noise, which `std_deg`
    /// already reports, out of the curve shape.
    pub non_linearity_pct: f64,
    /// Largest single-sample deviation from the best-fit line, degrees.
    pub peak_deviation_deg: f64,
    /// Measured minus reference, per sample.
    pub residuals_deg: Vec<f64>,
    pub bins: Vec<BinResidual>,
}

pub fn joint_error_stats(measured: &[f64], reference: &[f64]) -> Result<JointErrorStats, MetricsError> {
    if measured.len() != reference.len() {
        return Err(MetricsError::LengthMismatch { left: measured.len(), right: reference.len() });
    }
    let n = measured.len();
    if n < 2 {
        return Err(MetricsError::TooShort { got: n, min: 2 });
    }
    if measured.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let (lo, hi) = reference.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    let range = hi - lo;
    if range <= 0.0 {
        return Err(MetricsError::ZeroRange);
    }

    let residuals: Vec<f64> = measured.iter().zip(reference).map(|(m, r)| m - r).collect();
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let std = (residuals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();

    // measured ≈ intercept + slope · reference, ordinary least squares
    let mr = reference.iter().sum::<f64>() / n as f64;
    let mm = measured.iter().sum::<f64>() / n as f64;
    let sxy: f64 = reference.iter().zip(measured).map(|(r, m)| (r - mr) * (m - mm)).sum();
    let sxx: f64 = reference.iter().map(|r| (r - mr).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mm - slope * mr;
    let deviations: Vec<f64> = reference.iter().zip(measured).map(|(r, m)| m - (intercept + slope * r)).collect();

    let first_bin = (lo / JOINT_BIN_WIDTH_DEG).floor();
    let bin_count = ((hi / JOINT_BIN_WIDTH_DEG).floor() - first_bin) as usize + 1;
    // (residual sum, deviation sum, count)
    let mut sums = vec![(0.0, 0.0, 0usize); bin_count];
    for ((e, d), r) in residuals.iter().zip(&deviations).zip(reference) {
        let b = (((r / JOINT_BIN_WIDTH_DEG).floor() - first_bin) as usize).min(bin_count - 1);
        sums[b].0 += e;
        sums[b].1 += d;
        sums[b].2 += 1;
    }
    let occupied = sums.iter().enumerate().filter(|(_, s)| s.2 > 0);
    let bins: Vec<BinResidual> = occupied
        .clone()
        .map(|(b, &(sum, _, count))| BinResidual {
            from_deg: (first_bin + b as f64) * JOINT_BIN_WIDTH_DEG,
            samples: count,
            mean_residual_deg: sum / count as f64,
        })
        .collect();
    let bias = bins.iter().map(|b| b.mean_residual_deg.abs()).fold(0.0, f64::max);
    let curve = occupied.map(|(_, &(_, dev, count))| (dev / count as f64).abs()).fold(0.0, f64::max);
    let peak = deviations.iter().map(|d| d.abs()).fold(0.0, f64::max);

    Ok(JointErrorStats {
        bias_deg: bias,
        std_deg: std,
        non_linearity_pct: curve / range * 100.0,
        peak_deviation_deg: peak,
        residuals_deg: residuals,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(n: usize) -> Vec<f64> {
        (0..n).map(|k| 90.0 * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn perfect_measurement() {
        let r = sweep(91);
        let s = joint_error_stats(&r, &r).unwrap();
        assert_eq!((s.bias_deg, s.std_deg, s.non_linearity_pct), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_offset() {
        let r = sweep(91);
        let m: Vec<f64> = r.iter().map(|x| x + 2.0).collect();
        let s = joint_error_stats(&m, &r).unwrap();
        assert!((s.bias_deg - 2.0).abs() < 1e-12);
        assert!(s.std_deg < 1e-12);
        assert!(s.non_linearity_pct < 1e-10);
    }

    #[test]
    fn pure_gain() {
        // 0, 1, ..., 90 degrees; residual 0.01·r
        let r = sweep(91);
        let m: Vec<f64> = r.iter().map(|x| 1.01 * x).collect();
        let s = joint_error_stats(&m, &r).unwrap();
        assert!(s.non_linearity_pct < 1e-10);
        // the last bin [90, 95) holds only r = 90; [85, 90) holds 85..89 with mean 87
        assert_eq!(s.bins.len(), 19);
        assert!((s.bins[17].mean_residual_deg - 0.87).abs() < 1e-12);
        assert!((s.bias_deg - 0.9).abs() < 1e-12);
        assert!((s.bins[0].mean_residual_deg - 0.02).abs() < 1e-12);
        // std of 0.01·{0..90} with n − 1: 0.01·sqrt(91·92/12)
        assert!((s.std_deg - 0.01 * (91.0f64 * 92.0 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bent_response() {
        // a bump of 0.45 deg at mid-range on top of a line
        let r = sweep(91);
        let m: Vec<f64> = r.iter().map(|&x| if x == 45.0 { x + 0.45 } else { x }).collect();
        let s = joint_error_stats(&m, &r).unwrap();
        // the fit shifts up by 0.45/91 and the bump stands 0.45·90/91 above
        // it; the [45, 50) bin averages the bump with four samples at -0.45/91
        assert!((s.peak_deviation_deg - 0.45 * 90.0 / 91.0).abs() < 1e-12);
        let bin_mean = (0.45 - 5.0 * 0.45 / 91.0) / 5.0;
        assert!((s.non_linearity_pct - bin_mean / 90.0 * 100.0).abs() < 1e-9);
    }

    #[test]
    fn sample_noise_stays_out_of_the_curve() {
        // ±1 deg alternating about a straight line, two samples per degree
        let r: Vec<f64> = (0..180).map(|k| (k / 2) as f64).collect();
        let m: Vec<f64> = r.iter().enumerate().map(|(k, x)| x + if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = joint_error_stats(&m, &r).unwrap();
        assert!(s.non_linearity_pct < 1e-3, "{}", s.non_linearity_pct);
        assert!((s.peak_deviation_deg - 1.0).abs() < 1e-3);
        assert!((s.std_deg - (180.0f64 / 179.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(joint_error_stats(&[1.0, 2.0], &[1.0]), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(joint_error_stats(&[1.0], &[1.0]), Err(MetricsError::TooShort { .. })));
        assert!(matches!(joint_error_stats(&[1.0, 2.0], &[3.0, 3.0]), Err(MetricsError::ZeroRange)));
        assert!(matches!(joint_error_stats(&[f64::NAN, 2.0], &[1.0, 3.0]), Err(MetricsError::NonFinite)));
    }
}
