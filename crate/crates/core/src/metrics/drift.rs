//! Orientation error over long sessions, binned by minute.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::so3::{geodesic_angle, Rotation3};

const MINUTE_NS: u64 = 60_000_000_000;

/// One measured orientation with the truth it should match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSample {
    pub timestamp_ns: u64,
    pub measured: Rotation3,
    pub truth: Rotation3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    /// Minutes since the first sample; the bin covers [minute, minute + 1).
    pub minute: u64,
    pub samples: usize,
    pub mean_error_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub points: Vec<DriftPoint>,
    /// Kendall tau-b between minute and mean error.
    pub kendall_tau: f64,
}

impl DriftReport {
    /// Mean error of the last minute bin.
    pub fn final_error_deg(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.mean_error_deg)
    }
}

/// Per-minute mean geodesic error. Samples from several sensors may be
/// interleaved; each minute averages all of them.
pub fn drift_report(timestamps_ns: &[u64], measured: &[Rotation3], truth: &[Rotation3]) -> Result<DriftReport, MetricsError> {
    if measured.len() != truth.len() || timestamps_ns.len() != truth.len() {
        return Err(MetricsError::LengthMismatch { left: measured.len(), right: truth.len().min(timestamps_ns.len()) });
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let start = *timestamps_ns.iter().min().expect("non-empty");
    let minutes = ((timestamps_ns.iter().max().expect("non-empty") - start) / MINUTE_NS) as usize + 1;
    let mut bins = vec![(0.0, 0usize); minutes];
    for ((t, m), r) in timestamps_ns.iter().zip(measured).zip(truth) {
        let b = &mut bins[((t - start) / MINUTE_NS) as usize];
        b.0 += geodesic_angle(m, r).to_degrees();
        b.1 += 1;
    }
    let points: Vec<DriftPoint> = bins
        .iter()
        .enumerate()
        .filter(|(_, b)| b.1 > 0)
        .map(|(k, &(sum, n))| DriftPoint { minute: k as u64, samples: n, mean_error_deg: sum / n as f64 })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.minute as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_error_deg).collect();
    Ok(DriftReport { kendall_tau: kendall_tau(&xs, &ys), points })
}

/// Kendall's tau-b; 0 when either series is constant or shorter than two.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() * ((x[i] != x[j]) as i32 as f64);
            let dy = (y[i] - y[j]).signum() * ((y[i] != y[j]) as i32 as f64);
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => ties_x += 1,
                (false, true) => ties_y += 1,
                (false, false) if dx == dy => concordant += 1,
                (false, false) => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + ties_x) as f64;
    let n2 = (concordant + discordant + ties_y) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (concordant - discordant) as f64 / (n1 * n2).sqrt()
}
