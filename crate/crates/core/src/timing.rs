//! Wall-clock aggregates for pipeline stages.

use std::time::Duration;

/// Summary of a set of duration samples, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingSummary {
    pub count: usize,
    pub mean_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_ms: f64,
    pub total_ms: f64,
}

impl TimingSummary {
    pub fn from_samples(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let total: f64 = ms.iter().sum();
        let rank = ((0.95 * ms.len() as f64).ceil() as usize).clamp(1, ms.len());
        Self {
            count: ms.len(),
            mean_ms: total / ms.len() as f64,
            p95_ms: ms[rank - 1],
            total_ms: total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(TimingSummary::from_samples(&[]), TimingSummary::default());
    }

    #[test]
    fn nearest_rank_percentile() {
        let samples: Vec<Duration> = (1..=20).map(Duration::from_millis).collect();
        let s = TimingSummary::from_samples(&samples);
        assert_eq!(s.count, 20);
        assert!((s.total_ms - 210.0).abs() < 1e-9);
        assert!((s.mean_ms - 10.5).abs() < 1e-9);
        assert!((s.p95_ms - 19.0).abs() < 1e-9);
        let one = TimingSummary::from_samples(&[Duration::from_millis(4)]);
        assert!((one.p95_ms - 4.0).abs() < 1e-9);
    }
}
