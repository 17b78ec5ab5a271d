//! Sample means with confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    PercentileBootstrap,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    /// Set when fewer than two samples made the interval collapse to the mean.
    pub degenerate: bool,
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolated quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile interval of `values` themselves, clamped to contain `center`.
pub fn percentile_interval(values: &[f64], level: f64, center: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lo = quantile_sorted(&sorted, alpha);
    let hi = quantile_sorted(&sorted, 1.0 - alpha);
    (lo.min(center), hi.max(center))
}

/// Mean of `samples` with a two-sided interval at `level`.
///
/// The bootstrap resamples with replacement `resamples` times from a
/// ChaCha8 stream seeded with `seed`.
pub fn mean_ci(samples: &[f64], level: f64, method: CiMethod, resamples: usize, seed: u64) -> Interval {
    assert!(level > 0.0 && level < 1.0, "level must be in (0,1)");
    let m = mean(samples);
    if samples.len() < 2 {
        if !samples.is_empty() {
            log::warn!("interval over {} sample(s) is degenerate", samples.len());
        }
        return Interval { mean: m, lo: m, hi: m, degenerate: true };
    }
    if samples.iter().all(|&x| x == samples[0]) {
        let c = samples[0];
        return Interval { mean: c, lo: c, hi: c, degenerate: false };
    }
    let (lo, hi) = match method {
        CiMethod::Normal => {
            let n = samples.len() as f64;
            let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            let z = Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0);
            let half = z * (var / n).sqrt();
            (m - half, m + half)
        }
        CiMethod::PercentileBootstrap => {
            let resamples = resamples.max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = samples.len();
            let means: Vec<f64> = (0..resamples)
                .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
                .collect();
            percentile_interval(&means, level, m)
        }
    };
    Interval { mean: m, lo: lo.min(m), hi: hi.max(m), degenerate: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        let iv = mean_ci(&[0.3; 20], 0.95, CiMethod::PercentileBootstrap, 500, 1);
        assert_eq!((iv.mean, iv.lo, iv.hi), (0.3, 0.3, 0.3));
    }

    #[test]
    fn normal_is_symmetric() {
        let iv = mean_ci(&[0.0, 1.0], 0.95, CiMethod::Normal, 0, 0);
        assert_eq!(iv.mean, 0.5);
        assert!(((iv.mean - iv.lo) - (iv.hi - iv.mean)).abs() < 1e-12);
        assert!(iv.lo < 0.5 && iv.hi > 0.5);
    }

    #[test]
    fn single_sample_is_degenerate() {
        let iv = mean_ci(&[2.0], 0.95, CiMethod::PercentileBootstrap, 100, 0);
        assert!(iv.degenerate);
        assert_eq!((iv.lo, iv.hi), (2.0, 2.0));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let xs: Vec<f64> = (0..50).map(|i| f64::from(i % 7)).collect();
        let a = mean_ci(&xs, 0.95, CiMethod::PercentileBootstrap, 1000, 9);
        let b = mean_ci(&xs, 0.95, CiMethod::PercentileBootstrap, 1000, 9);
        assert_eq!(a, b);
        assert!(a.lo <= a.mean && a.mean <= a.hi);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.25), 2.0);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
    }

    #[test]
    fn bootstrap_coverage() {
        // Coverage oracle: seeded uniform(0,1) samples of size 100, true mean 0.5.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut covered = 0;
        for rep in 0..100 {
            let xs: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
            if mean_ci(&xs, 0.95, CiMethod::PercentileBootstrap, 1000, rep).contains(0.5) {
                covered += 1;
            }
        }
        assert!(covered >= 90, "coverage {covered}/100");
    }
}
