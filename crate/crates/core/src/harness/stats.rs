use serde::{Deserialize, Serialize};

use crate::types::Time;

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.5758293035489004;
/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959963984540054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// A binomial proportion with its Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub z: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64, z: f64) -> Self {
        let (lower, upper) = wilson_interval(successes, trials, z);
        let estimate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        Proportion { successes, trials, estimate, lower, upper, z }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Percentiles {
    pub count: u64,
    pub p50: Time,
    pub p90: Time,
    pub p99: Time,
    pub max: Time,
}

impl Percentiles {
    /// Nearest-rank percentiles.
    pub fn of(values: &[Time]) -> Self {
        if values.is_empty() {
            return Percentiles::default();
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Percentiles { count: v.len() as u64, p50: rank(0.5), p90: rank(0.9), p99: rank(0.99), max: v[v.len() - 1] }
    }
}

/// Least-squares fit `y = a x` and its coefficient of determination.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let slope = sxy / sxx;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - mean).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { if ss_res == 0.0 { 1.0 } else { 0.0 } } else { 1.0 - ss_res / ss_tot };
    (slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 10/100 at 95%: (0.05523, 0.17437).
        let (lo, hi) = wilson_interval(10, 100, Z_95);
        assert!((lo - 0.05523).abs() < 1e-4 && (hi - 0.17437).abs() < 1e-4, "{lo} {hi}");
        let (lo, hi) = wilson_interval(0, 50, Z_99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.15);
        assert_eq!(wilson_interval(0, 0, Z_99), (0.0, 1.0));
    }

    #[test]
    fn wilson_covers_truth_at_nominal_rate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (p, n, reps) = (0.3, 200u64, 2000);
        let mut covered = 0;
        for _ in 0..reps {
            let s = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
            if Proportion::new(s, n, Z_95).contains(p) {
                covered += 1;
            }
        }
        let rate = covered as f64 / reps as f64;
        assert!((0.93..=0.97).contains(&rate), "coverage {rate}");
    }

    #[test]
    fn percentiles_nearest_rank() {
        let v: Vec<Time> = (1..=100).collect();
        let p = Percentiles::of(&v);
        assert_eq!((p.p50, p.p90, p.p99, p.max), (50, 90, 99, 100));
        assert_eq!(Percentiles::of(&[]).count, 0);
    }

    #[test]
    fn fit_exact_line() {
        let (a, r2) = fit_through_origin(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        assert!((a - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let (_, r2) = fit_through_origin(&[1.0, 2.0, 3.0], &[3.0, 1.0, 3.0]);
        assert!(r2 < 0.5);
    }
}
