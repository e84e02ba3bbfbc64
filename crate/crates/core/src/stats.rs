//! Monte Carlo summaries with 95% intervals and compensated accumulation.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Below this many hits (or misses) a proportion gets a Wilson interval.
pub const WILSON_COUNT_THRESHOLD: u64 = 10;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Running first and second moments of a sample.
///
/// The mean comes from a compensated sum; the spread uses Welford updates
/// (Chan's rule on merge), so a constant sample has exactly zero variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    pub n: u64,
    sum: CompensatedSum,
    running_mean: f64,
    m2: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        let delta = x - self.running_mean;
        self.running_mean += delta / self.n as f64;
        self.m2 += delta * (x - self.running_mean);
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.running_mean - self.running_mean;
        self.running_mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.n += other.n;
        self.sum.merge(&other.sum);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum.value() / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n as f64 - 1.0)).max(0.0)
    }

    pub fn estimate(&self, n_excluded: u64) -> EstimateWithCI {
        let point = self.mean();
        let se = if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        EstimateWithCI::normal(point, se, self.n, n_excluded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub point: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: u64,
    pub n_excluded: u64,
}

impl EstimateWithCI {
    pub fn normal(point: f64, std_error: f64, n_paths: u64, n_excluded: u64) -> Self {
        Self {
            point,
            std_error,
            ci_low: point - Z95 * std_error,
            ci_high: point + Z95 * std_error,
            n_paths,
            n_excluded,
        }
    }

    /// Estimate of a probability from `hits` out of `n` trials.
    ///
    /// Normal interval clipped to [0, 1], replaced by Wilson when either
    /// count is small.
    pub fn proportion(hits: u64, n: u64, n_excluded: u64) -> Self {
        if n == 0 {
            return Self::normal(f64::NAN, f64::NAN, 0, n_excluded);
        }
        let nf = n as f64;
        let p = hits as f64 / nf;
        let se = (p * (1.0 - p) / nf).sqrt();
        let (lo, hi) = if hits < WILSON_COUNT_THRESHOLD || n - hits < WILSON_COUNT_THRESHOLD {
            wilson_interval(hits, n)
        } else {
            ((p - Z95 * se).max(0.0), (p + Z95 * se).min(1.0))
        };
        Self {
            point: p,
            std_error: se,
            ci_low: lo.min(p),
            ci_high: hi.max(p),
            n_paths: n,
            n_excluded,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    /// √(se₁² + se₂²).
    pub fn combined_se(&self, other: &EstimateWithCI) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

pub fn wilson_interval(hits: u64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        let s: CompensatedSum = xs.iter().copied().collect();
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn moments_of_small_sample() {
        let mut acc = MomentAccumulator::new();
        for x in [1.0, 2.0, 3.0, 4.0] {
            acc.push(x);
        }
        assert_eq!(acc.mean(), 2.5);
        assert_relative_eq!(acc.variance(), 5.0 / 3.0, epsilon = 1e-15);
        let e = acc.estimate(0);
        assert!(e.ci_low <= e.point && e.point <= e.ci_high);
    }

    #[test]
    fn constant_sample_has_zero_error() {
        let mut acc = MomentAccumulator::new();
        for _ in 0..100 {
            acc.push(0.951_229_424_500_714);
        }
        let e = acc.estimate(0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.ci_low, e.point);
    }

    #[test]
    fn wilson_for_zero_hits() {
        let e = EstimateWithCI::proportion(0, 1000, 0);
        assert_eq!(e.point, 0.0);
        assert_eq!(e.ci_low, 0.0);
        assert!(e.ci_high > 0.0 && e.ci_high < 0.01);
    }

    #[test]
    fn proportion_uses_normal_interval_for_large_counts() {
        let e = EstimateWithCI::proportion(500, 1000, 3);
        assert_relative_eq!(
            e.half_width(),
            Z95 * (0.25f64 / 1000.0).sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(e.n_excluded, 3);
    }

    proptest! {
        #[test]
        fn proportion_ci_brackets_point(n in 1u64..5000, frac in 0.0f64..=1.0) {
            let hits = ((n as f64) * frac).floor() as u64;
            let e = EstimateWithCI::proportion(hits, n, 0);
            prop_assert!(e.ci_low <= e.point && e.point <= e.ci_high);
            prop_assert!(e.ci_low >= 0.0 && e.ci_high <= 1.0);
        }

        #[test]
        fn merge_matches_sequential(xs in proptest::collection::vec(-1e3f64..1e3, 1..200), split in 0usize..200) {
            let k = split.min(xs.len());
            let mut whole = MomentAccumulator::new();
            xs.iter().for_each(|&x| whole.push(x));
            let mut a = MomentAccumulator::new();
            let mut b = MomentAccumulator::new();
            xs[..k].iter().for_each(|&x| a.push(x));
            xs[k..].iter().for_each(|&x| b.push(x));
            a.merge(&b);
            prop_assert_eq!(a.n, whole.n);
            prop_assert!((a.mean() - whole.mean()).abs() <= 1e-12 * (1.0 + whole.mean().abs()));
        }
    }
}
