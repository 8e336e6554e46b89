//! Mergeable running moments.

use serde::{Deserialize, Serialize};

/// Welford accumulator. `merge` is associative, so any split of the replicas gives the same result
/// up to rounding; callers that need bit-identical output merge in replica order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// `|mean - target| <= k · sem`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.sem()
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanVar::default();
        for v in iter {
            acc.push(v);
        }
        acc
    }
}

/// Sample variance of `a` minus that of `b` on paired draws, with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedVarianceGap {
    pub var_a: f64,
    pub var_b: f64,
    pub gap: f64,
    pub sigma: f64,
}

pub fn paired_variance_gap(a: &[f64], b: &[f64]) -> PairedVarianceGap {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let d: MeanVar = a.iter().zip(b).map(|(x, y)| (x - ma).powi(2) - (y - mb).powi(2)).collect();
    let var_a = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0);
    let var_b = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / (n - 1.0);
    PairedVarianceGap { var_a, var_b, gap: var_a - var_b, sigma: d.sem() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_single_pass() {
        let data: Vec<f64> = (0..101).map(|i| ((i * 37) % 17) as f64 * 0.3 - 1.0).collect();
        let whole: MeanVar = data.iter().copied().collect();
        let mut left: MeanVar = data[..40].iter().copied().collect();
        let right: MeanVar = data[40..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.count, whole.count);
        assert!((left.mean - whole.mean).abs() < 1e-14);
        assert!((left.variance() - whole.variance()).abs() < 1e-12);
    }

    #[test]
    fn short_samples_have_no_variance() {
        let one: MeanVar = [2.0].into_iter().collect();
        assert!(one.variance().is_nan());
    }
}
