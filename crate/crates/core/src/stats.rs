//! Single-pass Monte Carlo summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary of `n` replicates: mean, unbiased variance and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divides by `n`).
    pub fn population_variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0)
        }
    }

    pub fn stats(&self) -> Result<RunStats> {
        if self.n < 2 {
            return Err(Error::EstimationFailure(format!(
                "need at least two samples for a standard error, got {}",
                self.n
            )));
        }
        let variance = (self.m2 / (self.n - 1) as f64).max(0.0);
        Ok(RunStats { n: self.n, mean: self.mean, variance, se: (variance / self.n as f64).sqrt() })
    }
}

impl Extend<f64> for Welford {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        w.extend(iter);
        w
    }
}

/// Summary statistics of a sample; needs at least two values.
pub fn stats(samples: &[f64]) -> Result<RunStats> {
    samples.iter().copied().collect::<Welford>().stats()
}

/// Standard error of a difference of two independent estimates.
pub fn combined_se(a: &RunStats, b: &RunStats) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        let s = stats(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.variance, s.se), (1.0, 0.0, 0.0));
        let s = stats(&[0.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.variance, s.se), (1.0, 2.0, 1.0));
        assert!(stats(&[3.0]).is_err());
    }
}
