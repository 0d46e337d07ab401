//! Sample statistics over observation vectors.
//!
//! All estimators follow the usual sample definitions: mean `μ_x = (1/d) Σ x_m`
//! and covariance `C_{x,y} = (1/(d−1)) Σ (x_m − μ_x)(y_m − μ_y)`, with variance
//! `σ²_x = C_{x,x}`. Sums use Neumaier compensated accumulation so centering
//! residuals stay far below `1e-12` relative even for long series.

use crate::{Error, Result};

/// Compensated (Neumaier) summation of an iterator of f64 values.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean `(1/d) Σ x_m`.
///
/// Errors with [`Error::EmptyVector`] on empty input.
pub fn sample_mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyVector);
    }
    Ok(compensated_sum(x.iter().copied()) / x.len() as f64)
}

/// Sample covariance `(1/(d−1)) Σ (x_m − μ_x)(y_m − μ_y)`.
///
/// Requires equal lengths and at least two observations.
pub fn sample_cov(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateSample {
            required: 2,
            actual: x.len(),
        });
    }
    let mu_x = sample_mean(x)?;
    let mu_y = sample_mean(y)?;
    let sum = compensated_sum(x.iter().zip(y).map(|(&a, &b)| (a - mu_x) * (b - mu_y)));
    Ok(sum / (x.len() - 1) as f64)
}

/// Sample variance `σ²_x = C_{x,x}`.
pub fn sample_var(x: &[f64]) -> Result<f64> {
    sample_cov(x, x)
}

/// Sample standard deviation `σ_x`.
pub fn sample_std(x: &[f64]) -> Result<f64> {
    Ok(sample_var(x)?.sqrt())
}

/// Sample correlation `C_{x,y} / (σ_x σ_y)`.
///
/// Errors with [`Error::ZeroVarianceSeries`] when either series has zero
/// standard deviation, since the ratio is undefined there.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    let c = sample_cov(x, y)?;
    let sx = sample_std(x)?;
    let sy = sample_std(y)?;
    if sx <= 0.0 || sy <= 0.0 {
        return Err(Error::ZeroVarianceSeries);
    }
    Ok(c / (sx * sy))
}

/// Summary statistics of a pair of series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    /// `(μ_x, μ_y)`.
    pub mean: (f64, f64),
    /// `(σ²_x, σ²_y)`.
    pub variance: (f64, f64),
    /// `C_{x,y}`.
    pub covariance: f64,
    /// `C_{x,y} / (σ_x σ_y)`; `None` when either variance is zero.
    pub correlation: Option<f64>,
}

/// All pairwise sample statistics in one pass over the definitions.
///
/// On standardized series the covariance equals the correlation coefficient,
/// since both standard deviations are one.
pub fn sample_stats(x: &[f64], y: &[f64]) -> Result<SampleStats> {
    let covariance = sample_cov(x, y)?;
    let var_x = sample_var(x)?;
    let var_y = sample_var(y)?;
    let correlation = if var_x > 0.0 && var_y > 0.0 {
        Some(covariance / (var_x.sqrt() * var_y.sqrt()))
    } else {
        None
    };
    Ok(SampleStats {
        mean: (sample_mean(x)?, sample_mean(y)?),
        variance: (var_x, var_y),
        covariance,
        correlation,
    })
}

/// Log-returns of a strictly positive price series: `r_t = ln(p_{t+1} / p_t)`.
///
/// A series of `d+1` prices yields `d` returns.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::DegenerateSample {
            required: 2,
            actual: prices.len(),
        });
    }
    for (i, &p) in prices.iter().enumerate() {
        if p <= 0.0 || p.is_nan() {
            return Err(Error::NonPositivePrice { index: i });
        }
    }
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Streaming moment accumulator up to the fourth power.
///
/// Values are accumulated as offsets from the first pushed value, which keeps
/// the power sums well conditioned when the data sit far from zero. Partial
/// accumulators can be [`merge`](Moments::merge)d, so Monte Carlo workers can
/// accumulate independently and combine in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    shift: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.shift = x;
        }
        let d = x - self.shift;
        let d2 = d * d;
        self.n += 1;
        self.s1 += d;
        self.s2 += d2;
        self.s3 += d2 * d;
        self.s4 += d2 * d2;
    }

    /// Merge another accumulator into this one.
    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        // Re-express the other accumulator's power sums around our shift.
        let d = other.shift - self.shift;
        let (n, s1, s2, s3, s4) = (other.n as f64, other.s1, other.s2, other.s3, other.s4);
        self.n += other.n;
        self.s1 += s1 + n * d;
        self.s2 += s2 + 2.0 * d * s1 + n * d * d;
        self.s3 += s3 + 3.0 * d * s2 + 3.0 * d * d * s1 + n * d * d * d;
        self.s4 += s4 + 4.0 * d * s3 + 6.0 * d * d * s2 + 4.0 * d * d * d * s1 + n * d * d * d * d;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.s1 / self.n as f64
    }

    /// Central moment of order 2 (population form, divisor `n`).
    fn m2(&self) -> f64 {
        let n = self.n as f64;
        let d1 = self.s1 / n;
        (self.s2 / n - d1 * d1).max(0.0)
    }

    /// Central moment of order 4 (population form, divisor `n`).
    fn m4(&self) -> f64 {
        let n = self.n as f64;
        let d1 = self.s1 / n;
        (self.s4 / n - 4.0 * d1 * self.s3 / n + 6.0 * d1 * d1 * self.s2 / n - 3.0 * d1.powi(4))
            .max(0.0)
    }

    /// Unbiased sample variance (divisor `n−1`).
    pub fn variance(&self) -> f64 {
        self.m2() * self.n as f64 / (self.n as f64 - 1.0)
    }

    /// Standard error of the sample mean.
    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Standard error of the sample variance via the empirical fourth moment:
    /// `Var(s²) ≈ (m₄ − m₂²)/n`. No normality assumption.
    pub fn se_variance(&self) -> f64 {
        let n = self.n as f64;
        let m2 = self.m2();
        ((self.m4() - m2 * m2).max(0.0) / n).sqrt()
    }
}
