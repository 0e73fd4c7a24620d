//! Estimators, confidence intervals and distribution-distance statistics.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.576;

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

/// Mean and batch-means standard error for a correlated sequence.
///
/// Trailing samples that do not fill a batch are dropped from the error
/// estimate but kept in the mean.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let (mean, _) = mean_se(xs);
    let size = xs.len() / batches.max(1);
    if batches < 2 || size == 0 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    (mean, mean_se(&means).1)
}

/// 99% normal-approximation half-width for a binomial proportion.
pub fn binomial_half_width(p: f64, reps: u64) -> f64 {
    Z99 * (p * (1.0 - p) / reps as f64).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic. Handles ties, so it is valid
/// for integer-valued samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic `d` at effective sample size `n_eff`
/// (`n` for one sample, `nm/(n+m)` for two).
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Exceedance probabilities over a threshold grid with 99% binomial half-widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub thresholds: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub half_width: Vec<f64>,
    pub reps: u64,
    /// Truncation horizon in scaled time; infinite when the estimate is exact.
    pub horizon: f64,
}

#[derive(Serialize)]
struct TailRow {
    x: f64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    reps: u64,
    #[serde(rename = "T")]
    horizon: f64,
    seed: u64,
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::validation("thresholds", "must not be empty"));
    }
    if thresholds.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("thresholds", "must be finite"));
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("thresholds", "must be non-decreasing"));
    }
    Ok(())
}

impl TailEstimate {
    /// Builds the estimate from exceedance counts out of `reps` replications.
    pub fn from_counts(thresholds: &[f64], counts: &[u64], reps: u64, horizon: f64) -> Result<Self> {
        check_thresholds(thresholds)?;
        if counts.len() != thresholds.len() {
            return Err(Error::validation("counts", "length must match thresholds"));
        }
        if reps == 0 {
            return Err(Error::validation("reps", "must be positive"));
        }
        let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / reps as f64).collect();
        let half_width = p_hat.iter().map(|&p| binomial_half_width(p, reps)).collect();
        Ok(Self {
            thresholds: thresholds.to_vec(),
            p_hat,
            half_width,
            reps,
            horizon,
        })
    }

    /// Counts strict exceedances `sample > x` for each threshold.
    pub fn from_samples(thresholds: &[f64], samples: &[f64], horizon: f64) -> Result<Self> {
        let counts: Vec<u64> = thresholds
            .iter()
            .map(|&x| samples.iter().filter(|&&s| s > x).count() as u64)
            .collect();
        Self::from_counts(thresholds, &counts, samples.len() as u64, horizon)
    }

    pub fn ci(&self, j: usize) -> (f64, f64) {
        let (p, h) = (self.p_hat[j], self.half_width[j]);
        ((p - h).max(0.0), (p + h).min(1.0))
    }

    /// Index of threshold `x`, if present.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.thresholds.iter().position(|&t| (t - x).abs() < 1e-12)
    }

    pub fn write_csv<W: Write>(&self, out: W, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for j in 0..self.thresholds.len() {
            let (ci_low, ci_high) = self.ci(j);
            w.serialize(TailRow {
                x: self.thresholds[j],
                p_hat: self.p_hat[j],
                ci_low,
                ci_high,
                reps: self.reps,
                horizon: self.horizon,
                seed,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_and_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(m, 2.5);
        assert_abs_diff_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn batch_means_of_constant_batches() {
        let xs: Vec<f64> = (0..100).map(|i| (i / 25) as f64).collect();
        let (m, se) = batch_means(&xs, 4);
        assert_abs_diff_eq!(m, 1.5);
        assert_abs_diff_eq!(se, mean_se(&[0.0, 1.0, 2.0, 3.0]).1);
    }

    #[test]
    fn ks_two_sample_with_ties() {
        assert_eq!(ks_two_sample(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]), 0.0);
        let d = ks_two_sample(&[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(d, 0.25);
        assert_abs_diff_eq!(ks_two_sample(&[0.0], &[1.0]), 1.0);
    }

    #[test]
    fn ks_one_sample_uniform_grid() {
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert_abs_diff_eq!(ks_one_sample(&xs, |x| x), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn ks_p_value_limits() {
        assert_eq!(ks_p_value(0.0, 100.0), 1.0);
        assert!(ks_p_value(0.5, 1000.0) < 1e-10);
        // Classical 5% critical value 1.358/sqrt(n) at large n.
        assert_abs_diff_eq!(ks_p_value(1.358 / 1e3, 1e6), 0.05, epsilon = 2e-3);
    }

    #[test]
    fn tail_estimate_counts_strictly() {
        let t = TailEstimate::from_samples(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0, 3.0], 5.0).unwrap();
        assert_eq!(t.p_hat, vec![0.75, 0.5, 0.25]);
        assert_abs_diff_eq!(t.half_width[1], 2.576 * (0.25f64 / 4.0).sqrt());
        assert!(TailEstimate::from_samples(&[1.0, 0.0], &[0.5], 1.0).is_err());
    }

    #[test]
    fn tail_csv_has_header_and_seed() {
        let t = TailEstimate::from_counts(&[1.0], &[3], 10, 4.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, 42).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,p_hat,ci_low,ci_high,reps,T,seed"));
        assert!(lines.next().unwrap().ends_with(",10,4.0,42"));
    }
}
