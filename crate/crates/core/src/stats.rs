//! Estimates, decay fits and a two-sample Kolmogorov-Smirnov test.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normal quantile used for every reported confidence half-width.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Welford accumulator with Chan's pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let (na, nb) = (self.n as f64, other.n as f64);
        let d = other.mean - self.mean;
        let mean = self.mean + d * nb / n as f64;
        let m2 = self.m2 + other.m2 + d * d * na * nb / n as f64;
        Self { n, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn into_estimate(self, seed: u64) -> MonteCarloEstimate {
        let stderr = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        MonteCarloEstimate { mean: self.mean, stderr, n: self.n, seed }
    }
}

/// Mean and standard error of a Monte Carlo expectation.
///
/// `seed` is the first stream consumed; a run covers streams `seed..seed + n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

impl MonteCarloEstimate {
    pub fn seed_range(&self) -> Range<u64> {
        self.seed..self.seed.wrapping_add(self.n)
    }

    fn accumulator(&self) -> Accumulator {
        let n = self.n as f64;
        let m2 = if self.n > 1 { self.stderr * self.stderr * n * (n - 1.0) } else { 0.0 };
        Accumulator { n: self.n, mean: self.mean, m2 }
    }

    /// Pools two estimates through their sufficient statistics.
    pub fn merge(&self, other: &Self) -> Self {
        let seed = self.seed.min(other.seed);
        self.accumulator().merge(&other.accumulator()).into_estimate(seed)
    }

    /// `(self - other)` in combined standard errors.
    pub fn z_against(&self, other: &Self) -> f64 {
        let s = (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        (self.mean - other.mean) / s
    }

    /// `(mean - exact)` in standard errors.
    pub fn z_against_exact(&self, exact: f64) -> f64 {
        (self.mean - exact) / self.stderr
    }
}

/// Log-linear decay fit `log(mean) ~ intercept - lambda_hat * s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lambda_hat: f64,
    pub ci_halfwidth: f64,
    pub intercept: f64,
    pub s_grid: Vec<f64>,
    pub log_means: Vec<f64>,
    /// Inverse variances of `log_means`; all ones when the inputs carried no error.
    pub weights: Vec<f64>,
}

impl DecayFit {
    pub fn contains(&self, value: f64) -> bool {
        (self.lambda_hat - value).abs() <= self.ci_halfwidth
    }

    pub fn relative_error(&self, target: f64) -> f64 {
        (self.lambda_hat - target).abs() / target.abs()
    }
}

/// Straight-line fit of `ys` on `xs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_var: f64,
}

/// Weighted least squares. With `sigmas`, weights are `1 / sigma^2` and the
/// slope variance is the known-variance one; without, weights are one and
/// the slope variance comes from the residuals.
pub fn line_fit(xs: &[f64], ys: &[f64], sigmas: Option<&[f64]>) -> Result<LineFit> {
    let m = xs.len();
    if m != ys.len() || sigmas.is_some_and(|s| s.len() != m) {
        return Err(Error::Numerical("mismatched fit inputs".into()));
    }
    let weights: Vec<f64> = match sigmas {
        Some(s) => s.iter().map(|&v| 1.0 / (v * v)).collect(),
        None => vec![1.0; m],
    };
    let sw: f64 = weights.iter().sum();
    let sx: f64 = weights.iter().zip(xs).map(|(w, x)| w * x).sum();
    let sy: f64 = weights.iter().zip(ys).map(|(w, y)| w * y).sum();
    let xbar = sx / sw;
    let ybar = sy / sw;
    let sxx: f64 = weights.iter().zip(xs).map(|(w, x)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = weights
        .iter()
        .zip(xs.iter().zip(ys))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    if !(sxx > 0.0) || !sxx.is_finite() {
        return Err(Error::Numerical("degenerate abscissae in line fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_var = if sigmas.is_some() {
        1.0 / sxx
    } else if m > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        rss / (m - 2) as f64 / sxx
    } else {
        0.0
    };
    Ok(LineFit { intercept, slope, slope_var })
}

/// Fits `log(mean)` against `s` with inverse-variance weights from the
/// delta-method errors `stderr / mean`.
///
/// Needs three distinct abscissae and every mean above twice its stderr.
pub fn fit_lambda(estimates: &[(f64, MonteCarloEstimate)]) -> Result<DecayFit> {
    let mut distinct: Vec<f64> = estimates.iter().map(|(s, _)| *s).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Numerical(format!(
            "decay fit needs at least 3 distinct abscissae, got {}",
            distinct.len()
        )));
    }
    if let Some((s, e)) = estimates.iter().find(|(_, e)| !(e.mean > 2.0 * e.stderr)) {
        return Err(Error::Numerical(format!(
            "signal drowned at s = {s}: mean {} vs stderr {}",
            e.mean, e.stderr
        )));
    }
    let s_grid: Vec<f64> = estimates.iter().map(|(s, _)| *s).collect();
    let log_means: Vec<f64> = estimates.iter().map(|(_, e)| e.mean.ln()).collect();
    let rel: Vec<f64> = estimates.iter().map(|(_, e)| e.stderr / e.mean).collect();
    let weighted = rel.iter().all(|&r| r > 0.0);
    let fit = line_fit(&s_grid, &log_means, weighted.then_some(rel.as_slice()))?;
    let weights = if weighted { rel.iter().map(|r| 1.0 / (r * r)).collect() } else { vec![1.0; rel.len()] };
    Ok(DecayFit {
        lambda_hat: -fit.slope,
        ci_halfwidth: Z_95 * fit.slope_var.sqrt(),
        intercept: fit.intercept,
        s_grid,
        log_means,
        weights,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
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

/// Asymptotic two-sample critical value at significance `alpha`.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}
