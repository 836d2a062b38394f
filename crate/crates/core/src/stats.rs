use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Monte Carlo result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    /// Set when some replicate overflowed; `mean` is then `+inf`.
    pub overflow: bool,
}

impl Estimate {
    pub fn exact(value: f64, n: u64, seed: u64) -> Self {
        Estimate { mean: value, stderr: 0.0, n, seed, overflow: false }
    }

    /// Reduce replicate values in index order.
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let mut acc = Welford::default();
        for &x in samples {
            acc.push(x);
        }
        acc.estimate(seed)
    }

    pub fn within(&self, target: f64, k_sigma: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k_sigma * self.stderr + slack
    }
}

/// Streaming mean/variance with an associative merge.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
    overflow: bool,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        if !x.is_finite() {
            self.overflow = true;
            self.n += 1;
            return;
        }
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * w;
        self.mean += d * w;
        self.n = n;
        self.overflow |= other.overflow;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self, seed: u64) -> Estimate {
        if self.overflow {
            return Estimate { mean: f64::INFINITY, stderr: f64::NAN, n: self.n, seed, overflow: true };
        }
        let stderr = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean: self.mean, stderr, n: self.n, seed, overflow: false }
    }
}

/// Binomial proportion with its plug-in standard error.
pub fn proportion(hits: u64, n: u64, seed: u64) -> Estimate {
    let p = hits as f64 / n as f64;
    Estimate { mean: p, stderr: (p * (1.0 - p) / n as f64).sqrt(), n, seed, overflow: false }
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

pub fn poisson_pmf(v: f64, k: u64) -> f64 {
    if v == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-v + k as f64 * v.ln() - ln_factorial(k)).exp()
}

/// `P(Poisson(v) >= k)`, summed from the tail so tiny probabilities keep
/// full relative precision.
pub fn poisson_sf(v: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if v == 0.0 {
        return 0.0;
    }
    if (k as f64) < v {
        return 1.0 - poisson_cdf(v, k - 1);
    }
    let mut term = poisson_pmf(v, k);
    let mut sum = 0.0;
    let mut j = k;
    while term > sum * 1e-18 {
        sum += term;
        j += 1;
        term *= v / j as f64;
    }
    sum
}

pub fn poisson_cdf(v: f64, k: u64) -> f64 {
    if (k as f64) >= v {
        return 1.0 - poisson_sf(v, k + 1);
    }
    let mut term = poisson_pmf(v, 0);
    let mut sum = term;
    for j in 1..=k {
        term *= v / j as f64;
        sum += term;
    }
    sum
}

/// `(P(Poisson(v) <= k))^cells` for independent cells.
pub fn exact_max_count_cdf(num_cells: u64, cell_volume: f64, k: i64) -> Result<f64> {
    if k < 0 {
        return domain("k must be non-negative");
    }
    if num_cells == 0 || !(cell_volume > 0.0) {
        return domain("need at least one cell of positive volume");
    }
    let tail = poisson_sf(cell_volume, k as u64 + 1);
    Ok((num_cells as f64 * (-tail).ln_1p()).exp())
}

/// `P(Poisson(v) >= k)` for at least one of `num_cells` independent cells.
pub fn exceedance_any(num_cells: u64, cell_volume: f64, k: u64) -> f64 {
    let tail = poisson_sf(cell_volume, k);
    -(num_cells as f64 * (-tail).ln_1p()).exp_m1()
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}
