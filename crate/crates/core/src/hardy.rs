use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::spectral::lowest_generalized_eigenvalue;

/// Radial function on `[0, r_max]`, piecewise linear between nodes.
///
/// Values are stored unnormalized together with `log_norm`, the log of the
/// L2 norm, so profiles like `g_M` with `M = e^500` stay representable; the
/// normalized profile is `values * exp(-log_norm)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub log_norm: f64,
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.filter(|t| *t > f64::NEG_INFINITY).collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

impl RadialProfile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 3 || grid.len() != values.len() {
            return config("profile needs at least three nodes and matching value count");
        }
        if grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return config("profile grid must start at 0 and increase strictly");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("profile values must be finite");
        }
        let mut p = RadialProfile { grid, values, log_norm: 0.0 };
        p.log_norm = 0.5 * p.log_mass();
        if p.log_norm == f64::NEG_INFINITY {
            return domain("profile is identically zero");
        }
        if p.log_norm.abs() < 300.0 {
            let s = (-p.log_norm).exp();
            p.values.iter_mut().for_each(|v| *v *= s);
            p.log_norm = 0.5 * p.log_mass();
        }
        Ok(p)
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Vec<f64>, f: F) -> Result<Self> {
        let values = grid.iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    /// Log of `int 4 pi v^2 r^2 dr` (trapezoid) for the stored values.
    fn log_mass(&self) -> f64 {
        let g = &self.grid;
        let v = &self.values;
        let n = g.len();
        log_sum_exp((0..n).map(|i| {
            let w = match i {
                0 => 0.5 * (g[1] - g[0]),
                _ if i == n - 1 => 0.5 * (g[i] - g[i - 1]),
                _ => 0.5 * (g[i + 1] - g[i - 1]),
            };
            if v[i] == 0.0 || g[i] == 0.0 {
                f64::NEG_INFINITY
            } else {
                2.0 * v[i].abs().ln() + 2.0 * g[i].ln() + w.ln() + (4.0 * PI).ln()
            }
        }))
    }

    /// `int 4 pi g^2 r^2 dr` of the normalized profile minus one.
    pub fn norm_check(&self) -> f64 {
        (self.log_mass() - 2.0 * self.log_norm).exp_m1()
    }

    /// `int g^2 / |x|^2 dx = 4 pi int g^2 dr`, unnormalized.
    fn raw_potential(&self) -> f64 {
        let (g, v) = (&self.grid, &self.values);
        4.0 * PI * (0..g.len() - 1).map(|i| 0.5 * (g[i + 1] - g[i]) * (v[i] * v[i] + v[i + 1] * v[i + 1])).sum::<f64>()
    }

    /// `int |grad g|^2 dx`, exact for the piecewise-linear interpolant,
    /// unnormalized.
    fn raw_energy(&self) -> f64 {
        let (g, v) = (&self.grid, &self.values);
        4.0 * PI
            * (0..g.len() - 1)
                .map(|i| {
                    let (a, b) = (g[i], g[i + 1]);
                    let dr = b - a;
                    let dg = v[i + 1] - v[i];
                    dg * dg * ((a / dr) * a + (a / dr) * b + (b / dr) * b) / 3.0
                })
                .sum::<f64>()
    }

    /// `theta int g^2/|x|^2 - 1/2 int |grad g|^2` for the normalized profile.
    pub fn functional(&self, theta: f64) -> f64 {
        let s = (-2.0 * self.log_norm).exp();
        (theta * self.raw_potential() - 0.5 * self.raw_energy()) * s
    }

    /// `x -> a^{3/2} g(a x)`.
    pub fn rescaled(&self, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return domain("scale factor must be positive");
        }
        let s = a.powf(1.5);
        Ok(RadialProfile {
            grid: self.grid.iter().map(|r| r / a).collect(),
            values: self.values.iter().map(|v| v * s).collect(),
            log_norm: self.log_norm,
        })
    }
}

/// `int g^2/|x|^2 / int |grad g|^2`; at most 4 by Hardy's inequality.
pub fn hardy_ratio(profile: &RadialProfile) -> Result<f64> {
    let den = profile.raw_energy();
    if !(den > 0.0) {
        return domain("profile has zero gradient energy");
    }
    Ok(profile.raw_potential() / den)
}

/// Geometric grid through the breakpoints `M^{-1}`, `M`, `2M` of `g_M`.
fn gm_grid(m: f64, grid_n: usize) -> Vec<f64> {
    let lm = m.ln();
    let segs = [((0.1f64).ln() - lm, -lm), (-lm, lm), (lm, lm + 2f64.ln())];
    let decades: f64 = segs.iter().map(|s| (s.1 - s.0) / 10f64.ln()).sum();
    let per_decade = (grid_n as f64 / decades).max(100.0);
    let mut grid = vec![0.0];
    for (k, &(a, b)) in segs.iter().enumerate() {
        let mut cells = ((b - a) / 10f64.ln() * per_decade).ceil() as usize;
        if k == 2 {
            cells = cells.max(200);
        }
        cells = cells.max(1);
        let start = if k == 0 { 0 } else { 1 };
        for i in start..=cells {
            let r = if i == cells {
                // land exactly on the breakpoint
                match k {
                    0 => 1.0 / m,
                    1 => m,
                    _ => 2.0 * m,
                }
            } else {
                (a + (b - a) * i as f64 / cells as f64).exp()
            };
            grid.push(r);
        }
    }
    grid
}

/// `g_M(r)`: `M^{1/2}` up to `1/M`, `r^{-1/2}` up to `M`, linear to zero at `2M`.
pub fn g_m(m: f64, r: f64) -> f64 {
    if r <= 1.0 / m {
        m.sqrt()
    } else if r <= m {
        1.0 / r.sqrt()
    } else if r <= 2.0 * m {
        (2.0 - r / m) / m.sqrt()
    } else {
        0.0
    }
}

pub fn g_m_profile(m: f64, grid_n: usize) -> Result<RadialProfile> {
    if !(m > 1.0) || !m.is_finite() {
        return domain(format!("M must exceed 1, got {m}"));
    }
    RadialProfile::from_fn(gm_grid(m, grid_n), |r| g_m(m, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmRatio {
    pub quadrature: f64,
    /// `4 - 8 / (7/3 + log(M)/2)`, from integrating the family exactly.
    pub closed_form: f64,
    /// `4 - 28 / (7/3 + log(M)/2)`, the form printed alongside the family.
    pub published_form: f64,
}

pub fn gm_closed_form(log_m: f64) -> f64 {
    4.0 - 8.0 / (7.0 / 3.0 + 0.5 * log_m)
}

pub fn gm_published_form(log_m: f64) -> f64 {
    4.0 - 28.0 / (7.0 / 3.0 + 0.5 * log_m)
}

pub fn hardy_ratio_gm(m: f64, grid_n: usize) -> Result<GmRatio> {
    let p = g_m_profile(m, grid_n)?;
    Ok(GmRatio { quadrature: hardy_ratio(&p)?, closed_form: gm_closed_form(m.ln()), published_form: gm_published_form(m.ln()) })
}

/// Smallest `log M` with `gm_closed_form(log M) >= 4 - eps`.
pub fn gm_log_m_for(eps: f64) -> f64 {
    2.0 * (8.0 / eps - 7.0 / 3.0)
}

/// `sup` of `theta int g^2/(|x|+delta)^2 - 1/2 int |grad g|^2` over unit
/// functions supported in `B(0, r)`.
///
/// The radial ground state `g = u / rho` with `w = rho + delta = e^s` and
/// `u = e^{s/2} v` solves `-v''/2 + (1/8 - theta) v = E e^{2s} v` with
/// Dirichlet ends on `[ln delta, ln(r + delta)]`, and `H = -E_min`.
pub fn h_functional(theta: f64, r: f64, delta: f64, grid_n: usize) -> Result<f64> {
    if !(r > 0.0) || !(delta >= 0.0) || !theta.is_finite() {
        return domain("need r > 0, delta >= 0 and finite theta");
    }
    if delta == 0.0 && theta > 0.125 {
        return domain("supremum is infinite for theta > 1/8 without regularization");
    }
    if grid_n < 3 {
        return config("grid_n must be at least 3");
    }
    let delta = if delta == 0.0 { r * 1e-12 } else { delta };
    let s0 = delta.ln();
    let len = (r / delta).ln_1p();
    let hs = len / (grid_n + 1) as f64;
    let c = 0.125 - theta;
    let diag = vec![1.0 / (hs * hs) + c; grid_n];
    let off = vec![-0.5 / (hs * hs); grid_n - 1];
    let weight: Vec<f64> = (1..=grid_n).map(|i| (2.0 * (s0 + i as f64 * hs)).exp()).collect();
    Ok(-lowest_generalized_eigenvalue(&diag, &off, &weight)?)
}

/// `theta > 1/8 + pi^2 / (2 ln(1 + r/delta)^2)`, exactly when `H > 0`.
pub fn h_positive_threshold(r: f64, delta: f64) -> f64 {
    0.125 + PI * PI / (2.0 * (r / delta).ln_1p().powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Zero,
    Infinite,
}

/// The unregularized functional is 0 for `theta <= 1/8`, infinite above.
pub fn h_dichotomy(theta: f64) -> Result<Branch> {
    if !(theta > 0.0) {
        return domain(format!("theta must be positive, got {theta}"));
    }
    Ok(if theta <= 0.125 { Branch::Zero } else { Branch::Infinite })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub value: f64,
    pub scaled_value: f64,
}

/// The functional of `profile` and of `a^{3/2} g(a x)`; the second is `a^2`
/// times the first.
pub fn scaling_identity_check(profile: &RadialProfile, a: f64, theta: f64) -> Result<ScalingRecord> {
    let scaled = profile.rescaled(a)?;
    Ok(ScalingRecord { value: profile.functional(theta), scaled_value: scaled.functional(theta) })
}
