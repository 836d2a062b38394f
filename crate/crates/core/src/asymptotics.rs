use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::poisson_field::{poisson_draw, CellShape, LatticeSpec};
use crate::rng;
use crate::stats::{self, exceedance_any};

/// Slowly varying `l(t)`, valid for `t > e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SlowlyVaryingSpec {
    Const { c: f64 },
    /// `(log t)^a`
    LogPow { a: f64 },
    /// `(log log t)^a`
    LogLogPow { a: f64 },
    /// `(log t) (log log t)^a`
    LogTimesLogLogPow { a: f64 },
    /// Log-log interpolated samples `(t_i, l_i)`.
    CustomTable { t: Vec<f64>, l: Vec<f64> },
}

impl SlowlyVaryingSpec {
    /// Parse `const:c`, `logpow:a`, `loglogpow:a` or `logxloglogpow:a`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = |d: f64| -> Result<f64> {
            if arg.is_empty() {
                Ok(d)
            } else {
                arg.parse().map_err(|_| crate::Error::Config(format!("bad parameter in l spec '{s}'")))
            }
        };
        let spec = match name {
            "const" => SlowlyVaryingSpec::Const { c: num(1.0)? },
            "logpow" => SlowlyVaryingSpec::LogPow { a: num(1.0)? },
            "loglogpow" => SlowlyVaryingSpec::LogLogPow { a: num(1.0)? },
            "logxloglogpow" => SlowlyVaryingSpec::LogTimesLogLogPow { a: num(1.0)? },
            _ => return config(format!("unknown slowly varying family '{name}'")),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SlowlyVaryingSpec::Const { c } if !(*c > 0.0) => config("const l must be positive"),
            SlowlyVaryingSpec::CustomTable { t, l } => {
                if t.len() < 4 || t.len() != l.len() {
                    return config("custom table needs at least four (t, l) pairs");
                }
                if t[0] <= std::f64::consts::E || t.windows(2).any(|w| !(w[1] > w[0])) {
                    return config("custom table times must exceed e and increase");
                }
                if l.iter().any(|v| !(*v > 0.0)) {
                    return config("custom table values must be positive");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > std::f64::consts::E) {
            return domain(format!("l(t) needs t > e, got {t}"));
        }
        let lt = t.ln();
        Ok(match self {
            SlowlyVaryingSpec::Const { c } => *c,
            SlowlyVaryingSpec::LogPow { a } => lt.powf(*a),
            SlowlyVaryingSpec::LogLogPow { a } => lt.ln().powf(*a),
            SlowlyVaryingSpec::LogTimesLogLogPow { a } => lt * lt.ln().powf(*a),
            SlowlyVaryingSpec::CustomTable { t: ts, l } => {
                if t < ts[0] || t > ts[ts.len() - 1] {
                    return domain(format!("t = {t} outside the custom table"));
                }
                let i = ts.partition_point(|&x| x <= t).clamp(1, ts.len() - 1);
                let (x0, x1) = (ts[i - 1].ln(), ts[i].ln());
                let f = (t.ln() - x0) / (x1 - x0);
                (l[i - 1].ln() * (1.0 - f) + l[i].ln() * f).exp()
            }
        })
    }

    /// Sample on a logarithmic grid in `log t`; used to exercise the numeric
    /// classifiers on known families.
    pub fn tabulate(&self, t0: f64, horizon: f64, n: usize) -> Result<Self> {
        let (u0, u1) = (t0.ln().ln(), horizon.ln().ln());
        let mut t = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        for i in 0..n {
            let ti = (u0 + (u1 - u0) * i as f64 / (n - 1) as f64).exp().exp();
            t.push(ti);
            l.push(self.eval(ti)?);
        }
        *t.last_mut().expect("n >= 2") = horizon;
        *l.last_mut().expect("n >= 2") = self.eval(horizon)?;
        Ok(SlowlyVaryingSpec::CustomTable { t, l })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Zero,
    Infinite,
    Inconclusive,
}

/// Convergence of `int_1^inf dt / (t l(t))`: convergent pairs with the zero
/// branch, divergent with the infinite branch.
pub fn limsup_integral_test(l: &SlowlyVaryingSpec) -> Result<Verdict> {
    use SlowlyVaryingSpec::*;
    l.validate()?;
    Ok(match l {
        Const { .. } => Verdict::Infinite,
        LogPow { a } => if *a > 1.0 { Verdict::Zero } else { Verdict::Infinite },
        LogLogPow { .. } => Verdict::Infinite,
        LogTimesLogLogPow { a } => if *a > 1.0 { Verdict::Zero } else { Verdict::Infinite },
        CustomTable { t, .. } => numeric_limsup(l, t[0], t[t.len() - 1])?,
    })
}

/// Fit of `log l(e^u) = c + beta log u + gamma log log u` over samples
/// between `t0` and `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScaleFit {
    pub beta: f64,
    pub gamma: f64,
    /// Largest absolute residual of the fit.
    pub residual: f64,
}

const FIT_SAMPLES: usize = 64;
const EXPONENT_TOL: f64 = 1e-6;

pub fn log_scale_fit(l: &SlowlyVaryingSpec, t0: f64, horizon: f64) -> Result<LogScaleFit> {
    if !(t0 > std::f64::consts::E && horizon > t0) {
        return domain("need e < t0 < horizon");
    }
    let row = |t: f64, lt: f64| {
        let u = t.ln();
        ([1.0, u.ln(), u.ln().ln()], lt.ln())
    };
    let mut rows = Vec::with_capacity(FIT_SAMPLES);
    if let SlowlyVaryingSpec::CustomTable { t, l: lv } = l {
        // tables are fitted on their own nodes
        rows.extend(t.iter().zip(lv).filter(|p| *p.0 >= t0 && *p.0 <= horizon).map(|(&t, &v)| row(t, v)));
        if rows.len() < 4 {
            return domain("fewer than four table nodes in the fit range");
        }
    } else {
        let (w0, w1) = (t0.ln().ln(), horizon.ln().ln());
        for i in 0..FIT_SAMPLES {
            let w = w0 + (w1 - w0) * i as f64 / (FIT_SAMPLES - 1) as f64;
            let t = if i + 1 == FIT_SAMPLES { horizon } else { w.exp().exp().clamp(t0, horizon) };
            rows.push(row(t, l.eval(t)?));
        }
    }
    // normal equations, 3x3
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (x, y) in &rows {
        for i in 0..3 {
            b[i] += x[i] * y;
            for j in 0..3 {
                a[i][j] += x[i] * x[j];
            }
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if !(d.abs() > 0.0) {
        return Err(crate::Error::Numerical { msg: "degenerate log-scale fit".into(), residual: f64::NAN });
    }
    let mut coef = [0.0; 3];
    for (k, c) in coef.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *c = det(&m) / d;
    }
    let scale = rows.iter().map(|r| r.1.abs()).fold(1.0, f64::max);
    let residual = rows
        .iter()
        .map(|(x, y)| (y - coef[0] - coef[1] * x[1] - coef[2] * x[2]).abs())
        .fold(0.0, f64::max)
        / scale;
    Ok(LogScaleFit { beta: coef[1], gamma: coef[2], residual })
}

fn near(x: f64, target: f64) -> bool {
    (x - target).abs() <= EXPONENT_TOL
}

/// With `u = log t` the integral is `int du / l(e^u)`; for
/// `l(e^u) ~ u^beta (log u)^gamma` it converges iff `beta > 1`, or
/// `beta = 1` and `gamma > 1`. Inconclusive when the samples do not follow
/// that form.
pub fn numeric_limsup(l: &SlowlyVaryingSpec, t0: f64, horizon: f64) -> Result<Verdict> {
    let f = log_scale_fit(l, t0, horizon)?;
    if !(f.residual <= 1e-6) {
        return Ok(Verdict::Inconclusive);
    }
    Ok(if near(f.beta, 1.0) {
        if f.gamma > 1.0 + EXPONENT_TOL { Verdict::Zero } else { Verdict::Infinite }
    } else if f.beta > 1.0 {
        Verdict::Zero
    } else {
        Verdict::Infinite
    })
}

/// Zero branch iff `int (1/t) exp{-c l(t)} dt = inf` for some `c > 0`.
pub fn liminf_integral_test(l: &SlowlyVaryingSpec) -> Result<Verdict> {
    use SlowlyVaryingSpec::*;
    l.validate()?;
    Ok(match l {
        Const { .. } => Verdict::Zero,
        // (log t)^a = u^a: integrable against exp for every c when a > 0
        LogPow { a } => if *a > 0.0 { Verdict::Infinite } else { Verdict::Zero },
        // u^{-c (log u)^{a-1}}: divergent for small c iff a <= 1
        LogLogPow { a } => if *a > 1.0 { Verdict::Infinite } else { Verdict::Zero },
        LogTimesLogLogPow { .. } => Verdict::Infinite,
        CustomTable { t, .. } => numeric_liminf(l, t[0], t[t.len() - 1])?,
    })
}

/// `int exp{-c l(e^u)} du` diverges for small `c` iff `l(e^u) = O(log u)`:
/// with `l(e^u) ~ u^beta (log u)^gamma`, iff `beta < 0`, or `beta = 0` and
/// `gamma <= 1`.
pub fn numeric_liminf(l: &SlowlyVaryingSpec, t0: f64, horizon: f64) -> Result<Verdict> {
    let f = log_scale_fit(l, t0, horizon)?;
    if !(f.residual <= 1e-6) {
        return Ok(Verdict::Inconclusive);
    }
    Ok(if near(f.beta, 0.0) {
        if f.gamma <= 1.0 + EXPONENT_TOL { Verdict::Zero } else { Verdict::Infinite }
    } else if f.beta < 0.0 {
        Verdict::Zero
    } else {
        Verdict::Infinite
    })
}

/// `k` with `1/(8(k+1)) < theta <= 1/(8k)`.
pub fn k_of_theta(theta: f64) -> Result<u32> {
    if !(theta > 0.0 && theta < 1.0 / 16.0) {
        return domain(format!("theta must lie in (0, 1/16), got {theta}"));
    }
    let mut k = (1.0 / (8.0 * theta)).floor() as u64;
    while 8.0 * theta * k as f64 > 1.0 {
        k -= 1;
    }
    while 8.0 * theta * (k + 1) as f64 <= 1.0 {
        k += 1;
    }
    u32::try_from(k).map_err(|_| crate::Error::Domain(format!("theta = {theta} gives k beyond range")))
}

/// `floor(kappa / (4 theta))` for `0 < theta < kappa / 8`.
pub fn anderson_index(theta: f64, kappa: f64) -> Result<u32> {
    if !(kappa > 0.0) {
        return domain("kappa must be positive");
    }
    if !(theta > 0.0 && theta < kappa / 8.0) {
        return domain(format!("theta must lie in (0, kappa/8), got theta = {theta}, kappa = {kappa}"));
    }
    let mut i = (kappa / (4.0 * theta)).floor() as u64;
    while 4.0 * theta * i as f64 > kappa {
        i -= 1;
    }
    while 4.0 * theta * (i + 1) as f64 <= kappa {
        i += 1;
    }
    u32::try_from(i).map_err(|_| crate::Error::Domain("index beyond range".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Limsup,
    Liminf,
}

pub fn time_exponent(k: u32) -> f64 {
    (k as f64 + 1.0) / (k as f64 - 1.0)
}

pub fn l_exponent(k: u32) -> f64 {
    2.0 / (3.0 * (k as f64 - 1.0))
}

/// `t^{(k+1)/(k-1)} l(t)^{+-2/(3(k-1))}`, `+` for limsup and `-` for liminf.
pub fn predicted_normalization(theta: f64, l: &SlowlyVaryingSpec, t: f64, side: Side) -> Result<f64> {
    let k = k_of_theta(theta)?;
    if !(t >= std::f64::consts::E.powi(2)) {
        return domain(format!("t must be at least e^2, got {t}"));
    }
    let sign = match side {
        Side::Limsup => 1.0,
        Side::Liminf => -1.0,
    };
    Ok(t.powf(time_exponent(k)) * l.eval(t)?.powf(sign * l_exponent(k)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVerdict {
    pub theta: f64,
    pub k: u32,
    pub time_exponent: f64,
    pub l_exponent: f64,
    pub side: Side,
    pub branch: Verdict,
}

pub fn rate_verdict(theta: f64, l: &SlowlyVaryingSpec, side: Side) -> Result<RateVerdict> {
    let k = k_of_theta(theta)?;
    let branch = match side {
        Side::Limsup => limsup_integral_test(l)?,
        Side::Liminf => liminf_integral_test(l)?,
    };
    Ok(RateVerdict { theta, k, time_exponent: time_exponent(k), l_exponent: l_exponent(k), side, branch })
}

/// Lattice of level `n`: centers `2^{-n} z`, `z in 2r Z^3`, `|z| <= delta 4^n - r`,
/// balls of radius `2^{-n} delta`.
pub fn level_lattice(n: u32, delta: f64, r: f64) -> Result<LatticeSpec> {
    if !(delta > 0.0 && r > 0.0) {
        return domain("delta and r must be positive");
    }
    if r <= delta {
        return config(format!("cells overlap: spacing 2r = {} must exceed 2 delta = {}", 2.0 * r, 2.0 * delta));
    }
    let s = 0.5f64.powi(n as i32);
    let reach = delta * 4f64.powi(n as i32) - r;
    if !(reach > 0.0) {
        return config(format!("level {n} has no lattice points: delta 4^n <= r"));
    }
    LatticeSpec::new(2.0 * r * s, delta * s, reach * s, CellShape::Ball)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeRow {
    pub n: u32,
    pub cells: u64,
    pub cell_volume: f64,
    pub hits: u64,
    pub replicates: u64,
    pub p_emp: f64,
    pub stderr: f64,
    pub p_exact: f64,
}

impl ExtremeRow {
    /// Binomial standard error at the exact probability.
    pub fn oracle_stderr(&self) -> f64 {
        (self.p_exact * (1.0 - self.p_exact) / self.replicates as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeTable {
    pub delta: f64,
    pub r: f64,
    pub seed: u64,
    pub rows: Vec<ExtremeRow>,
    /// Least-squares slope of `log2 p_emp` against `n` (rows with hits).
    pub slope_emp: f64,
    pub slope_exact: f64,
}

/// Does some label in `[0, cells)` occur at least `k` times?
///
/// Labels are counted into about `4 m` buckets by their high bits; only
/// labels in buckets holding `k` or more are sorted and compared.
fn has_k_fold(labels: &[u64], cells: u64, k: usize, counts: &mut Vec<u8>, cand: &mut Vec<u64>) -> bool {
    let m = labels.len();
    if m < k {
        return false;
    }
    let bits = 64 - cells.leading_zeros();
    let want = (4 * m).next_power_of_two().trailing_zeros().min(bits);
    let shift = bits - want;
    counts.clear();
    counts.resize(1usize << want, 0);
    for &x in labels {
        let c = &mut counts[(x >> shift) as usize];
        *c = c.saturating_add(1);
    }
    cand.clear();
    cand.extend(labels.iter().copied().filter(|&x| counts[(x >> shift) as usize] as usize >= k));
    if cand.len() < k {
        return false;
    }
    cand.sort_unstable();
    cand.windows(k).any(|w| w[0] == w[k - 1])
}

/// One replicate: the unit-intensity field restricted to the union of the
/// disjoint level-`n` balls, drawn as a Poisson total with uniform ball
/// labels.
fn union_replicate(cells: u64, vol: f64, k: usize, rng: &mut rng::Rng, labels: &mut Vec<u64>, counts: &mut Vec<u8>, cand: &mut Vec<u64>) -> bool {
    let total = poisson_draw(cells as f64 * vol, rng) as usize;
    labels.clear();
    labels.extend((0..total).map(|_| ((rng.next_u64() as u128 * cells as u128) >> 64) as u64));
    has_k_fold(labels, cells, k, counts, cand)
}

/// `P(max_z omega(B(2^{-n} z, 2^{-n} delta)) >= 3)` per level, empirical and
/// exact.
pub fn extreme_scaling_experiment(n_range: &[u32], delta: f64, r: f64, replicates: u64, seed: u64) -> Result<ExtremeTable> {
    if replicates < 1 {
        return config("replicates must be positive");
    }
    let mut rows = Vec::new();
    for &n in n_range {
        let lat = level_lattice(n, delta, r)?;
        let cells = lat.center_count();
        let vol = lat.cell_volume();
        let level_seed = rng::derive_seed(seed, n as u64);
        let chunk = 256u64;
        let hits: u64 = (0..replicates.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let (mut labels, mut counts, mut cand) = (Vec::new(), Vec::new(), Vec::new());
                (c * chunk..((c + 1) * chunk).min(replicates))
                    .filter(|&i| {
                        let mut rng = rng::stream(level_seed, i);
                        union_replicate(cells, vol, 3, &mut rng, &mut labels, &mut counts, &mut cand)
                    })
                    .count() as u64
            })
            .sum();
        let est = stats::proportion(hits, replicates, level_seed);
        rows.push(ExtremeRow {
            n,
            cells,
            cell_volume: vol,
            hits,
            replicates,
            p_emp: est.mean,
            stderr: est.stderr,
            p_exact: exceedance_any(cells, vol, 3),
        });
    }
    let fit = |f: &dyn Fn(&ExtremeRow) -> f64| {
        let pts: Vec<&ExtremeRow> = rows.iter().filter(|r| f(r) > 0.0).collect();
        if pts.len() < 2 {
            return f64::NAN;
        }
        let x: Vec<f64> = pts.iter().map(|r| r.n as f64).collect();
        let y: Vec<f64> = pts.iter().map(|r| f(r).log2()).collect();
        stats::linear_fit(&x, &y).1
    };
    let slope_emp = fit(&|r| r.p_emp);
    let slope_exact = fit(&|r| r.p_exact);
    Ok(ExtremeTable { delta, r, seed, rows, slope_emp, slope_exact })
}
