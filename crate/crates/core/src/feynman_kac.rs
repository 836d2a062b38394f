use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::{gaussian3, step_count, step_widths};
use crate::error::{config, domain, Error, Result};
use crate::geometry::{norm, Domain, Vec3};
use crate::poisson_field::{PointSource, PoissonField};
use crate::potential::{uniform_in_ball, Evaluator, TruncationScheme};
use crate::rng::{self, Rng};
use crate::spectral::{self, DirichletProblem, GridPotential};
use crate::stats::{Estimate, Welford};

/// How killing at the domain boundary is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitRule {
    /// Kill when a grid position is outside the closed domain.
    #[default]
    Grid,
    /// Grid killing, and each surviving step is weighted by the probability
    /// that the Brownian bridge between its endpoints stays inside.
    BridgeCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkConfig {
    pub theta: f64,
    pub t: f64,
    pub dt: f64,
    pub cap: f64,
    pub n_paths: u64,
    pub start: Vec3,
    pub scheme: TruncationScheme,
    pub domain: Option<Domain>,
    #[serde(default)]
    pub exit_rule: ExitRule,
}

impl FkConfig {
    pub fn validate(&self) -> Result<usize> {
        if !(self.cap > 0.0) {
            return config(format!("cap must be positive, got {}", self.cap));
        }
        if self.n_paths < 1 {
            return config("n_paths must be at least 1");
        }
        if !self.theta.is_finite() {
            return domain("theta must be finite");
        }
        self.scheme.validate()?;
        step_count(self.t, self.dt)
    }
}

/// Probability that a bridge of duration `dt` between points at distances
/// `d0, d1` in front of a flat barrier crosses it.
#[inline]
fn crossing(d0: f64, d1: f64, dt: f64) -> f64 {
    let e = 2.0 * d0 * d1 / dt;
    if e > 50.0 {
        0.0
    } else {
        (-e).exp()
    }
}

/// Survival factor for one step; zero if the endpoint is outside.
#[inline]
fn step_survival(domain: &Domain, x0: Vec3, x1: Vec3, dt: f64, rule: ExitRule) -> f64 {
    if !domain.contains(x1) {
        return 0.0;
    }
    if rule == ExitRule::Grid {
        return 1.0;
    }
    match *domain {
        Domain::Ball { radius } => 1.0 - crossing(radius - norm(x0), radius - norm(x1), dt),
        Domain::Box { half_width: h } => {
            let mut s = 1.0;
            for k in 0..3 {
                s *= 1.0 - crossing(h - x0[k], h - x1[k], dt);
                s *= 1.0 - crossing(h + x0[k], h + x1[k], dt);
            }
            s
        }
    }
}

struct PathSample {
    values: Vec<f64>,
    survival: f64,
}

/// Potential values along one path, plus its survival weight.
fn path_values<S: PointSource>(
    field: &S,
    ev: &Evaluator,
    cfg: &FkConfig,
    steps: usize,
    rng: &mut Rng,
) -> Result<PathSample> {
    let (w, last) = step_widths(cfg.t, cfg.dt, steps);
    let (sd, sd_last) = (w.sqrt(), last.sqrt());
    let mut x = cfg.start;
    let mut values = Vec::with_capacity(steps + 1);
    let mut survival = 1.0;
    if let Some(d) = cfg.domain {
        if !d.contains(x) {
            return Ok(PathSample { values, survival: 0.0 });
        }
    }
    let need_v = cfg.theta != 0.0;
    if need_v {
        values.push(ev.renormalized_fast(field, x)?);
    }
    for i in 0..steps {
        let h = if i + 1 == steps { last } else { w };
        let g = gaussian3(rng, if i + 1 == steps { sd_last } else { sd });
        let y = [x[0] + g[0], x[1] + g[1], x[2] + g[2]];
        if let Some(d) = cfg.domain {
            survival *= step_survival(&d, x, y, h, cfg.exit_rule);
            if survival == 0.0 {
                return Ok(PathSample { values, survival });
            }
        }
        x = y;
        if need_v {
            values.push(ev.renormalized_fast(field, x)?);
        }
    }
    Ok(PathSample { values, survival })
}

/// Trapezoid of the clamped values.
fn clamped_integral(values: &[f64], cap: f64, w: f64, last: f64) -> f64 {
    let n = values.len() - 1;
    let c = |v: f64| v.clamp(-cap, cap);
    let mut s = 0.0;
    for i in 0..n {
        let h = if i + 1 == n { last } else { w };
        s += 0.5 * h * (c(values[i]) + c(values[i + 1]));
    }
    s
}

fn check_envelope<S: PointSource>(field: &S, cfg: &FkConfig) -> Result<()> {
    if cfg.theta == 0.0 {
        return Ok(());
    }
    let rho = cfg.scheme.tail_radius;
    let (center, r) = match cfg.domain {
        Some(d) => ([0.0; 3], d.outer_radius().max(norm(cfg.start)) + rho),
        None => (cfg.start, 6.0 * cfg.t.sqrt() + rho),
    };
    if field.window().contains_ball(center, r) {
        Ok(())
    } else {
        Err(Error::OutOfWindow { what: format!("path envelope of radius {r:.3} around {center:?}") })
    }
}

/// `E_x exp{theta int_0^t clamp(V(B_s)) ds}`, optionally restricted to
/// paths that stay in `cfg.domain`.
pub fn quenched_moment<S: PointSource>(field: &S, cfg: &FkConfig, seed: u64) -> Result<Estimate> {
    Ok(cap_sweep(field, cfg, &[cfg.cap], seed)?.estimates[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSweep {
    pub caps: Vec<f64>,
    pub estimates: Vec<Estimate>,
    /// `mean_{j+1} / mean_j`.
    pub ratios: Vec<f64>,
}

/// Estimates under each clamp level, all computed from the same paths.
pub fn cap_sweep<S: PointSource>(field: &S, cfg: &FkConfig, caps: &[f64], seed: u64) -> Result<CapSweep> {
    let steps = cfg.validate()?;
    if caps.is_empty() || caps.windows(2).any(|w| w[1] <= w[0]) || caps[0] <= 0.0 {
        return config("caps must be positive and strictly increasing");
    }
    check_envelope(field, cfg)?;
    let ev = Evaluator::new(&cfg.scheme)?;
    let (w, last) = step_widths(cfg.t, cfg.dt, steps);
    let per_path: Vec<Result<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            let ps = path_values(field, &ev, cfg, steps, &mut rng)?;
            Ok(caps
                .iter()
                .map(|&cap| {
                    if ps.survival == 0.0 {
                        0.0
                    } else if cfg.theta == 0.0 {
                        ps.survival
                    } else {
                        ps.survival * (cfg.theta * clamped_integral(&ps.values, cap, w, last)).exp()
                    }
                })
                .collect())
        })
        .collect();
    let mut acc = vec![Welford::default(); caps.len()];
    for r in per_path {
        let v = r?;
        for (a, x) in acc.iter_mut().zip(v) {
            a.push(x);
        }
    }
    let estimates: Vec<Estimate> = acc.iter().map(|a| a.estimate(seed)).collect();
    let ratios = estimates.windows(2).map(|e| e[1].mean / e[0].mean).collect();
    Ok(CapSweep { caps: caps.to_vec(), estimates, ratios })
}

/// A field made of `m` points stacked at the origin.
pub fn planted_field(m: usize, half_width: f64) -> Result<PoissonField> {
    let window = crate::geometry::Aabb::cube([0.0; 3], half_width)?;
    PoissonField::planted(window, vec![[0.0; 3]; m])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRate {
    pub exponent: f64,
    pub intercept: f64,
    pub residual: f64,
}

/// Least-squares slope of `log(log M)` against `log t`.
pub fn growth_rate(log_moments: &[(f64, f64)]) -> Result<GrowthRate> {
    if log_moments.len() < 3 {
        return domain("growth_rate needs at least three points");
    }
    if log_moments.windows(2).any(|w| w[1].0 <= w[0].0) || log_moments[0].0 <= 0.0 {
        return domain("times must be positive and increasing");
    }
    if let Some(&(t, v)) = log_moments.iter().find(|p| !(p.1 > 0.0)) {
        return domain(format!("log-moment at t = {t} is not positive ({v})"));
    }
    let x: Vec<f64> = log_moments.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = log_moments.iter().map(|p| p.1.ln()).collect();
    let (a, b) = crate::stats::linear_fit(&x, &y);
    let residual = x.iter().zip(&y).map(|(xi, yi)| (yi - a - b * xi).abs()).fold(0.0, f64::max);
    Ok(GrowthRate { exponent: b, intercept: a, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub mc_integral: Estimate,
    pub bound: f64,
    pub lambda: f64,
    pub sup: f64,
}

impl ConsistencyRecord {
    pub fn holds(&self) -> bool {
        self.mc_integral.mean + 3.0 * self.mc_integral.stderr >= self.bound
    }
}

/// Check `int_{B(0,R)} E_x[exp int_0^t zeta; T_R >= t] dx >=
/// (2 pi t0)^{3/2} e^{-t0 K} exp{(t + t0) lambda_zeta(B(0,R))}`.
pub fn fk_eigen_consistency(
    zeta: &GridPotential,
    radius: f64,
    t: f64,
    t0: f64,
    dt: f64,
    n_paths: u64,
    eigen_grid_n: usize,
    seed: u64,
) -> Result<ConsistencyRecord> {
    if !(t0 > 0.0 && t0 < t) {
        return domain("need 0 < t0 < t");
    }
    if zeta.half_width() < 2.0 * radius - 1e-12 {
        return domain("potential grid must cover B(0, 2R)");
    }
    let k = zeta.sup_on_ball(2.0 * radius);
    if !k.is_finite() || zeta.values().iter().any(|v| !v.is_finite()) {
        return domain("potential must be bounded");
    }
    let steps = step_count(t, dt)?;
    let (w, last) = step_widths(t, dt, steps);
    let ball = Domain::Ball { radius };
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            let mut x = uniform_in_ball(radius, &mut rng);
            let mut integral = 0.0;
            let mut fx = zeta.eval(x);
            for s in 0..steps {
                let h = if s + 1 == steps { last } else { w };
                let g = gaussian3(&mut rng, h.sqrt());
                let y = [x[0] + g[0], x[1] + g[1], x[2] + g[2]];
                if !ball.contains(y) {
                    return 0.0;
                }
                let fy = zeta.eval(y);
                integral += 0.5 * h * (fx + fy);
                x = y;
                fx = fy;
            }
            integral.exp()
        })
        .collect();
    let vol = 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
    let mut e = Estimate::from_samples(&samples, seed);
    e.mean *= vol;
    e.stderr *= vol;
    let problem = DirichletProblem::from_grid_potential(zeta, radius, eigen_grid_n)?.with_ball_mask([0.0; 3], radius);
    let lambda = spectral::principal_eigenvalue(&problem)?.lambda;
    let bound = (2.0 * std::f64::consts::PI * t0).powf(1.5) * (-t0 * k).exp() * ((t + t0) * lambda).exp();
    Ok(ConsistencyRecord { mc_integral: e, bound, lambda, sup: k })
}

