use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::geometry::{norm, Aabb, Domain, Vec3};
use crate::rng::{self, Rng};
use crate::stats::{proportion, Estimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub start: Vec3,
    pub dt: f64,
    pub t: f64,
    pub steps: usize,
    pub seed: u64,
    pub stream: u64,
    pub positions: Vec<Vec3>,
}

impl BrownianPath {
    /// Time of grid point `i`; the last step may be shorter than `dt`.
    pub fn time(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.t
        } else {
            i as f64 * self.dt
        }
    }

    pub fn end(&self) -> Vec3 {
        self.positions[self.steps]
    }
}

pub(crate) fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return domain(format!("dt must be positive, got {dt}"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("t must be positive, got {t}"));
    }
    if dt > t {
        return domain(format!("dt = {dt} exceeds the horizon t = {t}"));
    }
    Ok(((t / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize)
}

/// Widths of the steps of a horizon-`t` grid.
pub(crate) fn step_widths(t: f64, dt: f64, steps: usize) -> (f64, f64) {
    (dt, t - (steps - 1) as f64 * dt)
}

#[inline]
pub(crate) fn gaussian3(rng: &mut Rng, sd: f64) -> Vec3 {
    let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
    [sd * z[0], sd * z[1], sd * z[2]]
}

pub fn sample_path(start: Vec3, t: f64, dt: f64, seed: u64) -> Result<BrownianPath> {
    sample_path_stream(start, t, dt, seed, 0)
}

pub fn sample_path_stream(start: Vec3, t: f64, dt: f64, seed: u64, stream: u64) -> Result<BrownianPath> {
    let steps = step_count(t, dt)?;
    let mut rng = rng::stream(seed, stream);
    let positions = walk(start, t, dt, steps, &mut rng);
    Ok(BrownianPath { start, dt, t, steps, seed, stream, positions })
}

pub(crate) fn walk(start: Vec3, t: f64, dt: f64, steps: usize, rng: &mut Rng) -> Vec<Vec3> {
    let (w, last) = step_widths(t, dt, steps);
    let (sd, sd_last) = (w.sqrt(), last.sqrt());
    let mut pos = Vec::with_capacity(steps + 1);
    let mut x = start;
    pos.push(x);
    for i in 0..steps {
        let g = gaussian3(rng, if i + 1 == steps { sd_last } else { sd });
        x = [x[0] + g[0], x[1] + g[1], x[2] + g[2]];
        pos.push(x);
    }
    pos
}

/// `B_s - s B_1` on `[0, 1]`.
pub fn sample_bridge(dt: f64, seed: u64) -> Result<BrownianPath> {
    sample_bridge_stream(dt, seed, 0)
}

pub fn sample_bridge_stream(dt: f64, seed: u64, stream: u64) -> Result<BrownianPath> {
    let mut p = sample_path_stream([0.0; 3], 1.0, dt, seed, stream)?;
    let b1 = p.end();
    for i in 0..=p.steps {
        let s = p.time(i);
        let x = &mut p.positions[i];
        for k in 0..3 {
            x[k] -= s * b1[k];
        }
    }
    p.positions[p.steps] = [0.0; 3];
    Ok(p)
}

/// First grid time at which the path is outside the closed domain.
pub fn first_exit(path: &BrownianPath, domain: &Domain) -> Option<f64> {
    path.positions.iter().position(|&x| !domain.contains(x)).map(|i| path.time(i))
}

/// Dirichlet survival series `P_0(T_R > t)` in the ball, summed until the
/// terms fall below `1e-12`.
pub fn ball_survival_series(radius: f64, t: f64) -> f64 {
    let c = std::f64::consts::PI.powi(2) * t / (2.0 * radius * radius);
    let mut sum = 0.0;
    let mut n = 1.0f64;
    loop {
        let term = 2.0 * (-(n * n) * c).exp();
        let sign = if (n as u64) % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        n += 1.0;
    }
    sum
}

/// One-dimensional survival in `(-h, h)` from the origin; the cube value is
/// its cube.
pub fn interval_survival_series(half_width: f64, t: f64) -> f64 {
    let l = 2.0 * half_width;
    let mut sum = 0.0;
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        let term = 4.0 / (nf * std::f64::consts::PI)
            * (-(nf * std::f64::consts::PI / l).powi(2) * t / 2.0).exp();
        let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        n += 2;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitBoundRecord {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// `P(B_t in A and |B_t| <= R)`, the first factor of the right side.
    pub endpoint: Estimate,
    /// `P(max |B0_s| <= R / sqrt t)`, the bridge factor.
    pub bridge: Estimate,
}

impl ExitBoundRecord {
    pub fn combined_stderr(&self) -> f64 {
        self.lhs.stderr.hypot(self.rhs.stderr)
    }

    pub fn holds(&self) -> bool {
        self.lhs.mean + 3.0 * self.combined_stderr() >= self.rhs.mean
    }
}

/// Monte Carlo check of
/// `P(B_t in A, max|B_s| <= 2R) >= P(B_t in A, |B_t| <= R) P(max|B0_s| <= R/sqrt t)`.
pub fn exit_lower_bound_check(
    r: f64,
    t: f64,
    target: &Aabb,
    replicates: u64,
    seed: u64,
    dt: f64,
) -> Result<ExitBoundRecord> {
    if replicates < 1000 {
        return config(format!("replicates = {replicates} is below the minimum of 1000"));
    }
    if !(r > 0.0 && t > 0.0) {
        return domain("R and t must be positive");
    }
    let steps = step_count(t, dt)?;
    let bridge_steps = step_count(1.0, dt / t)?;
    let bridge_dt = dt / t;
    let lhs_seed = rng::derive_seed(seed, 1);
    let end_seed = rng::derive_seed(seed, 2);
    let bridge_seed = rng::derive_seed(seed, 3);

    let lhs_hits = (0..replicates)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = rng::stream(lhs_seed, i);
            let pos = walk([0.0; 3], t, dt, steps, &mut rng);
            target.contains(pos[steps]) && pos.iter().all(|&x| norm(x) <= 2.0 * r)
        })
        .count() as u64;

    let sd = t.sqrt();
    let end_hits = (0..replicates)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = rng::stream(end_seed, i);
            let x = gaussian3(&mut rng, sd);
            target.contains(x) && norm(x) <= r
        })
        .count() as u64;

    let level = r / t.sqrt();
    let bridge_hits = (0..replicates)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = rng::stream(bridge_seed, i);
            let pos = walk([0.0; 3], 1.0, bridge_dt, bridge_steps, &mut rng);
            let b1 = pos[bridge_steps];
            (0..=bridge_steps).all(|k| {
                let s = if k == bridge_steps { 1.0 } else { k as f64 * bridge_dt };
                let x = pos[k];
                norm([x[0] - s * b1[0], x[1] - s * b1[1], x[2] - s * b1[2]]) <= level
            })
        })
        .count() as u64;

    let lhs = proportion(lhs_hits, replicates, lhs_seed);
    let endpoint = proportion(end_hits, replicates, end_seed);
    let bridge = proportion(bridge_hits, replicates, bridge_seed);
    let mean = endpoint.mean * bridge.mean;
    let stderr = (bridge.mean * endpoint.stderr).hypot(endpoint.mean * bridge.stderr);
    let rhs = Estimate { mean, stderr, n: replicates, seed, overflow: false };
    Ok(ExitBoundRecord { lhs, rhs, endpoint, bridge })
}
