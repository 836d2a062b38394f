use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::poisson_field::{sample_field_stream, PointSource, PoissonField};
use crate::quadrature::integrate;
use crate::rng;

/// Smoothstep cutoff: 1 on [0,1], 0 on [3,inf), `1 - s((l-1)/2)` between.
pub fn alpha(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        1.0
    } else if lambda >= 3.0 {
        0.0
    } else {
        let x = 0.5 * (lambda - 1.0);
        1.0 - x * x * (3.0 - 2.0 * x)
    }
}

pub fn alpha_prime(lambda: f64) -> f64 {
    if lambda <= 1.0 || lambda >= 3.0 {
        0.0
    } else {
        let x = 0.5 * (lambda - 1.0);
        -3.0 * x * (1.0 - x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    Drop,
    GaussianSurrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationScheme {
    pub a: f64,
    pub epsilon: f64,
    pub p: f64,
    pub tail_radius: f64,
    pub tail_policy: TailPolicy,
}

impl TruncationScheme {
    /// Critical exponent, window radius `3a`, far field dropped.
    pub fn new(a: f64, epsilon: f64) -> Result<Self> {
        let s = TruncationScheme { a, epsilon, p: 2.0, tail_radius: 3.0 * a, tail_policy: TailPolicy::Drop };
        s.validate()?;
        Ok(s)
    }

    pub fn with_tail_radius(mut self, rho: f64) -> Result<Self> {
        self.tail_radius = rho;
        self.validate()?;
        Ok(self)
    }

    pub fn with_policy(mut self, policy: TailPolicy) -> Self {
        self.tail_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return config(format!("a must be positive, got {}", self.a));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return config(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.p > 1.5 && self.p < 3.0) {
            return config(format!("p must lie in (3/2, 3), got {}", self.p));
        }
        if !(self.tail_radius >= 3.0 * self.a) {
            return config(format!("tail_radius {} is below 3a = {}", self.tail_radius, 3.0 * self.a));
        }
        Ok(())
    }
}

/// `(1 - alpha(|x|/a)) / |x|^p`.
pub fn kernel_la(x: Vec3, scheme: &TruncationScheme) -> f64 {
    kernel_radial(crate::geometry::norm(x), scheme.a, scheme.p)
}

#[inline]
fn kernel_radial(r: f64, a: f64, p: f64) -> f64 {
    if r <= a {
        0.0
    } else if r >= 3.0 * a {
        r.powf(-p)
    } else {
        (1.0 - alpha(r / a)) * r.powf(-p)
    }
}

#[inline]
fn kernel_d2(d2: f64, a: f64, p: f64) -> f64 {
    if p == 2.0 {
        let a2 = a * a;
        if d2 <= a2 {
            0.0
        } else if d2 >= 9.0 * a2 {
            1.0 / d2
        } else {
            (1.0 - alpha(d2.sqrt() / a)) / d2
        }
    } else {
        kernel_radial(d2.sqrt(), a, p)
    }
}

#[inline]
fn singular_d2(d2: f64, a: f64, p: f64) -> f64 {
    if d2 == 0.0 {
        return f64::INFINITY;
    }
    let al = alpha(d2.sqrt() / a);
    if al == 0.0 {
        0.0
    } else if p == 2.0 {
        al / d2
    } else {
        al * d2.sqrt().powf(-p)
    }
}

fn radial_integral<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, breaks: &[f64]) -> Result<f64> {
    Ok(integrate(f, lo, hi, breaks, 1e-10, 0.0)?.value)
}

/// `C_a = int alpha(|x|/a) / |x|^2 dx`.
pub fn compensator_ca(a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return domain(format!("a must be positive, got {a}"));
    }
    compensator_p(a, 2.0)
}

fn compensator_p(a: f64, p: f64) -> Result<f64> {
    radial_integral(|r| 4.0 * PI * alpha(r / a) * r.powf(2.0 - p), 0.0, 3.0 * a, &[a])
}

/// Result of a windowed evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialValue {
    pub value: f64,
    /// Standard deviation of the far field beyond the window radius.
    pub tail_std: f64,
}

impl PotentialValue {
    /// Apply the scheme's tail policy; `Drop` returns `value` unchanged.
    pub fn with_tail(&self, policy: TailPolicy, rng: &mut rng::Rng) -> f64 {
        match policy {
            TailPolicy::Drop => self.value,
            TailPolicy::GaussianSurrogate => {
                let z: f64 = rng.sample(StandardNormal);
                self.value + self.tail_std * z
            }
        }
    }
}

/// A scheme with its deterministic constants precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator {
    pub scheme: TruncationScheme,
    /// `int_{|y| <= rho} L_a(y) dy`.
    pub window_compensator: f64,
    pub ca: f64,
    pub tail_std: f64,
}

impl Evaluator {
    pub fn new(scheme: &TruncationScheme) -> Result<Self> {
        scheme.validate()?;
        let (a, p, rho) = (scheme.a, scheme.p, scheme.tail_radius);
        let window_compensator =
            radial_integral(|r| 4.0 * PI * kernel_radial(r, a, p) * r * r, a, rho, &[3.0 * a])?;
        let ca = compensator_p(a, p)?;
        // int_{|y| > rho} |y|^{-2p} dy = 4 pi rho^{3-2p} / (2p - 3)
        let tail_var = scheme.epsilon * 4.0 * PI * rho.powf(3.0 - 2.0 * p) / (2.0 * p - 3.0);
        Ok(Evaluator { scheme: *scheme, window_compensator, ca, tail_std: tail_var.sqrt() })
    }

    fn check<S: PointSource>(&self, field: &S, x: Vec3, r: f64) -> Result<()> {
        if field.window().contains_ball(x, r) {
            Ok(())
        } else {
            Err(Error::OutOfWindow { what: format!("evaluation ball at {x:?} of radius {r}") })
        }
    }

    pub fn truncated<S: PointSource>(&self, field: &S, x: Vec3) -> Result<PotentialValue> {
        let s = &self.scheme;
        self.check(field, x, s.tail_radius)?;
        let mut sum = 0.0;
        field.for_each_within(x, s.tail_radius, |_, d2| sum += kernel_d2(d2, s.a, s.p));
        Ok(PotentialValue { value: sum - s.epsilon * self.window_compensator, tail_std: self.tail_std })
    }

    pub fn singular<S: PointSource>(&self, field: &S, x: Vec3) -> Result<f64> {
        let s = &self.scheme;
        self.check(field, x, 3.0 * s.a)?;
        let mut sum = 0.0;
        field.for_each_within(x, 3.0 * s.a, |_, d2| sum += singular_d2(d2, s.a, s.p));
        Ok(sum)
    }

    pub fn renormalized<S: PointSource>(&self, field: &S, x: Vec3) -> Result<PotentialValue> {
        let t = self.truncated(field, x)?;
        let v = self.singular(field, x)?;
        Ok(PotentialValue { value: t.value + v - self.scheme.epsilon * self.ca, tail_std: t.tail_std })
    }

    /// Renormalized value in one pass over the window; agrees with
    /// [`Evaluator::renormalized`] up to summation order.
    pub fn renormalized_fast<S: PointSource>(&self, field: &S, x: Vec3) -> Result<f64> {
        let s = &self.scheme;
        self.check(field, x, s.tail_radius)?;
        let mut sum = 0.0;
        if s.p == 2.0 {
            field.for_each_within(x, s.tail_radius, |_, d2| sum += 1.0 / d2);
        } else {
            field.for_each_within(x, s.tail_radius, |_, d2| sum += d2.sqrt().powf(-s.p));
        }
        Ok(sum - s.epsilon * (self.window_compensator + self.ca))
    }
}

pub fn eval_singular_local<S: PointSource>(field: &S, x: Vec3, scheme: &TruncationScheme) -> Result<f64> {
    Evaluator::new(scheme)?.singular(field, x)
}

pub fn eval_truncated_field<S: PointSource>(field: &S, x: Vec3, scheme: &TruncationScheme) -> Result<PotentialValue> {
    Evaluator::new(scheme)?.truncated(field, x)
}

pub fn eval_renormalized<S: PointSource>(field: &S, x: Vec3, scheme: &TruncationScheme) -> Result<PotentialValue> {
    Evaluator::new(scheme)?.renormalized(field, x)
}

/// `e^l - 1 - l`.
pub fn psi(l: f64) -> f64 {
    if l.abs() < 1e-2 {
        let l2 = l * l;
        l2 * (0.5 + l * (1.0 / 6.0 + l * (1.0 / 24.0 + l * (1.0 / 120.0 + l * (1.0 / 720.0 + l / 5040.0)))))
    } else {
        l.exp_m1() - l
    }
}

/// `ln E exp{theta V_{a,eps}(0)} = eps int Psi(theta L_a(y)) dy` over all space.
pub fn truncated_log_mgf(theta: f64, scheme: &TruncationScheme) -> Result<f64> {
    scheme.validate()?;
    if theta == 0.0 {
        return Ok(0.0);
    }
    let (a, p) = (scheme.a, scheme.p);
    let q = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> Result<f64> {
        integrate(f, lo, hi, &[], 0.0, 1e-10).map(|q| q.value).map_err(|e| match e {
            Error::Numerical { msg, residual } => Error::Numerical { msg: format!("mgf quadrature: {msg}"), residual },
            other => other,
        })
    };
    let near = q(&|r: f64| psi(theta * kernel_radial(r, a, p)) * r * r, a, 3.0 * a)?;
    // r = 3a/u maps [3a, inf) onto (0, 1]
    let b = 3.0 * a;
    let far = q(
        &|u: f64| {
            if u == 0.0 {
                0.0
            } else {
                let r = b / u;
                psi(theta * r.powf(-p)) * r * r * b / (u * u)
            }
        },
        0.0,
        1.0,
    )?;
    Ok(scheme.epsilon * 4.0 * PI * (near + far))
}

pub fn truncated_mgf_exact(theta: f64, scheme: &TruncationScheme) -> Result<f64> {
    Ok(truncated_log_mgf(theta, scheme)?.exp())
}

/// One replicate of the decay probe: `(R, sup|V_{a,1}| / log R)` over
/// `ceil(density |B(0,R)|)` uniform points of `B(0,R)`, for every R.
pub fn decay_probe_on_field<S: PointSource>(
    field: &S,
    ev: &Evaluator,
    r_list: &[f64],
    density: f64,
    rng: &mut rng::Rng,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let m = (density * 4.0 / 3.0 * PI * r.powi(3)).ceil().max(1.0) as usize;
        let mut sup = 0f64;
        for _ in 0..m {
            let x = uniform_in_ball(r, rng);
            sup = sup.max(ev.truncated(field, x)?.value.abs());
        }
        out.push((r, sup / r.ln()));
    }
    Ok(out)
}

pub(crate) fn uniform_in_ball(r: f64, rng: &mut rng::Rng) -> Vec3 {
    loop {
        let u: [f64; 3] = rng.gen();
        let x = [(2.0 * u[0] - 1.0) * r, (2.0 * u[1] - 1.0) * r, (2.0 * u[2] - 1.0) * r];
        if x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= r * r {
            return x;
        }
    }
}

/// Ratios `sup_{|x| <= R} |V_{a,1}(x)| / log R` for each replicate field.
///
/// The sup is taken over uniform samples of fixed density `x_density`.
pub fn sup_field_decay_probe(
    a: f64,
    r_list: &[f64],
    replicates: u64,
    seed: u64,
    x_density: f64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    if r_list.windows(2).any(|w| w[1] <= w[0]) || r_list.first().map_or(true, |&r| r <= 1.0) {
        return domain("R list must be increasing and start above 1");
    }
    let scheme = TruncationScheme::new(a, 1.0)?;
    let ev = Evaluator::new(&scheme)?;
    let half = r_list[r_list.len() - 1] + scheme.tail_radius;
    let window = Aabb::cube([0.0; 3], half)?;
    (0..replicates)
        .into_par_iter()
        .map(|i| {
            let field = sample_field_stream(window, 1.0, seed, i)?;
            let index = field.index(scheme.tail_radius);
            let mut rng = rng::stream(rng::derive_seed(seed, 1), i);
            decay_probe_on_field(&index, &ev, r_list, x_density, &mut rng)
        })
        .collect()
}

/// Empty field helper used by probes and tests.
pub fn empty_field(window: Aabb) -> PoissonField {
    PoissonField { window, intensity: 0.0, seed: 0, stream: 0, points: Vec::new() }
}
