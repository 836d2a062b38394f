//! Oracles computed independently of the library code paths.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `P(Poisson(v) >= k)` by direct summation of the head.
pub fn poisson_tail(v: f64, k: u64) -> f64 {
    let mut term = (-v).exp();
    let mut head = 0.0;
    for j in 0..k {
        if j > 0 {
            term *= v / j as f64;
        }
        head += term;
    }
    1.0 - head
}

pub fn poisson_pmf(v: f64, k: u64) -> f64 {
    let mut f = 1.0;
    for j in 1..=k {
        f *= j as f64;
    }
    (-v).exp() * v.powi(k as i32) / f
}

/// `P_0(sup_{s<=t} |B_s| < R)` from the Dirichlet heat kernel of the ball.
pub fn ball_survival(r: f64, t: f64) -> f64 {
    (1..200)
        .map(|n| {
            let n = n as f64;
            let sign = if n as i64 % 2 == 1 { 2.0 } else { -2.0 };
            sign * (-n * n * PI * PI * t / (2.0 * r * r)).exp()
        })
        .sum()
}

/// `P_0(sup_{s<=t} |B_s|_inf < h)` as the cube of the interval series.
pub fn cube_survival(h: f64, t: f64) -> f64 {
    let one: f64 = (0..200)
        .map(|j| {
            let n = (2 * j + 1) as f64;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * 4.0 / (n * PI) * (-n * n * PI * PI * t / (8.0 * h * h)).exp()
        })
        .sum();
    one.powi(3)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// The smoothstep cutoff written out independently.
pub fn cutoff(l: f64) -> f64 {
    if l <= 1.0 {
        1.0
    } else if l >= 3.0 {
        0.0
    } else {
        let x = (l - 1.0) / 2.0;
        1.0 - 3.0 * x * x + 2.0 * x * x * x
    }
}

/// Largest eigenvalue of `1/2 Delta_h + diag(zeta)` by dense decomposition.
pub fn dense_top_eigenvalue(n: usize, half_width: f64, zeta: &[f64]) -> f64 {
    let h = 2.0 * half_width / (n + 1) as f64;
    let c = 0.5 / (h * h);
    let m = n * n * n;
    let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = idx(i, j, k);
                a[(p, p)] = zeta[p] - 6.0 * c;
                let mut nb = Vec::new();
                if i > 0 { nb.push(idx(i - 1, j, k)); }
                if i + 1 < n { nb.push(idx(i + 1, j, k)); }
                if j > 0 { nb.push(idx(i, j - 1, k)); }
                if j + 1 < n { nb.push(idx(i, j + 1, k)); }
                if k > 0 { nb.push(idx(i, j, k - 1)); }
                if k + 1 < n { nb.push(idx(i, j, k + 1)); }
                for q in nb {
                    a[(p, q)] = c;
                }
            }
        }
    }
    let e = nalgebra::SymmetricEigen::new(a);
    e.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Exact `int g_M^2 / |x|^2` and `int |grad g_M|^2` over R^3.
pub fn gm_integrals(log_m: f64) -> (f64, f64) {
    (4.0 * PI * (4.0 / 3.0 + 2.0 * log_m), 4.0 * PI * (7.0 / 3.0 + 0.5 * log_m))
}

/// Binomial standard error at probability `p`.
pub fn binom_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> (f64, f64) {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x { i += 1; }
        while j < m && b[j] <= x { j += 1; }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lam = (en + 0.12 + 0.11 / en) * d;
    let p: f64 = (1..100)
        .map(|k| {
            let k = k as f64;
            let s = if k as i64 % 2 == 1 { 2.0 } else { -2.0 };
            s * (-2.0 * k * k * lam * lam).exp()
        })
        .sum();
    (d, p.clamp(0.0, 1.0))
}
