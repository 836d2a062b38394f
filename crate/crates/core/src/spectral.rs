use serde::{Deserialize, Serialize};

use crate::asymptotics::SlowlyVaryingSpec;
use crate::error::{config, domain, Error, Result};
use crate::geometry::Vec3;
use crate::poisson_field::PoissonField;
use crate::potential::{Evaluator, TruncationScheme};

/// Node values on the closed grid `-L + i h`, `i = 0..=m`, interpolated
/// trilinearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPotential {
    half_width: f64,
    m: usize,
    values: Vec<f64>,
}

impl GridPotential {
    pub fn from_fn<F: Fn(Vec3) -> f64>(half_width: f64, m: usize, f: F) -> Result<Self> {
        if !(half_width > 0.0) || m < 1 {
            return domain("grid potential needs a positive half width and at least one cell");
        }
        let h = 2.0 * half_width / m as f64;
        let mut values = Vec::with_capacity((m + 1).pow(3));
        for i in 0..=m {
            for j in 0..=m {
                for k in 0..=m {
                    let x = [-half_width + i as f64 * h, -half_width + j as f64 * h, -half_width + k as f64 * h];
                    values.push(f(x));
                }
            }
        }
        Ok(GridPotential { half_width, m, values })
    }

    pub fn constant(half_width: f64, c: f64) -> Self {
        GridPotential { half_width, m: 1, values: vec![c; 8] }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest node value over cells that can meet `B(0, r)`.
    pub fn sup_on_ball(&self, r: f64) -> f64 {
        let h = 2.0 * self.half_width / self.m as f64;
        let reach = r + h * 3f64.sqrt();
        let mut best = f64::NEG_INFINITY;
        let n1 = self.m + 1;
        for (idx, &v) in self.values.iter().enumerate() {
            let (i, j, k) = (idx / (n1 * n1), (idx / n1) % n1, idx % n1);
            let x = [i, j, k].map(|c| -self.half_width + c as f64 * h);
            if crate::geometry::norm(x) <= reach {
                best = best.max(v);
            }
        }
        best
    }

    pub fn eval(&self, x: Vec3) -> f64 {
        let m = self.m;
        let h = 2.0 * self.half_width / m as f64;
        let mut c = [0usize; 3];
        let mut f = [0.0; 3];
        for d in 0..3 {
            let u = ((x[d] + self.half_width) / h).clamp(0.0, m as f64);
            let i = (u.floor() as usize).min(m - 1);
            c[d] = i;
            f[d] = u - i as f64;
        }
        let n1 = m + 1;
        let at = |i: usize, j: usize, k: usize| self.values[(i * n1 + j) * n1 + k];
        let mut s = 0.0;
        for (di, wi) in [(0, 1.0 - f[0]), (1, f[0])] {
            for (dj, wj) in [(0, 1.0 - f[1]), (1, f[1])] {
                for (dk, wk) in [(0, 1.0 - f[2]), (1, f[2])] {
                    s += wi * wj * wk * at(c[0] + di, c[1] + dj, c[2] + dk);
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallMask {
    pub center: Vec3,
    pub radius: f64,
}

/// `1/2 Delta_h + zeta` on the interior nodes of `[-R, R]^3`, with zero
/// boundary values; `potential` is row-major with index `(i n + j) n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletProblem {
    pub box_half_width: f64,
    pub grid_n: usize,
    pub potential: Vec<f64>,
    pub mask: Option<BallMask>,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl DirichletProblem {
    pub fn from_fn<F: FnMut(Vec3) -> f64>(half_width: f64, grid_n: usize, mut f: F) -> Result<Self> {
        if grid_n < 3 {
            return config(format!("grid_n must be at least 3, got {grid_n}"));
        }
        if !(half_width > 0.0) {
            return config("box half width must be positive");
        }
        let mut potential = Vec::with_capacity(grid_n.pow(3));
        for i in 0..grid_n {
            for j in 0..grid_n {
                for k in 0..grid_n {
                    potential.push(f(node(half_width, grid_n, [i, j, k])));
                }
            }
        }
        Ok(DirichletProblem { box_half_width: half_width, grid_n, potential, mask: None, solver_tol: 1e-8, max_iter: 2000 })
    }

    pub fn from_grid_potential(zeta: &GridPotential, half_width: f64, grid_n: usize) -> Result<Self> {
        Self::from_fn(half_width, grid_n, |x| zeta.eval(x))
    }

    pub fn with_ball_mask(mut self, center: Vec3, radius: f64) -> Self {
        self.mask = Some(BallMask { center, radius });
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.solver_tol = tol;
        self
    }

    pub fn h(&self) -> f64 {
        2.0 * self.box_half_width / (self.grid_n + 1) as f64
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        node(self.box_half_width, self.grid_n, [i, j, k])
    }

    pub fn is_active(&self, x: Vec3) -> bool {
        match self.mask {
            None => true,
            Some(m) => crate::geometry::dist2(x, m.center) < m.radius * m.radius,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_n < 3 {
            return config(format!("grid_n must be at least 3, got {}", self.grid_n));
        }
        if self.potential.len() != self.grid_n.pow(3) {
            return config("potential length does not match grid_n^3");
        }
        if let Some(i) = self.potential.iter().position(|v| !v.is_finite()) {
            return domain(format!("potential is not finite at node {i}; clamp before assembly"));
        }
        if !(self.solver_tol > 0.0) {
            return config("solver_tol must be positive");
        }
        Ok(())
    }
}

fn node(r: f64, n: usize, ijk: [usize; 3]) -> Vec3 {
    let h = 2.0 * r / (n + 1) as f64;
    ijk.map(|i| -r + (i + 1) as f64 * h)
}

/// Matrix-free operator on the zero-padded `(n+2)^3` layout.
struct Operator {
    n: usize,
    zeta: Vec<f64>,
    active: Vec<f64>,
    c: f64,
}

impl Operator {
    fn new(p: &DirichletProblem) -> Self {
        let n = p.grid_n;
        let np = n + 2;
        let mut zeta = vec![0.0; np * np * np];
        let mut active = vec![0.0; np * np * np];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if p.is_active(p.node(i, j, k)) {
                        let c = ((i + 1) * np + j + 1) * np + k + 1;
                        zeta[c] = p.potential[(i * n + j) * n + k];
                        active[c] = 1.0;
                    }
                }
            }
        }
        let h = p.h();
        Operator { n, zeta, active, c: 0.5 / (h * h) }
    }

    /// `out = (shift I - T) v` when `shift` is `Some`, else `out = T v`.
    fn apply(&self, v: &[f64], out: &mut [f64], shift: Option<f64>) {
        let n = self.n;
        let np = n + 2;
        let (sy, sx) = (np, np * np);
        for i in 1..=n {
            for j in 1..=n {
                let row = (i * np + j) * np;
                for c in row + 1..=row + n {
                    let lap = v[c - 1] + v[c + 1] + v[c - sy] + v[c + sy] + v[c - sx] + v[c + sx] - 6.0 * v[c];
                    let tv = self.zeta[c] * v[c] + self.c * lap;
                    out[c] = self.active[c] * match shift {
                        Some(s) => s * v[c] - tv,
                        None => tv,
                    };
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for `(shift I - T) y = b`, warm-started at `y`.
fn cg(op: &Operator, shift: f64, b: &[f64], y: &mut [f64], rel_tol: f64, max_iter: usize) -> (usize, f64) {
    let len = b.len();
    let mut ap = vec![0.0; len];
    op.apply(y, &mut ap, Some(shift));
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = rel_tol * rel_tol * dot(b, b);
    let mut it = 0;
    while rr > target && it < max_iter {
        op.apply(&p, &mut ap, Some(shift));
        let alpha = rr / dot(&p, &ap);
        for c in 0..len {
            y[c] += alpha * p[c];
            r[c] -= alpha * ap[c];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for c in 0..len {
            p[c] = r[c] + beta * p[c];
        }
        rr = rr_new;
        it += 1;
    }
    (it, (rr / dot(b, b).max(f64::MIN_POSITIVE)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub lambda: f64,
    /// `|h^3 sum g^2 - 1|` for the returned eigenvector.
    pub eigenvector_norm_check: f64,
    pub iterations: usize,
    pub residual: f64,
    pub shift: f64,
    /// Unit discrete-L2 eigenvector, row-major over interior nodes.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

/// Largest eigenvalue of the free discrete operator `1/2 Delta_h` on the box.
pub fn free_box_eigenvalue(half_width: f64, grid_n: usize) -> f64 {
    let h = 2.0 * half_width / (grid_n + 1) as f64;
    let s = (std::f64::consts::PI * h / (4.0 * half_width)).sin();
    -6.0 * s * s / (h * h)
}

/// Principal eigenvalue by shifted inverse iteration.
pub fn principal_eigenvalue(problem: &DirichletProblem) -> Result<EigenResult> {
    problem.validate()?;
    let op = Operator::new(problem);
    let n = problem.grid_n;
    let np = n + 2;
    let len = np * np * np;
    if op.active.iter().all(|&a| a == 0.0) {
        return config("mask leaves no active nodes");
    }
    let zmax = op.zeta.iter().zip(&op.active).filter(|p| *p.1 > 0.0).map(|p| *p.0).fold(f64::NEG_INFINITY, f64::max);
    let free = free_box_eigenvalue(problem.box_half_width, n);
    // sigma - lambda_1 >= margin by comparison with zeta <= zmax and interlacing
    let margin = (0.05 * free.abs()).max(1e-3);
    let shift = zmax + free + margin;

    let mut x = op.active.clone();
    let nx = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    let mut tx = vec![0.0; len];
    op.apply(&x, &mut tx, None);
    let mut rho = dot(&x, &tx);
    let mut y = vec![0.0; len];
    let mut residual = f64::INFINITY;
    let cg_cap = 20 * n * n;
    for it in 1..=problem.max_iter {
        let gap = (shift - rho).max(margin);
        let eta = (0.1 * problem.solver_tol / gap.max(1.0)).max(1e-14);
        for c in 0..len {
            y[c] = x[c] / gap;
        }
        let (_, cg_res) = cg(&op, shift, &x, &mut y, eta, cg_cap);
        if !cg_res.is_finite() {
            return Err(Error::Numerical { msg: "linear solve diverged".into(), residual: cg_res });
        }
        let ny = dot(&y, &y).sqrt();
        for c in 0..len {
            x[c] = y[c] / ny;
        }
        op.apply(&x, &mut tx, None);
        rho = dot(&x, &tx);
        residual = tx.iter().zip(&x).map(|(t, v)| (t - rho * v).powi(2)).sum::<f64>().sqrt();
        if residual < problem.solver_tol {
            let h3 = problem.h().powi(3);
            let scale = 1.0 / h3.sqrt();
            let mut g = Vec::with_capacity(n * n * n);
            for i in 1..=n {
                for j in 1..=n {
                    let row = (i * np + j) * np;
                    g.extend(x[row + 1..=row + n].iter().map(|v| v * scale));
                }
            }
            let norm_check = (h3 * dot(&g, &g) - 1.0).abs();
            return Ok(EigenResult { lambda: rho, eigenvector_norm_check: norm_check, iterations: it, residual, shift, eigenvector: g });
        }
    }
    Err(Error::Numerical {
        msg: format!("inverse iteration did not converge in {} iterations", problem.max_iter),
        residual,
    })
}

/// `int zeta g^2 - 1/2 int |grad g|^2` with forward differences, zero
/// outside the interior nodes.
pub fn rayleigh_quotient(problem: &DirichletProblem, g: &[f64]) -> f64 {
    let n = problem.grid_n;
    let h = problem.h();
    let at = |i: isize, j: isize, k: isize| -> f64 {
        if i < 0 || j < 0 || k < 0 || i >= n as isize || j >= n as isize || k >= n as isize {
            0.0
        } else {
            g[(i as usize * n + j as usize) * n + k as usize]
        }
    };
    let mut pot = 0.0;
    let mut grad = 0.0;
    for i in -1..n as isize {
        for j in -1..n as isize {
            for k in -1..n as isize {
                let v = at(i, j, k);
                if i >= 0 && j >= 0 && k >= 0 {
                    pot += problem.potential[(i as usize * n + j as usize) * n + k as usize] * v * v;
                }
                for d in [at(i + 1, j, k), at(i, j + 1, k), at(i, j, k + 1)] {
                    grad += (d - v).powi(2);
                }
            }
        }
    }
    let h3 = h.powi(3);
    pot * h3 - 0.5 * grad / (h * h) * h3
}

/// Eigenvalue with nodes `clamp(theta V(x), -clamp, clamp)` on `Q_R`.
pub fn eigenvalue_of_field(
    field: &PoissonField,
    theta: f64,
    radius: f64,
    grid_n: usize,
    scheme: &TruncationScheme,
    clamp: f64,
) -> Result<f64> {
    if !(clamp > 0.0) {
        return config("clamp must be positive");
    }
    let ev = Evaluator::new(scheme)?;
    let index = field.index(scheme.tail_radius);
    let mut err = None;
    let problem = DirichletProblem::from_fn(radius, grid_n, |x| match ev.renormalized_fast(&index, x) {
        Ok(v) => {
            let z = theta * v;
            if z.is_nan() {
                0.0
            } else {
                z.clamp(-clamp, clamp)
            }
        }
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(principal_eigenvalue(&problem)?.lambda)
}

fn check_scale_args(t: f64, k: u32) -> Result<()> {
    if k < 2 {
        return domain(format!("k must be at least 2, got {k}"));
    }
    if !(t > std::f64::consts::E) {
        return domain(format!("t must exceed e, got {t}"));
    }
    Ok(())
}

fn scale(t: f64, k: u32, l: &SlowlyVaryingSpec, sign: f64) -> Result<f64> {
    check_scale_args(t, k)?;
    let lt = l.eval(t)?;
    Ok(if k == 2 {
        t.powi(3) * lt.powf(sign * 2.0 / 3.0)
    } else {
        let k = k as f64;
        t.powf(k / (k - 2.0)) * lt.powf(sign * 2.0 / (3.0 * (k - 2.0)))
    })
}

/// `t^{k/(k-2)} l(t)^{2/(3(k-2))}`; `t^3 l(t)^{2/3}` when `k = 2`.
pub fn scale_r_k(t: f64, k: u32, l: &SlowlyVaryingSpec) -> Result<f64> {
    scale(t, k, l, 1.0)
}

/// `t^{k/(k-2)} l(t)^{-2/(3(k-2))}`; `t^3 l(t)^{-2/3}` when `k = 2`.
pub fn scale_s_k(t: f64, k: u32, l: &SlowlyVaryingSpec) -> Result<f64> {
    scale(t, k, l, -1.0)
}

/// Number of eigenvalues below `e` of the pencil `A - e W`, with `A`
/// symmetric tridiagonal (`diag`, `off`) and `W` positive diagonal.
pub fn sturm_count(diag: &[f64], off: &[f64], weight: &[f64], e: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        d = diag[i] - e * weight[i] - if i == 0 { 0.0 } else { b2 / d };
        if d == 0.0 {
            d = -f64::EPSILON * (diag[i].abs() + e.abs() * weight[i]).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Lowest generalized eigenvalue of `A v = e W v` by Sturm bisection.
pub fn lowest_generalized_eigenvalue(diag: &[f64], off: &[f64], weight: &[f64]) -> Result<f64> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n || weight.len() != n || weight.iter().any(|&w| !(w > 0.0)) {
        return config("tridiagonal pencil has inconsistent sizes or non-positive weights");
    }
    // Gershgorin on W^{-1/2} A W^{-1/2}
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut rad = 0.0;
        if i > 0 {
            rad += off[i - 1].abs() / (weight[i] * weight[i - 1]).sqrt();
        }
        if i + 1 < n {
            rad += off[i].abs() / (weight[i] * weight[i + 1]).sqrt();
        }
        let c = diag[i] / weight[i];
        lo = lo.min(c - rad);
        hi = hi.max(c + rad);
    }
    if sturm_count(diag, off, weight, hi) == 0 {
        hi = hi.abs().max(1.0) * 2.0 + hi;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if sturm_count(diag, off, weight, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(lo.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
