use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::format::f17;
use crate::geometry::{dist2, Aabb, Vec3};
use crate::rng;
use crate::stats::{self, Estimate};

/// A realized homogeneous Poisson configuration inside `window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonField {
    pub window: Aabb,
    pub intensity: f64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    pub points: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellShape {
    Ball,
    Cube,
}

pub fn sample_field(window: Aabb, intensity: f64, seed: u64) -> Result<PoissonField> {
    sample_field_stream(window, intensity, seed, 0)
}

/// As [`sample_field`], drawing from replicate stream `stream`.
pub fn sample_field_stream(window: Aabb, intensity: f64, seed: u64, stream: u64) -> Result<PoissonField> {
    let window = Aabb::new(window.lo, window.hi)?;
    if !(intensity >= 0.0) || !intensity.is_finite() {
        return domain(format!("intensity must be finite and non-negative, got {intensity}"));
    }
    let mut rng = rng::stream(seed, stream);
    let mean = intensity * window.volume();
    let count = poisson_draw(mean, &mut rng);
    let mut points = Vec::with_capacity(count as usize);
    let w = [
        window.hi[0] - window.lo[0],
        window.hi[1] - window.lo[1],
        window.hi[2] - window.lo[2],
    ];
    for _ in 0..count {
        let u: [f64; 3] = rng.gen();
        points.push([
            window.lo[0] + w[0] * u[0],
            window.lo[1] + w[1] * u[1],
            window.lo[2] + w[2] * u[2],
        ]);
    }
    Ok(PoissonField { window, intensity, seed, stream, points })
}

pub(crate) fn poisson_draw(mean: f64, rng: &mut rng::Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u64
}

impl PoissonField {
    /// A deterministic configuration, e.g. `m` points planted at the origin.
    pub fn planted(window: Aabb, points: Vec<Vec3>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !window.contains(**p)) {
            return domain(format!("planted point {p:?} outside window"));
        }
        Ok(PoissonField { window, intensity: 0.0, seed: 0, stream: 0, points })
    }

    pub fn index(&self, cell: f64) -> FieldIndex<'_> {
        FieldIndex::new(self, cell)
    }

    pub fn to_json(&self) -> String {
        let v = |x: Vec3| format!("[{},{},{}]", f17(x[0]), f17(x[1]), f17(x[2]));
        let pts: Vec<String> = self.points.iter().map(|&p| v(p)).collect();
        format!(
            "{{\"window\":{{\"lo\":{},\"hi\":{}}},\"intensity\":{},\"seed\":{},\"stream\":{},\"points\":[{}]}}",
            v(self.window.lo),
            v(self.window.hi),
            f17(self.intensity),
            self.seed,
            self.stream,
            pts.join(",")
        )
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: PoissonField = serde_json::from_str(s).map_err(|e| Error::Config(format!("field json: {e}")))?;
        Aabb::new(f.window.lo, f.window.hi)?;
        if f.points.iter().any(|p| !f.window.contains(*p)) {
            return domain("field json: point outside window");
        }
        Ok(f)
    }
}

/// Anything that can enumerate the points near a location.
pub trait PointSource: Sync {
    fn window(&self) -> &Aabb;
    /// Calls `f(y, |y - x|^2)` for every point `y` with `|y - x| <= r`.
    fn for_each_within<F: FnMut(Vec3, f64)>(&self, x: Vec3, r: f64, f: F);
}

impl PointSource for PoissonField {
    fn window(&self) -> &Aabb {
        &self.window
    }

    fn for_each_within<F: FnMut(Vec3, f64)>(&self, x: Vec3, r: f64, mut f: F) {
        let r2 = r * r;
        for &p in &self.points {
            let d2 = dist2(p, x);
            if d2 <= r2 {
                f(p, d2);
            }
        }
    }
}

/// Uniform-grid bucket index over a field.
pub struct FieldIndex<'a> {
    field: &'a PoissonField,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    points: Vec<Vec3>,
}

impl<'a> FieldIndex<'a> {
    pub fn new(field: &'a PoissonField, cell: f64) -> Self {
        let w = &field.window;
        let mut dims = [1usize; 3];
        for i in 0..3 {
            dims[i] = (((w.hi[i] - w.lo[i]) / cell).ceil() as usize).clamp(1, 512);
        }
        let span = [
            (w.hi[0] - w.lo[0]) / dims[0] as f64,
            (w.hi[1] - w.lo[1]) / dims[1] as f64,
            (w.hi[2] - w.lo[2]) / dims[2] as f64,
        ];
        let cell = span[0].max(span[1]).max(span[2]);
        let mut dims = [0usize; 3];
        for i in 0..3 {
            dims[i] = (((w.hi[i] - w.lo[i]) / cell).ceil() as usize).max(1);
        }
        let cell_of = |p: Vec3| -> usize {
            let mut c = [0usize; 3];
            for i in 0..3 {
                let k = ((p[i] - w.lo[i]) / cell) as usize;
                c[i] = k.min(dims[i] - 1);
            }
            (c[0] * dims[1] + c[1]) * dims[2] + c[2]
        };
        let ncell = dims[0] * dims[1] * dims[2];
        let mut starts = vec![0u32; ncell + 1];
        let ids: Vec<usize> = field.points.iter().map(|&p| cell_of(p)).collect();
        for &c in &ids {
            starts[c + 1] += 1;
        }
        for c in 0..ncell {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut points = vec![[0.0; 3]; field.points.len()];
        for (k, &c) in ids.iter().enumerate() {
            points[fill[c] as usize] = field.points[k];
            fill[c] += 1;
        }
        FieldIndex { field, cell, dims, starts, points }
    }

    pub fn field(&self) -> &PoissonField {
        self.field
    }
}

impl PointSource for FieldIndex<'_> {
    fn window(&self) -> &Aabb {
        &self.field.window
    }

    fn for_each_within<F: FnMut(Vec3, f64)>(&self, x: Vec3, r: f64, mut f: F) {
        let w = &self.field.window;
        let r2 = r * r;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for i in 0..3 {
            let a = ((x[i] - r - w.lo[i]) / self.cell).floor();
            let b = ((x[i] + r - w.lo[i]) / self.cell).floor();
            if b < 0.0 {
                return;
            }
            lo[i] = a.max(0.0) as usize;
            hi[i] = (b as usize).min(self.dims[i] - 1);
            if lo[i] > hi[i] {
                return;
            }
        }
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                let row = (i * self.dims[1] + j) * self.dims[2];
                let s = self.starts[row + lo[2]] as usize;
                let e = self.starts[row + hi[2] + 1] as usize;
                for &p in &self.points[s..e] {
                    let d2 = dist2(p, x);
                    if d2 <= r2 {
                        f(p, d2);
                    }
                }
            }
        }
    }
}

fn cell_box(center: Vec3, radius: f64) -> Aabb {
    Aabb {
        lo: [center[0] - radius, center[1] - radius, center[2] - radius],
        hi: [center[0] + radius, center[1] + radius, center[2] + radius],
    }
}

fn cell_inside(window: &Aabb, center: Vec3, radius: f64) -> Result<()> {
    if window.contains_ball(center, radius) {
        Ok(())
    } else {
        Err(Error::OutOfWindow { what: format!("cell at {center:?} with radius {radius}") })
    }
}

/// Exact number of points in the closed cell; `radius` is the half-width
/// for cubes.
pub fn count_in_cell<S: PointSource>(field: &S, center: Vec3, radius: f64, shape: CellShape) -> Result<u64> {
    cell_inside(field.window(), center, radius)?;
    Ok(count_unchecked(field, center, radius, shape))
}

fn count_unchecked<S: PointSource>(field: &S, center: Vec3, radius: f64, shape: CellShape) -> u64 {
    let mut n = 0;
    match shape {
        CellShape::Ball => field.for_each_within(center, radius, |_, _| n += 1),
        CellShape::Cube => {
            let b = cell_box(center, radius);
            field.for_each_within(center, radius * 3f64.sqrt() * (1.0 + 1e-12), |p, _| {
                if b.contains(p) {
                    n += 1
                }
            })
        }
    }
    n
}

/// Count points in a closed axis-aligned box inside the window.
pub fn count_in_box(field: &PoissonField, b: &Aabb) -> Result<u64> {
    if !field.window.contains_box(b) {
        return Err(Error::OutOfWindow { what: format!("box {b:?}") });
    }
    Ok(field.points.iter().filter(|p| b.contains(**p)).count() as u64)
}

/// Lattice `spacing * Z^3` restricted to `|z| <= region_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub spacing: f64,
    pub cell_radius: f64,
    pub region_radius: f64,
    pub cell_shape: CellShape,
}

impl LatticeSpec {
    pub fn new(spacing: f64, cell_radius: f64, region_radius: f64, cell_shape: CellShape) -> Result<Self> {
        if !(spacing > 0.0 && cell_radius > 0.0 && region_radius > 0.0) {
            return domain("lattice spacing, cell radius and region radius must be positive");
        }
        Ok(LatticeSpec { spacing, cell_radius, region_radius, cell_shape })
    }

    pub fn disjoint(&self) -> bool {
        self.spacing > 2.0 * self.cell_radius
    }

    pub fn centers(&self) -> Vec<Vec3> {
        let m = (self.region_radius / self.spacing).floor() as i64;
        let r2 = self.region_radius * self.region_radius;
        let mut out = Vec::new();
        for i in -m..=m {
            for j in -m..=m {
                for k in -m..=m {
                    let z = [i as f64 * self.spacing, j as f64 * self.spacing, k as f64 * self.spacing];
                    if z[0] * z[0] + z[1] * z[1] + z[2] * z[2] <= r2 {
                        out.push(z);
                    }
                }
            }
        }
        out
    }

    /// Number of centers, counted without materializing them.
    pub fn center_count(&self) -> u64 {
        let q = self.region_radius / self.spacing;
        let m = q.floor() as i64;
        let q2 = q * q;
        let mut n = 0u64;
        for i in -m..=m {
            for j in -m..=m {
                let rest = q2 - (i * i + j * j) as f64;
                if rest < 0.0 {
                    continue;
                }
                let mut kmax = rest.sqrt().floor() as i64;
                while ((kmax + 1) * (kmax + 1)) as f64 <= rest {
                    kmax += 1;
                }
                while kmax >= 0 && (kmax * kmax) as f64 > rest {
                    kmax -= 1;
                }
                if kmax >= 0 {
                    n += 2 * kmax as u64 + 1;
                }
            }
        }
        n
    }

    pub fn cell_volume(&self) -> f64 {
        match self.cell_shape {
            CellShape::Ball => 4.0 / 3.0 * std::f64::consts::PI * self.cell_radius.powi(3),
            CellShape::Cube => (2.0 * self.cell_radius).powi(3),
        }
    }
}

/// Largest cell count over the lattice.
pub fn max_count_over_lattice(field: &PoissonField, lattice: &LatticeSpec) -> Result<u64> {
    let centers = lattice.centers();
    for &c in &centers {
        cell_inside(&field.window, c, lattice.cell_radius)?;
    }
    let index = field.index(lattice.cell_radius.max(lattice.spacing * 0.5));
    Ok(centers
        .iter()
        .map(|&c| count_unchecked(&index, c, lattice.cell_radius, lattice.cell_shape))
        .max()
        .unwrap_or(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "le")]
    AtMost,
    #[serde(rename = "ge")]
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub joint: Estimate,
    pub product: f64,
}

impl AssociationRecord {
    /// The lower-bound contract `joint + 3 stderr >= product`.
    pub fn holds(&self) -> bool {
        self.joint.mean + 3.0 * self.joint.stderr >= self.product
    }
}

fn marginal(mean: f64, c: f64, dir: Direction) -> f64 {
    match dir {
        Direction::AtMost => {
            if c < 0.0 {
                0.0
            } else {
                stats::poisson_cdf(mean, c.floor() as u64)
            }
        }
        Direction::AtLeast => stats::poisson_sf(mean, c.max(0.0).ceil() as u64),
    }
}

/// Empirical joint probability that every cell count satisfies its
/// threshold, against the product of exact marginals.
pub fn check_association(
    window: Aabb,
    intensity: f64,
    cells: &[Aabb],
    thresholds: &[f64],
    direction: Direction,
    replicates: u64,
    seed: u64,
) -> Result<AssociationRecord> {
    if replicates < 100 {
        return config(format!("replicates = {replicates} is below the minimum of 100"));
    }
    if cells.len() != thresholds.len() || cells.is_empty() {
        return config("cells and thresholds must be non-empty and of equal length");
    }
    for c in cells {
        if !window.contains_box(c) {
            return Err(Error::OutOfWindow { what: format!("cell {c:?}") });
        }
    }
    Aabb::new(window.lo, window.hi)?;
    if !(intensity >= 0.0) {
        return domain("intensity must be non-negative");
    }
    let hit: Vec<bool> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let f = sample_field_stream(window, intensity, seed, i).expect("validated window");
            let mut counts = vec![0u64; cells.len()];
            for p in &f.points {
                for (k, c) in cells.iter().enumerate() {
                    if c.contains(*p) {
                        counts[k] += 1;
                    }
                }
            }
            counts.iter().zip(thresholds).all(|(&n, &c)| match direction {
                Direction::AtMost => n as f64 <= c,
                Direction::AtLeast => n as f64 >= c,
            })
        })
        .collect();
    let hits = hit.iter().filter(|&&h| h).count() as u64;
    let product = cells
        .iter()
        .zip(thresholds)
        .map(|(c, &t)| marginal(intensity * c.volume(), t, direction))
        .product();
    Ok(AssociationRecord { joint: stats::proportion(hits, replicates, seed), product })
}
