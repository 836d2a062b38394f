mod common;

use critlab::poisson_field::*;
use critlab::stats::exact_max_count_cdf;
use critlab::{Aabb, Error};
use proptest::prelude::*;

fn unit() -> Aabb {
    Aabb::new([0.0; 3], [1.0; 3]).unwrap()
}

#[test]
fn zero_intensity_is_empty() {
    assert!(sample_field(unit(), 0.0, 9).unwrap().points.is_empty());
}

#[test]
fn rejects_bad_inputs() {
    assert!(matches!(sample_field(unit(), -1.0, 0), Err(Error::Domain(_))));
    let flat = Aabb { lo: [0.0; 3], hi: [1.0, 0.0, 1.0] };
    assert!(matches!(sample_field(flat, 1.0, 0), Err(Error::Domain(_))));
}

#[test]
fn mean_count_matches_volume() {
    let w = Aabb::cube([0.0; 3], 1.0).unwrap();
    let n = 10_000;
    let total: usize = (0..n).map(|i| sample_field_stream(w, 1.0, 3, i).unwrap().points.len()).sum();
    let mean = total as f64 / n as f64;
    assert!((mean - 8.0).abs() < 3.0 * (8.0f64 / n as f64).sqrt(), "mean {mean}");
}

#[test]
fn single_point_counts() {
    let f = PoissonField::planted(Aabb::cube([0.0; 3], 1.0).unwrap(), vec![[0.0; 3]]).unwrap();
    assert_eq!(count_in_cell(&f, [0.0; 3], 0.1, CellShape::Ball).unwrap(), 1);
    assert_eq!(count_in_cell(&f, [0.5, 0.0, 0.0], 0.1, CellShape::Cube).unwrap(), 0);
    let e = PoissonField::planted(Aabb::cube([0.0; 3], 1.0).unwrap(), vec![]).unwrap();
    assert_eq!(count_in_cell(&e, [0.2; 3], 0.5, CellShape::Ball).unwrap(), 0);
}

#[test]
fn cell_outside_window_is_rejected() {
    let f = sample_field(unit(), 5.0, 1).unwrap();
    let err = count_in_cell(&f, [0.95, 0.5, 0.5], 0.1, CellShape::Ball).unwrap_err();
    assert!(matches!(err, Error::OutOfWindow { .. }));
}

#[test]
fn three_or_more_in_small_ball() {
    let w = Aabb::cube([0.0; 3], 4.0).unwrap();
    let rho: f64 = 0.5;
    let v = 4.0 / 3.0 * std::f64::consts::PI * rho.powi(3);
    let n = 10_000u64;
    let hits = (0..n)
        .filter(|&i| {
            let f = sample_field_stream(w, 1.0, 17, i).unwrap();
            count_in_cell(&f, [0.0; 3], rho, CellShape::Ball).unwrap() >= 3
        })
        .count();
    let p = common::poisson_tail(v, 3);
    let emp = hits as f64 / n as f64;
    assert!((emp - p).abs() <= 3.0 * common::binom_se(p, n), "emp {emp} exact {p}");
}

#[test]
fn max_count_cdf_values() {
    assert!((exact_max_count_cdf(1, 2f64.ln(), 0).unwrap() - 0.5).abs() < 1e-15);
    assert!((exact_max_count_cdf(7, 0.3, 60).unwrap() - 1.0).abs() < 1e-15);
    let brute = (common::poisson_pmf(0.1, 0) + common::poisson_pmf(0.1, 1)).powi(100);
    assert!((exact_max_count_cdf(100, 0.1, 1).unwrap() - brute).abs() < 1e-12);
    assert!(exact_max_count_cdf(3, 1.0, -1).is_err());
}

#[test]
fn lattice_max_matches_product_oracle() {
    // 27 disjoint balls of volume ~0.52
    let lat = LatticeSpec::new(1.5, 0.5, 1.5 * 3f64.sqrt() + 1e-9, CellShape::Ball).unwrap();
    assert!(lat.disjoint());
    let cells = lat.center_count();
    assert_eq!(cells, 27);
    assert_eq!(lat.centers().len() as u64, cells);
    let w = Aabb::cube([0.0; 3], 2.0).unwrap();
    let n = 20_000u64;
    let maxima: Vec<u64> = (0..n)
        .map(|i| max_count_over_lattice(&sample_field_stream(w, 1.0, 5, i).unwrap(), &lat).unwrap())
        .collect();
    for k in 0..4 {
        let exact = exact_max_count_cdf(cells, lat.cell_volume(), k).unwrap();
        let emp = maxima.iter().filter(|&&m| m <= k as u64).count() as f64 / n as f64;
        assert!((emp - exact).abs() <= 3.0 * common::binom_se(exact, n) + 1e-12, "k={k} emp {emp} exact {exact}");
    }
}

#[test]
fn one_point_on_lattice_center() {
    let lat = LatticeSpec::new(1.0, 0.25, 1.0, CellShape::Ball).unwrap();
    let f = PoissonField::planted(Aabb::cube([0.0; 3], 2.0).unwrap(), vec![[1.0, 0.0, 0.0]]).unwrap();
    assert_eq!(max_count_over_lattice(&f, &lat).unwrap(), 1);
    let e = PoissonField::planted(Aabb::cube([0.0; 3], 2.0).unwrap(), vec![]).unwrap();
    assert_eq!(max_count_over_lattice(&e, &lat).unwrap(), 0);
}

#[test]
fn center_count_agrees_with_enumeration() {
    for (s, r) in [(1.0, 3.3), (0.7, 5.0), (2.0, 2.0), (1.3, 0.5)] {
        let lat = LatticeSpec::new(s, 0.1, r, CellShape::Cube).unwrap();
        assert_eq!(lat.center_count(), lat.centers().len() as u64);
    }
}

#[test]
fn association_cases() {
    let w = Aabb::cube([0.0; 3], 2.0).unwrap();
    let a = Aabb::new([-1.0; 3], [0.0; 3]).unwrap();
    let b = Aabb::new([0.5; 3], [1.5; 3]).unwrap();
    let disjoint = check_association(w, 1.0, &[a, b], &[1.0, 1.0], Direction::AtLeast, 20_000, 2).unwrap();
    assert!((disjoint.joint.mean - disjoint.product).abs() <= 3.0 * disjoint.joint.stderr);
    let same = check_association(w, 1.0, &[a, a], &[1.0, 1.0], Direction::AtLeast, 20_000, 2).unwrap();
    let marginal = 1.0 - (-1.0f64).exp();
    assert!((same.joint.mean - marginal).abs() <= 3.0 * same.joint.stderr);
    assert!(same.joint.mean > same.product);
    assert!(check_association(w, 1.0, &[a], &[1.0], Direction::AtMost, 99, 2).is_err());
}

#[test]
fn disjoint_counts_uncorrelated() {
    let w = Aabb::cube([0.0; 3], 1.0).unwrap();
    let a = Aabb::new([-1.0; 3], [0.0, 0.0, 1.0]).unwrap();
    let b = Aabb::new([0.0, 0.0, -1.0], [1.0; 3]).unwrap();
    let n = 10_000u64;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let f = sample_field_stream(w, 2.0, 8, i).unwrap();
            (count_in_box(&f, &a).unwrap() as f64, count_in_box(&f, &b).unwrap() as f64)
        })
        .collect();
    let m = |g: &dyn Fn(&(f64, f64)) -> f64| pairs.iter().map(g).sum::<f64>() / n as f64;
    let (mx, my) = (m(&|p| p.0), m(&|p| p.1));
    let cov = m(&|p| (p.0 - mx) * (p.1 - my));
    let corr = cov / (m(&|p| (p.0 - mx).powi(2)) * m(&|p| (p.1 - my).powi(2))).sqrt();
    assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
}

#[test]
fn counts_depend_only_on_volume() {
    // chi-square homogeneity over four translated cubes
    let w = Aabb::cube([0.0; 3], 2.0).unwrap();
    let cells: Vec<Aabb> = [[-2.0, -2.0, -2.0], [1.0, -2.0, 0.5], [-0.5, 1.0, -1.0], [0.0, 0.0, 0.0]]
        .iter()
        .map(|&lo| Aabb::new(lo, [lo[0] + 1.0, lo[1] + 1.0, lo[2] + 1.0]).unwrap())
        .collect();
    let n = 10_000u64;
    let bins = 5usize;
    let mut table = vec![vec![0f64; bins]; cells.len()];
    for i in 0..n {
        let f = sample_field_stream(w, 1.0, 21, i).unwrap();
        for (c, cell) in cells.iter().enumerate() {
            let k = (count_in_box(&f, cell).unwrap() as usize).min(bins - 1);
            table[c][k] += 1.0;
        }
    }
    let col: Vec<f64> = (0..bins).map(|k| table.iter().map(|r| r[k]).sum::<f64>()).collect();
    let total: f64 = col.iter().sum();
    let mut chi2 = 0.0;
    for row in &table {
        let rs: f64 = row.iter().sum();
        for k in 0..bins {
            let e = rs * col[k] / total;
            chi2 += (row[k] - e).powi(2) / e;
        }
    }
    // 12 degrees of freedom; the 0.999 quantile is 32.9
    assert!(chi2 < 32.9, "chi2 {chi2}");
}

#[test]
fn json_round_trip() {
    let f = sample_field(Aabb::cube([0.3; 3], 1.0).unwrap(), 3.0, 44).unwrap();
    let back = PoissonField::from_json(&f.to_json()).unwrap();
    assert_eq!(back, f);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_replays_and_stays_inside(seed in any::<u64>(), lam in 0.0f64..20.0, side in 0.2f64..2.0) {
        let w = Aabb::new([-side, 0.0, 1.0], [side, side, 1.0 + 2.0 * side]).unwrap();
        let a = sample_field(w, lam, seed).unwrap();
        let b = sample_field(w, lam, seed).unwrap();
        prop_assert_eq!(&a.points, &b.points);
        prop_assert!(a.points.iter().all(|p| w.contains(*p)));
    }

    #[test]
    fn index_agrees_with_scan(seed in any::<u64>(), r in 0.05f64..1.5, c in prop::array::uniform3(-1.0f64..1.0)) {
        let f = sample_field(Aabb::cube([0.0; 3], 3.0).unwrap(), 4.0, seed).unwrap();
        let idx = f.index(0.4);
        for shape in [CellShape::Ball, CellShape::Cube] {
            prop_assert_eq!(count_in_cell(&idx, c, r, shape).unwrap(), count_in_cell(&f, c, r, shape).unwrap());
        }
    }
}
