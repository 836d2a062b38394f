//! Acceptance run: one line per criterion, non-zero exit if any fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use critlab::asymptotics::{self, Side, SlowlyVaryingSpec, Verdict};
use critlab::brownian::exit_lower_bound_check;
use critlab::feynman_kac::{self, ExitRule, FkConfig};
use critlab::hardy::{self, RadialProfile};
use critlab::poisson_field::{check_association, sample_field_stream, Direction};
use critlab::potential::{truncated_mgf_exact, Evaluator, TailPolicy, TruncationScheme};
use critlab::spectral::{self, DirichletProblem};
use critlab::stats::Estimate;
use critlab::{rng, Aabb, Domain};
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = out.pass && in_time;
    println!(
        "criterion {id:>2} {}: {name}: {} ({:.1} s of {} s{})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn gm_published_form() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lm in [10.0f64, 50.0, 100.0] {
        let r = hardy::hardy_ratio_gm(lm.exp(), 100_000).expect("g_M ratio");
        let rel = (r.quadrature - r.published_form).abs() / r.published_form.abs();
        let rel_exact = (r.quadrature - r.closed_form).abs() / r.closed_form;
        pass &= rel <= 1e-4;
        parts.push(format!(
            "lnM={lm}: quadrature {:.7} printed {:.7} (rel {rel:.2e}) exact-integral form {:.7} (rel {rel_exact:.1e})",
            r.quadrature, r.published_form, r.closed_form
        ));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn random_profile(seed: u64) -> RadialProfile {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64)> =
        (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.1..3.0), rng.gen_range(0.0..2.0))).collect();
    let mut grid = vec![0.0];
    grid.extend((0..4000).map(|i| (40e-6f64.ln() + (1e6f64).ln() * i as f64 / 3999.0).exp()));
    RadialProfile::from_fn(grid, |r| terms.iter().map(|&(c, s, p)| c * (r / s).powf(p) * (-(r / s).powi(2)).exp()).sum())
        .expect("profile")
}

fn hardy_sharpness() -> Outcome {
    let worst = (0..1000u64).map(|s| hardy::hardy_ratio(&random_profile(s)).expect("ratio")).fold(0.0, f64::max);
    let lm = 2.0 * (280.0 - 7.0 / 3.0);
    let g = hardy::hardy_ratio_gm(f64::exp(lm), 100_000).expect("g_M ratio");
    Outcome {
        pass: worst <= 4.0 + 1e-6 && g.quadrature > 3.9,
        detail: format!("max ratio over 1000 profiles {worst:.6}; g_M ratio at lnM={lm:.4} is {:.6}", g.quadrature),
    }
}

fn box_eigenvalue() -> Outcome {
    let exact = -3.0 * PI * PI / 8.0;
    let err: Vec<f64> = [15usize, 31, 63]
        .iter()
        .map(|&n| {
            let p = DirichletProblem::from_fn(1.0, n, |_| 0.0).unwrap();
            (spectral::principal_eigenvalue(&p).expect("eigenvalue").lambda - exact).abs()
        })
        .collect();
    let (r1, r2) = (err[0] / err[1], err[1] / err[2]);
    let rel = err[2] / exact.abs();
    Outcome {
        pass: rel < 0.01 && (3.5..=4.5).contains(&r1) && (3.5..=4.5).contains(&r2),
        detail: format!("n=63 relative error {rel:.2e}; error ratios {r1:.3}, {r2:.3}"),
    }
}

fn dense_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + seed);
        let pot: Vec<f64> = (0..343).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let dense = common::dense_top_eigenvalue(7, 1.0, &pot);
        let mut p = DirichletProblem::from_fn(1.0, 7, |_| 0.0).unwrap();
        p.potential = pot;
        let it = spectral::principal_eigenvalue(&p).expect("eigenvalue").lambda;
        worst = worst.max((it - dense).abs());
    }
    Outcome { pass: worst < 1e-8, detail: format!("max |iterative - dense| over 20 potentials {worst:.2e}") }
}

fn h_dichotomy_probe() -> Outcome {
    let rs = [1.0, 2.0, 4.0];
    let ds = [1e-1, 1e-2, 1e-3];
    let h = |th: f64, r: f64, d: f64| hardy::h_functional(th, r, d, 4000).expect("H");
    let low_ok = rs.iter().all(|&r| ds.iter().all(|&d| h(0.1, r, d) < 0.0));
    let mut high_ok = true;
    let mut parts = Vec::new();
    for &r in &rs {
        let v: Vec<f64> = ds.iter().map(|&d| h(0.2, r, d)).collect();
        high_ok &= v.iter().all(|&x| x > 0.0) && v[1] >= 10.0 * v[0] && v[2] >= 10.0 * v[1];
        parts.push(format!("r={r}: {:.3e} {:.3e} {:.3e}", v[0], v[1], v[2]));
    }
    Outcome {
        pass: low_ok && high_ok,
        detail: format!(
            "theta=0.1 all negative: {low_ok}; theta=0.2 over delta 1e-1,1e-2,1e-3 {}; positive and 10x per decade: {high_ok}",
            parts.join(", ")
        ),
    }
}

fn mgf_oracle() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, &(th, a, eps)) in [(0.5, 2.0, 0.5), (1.0, 4.0, 0.25), (0.25, 1.0, 1.0)].iter().enumerate() {
        let scheme = TruncationScheme::new(a, eps).unwrap().with_policy(TailPolicy::GaussianSurrogate);
        let ev = Evaluator::new(&scheme).unwrap();
        let exact = truncated_mgf_exact(th, &scheme).expect("mgf");
        let w = Aabb::cube([0.0; 3], scheme.tail_radius).unwrap();
        let seed = 600 + k as u64;
        let v: Vec<f64> = (0..100_000u64)
            .map(|i| {
                let f = sample_field_stream(w, eps, seed, i).unwrap();
                let pv = ev.truncated(&f, [0.0; 3]).unwrap();
                let mut r = rng::stream(rng::derive_seed(seed, 1), i);
                (th * pv.with_tail(scheme.tail_policy, &mut r)).exp()
            })
            .collect();
        let e = Estimate::from_samples(&v, seed);
        let z = (e.mean - exact) / e.stderr;
        pass &= z.abs() <= 3.0;
        parts.push(format!("({th},{a},{eps}): MC {:.5} exact {exact:.5} z={z:.2}", e.mean));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn fk_survival() -> Outcome {
    let field = critlab::potential::empty_field(Aabb::cube([0.0; 3], 10.0).unwrap());
    let scheme = TruncationScheme::new(1.0, 1.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, d, exact) in [
        ("ball", Domain::Ball { radius: 1.0 }, common::ball_survival(1.0, 1.0)),
        ("cube", Domain::Box { half_width: 1.0 }, common::cube_survival(1.0, 1.0)),
    ] {
        for rule in [ExitRule::BridgeCorrected, ExitRule::Grid] {
            let cfg = FkConfig {
                theta: 0.0,
                t: 1.0,
                dt: 1e-3,
                cap: 1e4,
                n_paths: 100_000,
                start: [0.0; 3],
                scheme,
                domain: Some(d),
                exit_rule: rule,
            };
            let e = feynman_kac::quenched_moment(&field, &cfg, 700).expect("moment");
            let ok = (e.mean - exact).abs() <= 3.0 * e.stderr + 0.02 * exact;
            if rule == ExitRule::BridgeCorrected {
                pass &= ok;
            }
            parts.push(format!("{name} {rule:?} {:.5} +- {:.5} vs {exact:.5}{}", e.mean, e.stderr, if ok { "" } else { " (outside)" }));
        }
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn cap_probe() -> Outcome {
    let field = feynman_kac::planted_field(1, 10.0).unwrap();
    let scheme = TruncationScheme::new(1.0, 1.0).unwrap();
    let caps = [1e2, 1e3, 1e4];
    let sweep = |theta: f64| {
        let cfg = FkConfig {
            theta,
            t: 0.5,
            dt: 1e-3,
            cap: 1e4,
            n_paths: 10_000,
            start: [0.5, 0.0, 0.0],
            scheme,
            domain: None,
            exit_rule: ExitRule::Grid,
        };
        feynman_kac::cap_sweep(&field, &cfg, &caps, 800).expect("sweep")
    };
    let lo = sweep(0.10);
    let hi = sweep(0.15);
    let (a, b) = (lo.estimates[1], lo.estimates[2]);
    let stable = (b.mean - a.mean).abs() <= 3.0 * a.stderr.hypot(b.stderr);
    let m: Vec<f64> = hi.estimates.iter().map(|e| e.mean).collect();
    let diverge = m[1] > m[0] && m[2] > m[1] && m[2] / m[0] > 10.0;
    let eig = |theta: f64| -> Vec<f64> {
        caps.iter().map(|&c| spectral::eigenvalue_of_field(&field, theta, 1.0, 31, &scheme, c).expect("eigenvalue")).collect()
    };
    let (el, eh) = (eig(0.10), eig(0.15));
    let eig_split = (el[2] - el[1]).abs() < 10.0 && eh[2] > eh[0] + 10.0;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    Outcome {
        pass: stable && diverge && eig_split,
        detail: format!(
            "theta=0.10 means [{}] stable: {stable}; theta=0.15 means [{}] last/first {:.3} diverges: {diverge}; \
             eigenvalues theta=0.10 [{}], theta=0.15 [{}] split: {eig_split}",
            fmt(&lo.estimates.iter().map(|e| e.mean).collect::<Vec<_>>()),
            fmt(&m),
            m[2] / m[0],
            fmt(&el),
            fmt(&eh)
        ),
    }
}

fn association() -> Outcome {
    let w = Aabb::cube([0.0; 3], 2.0).unwrap();
    let cube = |lo: [f64; 3], side: [f64; 3]| Aabb::new(lo, [lo[0] + side[0], lo[1] + side[1], lo[2] + side[2]]).unwrap();
    let unit = [1.0; 3];
    let cases: Vec<(&str, Vec<Aabb>, Vec<f64>, Direction)> = vec![
        ("half overlap >=2", vec![cube([-1.0, -0.5, -0.5], unit), cube([-0.5, -0.5, -0.5], unit)], vec![2.0, 2.0], Direction::AtLeast),
        ("quarter overlap >=1", vec![cube([-1.0, -1.0, 0.0], unit), cube([-0.5, -0.5, 0.0], unit)], vec![1.0, 1.0], Direction::AtLeast),
        ("nested >=1,>=3", vec![cube([-0.5; 3], unit), cube([-1.0; 3], [2.0; 3])], vec![1.0, 3.0], Direction::AtLeast),
        (
            "three-way >=2",
            vec![cube([-1.0, -0.5, -0.5], unit), cube([-0.5, -0.5, -0.5], unit), cube([-0.75, -0.75, -0.5], unit)],
            vec![2.0, 2.0, 2.0],
            Direction::AtLeast,
        ),
        ("half overlap <=1", vec![cube([-1.0, -0.5, -0.5], unit), cube([-0.5, -0.5, -0.5], unit)], vec![1.0, 1.0], Direction::AtMost),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (name, cells, th, dir)) in cases.iter().enumerate() {
        let rec = check_association(w, 1.0, cells, th, *dir, 100_000, 900 + k as u64).expect("association");
        pass &= rec.holds();
        parts.push(format!("{name}: {:.4} vs {:.4}", rec.joint.mean, rec.product));
    }
    let disjoint = [cube([-2.0; 3], unit), cube([0.5; 3], unit)];
    let rec = check_association(w, 1.0, &disjoint, &[1.0, 1.0], Direction::AtLeast, 100_000, 950).expect("association");
    let eq = (rec.joint.mean - rec.product).abs() <= 3.0 * rec.joint.stderr;
    parts.push(format!("disjoint: {:.4} vs {:.4}", rec.joint.mean, rec.product));
    Outcome { pass: pass && eq, detail: parts.join("; ") }
}

fn extreme_scaling() -> Outcome {
    let n: Vec<u32> = (2..=6).collect();
    let t = asymptotics::extreme_scaling_experiment(&n, 1.8, 5.236, 100_000, 1000).expect("experiment");
    let within = t.rows.iter().all(|r| (r.p_emp - r.p_exact).abs() <= 3.0 * r.oracle_stderr());
    let slope_ok = (t.slope_emp + 3.0).abs() <= 0.5;
    let rows: Vec<String> = t.rows.iter().map(|r| format!("n={} {:.3e}/{:.3e}", r.n, r.p_emp, r.p_exact)).collect();
    Outcome {
        pass: within && slope_ok,
        detail: format!(
            "empirical/exact {}; slope {:.3} (exact {:.3}); all within 3 stderr: {within}",
            rows.join(", "),
            t.slope_emp,
            t.slope_exact
        ),
    }
}

fn rate_calculators() -> Outcome {
    use SlowlyVaryingSpec::*;
    let one = Const { c: 1.0 };
    let checks = [
        asymptotics::limsup_integral_test(&LogPow { a: 1.0 }).unwrap() == Verdict::Infinite,
        asymptotics::limsup_integral_test(&LogTimesLogLogPow { a: 1.5 }).unwrap() == Verdict::Zero,
        asymptotics::limsup_integral_test(&LogPow { a: 2.0 }).unwrap() == Verdict::Zero,
        asymptotics::liminf_integral_test(&LogLogPow { a: 1.0 }).unwrap() == Verdict::Zero,
        asymptotics::liminf_integral_test(&LogLogPow { a: 2.0 }).unwrap() == Verdict::Infinite,
        asymptotics::liminf_integral_test(&one).unwrap() == Verdict::Zero,
        asymptotics::k_of_theta(1.0 / 24.0).unwrap() == 3,
        asymptotics::k_of_theta(0.05).unwrap() == 2,
        asymptotics::k_of_theta(1.0 / 16.0).is_err(),
        asymptotics::anderson_index(0.1, 1.0).unwrap() == 2,
        asymptotics::anderson_index(0.1, 2.0).unwrap() == 5,
        asymptotics::anderson_index(0.125, 1.0).is_err(),
        asymptotics::predicted_normalization(0.05, &one, 100.0, Side::Limsup).unwrap() == 1e6,
        asymptotics::predicted_normalization(1.0 / 24.0, &one, 100.0, Side::Limsup).unwrap() == 1e4,
        {
            let l = LogPow { a: 1.0 };
            let up = asymptotics::predicted_normalization(0.03, &l, 1e4, Side::Limsup).unwrap();
            let down = asymptotics::predicted_normalization(0.03, &l, 1e4, Side::Liminf).unwrap();
            up > down
        },
    ];
    let failed: Vec<usize> = checks.iter().enumerate().filter(|c| !*c.1).map(|c| c.0).collect();
    Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() { format!("{} examples reproduced", checks.len()) } else { format!("failed checks {failed:?}") },
    }
}

fn exit_bound() -> Outcome {
    let a = Aabb::new([0.0; 3], [1.0; 3]).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, &(r, t)) in [(1.0, 1.0), (1.0, 0.25), (2.0, 1.0)].iter().enumerate() {
        let rec = exit_lower_bound_check(r, t, &a, 100_000, 1200 + k as u64, 1e-3).expect("exit bound");
        pass &= rec.holds();
        parts.push(format!("(R={r}, t={t}): lhs {:.5} rhs {:.5} se {:.1e}", rec.lhs.mean, rec.rhs.mean, rec.combined_stderr()));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn main() {
    let results = [
        run(1, "g_M ratio vs printed closed form", secs(10), gm_published_form),
        run(2, "Hardy constant upper side and near-optimality", secs(30), hardy_sharpness),
        run(3, "Dirichlet box eigenvalue", secs(60), box_eigenvalue),
        run(4, "dense oracle equivalence", secs(10), dense_equivalence),
        run(5, "H dichotomy probe", secs(60), h_dichotomy_probe),
        run(6, "truncated MGF oracle", secs(300), mgf_oracle),
        run(7, "FK survival oracle", secs(300), fk_survival),
        run(8, "cap sweep desk probe", secs(600), cap_probe),
        run(9, "association", secs(120), association),
        run(10, "extreme-value scaling", secs(600), extreme_scaling),
        run(11, "rate calculators", secs(1), rate_calculators),
        run(12, "exit lower bound", secs(300), exit_bound),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed} of {} criteria pass", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
