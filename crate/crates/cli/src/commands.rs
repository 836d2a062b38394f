use critlab::asymptotics::{self, Side, SlowlyVaryingSpec, Verdict};
use critlab::brownian::exit_lower_bound_check;
use critlab::feynman_kac::{self, ExitRule, FkConfig};
use critlab::hardy;
use critlab::poisson_field::{check_association, sample_field, Direction, PoissonField};
use critlab::potential::{Evaluator, TailPolicy, TruncationScheme};
use critlab::{rng, spectral, Aabb, Domain, Error, Result};

use crate::artifact::Table;
use crate::config::{bad, boxes, parse_f64, parse_u64, ExperimentConfig};

pub fn run(cfg: &ExperimentConfig) -> Result<Table> {
    match cfg.subcommand {
        "field" => field(cfg),
        "potential" => potential(cfg),
        "fk" => fk(cfg),
        "eigen" => eigen(cfg),
        "hardy" => hardy_cmd(cfg),
        "rates" => rates(cfg),
        "extremes" => extremes(cfg),
        "association" => association(cfg),
        "exit-check" => exit_check(cfg),
        other => Err(Error::Config(format!("unknown subcommand '{other}'"))),
    }
}

fn to_aabb(b: [f64; 6]) -> Result<Aabb> {
    Aabb::new([b[0], b[1], b[2]], [b[3], b[4], b[5]])
}

fn scheme(cfg: &ExperimentConfig) -> Result<TruncationScheme> {
    TruncationScheme::new(cfg.f64("a")?, cfg.f64("epsilon")?)
}

/// `poisson` samples at the scheme intensity; `planted:m` stacks `m`
/// points at the origin.
fn source_field(cfg: &ExperimentConfig, window: Aabb) -> Result<PoissonField> {
    let spec = cfg.str("field");
    if spec == "poisson" {
        return sample_field(window, cfg.f64("epsilon")?, cfg.seed);
    }
    match spec.strip_prefix("planted:") {
        Some(m) => PoissonField::planted(window, vec![[0.0; 3]; parse_u64("field", m)? as usize]),
        None => Err(bad("field", spec, "poisson or planted:m")),
    }
}

fn field(cfg: &ExperimentConfig) -> Result<Table> {
    let w = Aabb::cube([0.0; 3], cfg.f64("half_width")?)?;
    let f = sample_field(w, cfg.f64("intensity")?, cfg.seed)?;
    let mut t = Table::new(&["x", "y", "z"]);
    for p in &f.points {
        t.push(vec![p[0].into(), p[1].into(), p[2].into()]);
    }
    t.summary.push(("count", (f.points.len() as u64).into()));
    Ok(t)
}

fn potential(cfg: &ExperimentConfig) -> Result<Table> {
    let policy = match cfg.str("tail") {
        "drop" => TailPolicy::Drop,
        "gaussian" => TailPolicy::GaussianSurrogate,
        v => return Err(bad("tail", v, "drop or gaussian")),
    };
    let s = scheme(cfg)?.with_policy(policy);
    let (x0, x1, n) = (cfg.f64("x_min")?, cfg.f64("x_max")?, cfg.u64("n_points")?);
    if n < 1 || !(x1 >= x0) {
        return Err(Error::Config("n_points must be at least 1 and x_max >= x_min".into()));
    }
    let window = Aabb::cube([0.0; 3], x0.abs().max(x1.abs()) + s.tail_radius + 1e-9)?;
    let f = sample_field(window, s.epsilon, cfg.seed)?;
    let ev = Evaluator::new(&s)?;
    let index = f.index(s.tail_radius);
    let tail_seed = rng::derive_seed(cfg.seed, 2);
    let mut t = Table::new(&["x", "value", "tail_std"]);
    for i in 0..n {
        let x = if n == 1 { x0 } else { x0 + (x1 - x0) * i as f64 / (n - 1) as f64 };
        let p = [x, 0.0, 0.0];
        let (value, tail_std) = match cfg.str("kind") {
            "truncated" => {
                let v = ev.truncated(&index, p)?;
                (v.with_tail(policy, &mut rng::stream(tail_seed, i)), v.tail_std)
            }
            "renormalized" => {
                let v = ev.renormalized(&index, p)?;
                (v.with_tail(policy, &mut rng::stream(tail_seed, i)), v.tail_std)
            }
            "singular" => (ev.singular(&index, p)?, 0.0),
            v => return Err(bad("kind", v, "truncated, renormalized or singular")),
        };
        t.push(vec![x.into(), value.into(), tail_std.into()]);
    }
    Ok(t)
}

fn domain_spec(v: &str) -> Result<Option<Domain>> {
    if v == "none" {
        return Ok(None);
    }
    let (kind, r) = v.split_once(':').ok_or_else(|| bad("domain", v, "none, ball:R or box:R"))?;
    let r = parse_f64("domain", r)?;
    match kind {
        "ball" => Ok(Some(Domain::Ball { radius: r })),
        "box" => Ok(Some(Domain::Box { half_width: r })),
        _ => Err(bad("domain", v, "none, ball:R or box:R")),
    }
}

fn fk(cfg: &ExperimentConfig) -> Result<Table> {
    let exit_rule = match cfg.str("exit_rule") {
        "grid" => ExitRule::Grid,
        "bridge" => ExitRule::BridgeCorrected,
        v => return Err(bad("exit_rule", v, "grid or bridge")),
    };
    let fc = FkConfig {
        theta: cfg.f64("theta")?,
        t: cfg.f64("t")?,
        dt: cfg.f64("dt")?,
        cap: cfg.f64("cap")?,
        n_paths: cfg.u64("replicates")?,
        start: cfg.vec3("start")?,
        scheme: scheme(cfg)?,
        domain: domain_spec(cfg.str("domain"))?,
        exit_rule,
    };
    let mut caps = cfg.f64_list("caps")?;
    if caps.is_empty() {
        caps.push(fc.cap);
    }
    // Somewhat larger than the envelope the moment checks against.
    let reach = match fc.domain {
        Some(d) => d.outer_radius().max(critlab::geometry::norm(fc.start)),
        None => critlab::geometry::max_abs(fc.start) + 6.0 * fc.t.max(0.0).sqrt(),
    };
    let window = Aabb::cube([0.0; 3], reach + fc.scheme.tail_radius + 1.0)?;
    let f = source_field(cfg, window)?;
    let sweep = feynman_kac::cap_sweep(&f, &fc, &caps, rng::derive_seed(cfg.seed, 1))?;
    let mut t = Table::new(&["cap", "mean", "stderr", "n", "overflow"]);
    for (c, e) in sweep.caps.iter().zip(&sweep.estimates) {
        t.push(vec![(*c).into(), e.mean.into(), e.stderr.into(), e.n.into(), e.overflow.into()]);
    }
    Ok(t)
}

fn eigen(cfg: &ExperimentConfig) -> Result<Table> {
    let s = scheme(cfg)?;
    let (theta, radius, grid_n) = (cfg.f64("theta")?, cfg.f64("radius")?, cfg.u64("grid_n")? as usize);
    let window = Aabb::cube([0.0; 3], radius + s.tail_radius + 1e-9)?;
    let f = source_field(cfg, window)?;
    let mut t = Table::new(&["clamp", "lambda"]);
    for c in cfg.f64_list("clamps")? {
        t.push(vec![c.into(), spectral::eigenvalue_of_field(&f, theta, radius, grid_n, &s, c)?.into()]);
    }
    Ok(t)
}

/// `eX` is `e^X`; an optional leading `M=` is ignored.
fn parse_m(v: &str) -> Result<f64> {
    let v = v.trim();
    match v.strip_prefix('e') {
        Some(x) => Ok(parse_f64("gm_sweep", x)?.exp()),
        None => parse_f64("gm_sweep", v),
    }
}

fn hardy_cmd(cfg: &ExperimentConfig) -> Result<Table> {
    let sweep = cfg.str("gm_sweep");
    let sweep = sweep.strip_prefix("M=").unwrap_or(sweep);
    if !sweep.trim().is_empty() {
        let grid = cfg.u64("gm_grid")? as usize;
        let mut t = Table::new(&["m", "log_m", "quadrature", "closed_form", "published_form"]);
        for m in sweep.split(',').map(parse_m) {
            let m = m?;
            let r = hardy::hardy_ratio_gm(m, grid)?;
            t.push(vec![m.into(), m.ln().into(), r.quadrature.into(), r.closed_form.into(), r.published_form.into()]);
        }
        return Ok(t);
    }
    let grid = cfg.u64("h_grid")? as usize;
    let mut t = Table::new(&["theta", "r", "delta", "h", "positive_threshold"]);
    for th in cfg.f64_list("theta")? {
        for r in cfg.f64_list("r")? {
            for d in cfg.f64_list("delta")? {
                let h = hardy::h_functional(th, r, d, grid)?;
                t.push(vec![th.into(), r.into(), d.into(), h.into(), hardy::h_positive_threshold(r, d).into()]);
            }
        }
    }
    Ok(t)
}

fn rates(cfg: &ExperimentConfig) -> Result<Table> {
    let side = match cfg.str("side") {
        "limsup" => Side::Limsup,
        "liminf" => Side::Liminf,
        v => return Err(bad("side", v, "limsup or liminf")),
    };
    let l = SlowlyVaryingSpec::parse(cfg.str("l")).map_err(|e| Error::Config(format!("l: {e}")))?;
    let v = asymptotics::rate_verdict(cfg.f64("theta")?, &l, side)?;
    let mut t = Table::new(&["theta", "k", "time_exponent", "l_exponent", "side", "branch"]);
    t.push(vec![
        v.theta.into(),
        v.k.into(),
        v.time_exponent.into(),
        v.l_exponent.into(),
        match v.side {
            Side::Limsup => "limsup",
            Side::Liminf => "liminf",
        }
        .into(),
        match v.branch {
            Verdict::Zero => "zero",
            Verdict::Infinite => "infinite",
            Verdict::Inconclusive => "inconclusive",
        }
        .into(),
    ]);
    Ok(t)
}

fn extremes(cfg: &ExperimentConfig) -> Result<Table> {
    let (lo, hi) = (cfg.u64("n_min")? as u32, cfg.u64("n_max")? as u32);
    if lo > hi {
        return Err(Error::Config("n_min must not exceed n_max".into()));
    }
    let levels: Vec<u32> = (lo..=hi).collect();
    let tab = asymptotics::extreme_scaling_experiment(&levels, cfg.f64("delta")?, cfg.f64("r")?, cfg.u64("replicates")?, cfg.seed)?;
    let mut t = Table::new(&["n", "cells", "hits", "replicates", "p_emp", "stderr", "p_exact", "oracle_stderr"]);
    for r in &tab.rows {
        t.push(vec![
            r.n.into(),
            r.cells.into(),
            r.hits.into(),
            r.replicates.into(),
            r.p_emp.into(),
            r.stderr.into(),
            r.p_exact.into(),
            r.oracle_stderr().into(),
        ]);
    }
    t.summary.push(("slope_emp", tab.slope_emp.into()));
    t.summary.push(("slope_exact", tab.slope_exact.into()));
    Ok(t)
}

fn association(cfg: &ExperimentConfig) -> Result<Table> {
    let window = Aabb::cube([0.0; 3], cfg.f64("half_width")?)?;
    let cells: Vec<Aabb> = boxes("cells", cfg.str("cells"))?.into_iter().map(to_aabb).collect::<Result<_>>()?;
    let direction = match cfg.str("direction") {
        "ge" => Direction::AtLeast,
        "le" => Direction::AtMost,
        v => return Err(bad("direction", v, "ge or le")),
    };
    let rec = check_association(
        window,
        cfg.f64("intensity")?,
        &cells,
        &cfg.f64_list("thresholds")?,
        direction,
        cfg.u64("replicates")?,
        cfg.seed,
    )?;
    let mut t = Table::new(&["joint", "stderr", "product", "holds"]);
    t.push(vec![rec.joint.mean.into(), rec.joint.stderr.into(), rec.product.into(), rec.holds().into()]);
    Ok(t)
}

fn exit_check(cfg: &ExperimentConfig) -> Result<Table> {
    let target = boxes("target", cfg.str("target"))?;
    let [b] = target[..] else {
        return Err(bad("target", cfg.str("target"), "exactly one box"));
    };
    let rec = exit_lower_bound_check(cfg.f64("r")?, cfg.f64("t")?, &to_aabb(b)?, cfg.u64("replicates")?, cfg.seed, cfg.f64("dt")?)?;
    let mut t = Table::new(&["lhs", "lhs_stderr", "rhs", "rhs_stderr", "endpoint", "bridge", "holds"]);
    t.push(vec![
        rec.lhs.mean.into(),
        rec.lhs.stderr.into(),
        rec.rhs.mean.into(),
        rec.rhs.stderr.into(),
        rec.endpoint.mean.into(),
        rec.bridge.mean.into(),
        rec.holds().into(),
    ]);
    Ok(t)
}
