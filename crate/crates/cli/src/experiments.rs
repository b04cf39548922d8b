//! One runner per subcommand. Each returns tables and envelope checks.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use pathwise::dyadic_path::DyadicPath;
use pathwise::estimators::{
    constant_sweep, dyadic_flatness, dyadic_modulus_sweep, l2_functional_bound, moment_bound, moment_table, tail_bound,
};
use pathwise::fields::{drift, scalar, SharedDrift};
use pathwise::kernel_lab::kernel::{kernel_l1_mass, Kernel};
use pathwise::kernel_lab::oracle::{functional_second_moment, rho_second_moment, OracleOptions};
use pathwise::kernel_lab::words::{allowed_words, count_allowed_exhaustive};
use pathwise::occupation::euler_chain;
use pathwise::rng::derive_seed;
use pathwise::solver::{
    dense_distance, euler, girsanov_transform, partition_factory, picard_uniqueness, random_admissible_start,
    reference_solution, sup_error, PartitionKind, PicardOptions, SolveResult,
};

use crate::artifacts::{Outcome, Table, Value};
use crate::config::{EulerStudy, Experiment, ValidConfig};

/// Every table starts with the run's seed and levels.
fn table(name: &str, cols: &[&str]) -> Table {
    let mut header = vec!["seed", "level", "quad_level"];
    header.extend_from_slice(cols);
    Table::new(name, &header)
}

fn row(cfg: &ValidConfig, values: Vec<Value>) -> Vec<Value> {
    let mut r: Vec<Value> = vec![cfg.seed.into(), cfg.level.into(), cfg.quad_level.into()];
    r.extend(values);
    r
}

fn blank() -> Value {
    Value::Text(String::new())
}

fn opt(v: Option<f64>) -> Value {
    v.map_or_else(blank, Value::Float)
}

fn axis_point(dim: usize, x: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = x;
    v
}

pub fn run_experiment(cfg: &ValidConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Paths => paths(cfg),
        Experiment::Moments => moments(cfg),
        Experiment::Constants => constants(cfg),
        Experiment::Tails => tails(cfg),
        Experiment::L2 => l2(cfg),
        Experiment::Dyadic => dyadic(cfg),
        Experiment::Euler => match cfg.study {
            EulerStudy::Single => euler_single(cfg),
            EulerStudy::Identities => euler_identities(cfg),
            EulerStudy::Convergence => euler_convergence(cfg),
        },
        Experiment::Uniqueness => uniqueness(cfg),
        Experiment::Chain => chain(cfg),
        Experiment::Kernels => kernels(cfg),
        Experiment::Words => words(cfg),
        Experiment::All => bail!("`all` is expanded by the caller"),
    }
}

fn paths(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("paths");
    let path = DyadicPath::generate(cfg.seed, cfg.dim, cfg.level)?;
    let coords: Vec<String> = (0..cfg.dim).map(|c| format!("w{c}")).collect();
    let mut cols = vec!["node", "t"];
    cols.extend(coords.iter().map(String::as_str));
    let mut nodes = table("nodes", &cols).with_plot("t", "w0", false, false);
    for k in 0..=path.intervals() {
        let mut r: Vec<Value> = vec![k.into(), (k as f64 * path.spacing()).into()];
        r.extend(path.node(k).iter().map(|v| Value::from(*v)));
        nodes.push(row(cfg, r));
    }
    out.tables.push(nodes);

    let mut summary = table("summary", &["coord", "increment_variance_ratio", "endpoint"]);
    let inc = path.increments();
    for c in 0..cfg.dim {
        let v: Vec<f64> = inc.iter().skip(c).step_by(cfg.dim).copied().collect();
        let (_, var) = pathwise::stats::mean_variance(&v);
        summary.push(row(cfg, vec![c.into(), (var / path.spacing()).into(), path.node(path.intervals())[c].into()]));
    }
    out.tables.push(summary);

    if cfg.level > 1 {
        let coarse = DyadicPath::generate(cfg.seed, cfg.dim, cfg.level - 1)?;
        let same = (0..=coarse.intervals()).all(|k| coarse.node(k) == path.node(2 * k));
        out.check("refinement_consistent", same, "coarse nodes equal every other fine node");
    }
    Ok(out)
}

fn moments(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("moments");
    let mut t = table(
        "cells",
        &[
            "replicas",
            "field",
            "x",
            "p",
            "estimate",
            "variance",
            "ci_half_width",
            "normalized_ratio",
            "oracle",
            "oracle_distance_in_ci",
            "shape_envelope",
            "pass",
        ],
    )
    .with_plot("x", "normalized_ratio", true, false);
    let points: Vec<Vec<f64>> = cfg.x_grid.iter().map(|x| axis_point(cfg.dim, *x)).collect();
    for name in &cfg.fields {
        let g = scalar(name, cfg.dim)?;
        let s = moment_table(g.as_ref(), &points, &cfg.p_grid, cfg.replicas, cfg.seed, cfg.quad_level)?;
        let c_hat = s
            .cells
            .iter()
            .filter(|c| c.param("p") == Some(2.0))
            .filter_map(|c| c.fitted_c)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        for cell in &s.cells {
            let x = cell.param("x").unwrap_or(0.0);
            let p = cell.param("p").unwrap_or(0.0) as u32;
            let ratio = cell.fitted_c.unwrap_or(0.0);
            let oracle = if p == 2 && cfg.dim == 1 && g.step_profile().is_some() {
                Some(rho_second_moment(g.as_ref(), x, OracleOptions::default())?)
            } else {
                None
            };
            let z = oracle.map(|o| {
                if cell.ci_half_width > 0.0 {
                    (cell.estimate - o).abs() / cell.ci_half_width
                } else if cell.estimate == o {
                    0.0
                } else {
                    f64::INFINITY
                }
            });
            let envelope = if p > 2 { c_hat.map(|c| 1.5 * c) } else { None };
            let mut pass = true;
            if let Some(z) = z {
                let ok = z <= 3.0;
                out.check(format!("oracle/{name}/x={x}"), ok, format!("|MC - oracle| = {z:.3} CI half-widths"));
                pass &= ok;
            }
            if let Some(env) = envelope {
                let ok = ratio <= env;
                out.check(format!("shape/{name}/x={x}/p={p}"), ok, format!("ratio {ratio:.4} vs 1.5 C = {env:.4}"));
                pass &= ok;
            }
            t.push(row(
                cfg,
                vec![
                    cfg.replicas.into(),
                    name.as_str().into(),
                    x.into(),
                    p.into(),
                    cell.estimate.into(),
                    cell.variance.into(),
                    cell.ci_half_width.into(),
                    ratio.into(),
                    opt(oracle),
                    opt(z),
                    opt(envelope),
                    pass.into(),
                ],
            ));
        }
    }
    out.tables.push(t);
    Ok(out)
}

fn constants(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("constants");
    let mut t = table("cells", &["replicas", "field", "p", "x", "estimate", "ci_half_width", "fitted_c"])
        .with_plot("x", "fitted_c", true, false);
    let mut flags = table("flags", &["field", "p", "flag"]);
    for name in &cfg.fields {
        let g = scalar(name, cfg.dim)?;
        for p in &cfg.p_grid {
            let s = constant_sweep(g.as_ref(), *p, &cfg.x_grid, cfg.replicas, cfg.seed, cfg.quad_level)?;
            for c in &s.cells {
                t.push(row(
                    cfg,
                    vec![
                        cfg.replicas.into(),
                        name.as_str().into(),
                        (*p).into(),
                        c.param("x").or_else(|| c.param("x0")).unwrap_or(0.0).into(),
                        c.estimate.into(),
                        c.ci_half_width.into(),
                        c.fitted_c.unwrap_or(0.0).into(),
                    ],
                ));
            }
            for f in &s.flags {
                flags.push(row(cfg, vec![name.as_str().into(), (*p).into(), f.as_str().into()]));
            }
            let nonzero: Vec<f64> = s.cells.iter().filter_map(|c| c.fitted_c).filter(|v| *v > 0.0).collect();
            let spread = if nonzero.is_empty() {
                1.0
            } else {
                nonzero.iter().copied().fold(0.0, f64::max) / nonzero.iter().copied().fold(f64::INFINITY, f64::min)
            };
            out.check(format!("uniform_constant/{name}/p={p}"), spread <= 3.0, format!("max/min = {spread:.4}"));
        }
    }
    out.tables.push(t);
    out.tables.push(flags);
    Ok(out)
}

fn tails(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("tails");
    let mut t = table(
        "cells",
        &["replicas", "field", "x", "a", "b", "lambda", "frequency", "cp_half_width", "c_hat", "envelope", "pass"],
    )
    .with_plot("lambda", "frequency", false, true);
    let [a, b] = cfg.window;
    for name in &cfg.fields {
        let g = scalar(name, cfg.dim)?;
        for x in &cfg.x_grid {
            let point = axis_point(cfg.dim, *x);
            let c_hat = match cfg.c_hat {
                Some(c) => c,
                None => moment_bound(g.as_ref(), &point, 2, cfg.replicas.min(10_000), cfg.seed, cfg.quad_level)?
                    .fitted_c
                    .unwrap_or(0.0),
            };
            let s = tail_bound(
                g.as_ref(),
                &point,
                (a, b),
                &cfg.lambda_grid,
                cfg.replicas,
                cfg.seed,
                cfg.quad_level,
                c_hat,
            )?;
            for c in &s.cells {
                let lambda = c.param("lambda").unwrap_or(0.0);
                let pass = c.pass.unwrap_or(true);
                out.check(
                    format!("tail/{name}/x={x}/lambda={lambda}"),
                    pass,
                    format!("frequency {:.5} vs envelope {:.5}", c.estimate, c.envelope.unwrap_or(f64::NAN)),
                );
                t.push(row(
                    cfg,
                    vec![
                        cfg.replicas.into(),
                        name.as_str().into(),
                        (*x).into(),
                        a.into(),
                        b.into(),
                        lambda.into(),
                        c.estimate.into(),
                        c.ci_half_width.into(),
                        c_hat.into(),
                        opt(c.envelope),
                        pass.into(),
                    ],
                ));
            }
        }
    }
    out.tables.push(t);
    Ok(out)
}

fn l2(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("l2");
    let mut t = table(
        "cells",
        &[
            "replicas",
            "field",
            "p",
            "estimate",
            "variance",
            "ci_half_width",
            "norm_ratio",
            "oracle",
            "oracle_distance_in_ci",
        ],
    );
    for name in &cfg.fields {
        let g = scalar(name, cfg.dim)?;
        let s = l2_functional_bound(g.as_ref(), cfg.lp_exponent, cfg.replicas, cfg.seed, cfg.quad_level)?;
        let oracle = if cfg.dim == 1 && g.step_profile().is_some() {
            Some(functional_second_moment(g.as_ref(), OracleOptions::default())?)
        } else {
            None
        };
        let z = oracle.map(|o| if s.ci_half_width > 0.0 { (s.estimate - o).abs() / s.ci_half_width } else { 0.0 });
        if let Some(z) = z {
            out.check(format!("oracle/{name}"), z <= 3.0, format!("|MC - oracle| = {z:.3} CI half-widths"));
        }
        t.push(row(
            cfg,
            vec![
                cfg.replicas.into(),
                name.as_str().into(),
                cfg.lp_exponent.into(),
                s.estimate.into(),
                s.variance.into(),
                s.ci_half_width.into(),
                s.fitted_c.unwrap_or(0.0).into(),
                opt(oracle),
                opt(z),
            ],
        ));
    }
    out.tables.push(t);
    Ok(out)
}

fn dyadic(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("dyadic");
    let mut t = table("cells", &["replicas", "field", "n", "kind", "max_normalized", "mean_normalized"]).with_plot(
        "n",
        "max_normalized",
        false,
        false,
    );
    let mut summary = table("summary", &["replicas", "field", "c_dyadic", "rho_flatness", "sigma_flatness"]);
    for name in &cfg.fields {
        let g = scalar(name, cfg.dim)?;
        let s = dyadic_modulus_sweep(g.as_ref(), &cfg.n_grid, cfg.replicas, cfg.seed)?;
        for c in &s.cells {
            let kind = if c.param("sigma") == Some(1.0) { "sigma" } else { "rho" };
            t.push(row(
                cfg,
                vec![
                    cfg.replicas.into(),
                    name.as_str().into(),
                    (c.param("n").unwrap_or(0.0) as u32).into(),
                    kind.into(),
                    c.fitted_c.unwrap_or(0.0).into(),
                    c.estimate.into(),
                ],
            ));
        }
        let (fr, fs) = (dyadic_flatness(&s, false), dyadic_flatness(&s, true));
        out.check(format!("flat_in_n/{name}/rho"), fr <= 3.0, format!("max/min = {fr:.4}"));
        out.check(format!("flat_in_n/{name}/sigma"), fs <= 3.0, format!("max/min = {fs:.4}"));
        summary.push(row(
            cfg,
            vec![cfg.replicas.into(), name.as_str().into(), s.fitted_c.unwrap_or(0.0).into(), fr.into(), fs.into()],
        ));
    }
    out.tables.push(t);
    out.tables.push(summary);
    Ok(out)
}

/// Largest `|(x_{n+1} - x_n) - (W_{n+1} - W_n)| - bound dt_n`; non-positive means inside.
fn envelope_excess(res: &SolveResult, bound: f64) -> f64 {
    let d = res.dim;
    let t = res.partition.times();
    let mut worst = f64::NEG_INFINITY;
    for n in 0..t.len() - 1 {
        let step: f64 = (0..d)
            .map(|c| {
                let v = (res.states[(n + 1) * d + c] - res.states[n * d + c])
                    - (res.noise[(n + 1) * d + c] - res.noise[n * d + c]);
                v * v
            })
            .sum::<f64>()
            .sqrt();
        let slack =
            8.0 * f64::EPSILON * (1.0 + res.states[n * d..(n + 2) * d].iter().fold(0.0f64, |m, v| m.max(v.abs())));
        worst = worst.max(step - bound * (t[n + 1] - t[n]) - slack);
    }
    worst
}

/// Largest `|W'(t_n) - W(t_n)|` in units of `eps (1 + |x_n| + |u_n|)`.
fn girsanov_ulps(res: &SolveResult, f: &SharedDrift) -> f64 {
    let back = girsanov_transform(res, f.as_ref());
    back.iter()
        .zip(&res.noise)
        .zip(res.states.iter().zip(&res.drift_part))
        .map(|((b, w), (x, u))| (b - w).abs() / (f64::EPSILON * (1.0 + x.abs() + u.abs())))
        .fold(0.0, f64::max)
}

fn euler_single(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("euler");
    let path = DyadicPath::generate(cfg.seed, cfg.dim, cfg.level)?;
    let f = drift(&cfg.drifts[0], cfg.dim)?;
    let p = partition_factory(cfg.partition.kind.as_str(), cfg.partition.steps, Some(&path), cfg.seed)?;
    let res = euler(&path, f.as_ref(), &p)?;
    let mut cols = vec!["drift", "partition", "n", "node", "t"];
    let names: Vec<String> = (0..cfg.dim).flat_map(|c| [format!("w{c}"), format!("u{c}"), format!("x{c}")]).collect();
    cols.extend(names.iter().map(String::as_str));
    let mut sol = table("solution", &cols).with_plot("t", "x0", false, false);
    let label = cfg.partition.label();
    for (n, t) in res.partition.times().iter().enumerate() {
        let mut r: Vec<Value> =
            vec![res.drift.as_str().into(), label.as_str().into(), n.into(), res.nodes[n].into(), (*t).into()];
        for c in 0..cfg.dim {
            let i = n * cfg.dim + c;
            r.extend([res.noise[i].into(), res.drift_part[i].into(), res.states[i].into()]);
        }
        sol.push(row(cfg, r));
    }
    let sup_dev = res.drift_part.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let excess = envelope_excess(&res, f.bound());
    let ulps = girsanov_ulps(&res, &f);
    let mut summary = table(
        "summary",
        &["drift", "partition", "mesh", "max_snap", "sup_x_minus_w", "envelope_excess", "girsanov_ulps"],
    );
    summary.push(row(
        cfg,
        vec![
            res.drift.as_str().into(),
            label.as_str().into(),
            res.partition.mesh().into(),
            res.max_snap.into(),
            sup_dev.into(),
            excess.into(),
            ulps.into(),
        ],
    ));
    out.tables.push(sol);
    out.tables.push(summary);
    out.check("bounded_drift_envelope", excess <= 0.0, format!("largest excess {excess:e}"));
    out.check("girsanov_round_trip", ulps <= 16.0, format!("{ulps:.2} ulps"));
    out.stdout = format!("sup|x_n - W(t_n)| = {sup_dev}\n");
    Ok(out)
}

const IDENTITY_DRIFTS: [&str; 9] =
    ["zero", "const_0.5", "const_-0.25", "sign", "checkerboard_4", "radial_step", "lip_sin", "time_flip", "gauss_bump"];

fn euler_identities(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("euler_identities");
    let path = DyadicPath::generate(cfg.seed, cfg.dim, cfg.level)?;
    let mut t = table("identities", &["drift", "partition", "identity", "max_deviation", "pass"]);
    for kind in [PartitionKind::Uniform, PartitionKind::RandomDyadic, PartitionKind::AdversarialExtrema] {
        let p = partition_factory(kind.as_str(), cfg.partition.steps, Some(&path), cfg.seed)?;
        let label = format!("{}:{}", kind.as_str(), cfg.partition.steps);
        for name in IDENTITY_DRIFTS {
            let f = drift(name, cfg.dim)?;
            let res = euler(&path, f.as_ref(), &p)?;
            let constant = name.strip_prefix("const_").map(|c| c.parse::<f64>()).transpose()?;
            let exact = match (name, constant) {
                ("zero", _) => Some(0.0),
                (_, Some(c)) => Some(c),
                _ => None,
            };
            if let Some(c) = exact {
                // x_n must equal W(t_n) + c t_n in the drift coordinate, bit for bit.
                let mut dev = 0.0f64;
                for (n, tn) in res.partition.times().iter().enumerate() {
                    let w = path.node(res.nodes[n]);
                    for (k, wk) in w.iter().enumerate() {
                        let expect = if k == 0 { wk + c * tn } else { *wk };
                        dev = dev.max((res.states[n * cfg.dim + k] - expect).abs());
                    }
                }
                let pass = dev == 0.0;
                out.check(format!("exact/{name}/{label}"), pass, format!("max deviation {dev:e}"));
                t.push(row(
                    cfg,
                    vec![name.into(), label.as_str().into(), "exact_solution".into(), dev.into(), pass.into()],
                ));
            }
            let ulps = girsanov_ulps(&res, &f);
            let pass = ulps <= 16.0;
            out.check(format!("girsanov/{name}/{label}"), pass, format!("{ulps:.2} ulps"));
            t.push(row(
                cfg,
                vec![name.into(), label.as_str().into(), "girsanov_ulps".into(), ulps.into(), pass.into()],
            ));
        }
    }
    out.tables.push(t);
    Ok(out)
}

/// Exponents of the uniform refinement study.
pub const STUDY_EXPONENTS: std::ops::RangeInclusive<u32> = 6..=14;

fn euler_convergence(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("euler_convergence");
    let path = DyadicPath::generate(cfg.seed, cfg.dim, cfg.level)?;
    let name = &cfg.drifts[0];
    let f = drift(name, cfg.dim)?;
    let reference = reference_solution(&path, f.as_ref())?;
    let top = *STUDY_EXPONENTS.end();
    if cfg.level < top {
        bail!("the convergence study needs level >= {top}");
    }

    let mut conv = table("convergence", &["drift", "partition", "steps", "mesh", "sup_error"]).with_plot(
        "steps",
        "sup_error",
        true,
        true,
    );
    let mut errors = Vec::new();
    for e in STUDY_EXPONENTS {
        let p = partition_factory("uniform", 1 << e, Some(&path), cfg.seed)?;
        let res = euler(&path, f.as_ref(), &p)?;
        let err = sup_error(&res, &reference);
        errors.push(err);
        conv.push(row(
            cfg,
            vec![name.as_str().into(), "uniform".into(), (1u64 << e).into(), p.mesh().into(), err.into()],
        ));
    }
    let mut inversions = 0;
    let mut within_slack = true;
    for w in errors.windows(2) {
        if w[1] >= w[0] {
            inversions += 1;
            within_slack &= w[1] <= 2.0 * w[0];
        }
    }
    out.check(
        "uniform_refinement_decreases",
        inversions <= 1 && within_slack,
        format!("{inversions} inversion(s), within 2x slack: {within_slack}"),
    );
    let finest = *errors.last().unwrap();
    out.check("final_error_below_1e-2", finest < 1e-2, format!("final sup error {finest:e}"));

    // Matched mesh: the smallest power-of-two step count of each kind whose
    // mesh is at most that of adversarial_extrema at the finest count.
    let target = 2.0 / (1u64 << top) as f64;
    let mut parts = table("partitions", &["drift", "partition", "steps", "mesh", "min_gap", "sup_error"]);
    let mut solves = Vec::new();
    for kind in [PartitionKind::Uniform, PartitionKind::RandomDyadic, PartitionKind::AdversarialExtrema] {
        let mut chosen = None;
        for e in *STUDY_EXPONENTS.start()..=cfg.level {
            let p = partition_factory(kind.as_str(), 1 << e, Some(&path), cfg.seed)?;
            if p.mesh() <= target {
                chosen = Some((e, p));
                break;
            }
        }
        let (e, p) = chosen.with_context(|| format!("no {} partition reaches mesh {target}", kind.as_str()))?;
        let res = euler(&path, f.as_ref(), &p)?;
        let err = sup_error(&res, &reference);
        parts.push(row(
            cfg,
            vec![
                name.as_str().into(),
                kind.as_str().into(),
                (1u64 << e).into(),
                p.mesh().into(),
                p.min_gap().into(),
                err.into(),
            ],
        ));
        solves.push((kind, res));
    }
    let mut mutual = table("mutual", &["drift", "a", "b", "distance", "limit", "pass"]);
    let limit = 4.0 * finest;
    for i in 0..solves.len() {
        for j in i + 1..solves.len() {
            let d = dense_distance(&solves[i].1, &solves[j].1);
            let pass = d <= limit;
            let (a, b) = (solves[i].0.as_str(), solves[j].0.as_str());
            out.check(format!("mutual/{a}/{b}"), pass, format!("distance {d:e} vs {limit:e}"));
            mutual.push(row(cfg, vec![name.as_str().into(), a.into(), b.into(), d.into(), limit.into(), pass.into()]));
        }
    }
    out.tables.push(conv);
    out.tables.push(parts);
    out.tables.push(mutual);
    Ok(out)
}

fn uniqueness(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("uniqueness");
    let options = PicardOptions { max_iter: cfg.max_iter, tol: cfg.tol, keep_iterates: false };
    let jobs: Vec<(String, u64)> =
        cfg.drifts.iter().flat_map(|d| (0..cfg.seeds as u64).map(move |s| (d.clone(), cfg.seed + s))).collect();
    let results: Vec<Vec<(usize, usize, f64, bool)>> = jobs
        .par_iter()
        .map(|(name, path_seed)| -> Result<_> {
            let f = drift(name, cfg.dim)?;
            let path = DyadicPath::generate(*path_seed, cfg.dim, cfg.level)?;
            (0..cfg.starts)
                .map(|j| {
                    let u0 = random_admissible_start(cfg.level, cfg.dim, derive_seed(*path_seed, j as u64));
                    let r = picard_uniqueness(&path, f.as_ref(), cfg.level, &u0, options)?;
                    Ok((j, r.iterations, *r.sup_norms.last().unwrap(), r.converged))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut t = table("starts", &["drift", "path_seed", "start", "iterations", "final_sup", "converged"]).with_plot(
        "start",
        "iterations",
        false,
        false,
    );
    let (mut ok, mut total) = (0, 0);
    for ((name, path_seed), rows) in jobs.iter().zip(&results) {
        for (j, its, sup, conv) in rows {
            total += 1;
            ok += usize::from(*conv);
            t.push(row(
                cfg,
                vec![
                    name.as_str().into(),
                    (*path_seed).into(),
                    (*j).into(),
                    (*its).into(),
                    (*sup).into(),
                    (*conv).into(),
                ],
            ));
        }
    }
    out.tables.push(t);
    out.check("all_starts_converge", ok == total, format!("{ok}/{total} converged below {}", cfg.tol));
    out.stdout = format!("converged {ok}/{total}\n");
    Ok(out)
}

fn chain(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("chain");
    let g = scalar(&cfg.fields[0], cfg.dim)?;
    let path = DyadicPath::generate(cfg.seed, cfg.dim, cfg.quad_level)?;
    let x0 = axis_point(cfg.dim, cfg.chain_x0);
    let res = euler_chain(&path, g.as_ref(), cfg.chain_n, cfg.chain_k, cfg.chain_r, &x0, cfg.quad_level)?;
    let mut pts = table("points", &["field", "n", "k", "q", "x"]).with_plot("q", "x", false, false);
    for (q, x) in res.points.iter().enumerate() {
        pts.push(row(cfg, vec![g.name().into(), cfg.chain_n.into(), cfg.chain_k.into(), q.into(), x[0].into()]));
    }
    let mut summary = table("summary", &["field", "n", "k", "r", "rho_sum", "in_regime"]);
    summary.push(row(
        cfg,
        vec![
            g.name().into(),
            cfg.chain_n.into(),
            cfg.chain_k.into(),
            cfg.chain_r.into(),
            res.rho_sum.into(),
            res.in_regime.into(),
        ],
    ));
    out.tables.push(pts);
    out.tables.push(summary);
    Ok(out)
}

fn kernels(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("kernels");
    let mut t = table("masses", &["kernel", "t", "l1_mass", "scaled_mass", "reference"]);
    let b_ref = (2.0 / std::f64::consts::PI).sqrt();
    let mut d_scaled = Vec::new();
    for which in Kernel::ALL {
        for time in &cfg.t_grid {
            let mass = kernel_l1_mass(which, *time)?;
            let (scaled, reference) = match which {
                Kernel::E => (mass, Some(1.0)),
                Kernel::B => (time.sqrt() * mass, Some(b_ref)),
                Kernel::D => (time * mass, None),
            };
            match which {
                Kernel::E => out.check(format!("E_mass/t={time}"), (mass - 1.0).abs() <= 1e-8, format!("{mass:.12}")),
                Kernel::B => out.check(
                    format!("B_scaled/t={time}"),
                    (scaled - b_ref).abs() <= 1e-6,
                    format!("{scaled:.12} vs {b_ref:.12}"),
                ),
                Kernel::D => d_scaled.push(scaled),
            }
            t.push(row(
                cfg,
                vec![which.symbol().to_string().into(), (*time).into(), mass.into(), scaled.into(), opt(reference)],
            ));
        }
    }
    let spread = d_scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - d_scaled.iter().copied().fold(f64::INFINITY, f64::min);
    out.check("D_scaled_constant", spread <= 1e-6, format!("spread {spread:e}"));
    out.stdout = String::from_utf8(t.to_csv()?)?;
    out.tables.push(t);
    Ok(out)
}

fn words(cfg: &ValidConfig) -> Result<Outcome> {
    let mut out = Outcome::new("words");
    let mut t = table("counts", &["k", "count", "expected", "even_subset_bijection"]);
    let lengths: Vec<usize> = match cfg.word_length {
        Some(k) => vec![k],
        None => (1..=16).collect(),
    };
    for k in lengths {
        let list = allowed_words(k)?;
        let count = if k <= 16 { count_allowed_exhaustive(k)? } else { list.len() as u64 };
        let expected = 1u64 << (k - 1);
        let mut masks: Vec<u32> = list.iter().map(|w| w.position_set()).collect();
        let all_even = masks.iter().all(|m| m.count_ones() % 2 == 0);
        masks.sort_unstable();
        masks.dedup();
        let bijection = all_even && masks.len() as u64 == expected && list.len() as u64 == expected;
        out.check(format!("count/k={k}"), count == expected, format!("{count} vs {expected}"));
        out.check(format!("bijection/k={k}"), bijection, "position sets are distinct even subsets");
        t.push(row(cfg, vec![k.into(), count.into(), expected.into(), bijection.into()]));
        if cfg.word_length.is_some() {
            out.stdout = format!("{count}\n");
        }
    }
    if cfg.word_length.is_none() {
        out.stdout = String::from_utf8(t.to_csv()?)?;
    }
    out.tables.push(t);
    Ok(out)
}
