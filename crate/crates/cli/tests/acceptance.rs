//! Acceptance suite: one PASS/FAIL line per criterion, run in order.
//!
//! `cargo test -p pathwise-cli --test acceptance -- --nocapture`

use std::io::Write;
use std::time::Instant;

use pathwise_cli::config::EulerStudy;
use pathwise_cli::{compute, plan, Experiment, Outcome, RunConfig, ValidConfig};

/// Largest normalized dyadic maximum for `sign`, n = 4..=10, 200 paths, seed 1.
/// Frozen from the first verified run.
const FROZEN_C_DYADIC: f64 = 2.958_048_780_487_805;

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn report(v: &Verdict) {
    let mut err = std::io::stderr();
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(err, "[{tag}] criterion {:>2}: {} ({:.1} s) {}", v.id, v.title, v.seconds, v.detail);
}

fn configs(kind: Experiment, raw: RunConfig) -> Vec<ValidConfig> {
    plan(kind, &raw).expect("valid acceptance config")
}

fn failures(outcomes: &[Outcome]) -> String {
    let failed: Vec<String> = outcomes
        .iter()
        .flat_map(|o| o.checks.iter().filter(|c| !c.pass).map(|c| format!("{}: {}", c.name, c.detail)))
        .collect();
    if failed.is_empty() {
        let n: usize = outcomes.iter().map(|o| o.checks.len()).sum();
        format!("{n} checks")
    } else {
        failed.join("; ")
    }
}

fn all_pass(outcomes: &[Outcome]) -> bool {
    !outcomes.is_empty() && outcomes.iter().all(Outcome::pass)
}

fn csv_bytes(outcomes: &[Outcome]) -> Vec<(String, Vec<u8>)> {
    outcomes
        .iter()
        .flat_map(|o| o.tables.iter().map(move |t| (format!("{}_{}", o.experiment, t.name), t.to_csv().unwrap())))
        .collect()
}

fn cell(outcome: &Outcome, table: &str, column: &str) -> Vec<String> {
    let t = outcome.table(table).expect("table");
    let i = t.header.iter().position(|h| h == column).expect("column");
    t.rows.iter().map(|r| r[i].render()).collect()
}

struct Criterion {
    id: u32,
    title: &'static str,
    configs: Vec<ValidConfig>,
    extra: fn(&[Outcome]) -> (bool, String),
}

fn no_extra(_: &[Outcome]) -> (bool, String) {
    (true, String::new())
}

fn dyadic_regression(outcomes: &[Outcome]) -> (bool, String) {
    let c: f64 = cell(&outcomes[0], "summary", "c_dyadic")[0].parse().unwrap();
    (c <= FROZEN_C_DYADIC * (1.0 + 1e-12), format!("C_dyadic = {c:.6} vs frozen {FROZEN_C_DYADIC:.6}"))
}

fn stochastic_criteria() -> Vec<Criterion> {
    let f = |v: &[&str]| Some(v.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    vec![
        Criterion {
            id: 3,
            title: "second-moment oracle equivalence",
            configs: configs(
                Experiment::Moments,
                RunConfig {
                    fields: f(&["sign", "box"]),
                    x_grid: Some(vec![0.5, 0.1]),
                    p_grid: Some(vec![2]),
                    replicas: Some(10_000),
                    quad_level: Some(12),
                    ..Default::default()
                },
            ),
            extra: no_extra,
        },
        Criterion {
            id: 4,
            title: "moment shape",
            configs: configs(
                Experiment::Moments,
                RunConfig {
                    fields: f(&["sign", "checkerboard_4", "lip_sin"]),
                    x_grid: Some(vec![0.5, 0.1, 0.02]),
                    p_grid: Some(vec![2, 4, 6]),
                    replicas: Some(10_000),
                    ..Default::default()
                },
            ),
            extra: no_extra,
        },
        Criterion {
            id: 5,
            title: "tail shape",
            configs: configs(
                Experiment::Tails,
                RunConfig {
                    fields: f(&["sign"]),
                    x_grid: Some(vec![0.1]),
                    lambda_grid: Some((0..7).map(|i| 1.0 + 0.5 * i as f64).collect()),
                    replicas: Some(100_000),
                    ..Default::default()
                },
            ),
            extra: no_extra,
        },
        Criterion {
            id: 6,
            title: "dyadic scaling",
            configs: configs(
                Experiment::Dyadic,
                RunConfig {
                    fields: f(&["sign"]),
                    n_grid: Some((4..=10).collect()),
                    replicas: Some(200),
                    ..Default::default()
                },
            ),
            extra: dyadic_regression,
        },
        Criterion {
            id: 7,
            title: "Euler identities",
            configs: configs(
                Experiment::Euler,
                RunConfig { study: Some(EulerStudy::Identities), seed: Some(7), ..Default::default() },
            ),
            extra: no_extra,
        },
        Criterion {
            id: 8,
            title: "partition-independent convergence",
            configs: configs(
                Experiment::Euler,
                RunConfig {
                    study: Some(EulerStudy::Convergence),
                    seed: Some(7),
                    drifts: f(&["sign"]),
                    level: Some(18),
                    ..Default::default()
                },
            ),
            extra: no_extra,
        },
        Criterion {
            id: 9,
            title: "pathwise uniqueness",
            configs: configs(
                Experiment::Uniqueness,
                RunConfig {
                    drifts: f(&["sign", "checkerboard_4", "time_flip"]),
                    seeds: Some(20),
                    starts: Some(10),
                    level: Some(14),
                    tol: Some(1e-3),
                    ..Default::default()
                },
            ),
            extra: no_extra,
        },
    ]
}

fn run_simple(id: u32, title: &'static str, kind: Experiment, raw: RunConfig) -> Verdict {
    let start = Instant::now();
    let outcomes = compute(&configs(kind, raw), Some(1)).expect("run");
    Verdict {
        id,
        title,
        pass: all_pass(&outcomes),
        detail: failures(&outcomes),
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[test]
fn acceptance() {
    let mut verdicts = Vec::new();

    let v = run_simple(1, "allowed-word combinatorics", Experiment::Words, RunConfig::default());
    report(&v);
    verdicts.push(v);

    let v = run_simple(2, "kernel mass scaling", Experiment::Kernels, RunConfig::default());
    report(&v);
    verdicts.push(v);

    let mut reference_csv = Vec::new();
    let criteria = stochastic_criteria();
    for c in &criteria {
        let start = Instant::now();
        let outcomes = compute(&c.configs, Some(1)).expect("run");
        let (extra_ok, extra_detail) = (c.extra)(&outcomes);
        let v = Verdict {
            id: c.id,
            title: c.title,
            pass: all_pass(&outcomes) && extra_ok,
            detail: format!("{} {extra_detail}", failures(&outcomes)),
            seconds: start.elapsed().as_secs_f64(),
        };
        report(&v);
        verdicts.push(v);
        reference_csv.push(csv_bytes(&outcomes));
    }

    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (c, reference) in criteria.iter().zip(&reference_csv) {
        let again = csv_bytes(&compute(&c.configs, Some(8)).expect("run"));
        for ((name, a), (_, b)) in reference.iter().zip(&again) {
            compared += 1;
            if a != b {
                mismatches.push(name.clone());
            }
        }
        if reference.len() != again.len() {
            mismatches.push(format!("criterion {} table count", c.id));
        }
    }
    let v = Verdict {
        id: 10,
        title: "worker-count reproducibility",
        pass: mismatches.is_empty() && compared > 0,
        detail: if mismatches.is_empty() {
            format!("{compared} CSV tables byte-identical at 1 and 8 workers")
        } else {
            format!("differing: {}", mismatches.join(", "))
        },
        seconds: start.elapsed().as_secs_f64(),
    };
    report(&v);
    verdicts.push(v);

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
