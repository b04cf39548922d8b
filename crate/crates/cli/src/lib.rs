//! Batch experiment runner for the `pathwise` library.
//!
//! A run is one subcommand plus a [`RunConfig`]. Each experiment writes CSV
//! tables and a JSON manifest into the output directory; the exit status is
//! 0 when every envelope check passes, 1 when one fails and 2 on bad input.

pub mod artifacts;
pub mod config;
pub mod experiments;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};

pub use artifacts::{Check, Outcome, Table};
pub use config::{validate_config, Experiment, Format, RunConfig, ValidConfig};

pub struct Report {
    pub runs: Vec<(ValidConfig, Outcome)>,
    pub files: Vec<PathBuf>,
    pub wall_time_seconds: f64,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.runs.iter().all(|(_, o)| o.pass())
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.runs.iter().flat_map(|(_, o)| o.checks.iter().filter(|c| !c.pass)).collect()
    }

    pub fn stdout(&self) -> String {
        self.runs.iter().map(|(_, o)| o.stdout.as_str()).collect()
    }
}

/// Validates every experiment of the run up front.
pub fn plan(experiment: Experiment, raw: &RunConfig) -> Result<Vec<ValidConfig>> {
    let kinds: Vec<Experiment> = match experiment {
        Experiment::All => Experiment::RUNNABLE.to_vec(),
        e => vec![e],
    };
    kinds.into_iter().map(|k| validate_config(raw, k)).collect()
}

/// Runs the experiments on a pool of `workers` threads (default: all cores).
pub fn compute(configs: &[ValidConfig], workers: Option<usize>) -> Result<Vec<Outcome>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().context("building worker pool")?;
    pool.install(|| configs.iter().map(experiments::run_experiment).collect())
}

/// Validates, computes and writes artifacts.
pub fn run(experiment: Experiment, raw: &RunConfig) -> Result<Report> {
    let start = Instant::now();
    let configs = plan(experiment, raw)?;
    let outcomes = compute(&configs, raw.workers)?;
    let head = configs[0].clone();
    let mut files = Vec::new();
    if head.formats.contains(&Format::Csv) {
        for o in &outcomes {
            files.extend(artifacts::write_tables(&head.out, o, head.emit_gnuplot)?);
        }
    }
    let wall_time_seconds = start.elapsed().as_secs_f64();
    let runs: Vec<(ValidConfig, Outcome)> = configs.into_iter().zip(outcomes).collect();
    if head.formats.contains(&Format::Json) {
        let path = head.out.join(format!("{}_manifest.json", experiment.name()));
        let configs: Vec<&ValidConfig> = runs.iter().map(|(c, _)| c).collect();
        let manifest = artifacts::RunManifest {
            tool: "pathwise",
            version: env!("CARGO_PKG_VERSION"),
            config: &configs,
            wall_time_seconds,
            pass: runs.iter().all(|(_, o)| o.pass()),
            experiments: runs
                .iter()
                .map(|(_, o)| artifacts::ExperimentRecord {
                    experiment: &o.experiment,
                    pass: o.pass(),
                    checks: &o.checks,
                    tables: &o.tables,
                })
                .collect(),
            files: files.iter().map(|p| p.display().to_string()).collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        artifacts::write_atomic(&path, &bytes)?;
        files.push(path);
    }
    Ok(Report { runs, files, wall_time_seconds })
}
