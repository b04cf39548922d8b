//! Run configuration: a flat TOML document plus command-line overrides.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use pathwise::dyadic_path::MAX_LEVEL;
use pathwise::fields::{drift, scalar};
use pathwise::kernel_lab::words::MAX_WORD_LEN;
use pathwise::occupation::OVERSAMPLING;
use pathwise::solver::PartitionKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Paths,
    Moments,
    Constants,
    Tails,
    L2,
    Dyadic,
    Euler,
    Uniqueness,
    Chain,
    Kernels,
    Words,
    All,
}

impl Experiment {
    pub const RUNNABLE: [Experiment; 11] = [
        Experiment::Paths,
        Experiment::Moments,
        Experiment::Constants,
        Experiment::Tails,
        Experiment::L2,
        Experiment::Dyadic,
        Experiment::Euler,
        Experiment::Uniqueness,
        Experiment::Chain,
        Experiment::Kernels,
        Experiment::Words,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Paths => "paths",
            Experiment::Moments => "moments",
            Experiment::Constants => "constants",
            Experiment::Tails => "tails",
            Experiment::L2 => "l2",
            Experiment::Dyadic => "dyadic",
            Experiment::Euler => "euler",
            Experiment::Uniqueness => "uniqueness",
            Experiment::Chain => "chain",
            Experiment::Kernels => "kernels",
            Experiment::Words => "words",
            Experiment::All => "all",
        }
    }
}

/// Euler modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EulerStudy {
    /// One solve on the configured partition.
    Single,
    /// Exact identities for `zero` and constant drifts and the Girsanov round trip.
    Identities,
    /// Uniform refinement against a reference solve plus partition comparison.
    Convergence,
}

/// Output formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// Raw configuration as read from a file; every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub fields: Option<Vec<String>>,
    pub drifts: Option<Vec<String>>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub level: Option<u32>,
    pub quad_level: Option<u32>,
    pub x_grid: Option<Vec<f64>>,
    pub p_grid: Option<Vec<u32>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub n_grid: Option<Vec<u32>>,
    pub t_grid: Option<Vec<f64>>,
    pub window: Option<[f64; 2]>,
    pub partition: Option<String>,
    pub lp_exponent: Option<f64>,
    pub c_hat: Option<f64>,
    pub study: Option<EulerStudy>,
    pub starts: Option<usize>,
    pub seeds: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub word_length: Option<usize>,
    pub chain_n: Option<u32>,
    pub chain_k: Option<u64>,
    pub chain_r: Option<u64>,
    pub chain_x0: Option<f64>,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
    pub workers: Option<usize>,
    pub emit_gnuplot: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid config document")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    /// Values set in `flags` win.
    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        overlay!(self, flags;
            experiment, fields, drifts, dim, seed, replicas, level, quad_level, x_grid, p_grid,
            lambda_grid, n_grid, t_grid, window, partition, lp_exponent, c_hat, study, starts,
            seeds, tol, max_iter, word_length, chain_n, chain_k, chain_r, chain_x0, out, formats,
            workers, emit_gnuplot);
        self
    }
}

/// `kind:N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    pub steps: usize,
}

impl PartitionSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let (kind, n) = text.split_once(':').context("partition must look like kind:N")?;
        let kind = PartitionKind::parse(kind)?;
        let steps: usize = n.parse().with_context(|| format!("bad step count {n:?}"))?;
        ensure!(steps >= 1, "partition needs at least one step");
        Ok(Self { kind, steps })
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.kind.as_str(), self.steps)
    }
}

/// Fully resolved configuration for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidConfig {
    pub experiment: Experiment,
    pub fields: Vec<String>,
    pub drifts: Vec<String>,
    pub dim: usize,
    pub seed: u64,
    pub replicas: usize,
    pub level: u32,
    pub quad_level: u32,
    pub x_grid: Vec<f64>,
    pub p_grid: Vec<u32>,
    pub lambda_grid: Vec<f64>,
    pub n_grid: Vec<u32>,
    pub t_grid: Vec<f64>,
    pub window: [f64; 2],
    pub partition: PartitionSpec,
    pub lp_exponent: f64,
    pub c_hat: Option<f64>,
    pub study: EulerStudy,
    pub starts: usize,
    pub seeds: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub word_length: Option<usize>,
    pub chain_n: u32,
    pub chain_k: u64,
    pub chain_r: u64,
    pub chain_x0: f64,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub workers: Option<usize>,
    pub emit_gnuplot: bool,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Fills defaults for `experiment` and checks ranges.
pub fn validate_config(raw: &RunConfig, experiment: Experiment) -> Result<ValidConfig> {
    use Experiment::*;
    let default_fields: &[&str] = match experiment {
        Moments => &["sign", "checkerboard_4", "lip_sin"],
        Constants => &["lip_sin", "sign"],
        L2 => &["box"],
        _ => &["sign"],
    };
    let default_x: &[f64] = match experiment {
        Moments => &[0.5, 0.1, 0.02],
        Constants => &[0.5, 0.1, 0.02, 0.004],
        _ => &[0.1],
    };
    let default_p: &[u32] = match experiment {
        Moments => &[2, 4, 6],
        _ => &[2],
    };
    let n_grid = raw.n_grid.clone().unwrap_or_else(|| (4..=10).collect());
    let default_quad = match experiment {
        Dyadic => n_grid.iter().max().copied().unwrap_or(10) + OVERSAMPLING,
        _ => 12,
    };
    let cfg = ValidConfig {
        experiment,
        fields: raw.fields.clone().unwrap_or_else(|| strings(default_fields)),
        drifts: raw.drifts.clone().unwrap_or_else(|| strings(&["sign"])),
        dim: raw.dim.unwrap_or(1),
        seed: raw.seed.unwrap_or(1),
        replicas: raw.replicas.unwrap_or(10_000),
        level: raw.level.unwrap_or(14),
        quad_level: raw.quad_level.unwrap_or(default_quad),
        x_grid: raw.x_grid.clone().unwrap_or_else(|| default_x.to_vec()),
        p_grid: raw.p_grid.clone().unwrap_or_else(|| default_p.to_vec()),
        lambda_grid: raw.lambda_grid.clone().unwrap_or_else(|| (0..7).map(|i| 1.0 + 0.5 * i as f64).collect()),
        n_grid,
        t_grid: raw.t_grid.clone().unwrap_or_else(|| vec![0.01, 0.25, 1.0]),
        window: raw.window.unwrap_or([0.0, 1.0]),
        partition: PartitionSpec::parse(raw.partition.as_deref().unwrap_or("uniform:256"))?,
        lp_exponent: raw.lp_exponent.unwrap_or(2.0),
        c_hat: raw.c_hat,
        study: raw.study.unwrap_or(EulerStudy::Single),
        starts: raw.starts.unwrap_or(10),
        seeds: raw.seeds.unwrap_or(1),
        tol: raw.tol.unwrap_or(1e-3),
        max_iter: raw.max_iter.unwrap_or(500),
        word_length: raw.word_length,
        chain_n: raw.chain_n.unwrap_or(8),
        chain_k: raw.chain_k.unwrap_or(0),
        chain_r: raw.chain_r.unwrap_or(16),
        chain_x0: raw.chain_x0.unwrap_or(0.1),
        out: raw.out.clone().unwrap_or_else(|| PathBuf::from("pathwise-out")),
        formats: raw.formats.clone().unwrap_or_else(|| vec![Format::Csv, Format::Json]),
        workers: raw.workers,
        emit_gnuplot: raw.emit_gnuplot.unwrap_or(false),
    };
    check(&cfg, raw)?;
    Ok(cfg)
}

fn check(cfg: &ValidConfig, raw: &RunConfig) -> Result<()> {
    ensure!(cfg.dim >= 1, "dim must be at least 1");
    ensure!((1..=MAX_LEVEL).contains(&cfg.level), "level {} outside 1..={MAX_LEVEL}", cfg.level);
    ensure!(
        (OVERSAMPLING..=MAX_LEVEL).contains(&cfg.quad_level),
        "quad_level {} outside {OVERSAMPLING}..={MAX_LEVEL}",
        cfg.quad_level
    );
    ensure!(cfg.replicas >= 1, "replicas must be at least 1");
    if let Some(w) = cfg.workers {
        ensure!(w >= 1, "workers must be at least 1");
    }
    for p in &cfg.p_grid {
        if p % 2 == 1 || !(2..=8).contains(p) {
            bail!("moment order p = {p} rejected: p must be an even integer between 2 and 8");
        }
    }
    for x in &cfg.x_grid {
        ensure!(x.abs() <= 1.0, "shift {x} outside [-1, 1]");
    }
    for l in &cfg.lambda_grid {
        ensure!((0.0..=5.0).contains(l), "lambda {l} outside [0, 5]");
    }
    for n in &cfg.n_grid {
        ensure!((4..=12).contains(n), "dyadic level {n} outside 4..=12");
    }
    for t in &cfg.t_grid {
        ensure!(*t > 0.0, "kernel time {t} must be positive");
    }
    let [a, b] = cfg.window;
    ensure!(0.0 <= a && a < b && b <= 1.0, "window [{a}, {b}] must satisfy 0 <= a < b <= 1");
    ensure!(cfg.tol > 0.0, "tol must be positive");
    ensure!(cfg.starts >= 1 && cfg.seeds >= 1, "starts and seeds must be at least 1");
    if let Some(k) = cfg.word_length {
        ensure!((1..=MAX_WORD_LEN).contains(&k), "word length {k} outside 1..={MAX_WORD_LEN}");
    }
    let n_max = cfg.n_grid.iter().max().copied().unwrap_or(0);
    if cfg.experiment == Experiment::Dyadic && raw.quad_level.is_some() && cfg.quad_level != n_max + OVERSAMPLING {
        if cfg.quad_level < n_max + OVERSAMPLING {
            bail!(
                "quad_level {} is below the oversampling floor n + {OVERSAMPLING} = {} of the dyadic sweep",
                cfg.quad_level,
                n_max + OVERSAMPLING
            );
        }
        bail!("the dyadic sweep runs its quadrature at n + {OVERSAMPLING} = {}", n_max + OVERSAMPLING);
    }
    if cfg.experiment == Experiment::Chain {
        ensure!(
            cfg.quad_level >= cfg.chain_n + OVERSAMPLING,
            "quad_level {} is below the oversampling floor n + {OVERSAMPLING} = {}",
            cfg.quad_level,
            cfg.chain_n + OVERSAMPLING
        );
    }
    for name in &cfg.fields {
        scalar(name, cfg.dim)?;
    }
    for name in &cfg.drifts {
        drift(name, cfg.dim)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let raw = RunConfig::from_toml("").unwrap();
        let cfg = validate_config(&raw, Experiment::Moments).unwrap();
        assert_eq!((cfg.level, cfg.quad_level, cfg.replicas, cfg.seed), (14, 12, 10_000, 1));
    }

    #[test]
    fn odd_p_rejected_with_reason() {
        let raw = RunConfig::from_toml("p_grid = [3]").unwrap();
        let err = validate_config(&raw, Experiment::Moments).unwrap_err().to_string();
        assert!(err.contains("even"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("colour = 3").is_err());
    }

    #[test]
    fn dyadic_oversampling_floor() {
        let raw = RunConfig::from_toml("quad_level = 12\nn_grid = [4, 8]").unwrap();
        let err = validate_config(&raw, Experiment::Dyadic).unwrap_err().to_string();
        assert!(err.contains("oversampling"), "{err}");
        let raw = RunConfig::from_toml("n_grid = [4, 8]").unwrap();
        assert_eq!(validate_config(&raw, Experiment::Dyadic).unwrap().quad_level, 14);
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::from_toml("seed = 5\nreplicas = 20").unwrap();
        let flags = RunConfig { seed: Some(9), ..Default::default() };
        let merged = file.overlay(&flags);
        assert_eq!((merged.seed, merged.replicas), (Some(9), Some(20)));
    }

    #[test]
    fn ranges_checked() {
        for doc in ["level = 30", "quad_level = 3", "x_grid = [1.5]", "n_grid = [2]", "partition = \"spiral:4\""] {
            let raw = RunConfig::from_toml(doc).unwrap();
            assert!(validate_config(&raw, Experiment::Dyadic).is_err(), "{doc}");
        }
        let raw = RunConfig::from_toml("fields = [\"nope\"]").unwrap();
        assert!(validate_config(&raw, Experiment::Moments).is_err());
    }
}
