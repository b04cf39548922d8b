use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pathwise_cli::config::EulerStudy;
use pathwise_cli::{run, Experiment, Format, RunConfig};

#[derive(Parser)]
#[command(name = "pathwise", version, about = "Pathwise experiments for SDEs with bounded drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a Brownian path and write its nodes.
    Paths,
    /// Moments of occupation differences against the oracle and shape envelope.
    Moments,
    /// Fitted moment constant across shifts.
    Constants,
    /// Exceedance frequencies against the sub-Gaussian envelope.
    Tails,
    /// Second moment of a time integral against the L^p norm.
    L2,
    /// Normalized dyadic moduli across levels.
    Dyadic,
    /// Euler scheme on a partition, or a study (--study identities|convergence).
    Euler,
    /// Picard iteration of the perturbation equation from random starts.
    Uniqueness,
    /// Iterated dyadic chain of shifts.
    Chain,
    /// Heat-kernel L1 masses.
    Kernels,
    /// Allowed-word counts.
    Words,
    /// Every experiment with its defaults.
    All,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Paths => Experiment::Paths,
            Command::Moments => Experiment::Moments,
            Command::Constants => Experiment::Constants,
            Command::Tails => Experiment::Tails,
            Command::L2 => Experiment::L2,
            Command::Dyadic => Experiment::Dyadic,
            Command::Euler => Experiment::Euler,
            Command::Uniqueness => Experiment::Uniqueness,
            Command::Chain => Experiment::Chain,
            Command::Kernels => Experiment::Kernels,
            Command::Words => Experiment::Words,
            Command::All => Experiment::All,
        }
    }
}

#[derive(Args)]
struct Flags {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Path level L.
    #[arg(long, global = true)]
    level: Option<u32>,
    /// Quadrature level L_q.
    #[arg(long, global = true)]
    quad_level: Option<u32>,
    /// Scalar fields, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    field: Option<Vec<String>>,
    /// Drifts, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    drift: Option<Vec<String>>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Partition as kind:N.
    #[arg(long, global = true)]
    partition: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output formats: csv, json.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_format)]
    format: Option<Vec<Format>>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write gnuplot scripts next to the CSVs.
    #[arg(long, global = true)]
    emit_gnuplot: bool,
    /// Shift grid.
    #[arg(long = "x", global = true, value_delimiter = ',', allow_hyphen_values = true)]
    x_grid: Option<Vec<f64>>,
    /// Moment orders.
    #[arg(long = "p", global = true, value_delimiter = ',')]
    p_grid: Option<Vec<u32>>,
    /// Tail thresholds.
    #[arg(long = "lambda", global = true, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Dyadic levels.
    #[arg(long = "n", global = true, value_delimiter = ',')]
    n_grid: Option<Vec<u32>>,
    /// Kernel times.
    #[arg(long = "t", global = true, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// Time window a,b.
    #[arg(long, global = true, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    /// Integrability exponent for l2.
    #[arg(long, global = true)]
    lp: Option<f64>,
    /// Fixed constant for tails instead of fitting one.
    #[arg(long, global = true)]
    c_hat: Option<f64>,
    #[arg(long, global = true, value_parser = parse_study)]
    study: Option<EulerStudy>,
    #[arg(long, global = true)]
    starts: Option<usize>,
    #[arg(long, global = true)]
    seeds: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Word length.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    chain_n: Option<u32>,
    #[arg(long, global = true)]
    chain_k: Option<u64>,
    #[arg(long, global = true)]
    chain_r: Option<u64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    x0: Option<f64>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("window {s:?} is not of the form a,b"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("window {s:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(format!("unknown format {other:?}")),
    }
}

fn parse_study(s: &str) -> Result<EulerStudy, String> {
    match s {
        "single" => Ok(EulerStudy::Single),
        "identities" => Ok(EulerStudy::Identities),
        "convergence" => Ok(EulerStudy::Convergence),
        other => Err(format!("unknown study {other:?}")),
    }
}

impl Flags {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            fields: self.field.clone(),
            drifts: self.drift.clone(),
            dim: self.dim,
            seed: self.seed,
            replicas: self.replicas,
            level: self.level,
            quad_level: self.quad_level,
            x_grid: self.x_grid.clone(),
            p_grid: self.p_grid.clone(),
            lambda_grid: self.lambda_grid.clone(),
            n_grid: self.n_grid.clone(),
            t_grid: self.t_grid.clone(),
            window: self.window.map(|(a, b)| [a, b]),
            partition: self.partition.clone(),
            lp_exponent: self.lp,
            c_hat: self.c_hat,
            study: self.study,
            starts: self.starts,
            seeds: self.seeds,
            tol: self.tol,
            max_iter: self.max_iter,
            word_length: self.k,
            chain_n: self.chain_n,
            chain_k: self.chain_k,
            chain_r: self.chain_r,
            chain_x0: self.x0,
            out: self.out.clone(),
            formats: self.format.clone(),
            workers: self.workers,
            emit_gnuplot: self.emit_gnuplot.then_some(true),
            experiment: None,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let file = match &cli.flags.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e:#}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    let raw = file.overlay(&cli.flags.to_config());
    let experiment = match (cli.command, raw.experiment) {
        (Command::All, Some(e)) => e,
        (c, _) => c.experiment(),
    };
    match run(experiment, &raw) {
        Ok(report) => {
            print!("{}", report.stdout());
            let failures = report.failures();
            if failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for c in failures {
                    eprintln!("FAIL {}: {}", c.name, c.detail);
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
