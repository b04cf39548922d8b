//! Monte Carlo estimators for moments, tails and dyadic moduli of occupation
//! functionals.
//!
//! Replica `i` always uses the path seeded by `derive_seed(seed, i)`. Replicas
//! are evaluated in parallel on the ambient rayon pool and reduced in index
//! order, so results do not depend on the number of workers.

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic_path::DyadicPath;
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::occupation::{euclid, rho_window_multi, TreeSum, OVERSAMPLING};
use crate::rng::derive_seed;
use crate::stats::{ci_half_width, clopper_pearson, mean_variance};

/// One cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    /// Named parameters of the cell (`x`, `p`, `lambda`, `n`, ...).
    pub params: Vec<(String, f64)>,
    pub estimate: f64,
    pub variance: f64,
    pub ci_half_width: f64,
    pub fitted_c: Option<f64>,
    pub envelope: Option<f64>,
    pub pass: Option<bool>,
}

impl Cell {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub id: String,
    pub field: String,
    pub n_rep: usize,
    pub seed: u64,
    pub quad_level: u32,
    /// Headline value; its meaning depends on the experiment.
    pub estimate: f64,
    pub variance: f64,
    pub ci_half_width: f64,
    pub cells: Vec<Cell>,
    pub fitted_c: Option<f64>,
    /// Diagnostics raised by the sweep.
    pub flags: Vec<String>,
}

impl EstimateSummary {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass != Some(false))
    }
}

fn sample_cell(params: Vec<(String, f64)>, samples: &[f64]) -> Cell {
    let (estimate, variance) = mean_variance(samples);
    Cell {
        params,
        estimate,
        variance,
        ci_half_width: ci_half_width(variance, samples.len()),
        fitted_c: None,
        envelope: None,
        pass: None,
    }
}

fn param(name: &str, v: f64) -> (String, f64) {
    (name.to_string(), v)
}

/// Evaluates `f` on every replica path, in parallel, keeping index order.
pub fn per_replica<T: Send>(
    n_rep: usize,
    seed: u64,
    dim: usize,
    level: u32,
    f: impl Fn(&DyadicPath) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..n_rep as u64).into_par_iter().map(|i| f(&DyadicPath::generate(derive_seed(seed, i), dim, level)?)).collect()
}

/// `rho(x)` over `[a, b]` for every shift, replica-major.
pub fn sample_rho(
    g: &dyn ScalarField,
    xs: &[Vec<f64>],
    window: (f64, f64),
    n_rep: usize,
    seed: u64,
    quad_level: u32,
) -> Result<Vec<Vec<f64>>> {
    per_replica(n_rep, seed, g.dim(), quad_level, |p| rho_window_multi(p, g, window.0, window.1, xs, quad_level))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn check_order(p: u32) -> Result<()> {
    if p % 2 == 1 || !(2..=8).contains(&p) {
        return Err(Error::BadMomentOrder(p));
    }
    Ok(())
}

fn check_shift(g: &dyn ScalarField, x: &[f64]) -> Result<()> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: x.len() });
    }
    if euclid(x) > 1.0 {
        return Err(Error::InvalidArgument(format!("shift {x:?} has norm above 1")));
    }
    Ok(())
}

/// `(E[rho^p] / ((p/2)! |x|^p))^(1/p)`, zero when `|x| = 0`.
pub fn normalized_ratio(moment: f64, p: u32, x_norm: f64) -> f64 {
    if x_norm == 0.0 {
        return 0.0;
    }
    (moment.max(0.0) / (factorial(p / 2) * x_norm.powi(p as i32))).powf(1.0 / p as f64)
}

/// `E[rho(x)^p]` for every `(x, p)` from one set of replicas on `[0, 1]`.
/// The headline is the first cell; `fitted_c` is the largest cell ratio.
pub fn moment_table(
    g: &dyn ScalarField,
    xs: &[Vec<f64>],
    ps: &[u32],
    n_rep: usize,
    seed: u64,
    quad_level: u32,
) -> Result<EstimateSummary> {
    for p in ps {
        check_order(*p)?;
    }
    for x in xs {
        check_shift(g, x)?;
    }
    let samples = sample_rho(g, xs, (0.0, 1.0), n_rep, seed, quad_level)?;
    let mut cells = Vec::new();
    for (j, x) in xs.iter().enumerate() {
        let x_norm = euclid(x);
        for p in ps {
            let powers: Vec<f64> = samples.iter().map(|r| r[j].powi(*p as i32)).collect();
            let mut params: Vec<(String, f64)> = if x.len() == 1 {
                vec![param("x", x[0])]
            } else {
                x.iter().enumerate().map(|(c, v)| param(&format!("x{c}"), *v)).collect()
            };
            params.push(param("p", f64::from(*p)));
            let mut cell = sample_cell(params, &powers);
            cell.fitted_c = Some(normalized_ratio(cell.estimate, *p, x_norm));
            cells.push(cell);
        }
    }
    let head = cells.first().cloned().ok_or_else(|| Error::InvalidArgument("empty moment grid".into()))?;
    let fitted = cells.iter().filter_map(|c| c.fitted_c).fold(0.0, f64::max);
    Ok(EstimateSummary {
        id: "moments".into(),
        field: g.name(),
        n_rep,
        seed,
        quad_level,
        estimate: head.estimate,
        variance: head.variance,
        ci_half_width: head.ci_half_width,
        cells,
        fitted_c: Some(fitted),
        flags: Vec::new(),
    })
}

/// Monte Carlo estimate of `E[rho(x)^p]` with its fitted constant.
pub fn moment_bound(
    g: &dyn ScalarField,
    x: &[f64],
    p: u32,
    n_rep: usize,
    seed: u64,
    quad_level: u32,
) -> Result<EstimateSummary> {
    let mut s = moment_table(g, &[x.to_vec()], &[p], n_rep, seed, quad_level)?;
    s.id = "moment_bound".into();
    Ok(s)
}

/// Fitted constant per shift. The headline `fitted_c` is the maximum; flags
/// are raised when the constant grows monotonically as `|x| -> 0`, or when
/// the moment fails to grow with `|x|` beyond CI slack.
pub fn constant_sweep(
    g: &dyn ScalarField,
    p: u32,
    xs: &[f64],
    n_rep: usize,
    seed: u64,
    quad_level: u32,
) -> Result<EstimateSummary> {
    let points: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let mut v = vec![0.0; g.dim()];
            v[0] = *x;
            v
        })
        .collect();
    let mut s = moment_table(g, &points, &[p], n_rep, seed, quad_level)?;
    s.id = "constant_sweep".into();

    let mut order: Vec<usize> = (0..s.cells.len()).collect();
    order.sort_by(|a, b| xs[*b].abs().total_cmp(&xs[*a].abs()));
    let c: Vec<f64> = order.iter().map(|i| s.cells[*i].fitted_c.unwrap_or(0.0)).collect();
    if c.len() >= 3 && c.windows(2).all(|w| w[1] > w[0]) {
        s.flags.push("constant_grows_as_x_shrinks".into());
    }
    let shrinks = order.windows(2).all(|w| {
        let (big, small) = (&s.cells[w[0]], &s.cells[w[1]]);
        small.estimate <= big.estimate + small.ci_half_width + big.ci_half_width
    });
    if !shrinks {
        s.flags.push("moment_not_monotone_in_x".into());
    }
    Ok(s)
}

/// Exceedance frequencies `P(|rho(x)| >= lambda l^(1/2) |x|)` over `[a, b]`,
/// checked against `2 exp(-lambda^2 / (2 (1.2 c_hat)^2))` plus three
/// Clopper-Pearson half-widths.
#[allow(clippy::too_many_arguments)]
pub fn tail_bound(
    g: &dyn ScalarField,
    x: &[f64],
    window: (f64, f64),
    lambdas: &[f64],
    n_rep: usize,
    seed: u64,
    quad_level: u32,
    c_hat: f64,
) -> Result<EstimateSummary> {
    check_shift(g, x)?;
    if lambdas.iter().any(|l| !(0.0..=5.0).contains(l)) {
        return Err(Error::InvalidArgument("lambda outside [0, 5]".into()));
    }
    let samples = sample_rho(g, &[x.to_vec()], window, n_rep, seed, quad_level)?;
    let scale = (window.1 - window.0).sqrt() * euclid(x);
    let slack_c = 1.2 * c_hat;
    let mut cells = Vec::new();
    for lambda in lambdas {
        let hits = samples.iter().filter(|r| r[0].abs() >= lambda * scale).count() as u64;
        let freq = hits as f64 / n_rep as f64;
        let (lo, hi) = clopper_pearson(hits, n_rep as u64, 0.99);
        let half = 0.5 * (hi - lo);
        let envelope = 2.0 * (-lambda * lambda / (2.0 * slack_c * slack_c)).exp() + 3.0 * half;
        cells.push(Cell {
            params: vec![param("lambda", *lambda)],
            estimate: freq,
            variance: freq * (1.0 - freq),
            ci_half_width: half,
            fitted_c: Some(c_hat),
            envelope: Some(envelope),
            pass: Some(freq <= envelope),
        });
    }
    let head = cells.first().cloned().ok_or_else(|| Error::InvalidArgument("empty lambda grid".into()))?;
    Ok(EstimateSummary {
        id: "tail_bound".into(),
        field: g.name(),
        n_rep,
        seed,
        quad_level,
        estimate: head.estimate,
        variance: head.variance,
        ci_half_width: head.ci_half_width,
        cells,
        fitted_c: Some(c_hat),
        flags: Vec::new(),
    })
}

/// `E[(int_0^1 g(t, W(t)) dt)^2]` and its ratio to `||g||_p^2`.
pub fn l2_functional_bound(
    g: &dyn ScalarField,
    p: f64,
    n_rep: usize,
    seed: u64,
    quad_level: u32,
) -> Result<EstimateSummary> {
    let threshold = 1.0 + g.dim() as f64 / 2.0;
    if p <= threshold {
        return Err(Error::IntegrabilityExponent { p, threshold });
    }
    let norm = g.lp_norm(p).ok_or_else(|| Error::NotInLp(g.name()))?;
    let squares = per_replica(n_rep, seed, g.dim(), quad_level, |path| {
        let h = (-(quad_level as f64)).exp2();
        let mut acc = TreeSum::default();
        for i in 0..path.intervals() {
            acc.push(g.eval(i as f64 * h, path.node(i)));
        }
        let v = h * acc.total();
        Ok(v * v)
    })?;
    let mut cell = sample_cell(vec![param("p", p)], &squares);
    let ratio = if norm == 0.0 { 0.0 } else { cell.estimate / (norm * norm) };
    cell.fitted_c = Some(ratio);
    Ok(EstimateSummary {
        id: "l2_functional_bound".into(),
        field: g.name(),
        n_rep,
        seed,
        quad_level,
        estimate: cell.estimate,
        variance: cell.variance,
        ci_half_width: cell.ci_half_width,
        cells: vec![cell],
        fitted_c: Some(ratio),
        flags: Vec::new(),
    })
}

/// Shifts used by the dyadic sweep: `0` and `+-2^-m`, `m = 0..=6`.
pub fn dyadic_test_points() -> Vec<f64> {
    let mut xs = vec![0.0];
    for m in 0..=6 {
        let v = (-(m as f64)).exp2();
        xs.push(v);
        xs.push(-v);
    }
    xs
}

/// `2^(-n/2) |x - y| (n^(1/2) + (log+ 1/|x - y|)^(1/2))`.
pub fn rho_scale(n: u32, dist: f64) -> f64 {
    let log_term = (1.0 / dist).ln().max(0.0).sqrt();
    (-(n as f64) / 2.0).exp2() * dist * ((n as f64).sqrt() + log_term)
}

/// `n^(1/2) 2^(-n/2) (|x| + 2^(-2^n))`.
pub fn sigma_scale(n: u32, x: f64) -> f64 {
    (n as f64).sqrt() * (-(n as f64) / 2.0).exp2() * (x.abs() + (-(2f64.powi(n as i32))).exp2())
}

/// Per-path normalized maxima of `|rho_nk|` and `|sigma_nk|` for each `n`.
fn dyadic_path_maxima(path: &DyadicPath, g: &dyn ScalarField, ns: &[u32], quad_level: u32) -> (Vec<f64>, Vec<f64>) {
    let xs = dyadic_test_points();
    let n_max = *ns.iter().max().unwrap();
    let blocks = 1usize << n_max;
    let per_block = 1u64 << (quad_level - n_max);
    let h = (-(quad_level as f64)).exp2();
    let dim = path.dim();
    let mut shifted = vec![0.0; dim];
    // leaf[j][b]: sum over block b at level n_max for shift j.
    let mut leaf = vec![vec![0.0; blocks]; xs.len()];
    for b in 0..blocks as u64 {
        let mut acc = vec![TreeSum::default(); xs.len()];
        for i in b * per_block..(b + 1) * per_block {
            let t = i as f64 * h;
            let w = path.node(i);
            let base = g.eval(t, w);
            for (j, x) in xs.iter().enumerate() {
                shifted.copy_from_slice(w);
                shifted[0] += x;
                acc[j].push(g.eval(t, &shifted) - base);
            }
        }
        for (j, a) in acc.iter().enumerate() {
            leaf[j][b as usize] = h * a.total();
        }
    }
    let mut rho_max = vec![0.0; ns.len()];
    let mut sigma_max = vec![0.0; ns.len()];
    let mut level_sums = leaf;
    let mut level = n_max;
    loop {
        if let Some(slot) = ns.iter().position(|n| *n == level) {
            for (j, x) in xs.iter().enumerate() {
                let s = sigma_scale(level, *x);
                for v in &level_sums[j] {
                    sigma_max[slot] = f64::max(sigma_max[slot], v.abs() / s);
                }
                for (i, y) in xs.iter().enumerate().skip(j + 1) {
                    let s = rho_scale(level, (x - y).abs());
                    for (a, b) in level_sums[j].iter().zip(&level_sums[i]) {
                        rho_max[slot] = f64::max(rho_max[slot], (a - b).abs() / s);
                    }
                }
            }
        }
        if level == 0 || level <= *ns.iter().min().unwrap() {
            break;
        }
        level_sums = level_sums.iter().map(|v| v.chunks_exact(2).map(|p| p[0] + p[1]).collect()).collect();
        level -= 1;
    }
    (rho_max, sigma_max)
}

/// Normalized dyadic maxima per `n`, maximized over `k`, the test points and
/// the replica paths. `fitted_c` is the overall maximum. Quadrature runs at
/// `max(ns) + 6`.
pub fn dyadic_modulus_sweep(g: &dyn ScalarField, ns: &[u32], n_rep: usize, seed: u64) -> Result<EstimateSummary> {
    if ns.is_empty() || ns.iter().any(|n| !(4..=12).contains(n)) {
        return Err(Error::InvalidArgument("dyadic levels must lie in 4..=12".into()));
    }
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let quad_level = ns.last().unwrap() + OVERSAMPLING;
    let maxima = per_replica(n_rep, seed, g.dim(), quad_level, |p| Ok(dyadic_path_maxima(p, g, &ns, quad_level)))?;
    let mut cells = Vec::new();
    for (slot, n) in ns.iter().enumerate() {
        // `sigma = 0` marks rho cells, `sigma = 1` sigma cells.
        for code in [0.0, 1.0] {
            let per_path: Vec<f64> = maxima.iter().map(|(r, s)| if code == 0.0 { r[slot] } else { s[slot] }).collect();
            let mut cell = sample_cell(vec![param("n", f64::from(*n)), param("sigma", code)], &per_path);
            let worst = per_path.iter().copied().fold(0.0, f64::max);
            cell.fitted_c = Some(worst);
            cells.push(cell);
        }
    }
    let fitted = cells.iter().filter_map(|c| c.fitted_c).fold(0.0, f64::max);
    let mut flags = Vec::new();
    for code in [0.0, 1.0] {
        let v: Vec<f64> = cells.iter().filter(|c| c.param("sigma") == Some(code)).filter_map(|c| c.fitted_c).collect();
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
        if lo > 0.0 && hi / lo > 3.0 {
            flags.push(format!("{}_not_flat_in_n", if code == 0.0 { "rho" } else { "sigma" }));
        }
    }
    Ok(EstimateSummary {
        id: "dyadic_modulus_sweep".into(),
        field: g.name(),
        n_rep,
        seed,
        quad_level,
        estimate: fitted,
        variance: 0.0,
        ci_half_width: 0.0,
        cells,
        fitted_c: Some(fitted),
        flags,
    })
}

/// Ratio `max / min` of the per-`n` maxima of one kind (`sigma = false` for rho).
pub fn dyadic_flatness(summary: &EstimateSummary, sigma: bool) -> f64 {
    let code = if sigma { 1.0 } else { 0.0 };
    let v: Vec<f64> =
        summary.cells.iter().filter(|c| c.param("sigma") == Some(code)).filter_map(|c| c.fitted_c).collect();
    let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    if hi == 0.0 {
        1.0
    } else {
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::scalar;

    #[test]
    fn trivial_moments() {
        let c = scalar("const_0.7", 1).unwrap();
        let s = moment_bound(c.as_ref(), &[0.3], 2, 50, 1, 8).unwrap();
        assert_eq!(s.estimate, 0.0);
        let g = scalar("sign", 1).unwrap();
        let s = moment_bound(g.as_ref(), &[0.0], 4, 50, 1, 8).unwrap();
        assert_eq!(s.estimate, 0.0);
        assert_eq!(s.fitted_c, Some(0.0));
    }

    #[test]
    fn order_and_range_checks() {
        let g = scalar("sign", 1).unwrap();
        for p in [1, 3, 0, 10] {
            assert!(matches!(moment_bound(g.as_ref(), &[0.1], p, 10, 1, 8), Err(Error::BadMomentOrder(_))));
        }
        assert!(moment_bound(g.as_ref(), &[1.5], 2, 10, 1, 8).is_err());
        assert!(dyadic_modulus_sweep(g.as_ref(), &[3, 5], 2, 1).is_err());
    }

    #[test]
    fn ci_matches_formula() {
        let g = scalar("sign", 1).unwrap();
        let s = moment_bound(g.as_ref(), &[0.2], 2, 200, 3, 10).unwrap();
        assert_eq!(s.ci_half_width, 2.576 * (s.variance / 200.0).sqrt());
    }

    #[test]
    fn l2_preconditions() {
        let one = scalar("const_1", 1).unwrap();
        assert!(matches!(l2_functional_bound(one.as_ref(), 2.0, 10, 1, 8), Err(Error::NotInLp(_))));
        let b = scalar("box", 2).unwrap();
        assert!(matches!(l2_functional_bound(b.as_ref(), 2.0, 10, 1, 8), Err(Error::IntegrabilityExponent { .. })));
        let z = scalar("zero", 1).unwrap();
        assert_eq!(l2_functional_bound(z.as_ref(), 2.0, 10, 1, 8).unwrap().estimate, 0.0);
    }

    #[test]
    fn tail_trivial_cells() {
        let c = scalar("const_1", 1).unwrap();
        let s = tail_bound(c.as_ref(), &[0.1], (0.0, 1.0), &[0.5, 1.0], 100, 1, 8, 1.0).unwrap();
        assert!(s.cells.iter().all(|c| c.estimate == 0.0));
        let g = scalar("sign", 1).unwrap();
        let s = tail_bound(g.as_ref(), &[0.1], (0.0, 1.0), &[0.0], 100, 1, 8, 1.0).unwrap();
        assert!(s.cells[0].estimate <= 1.0 && s.all_pass());
    }

    #[test]
    fn dyadic_trivial_cases() {
        let c = scalar("const_0.4", 1).unwrap();
        let s = dyadic_modulus_sweep(c.as_ref(), &[4, 5], 3, 1).unwrap();
        assert_eq!(s.fitted_c, Some(0.0));
    }

    #[test]
    fn dyadic_block_sums_match_direct_sigma() {
        use crate::dyadic_path::DyadicIndex;
        use crate::occupation::sigma;
        let g = scalar("sign", 1).unwrap();
        let path = DyadicPath::generate(11, 1, 12).unwrap();
        let (_, sig) = dyadic_path_maxima(&path, g.as_ref(), &[5, 6], 12);
        let mut worst = 0.0f64;
        for k in 0..32 {
            for x in dyadic_test_points() {
                let v = sigma(&path, g.as_ref(), DyadicIndex::new(5, k).unwrap(), &[x], 12).unwrap().value;
                worst = worst.max(v.abs() / sigma_scale(5, x));
            }
        }
        assert!((sig[0] - worst).abs() <= 1e-12 * worst, "{} {worst}", sig[0]);
    }

    #[test]
    fn scales() {
        assert!((rho_scale(4, 1.0) - 0.25 * 2.0).abs() < 1e-15);
        assert!((sigma_scale(4, 0.0) - 2.0 * 0.25 * (-16f64).exp2()).abs() < 1e-18);
    }
}
