//! Pathwise solvers for `x(t) = W(t) + int_0^t f(s, x(s)) ds`.
//!
//! * [`euler`] runs the Euler scheme on an arbitrary partition, including
//!   anticipating ones built from the whole path.
//! * [`picard_uniqueness`] iterates the perturbation map
//!   `u -> int_0^t f(s, W + u) - f(s, W) ds` on a dyadic grid.
//! * [`girsanov_transform`] maps a solution back to its driving path.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::dyadic_path::{DyadicPath, Skeleton};
use crate::error::{Error, Result};
use crate::fields::DriftField;
use crate::rng::stream_rng;

/// `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::EmptyPartition);
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::NonMonotonePartition);
        }
        Ok(Self { times })
    }

    /// `t_n = n T / N`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyPartition);
        }
        Self::new((0..=n).map(|i| i as f64 * horizon / n as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `max_n (t_n - t_{n-1})`, always recomputed.
    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn min_gap(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Uniform,
    RandomDyadic,
    AdversarialExtrema,
}

impl PartitionKind {
    pub fn parse(kind: &str) -> Result<Self> {
        match kind {
            "uniform" => Ok(Self::Uniform),
            "random_dyadic" => Ok(Self::RandomDyadic),
            "adversarial_extrema" => Ok(Self::AdversarialExtrema),
            other => Err(Error::UnknownPartitionKind(other.into())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::RandomDyadic => "random_dyadic",
            Self::AdversarialExtrema => "adversarial_extrema",
        }
    }
}

fn grid_times(nodes: &[u64], level: u32) -> Vec<f64> {
    let h = (-(level as f64)).exp2();
    nodes.iter().map(|k| *k as f64 * h).collect()
}

/// Builds a partition with `n` steps on `[0, T]`, `T` = the path horizon (1
/// without a path). Grid-based kinds need the path.
///
/// * `uniform`: `t_n = n T / N`, snapped to the path grid when a path is given.
/// * `random_dyadic`: `N - 1` distinct interior grid nodes drawn with `seed`.
/// * `adversarial_extrema`: anticipating. Half of the steps form a uniform
///   grid, the other half are placed at the record times of the running
///   maximum of the first coordinate, then around the time of the global
///   maximum. All points lie on a grid no finer than `1/N^2`.
pub fn partition_factory(kind: &str, n: usize, path: Option<&dyn Skeleton>, seed: u64) -> Result<Partition> {
    let kind = PartitionKind::parse(kind)?;
    if n == 0 {
        return Err(Error::EmptyPartition);
    }
    let horizon = path.map_or(1, |p| p.horizon());
    match kind {
        PartitionKind::Uniform => match path {
            None => Partition::uniform(n, horizon as f64),
            Some(p) => {
                let total = horizon * p.nodes_per_unit();
                let nodes: Vec<u64> =
                    (0..=n as u64).map(|i| ((i as f64 * total as f64 / n as f64).round()) as u64).collect();
                if nodes.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::SnapCollision { level: p.level() });
                }
                Partition::new(grid_times(&nodes, p.level()))
            }
        },
        PartitionKind::RandomDyadic => {
            let p = path.ok_or_else(|| Error::PartitionNeedsPath(kind.as_str().into()))?;
            let total = horizon * p.nodes_per_unit();
            if n as u64 > total {
                return Err(Error::BadPartitionSize { kind: kind.as_str().into(), n });
            }
            let mut rng = stream_rng(seed, 0x7061_7274);
            let mut nodes: Vec<u64> =
                sample(&mut rng, (total - 1) as usize, n - 1).into_iter().map(|i| i as u64 + 1).collect();
            nodes.push(0);
            nodes.push(total);
            nodes.sort_unstable();
            Partition::new(grid_times(&nodes, p.level()))
        }
        PartitionKind::AdversarialExtrema => {
            let p = path.ok_or_else(|| Error::PartitionNeedsPath(kind.as_str().into()))?;
            adversarial_extrema(p, n)
        }
    }
}

fn adversarial_extrema(p: &dyn Skeleton, n: usize) -> Result<Partition> {
    let bad = || Error::BadPartitionSize { kind: "adversarial_extrema".into(), n };
    if n < 2 {
        return Err(bad());
    }
    let level = p.level();
    let total = p.horizon() * p.nodes_per_unit();
    let coarse = (n / 2) as u64;
    if !total.is_multiple_of(coarse) {
        return Err(bad());
    }
    // Cluster grid: spacing 2^-c >= 1/n^2, never finer than the path grid.
    let c = ((n * n) as f64).log2().floor() as u32;
    let cluster_stride = 1u64 << level.saturating_sub(c);
    let extra = n as u64 - coarse;
    if extra > total / cluster_stride {
        return Err(bad());
    }

    let mut chosen = std::collections::BTreeSet::new();
    for i in 0..=coarse {
        chosen.insert(i * total / coarse);
    }

    let dim = p.dim();
    let mut w = vec![0.0; dim];
    let mut records = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for k in 0..=total {
        p.grid_value(k, &mut w);
        if w[0] > running {
            running = w[0];
            records.push(k);
        }
    }
    let argmax = *records.last().unwrap();

    let snap = |k: u64| ((k as f64 / cluster_stride as f64).round() as u64 * cluster_stride).min(total);
    let target = coarse + 1 + extra;
    // Highest records first.
    for k in records.iter().rev() {
        if chosen.len() as u64 >= target {
            break;
        }
        chosen.insert(snap(*k));
    }
    let centre = snap(argmax);
    let mut j = 1u64;
    while (chosen.len() as u64) < target {
        let right = centre + j * cluster_stride;
        if right <= total {
            chosen.insert(right);
        }
        if chosen.len() as u64 >= target {
            break;
        }
        if let Some(left) = centre.checked_sub(j * cluster_stride) {
            chosen.insert(left);
        }
        j += 1;
        if j * cluster_stride > total {
            return Err(bad());
        }
    }
    let nodes: Vec<u64> = chosen.into_iter().collect();
    Partition::new(grid_times(&nodes, level))
}

/// Snaps partition times to the nearest grid node of `path`; returns the node
/// indices and the largest snap distance.
pub fn snap_to_grid(path: &dyn Skeleton, partition: &Partition) -> Result<(Vec<u64>, f64)> {
    let path_horizon = path.horizon() as f64;
    if partition.horizon() > path_horizon {
        return Err(Error::HorizonTooLong { horizon: partition.horizon(), path_horizon });
    }
    let scale = path.nodes_per_unit() as f64;
    let mut nodes = Vec::with_capacity(partition.times.len());
    let mut max_snap = 0.0f64;
    for t in &partition.times {
        let k = (t * scale).round();
        max_snap = max_snap.max((t - k / scale).abs());
        nodes.push(k as u64);
    }
    if nodes.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::SnapCollision { level: path.level() });
    }
    Ok((nodes, max_snap))
}

/// Discrete Euler solution. `x = noise + drift_part` at every partition node.
#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    /// The snapped partition actually used.
    pub partition: Partition,
    /// Grid node of each partition time.
    pub nodes: Vec<u64>,
    pub dim: usize,
    /// `x_n`, node-major.
    pub states: Vec<f64>,
    /// `W(t_n)`.
    pub noise: Vec<f64>,
    /// `u_n = x_n - W(t_n)`.
    pub drift_part: Vec<f64>,
    pub drift: String,
    pub path_seed: u64,
    pub path_level: u32,
    pub scheme: &'static str,
    pub max_snap: f64,
}

impl SolveResult {
    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }

    /// Piecewise-linear interpolation of the drift part on every grid node
    /// `0..=last_node`, node-major.
    pub fn dense_drift_part(&self) -> Vec<f64> {
        let d = self.dim;
        let last = *self.nodes.last().unwrap();
        let mut out = vec![0.0; (last as usize + 1) * d];
        for seg in 0..self.nodes.len() - 1 {
            let (k0, k1) = (self.nodes[seg], self.nodes[seg + 1]);
            let len = (k1 - k0) as f64;
            for k in k0..=k1 {
                let w = (k - k0) as f64 / len;
                for c in 0..d {
                    let a = self.drift_part[seg * d + c];
                    let b = self.drift_part[(seg + 1) * d + c];
                    out[k as usize * d + c] = a + w * (b - a);
                }
            }
        }
        out
    }
}

/// Euler scheme `x_{n+1} = x_n + W(t_{n+1}) - W(t_n) + (t_{n+1} - t_n) f(t_n, x_n)`,
/// `x_0 = 0`, on the grid-snapped partition.
///
/// The recursion is carried as `u_{n+1} = u_n + dt_n f(t_n, x_n)` with
/// `x_n = W(t_n) + u_n`; the two forms are algebraically identical and the
/// second keeps the noise exact.
pub fn euler<S: Skeleton + ?Sized>(path: &S, f: &dyn DriftField, partition: &Partition) -> Result<SolveResult> {
    let d = path.dim();
    if f.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: f.dim() });
    }
    let path_dyn: &dyn Skeleton = &DynSkeleton(path);
    let (nodes, max_snap) = snap_to_grid(path_dyn, partition)?;
    let snapped = Partition::new(grid_times(&nodes, path.level()))?;
    let steps = nodes.len();
    let mut noise = vec![0.0; steps * d];
    let mut drift_part = vec![0.0; steps * d];
    let mut states = vec![0.0; steps * d];
    let mut fx = vec![0.0; d];
    for (n, node) in nodes.iter().enumerate() {
        path.grid_value(*node, &mut noise[n * d..(n + 1) * d]);
    }
    let times = snapped.times();
    for n in 0..steps {
        for c in 0..d {
            states[n * d + c] = noise[n * d + c] + drift_part[n * d + c];
        }
        if n + 1 < steps {
            let dt = times[n + 1] - times[n];
            f.eval_into(times[n], &states[n * d..(n + 1) * d], &mut fx);
            for c in 0..d {
                drift_part[(n + 1) * d + c] = drift_part[n * d + c] + dt * fx[c];
            }
        }
    }
    Ok(SolveResult {
        partition: snapped,
        nodes,
        dim: d,
        states,
        noise,
        drift_part,
        drift: f.name(),
        path_seed: path.seed(),
        path_level: path.level(),
        scheme: "euler",
        max_snap,
    })
}

struct DynSkeleton<'a, S: ?Sized>(&'a S);

impl<S: Skeleton + ?Sized> Skeleton for DynSkeleton<'_, S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn level(&self) -> u32 {
        self.0.level()
    }
    fn seed(&self) -> u64 {
        self.0.seed()
    }
    fn horizon(&self) -> u64 {
        self.0.horizon()
    }
    fn grid_value(&self, node: u64, out: &mut [f64]) {
        self.0.grid_value(node, out)
    }
}

/// Euler on every grid node of the path: the comparator for convergence studies.
pub fn reference_solution<S: Skeleton + ?Sized>(path: &S, f: &dyn DriftField) -> Result<SolveResult> {
    let steps = (path.horizon() * path.nodes_per_unit()) as usize;
    euler(path, f, &Partition::uniform(steps, path.horizon() as f64)?)
}

/// `max_n |x_n - x_ref(t_n)|` with the reference on the full path grid.
pub fn sup_error(result: &SolveResult, reference: &SolveResult) -> f64 {
    let d = result.dim;
    let mut worst = 0.0f64;
    for (n, node) in result.nodes.iter().enumerate() {
        let r = &reference.states[*node as usize * d..(*node as usize + 1) * d];
        let e = result.state(n).iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(e);
    }
    worst
}

/// Sup distance between the linearly interpolated drift parts of two solutions
/// over every grid node.
pub fn dense_distance(a: &SolveResult, b: &SolveResult) -> f64 {
    let (ua, ub) = (a.dense_drift_part(), b.dense_drift_part());
    let d = a.dim;
    ua.chunks_exact(d)
        .zip(ub.chunks_exact(d))
        .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `W'(t_n) = x_n - sum_{m<n} dt_m f(t_m, x_m)`: inverts the Euler recursion.
pub fn girsanov_transform(result: &SolveResult, f: &dyn DriftField) -> Vec<f64> {
    let d = result.dim;
    let times = result.partition.times();
    let mut acc = vec![0.0; d];
    let mut fx = vec![0.0; d];
    let mut out = Vec::with_capacity(result.states.len());
    for n in 0..times.len() {
        let x = result.state(n);
        out.extend(x.iter().zip(&acc).map(|(xv, a)| xv - a));
        if n + 1 < times.len() {
            let dt = times[n + 1] - times[n];
            f.eval_into(times[n], x, &mut fx);
            acc.iter_mut().zip(&fx).for_each(|(a, v)| *a += dt * v);
        }
    }
    out
}

/// Values of a function at `k 2^-n`, `k = 0..=2^n`, node-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridFunction {
    pub level: u32,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(level: u32, dim: usize) -> Self {
        Self { level, dim, values: vec![0.0; ((1usize << level) + 1) * dim] }
    }

    pub fn from_fn(level: u32, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Self {
        let h = (-(level as f64)).exp2();
        let values = (0..=(1u64 << level)).flat_map(|k| f(k as f64 * h)).collect();
        Self { level, dim, values }
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.chunks_exact(self.dim).map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// Checks membership in the admissible class: `u(0) = 0`, coordinates in
    /// `[-1, 1]`, and `|u(t_{k+1}) - u(t_k)| <= 2^-n`.
    pub fn check_admissible(&self) -> Result<()> {
        let h = (-(self.level as f64)).exp2();
        if self.at(0).iter().any(|v| *v != 0.0) {
            return Err(Error::InadmissibleStart("u(0) != 0".into()));
        }
        if self.values.iter().any(|v| v.abs() > 1.0) {
            return Err(Error::InadmissibleStart("leaves the unit cube".into()));
        }
        for w in self.values.windows(2 * self.dim).step_by(self.dim) {
            let jump = (0..self.dim).map(|c| (w[self.dim + c] - w[c]).powi(2)).sum::<f64>().sqrt();
            if jump > h * (1.0 + 1e-12) {
                return Err(Error::InadmissibleStart("not 1-Lipschitz".into()));
            }
        }
        Ok(())
    }
}

/// A random admissible start: piecewise linear with up to eight segments,
/// slopes of norm at most one, clamped to the unit cube.
pub fn random_admissible_start(level: u32, dim: usize, seed: u64) -> GridFunction {
    let mut rng = stream_rng(seed, 0x7374_6172);
    let segments = rng.random_range(1..=8usize);
    let mut cuts: Vec<f64> = (0..segments - 1).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let slopes: Vec<Vec<f64>> = (0..segments)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let mag: f64 = rng.random();
            dir.into_iter().map(|v| v / norm * mag).collect()
        })
        .collect();
    let h = (-(level as f64)).exp2();
    let mut values = vec![0.0; ((1usize << level) + 1) * dim];
    for k in 1..=(1usize << level) {
        let t = (k - 1) as f64 * h;
        let seg = cuts.partition_point(|c| *c <= t);
        for c in 0..dim {
            let prev = values[(k - 1) * dim + c];
            values[k * dim + c] = (prev + h * slopes[seg][c]).clamp(-1.0, 1.0);
        }
    }
    GridFunction { level, dim, values }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PicardOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub keep_iterates: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-3, keep_iterates: false }
    }
}

/// Outcome of Picard iteration for the perturbation equation.
#[derive(Clone, Debug, Serialize)]
pub struct PerturbationResult {
    pub level: u32,
    /// Sup norm of `u^(0), u^(1), ...`.
    pub sup_norms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_iterate: GridFunction,
    /// All iterates when requested, otherwise empty.
    pub iterates: Vec<GridFunction>,
}

/// Plain Picard iteration of `u -> (t -> int_0^t f(s, W(s) + u(s)) - f(s, W(s)) ds)`
/// with the left-endpoint rule on the level-`n` grid.
pub fn picard_uniqueness(
    path: &DyadicPath,
    f: &dyn DriftField,
    n: u32,
    u0: &GridFunction,
    options: PicardOptions,
) -> Result<PerturbationResult> {
    let d = path.dim();
    if f.dim() != d || u0.dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: u0.dim });
    }
    if u0.level != n {
        return Err(Error::InvalidArgument(format!("start lives on level {}, expected {n}", u0.level)));
    }
    if path.level() < n {
        return Err(Error::InsufficientPathLevel { path_level: path.level(), quad_level: n });
    }
    u0.check_admissible()?;

    let steps = 1usize << n;
    let stride = 1u64 << (path.level() - n);
    let h = (-(n as f64)).exp2();
    let mut base = vec![0.0; steps * d];
    for k in 0..steps {
        f.eval_into(k as f64 * h, path.node(k as u64 * stride), &mut base[k * d..(k + 1) * d]);
    }

    let mut current = u0.clone();
    let mut sup_norms = vec![current.sup_norm()];
    let mut iterates = Vec::new();
    if options.keep_iterates {
        iterates.push(current.clone());
    }
    let mut iterations = 0;
    let mut converged = sup_norms[0] < options.tol;
    let mut shifted = vec![0.0; d];
    let mut fx = vec![0.0; d];
    while !converged && iterations < options.max_iter {
        let mut next = GridFunction::zeros(n, d);
        let mut acc = vec![0.0; d];
        for k in 0..steps {
            let w = path.node(k as u64 * stride);
            let u = current.at(k);
            shifted.iter_mut().zip(w).zip(u).for_each(|((s, w), u)| *s = w + u);
            f.eval_into(k as f64 * h, &shifted, &mut fx);
            for c in 0..d {
                acc[c] += h * (fx[c] - base[k * d + c]);
            }
            next.values[(k + 1) * d..(k + 2) * d].copy_from_slice(&acc);
        }
        iterations += 1;
        let norm = next.sup_norm();
        sup_norms.push(norm);
        converged = norm < options.tol;
        if options.keep_iterates {
            iterates.push(next.clone());
        }
        current = next;
    }
    Ok(PerturbationResult { level: n, sup_norms, iterations, converged, final_iterate: current, iterates })
}
