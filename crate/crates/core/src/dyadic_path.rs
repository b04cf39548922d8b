//! Brownian paths on `[0, 1]` stored on dyadic grids.
//!
//! A path is built by Brownian-bridge bisection. The midpoint variate of every
//! node is drawn from a key derived from `(seed, level, index, coordinate)`, so
//! refining a path in place yields exactly the path that direct generation at
//! the finer level would have produced.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, node_key, normal_from_key};

/// Highest supported grid level (2^24 intervals).
pub const MAX_LEVEL: u32 = 24;

const DUMP_MAGIC: &[u8; 8] = b"DYADPATH";
const DUMP_VERSION: u32 = 1;

/// The dyadic interval `[k 2^-n, (k+1) 2^-n]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub n: u32,
    pub k: u64,
}

impl DyadicIndex {
    pub fn new(n: u32, k: u64) -> Result<Self> {
        if n > 62 || k >= (1u64 << n) {
            return Err(Error::BadDyadicIndex { n, k });
        }
        Ok(Self { n, k })
    }

    pub fn start(&self) -> f64 {
        self.k as f64 * self.len()
    }

    pub fn end(&self) -> f64 {
        (self.k + 1) as f64 * self.len()
    }

    pub fn len(&self) -> f64 {
        (-(self.n as f64)).exp2()
    }

    /// The two halves at level `n + 1`.
    pub fn children(&self) -> (DyadicIndex, DyadicIndex) {
        (DyadicIndex { n: self.n + 1, k: 2 * self.k }, DyadicIndex { n: self.n + 1, k: 2 * self.k + 1 })
    }

    /// Node range `[first, last)` of this interval's left endpoints on a grid
    /// of level `level >= n`.
    pub fn node_range(&self, level: u32) -> (u64, u64) {
        let shift = level - self.n;
        (self.k << shift, (self.k + 1) << shift)
    }
}

/// How a path's values came about; only generated paths can be refined.
#[derive(Clone, Debug, PartialEq)]
pub enum PathOrigin {
    Generated,
    /// `t -> l^{-1/2} (W(a + t l) - W(a))` of a parent path.
    Rescaled {
        parent_seed: u64,
        a: f64,
        b: f64,
    },
}

/// A `d`-dimensional Brownian path sampled at `k 2^-L`, `k = 0..=2^L`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicPath {
    dim: usize,
    level: u32,
    seed: u64,
    frozen: bool,
    origin: PathOrigin,
    /// Time-major, coordinate-minor.
    values: Vec<f64>,
}

fn check_level(level: u32) -> Result<()> {
    if level > MAX_LEVEL {
        return Err(Error::LevelTooHigh { level, max: MAX_LEVEL });
    }
    Ok(())
}

/// Bisects every level in `from_level + 1 ..= to_level`. `values` is laid out
/// at `to_level` and already holds the nodes of `from_level`.
fn fill_levels(values: &mut [f64], dim: usize, seed: u64, from_level: u32, to_level: u32) {
    for level in (from_level + 1)..=to_level {
        let stride = 1usize << (to_level - level);
        // Midpoint of an interval of length 2^-(level-1) has variance 2^-(level+1).
        let sd = (-((level + 1) as f64) / 2.0).exp2();
        let count = 1u64 << (level - 1);
        for m in 0..count {
            let index = 2 * m + 1;
            let pos = index as usize * stride;
            let (left, right) = (pos - stride, pos + stride);
            for c in 0..dim {
                let z = normal_from_key(node_key(seed, level, index, c as u32));
                values[pos * dim + c] = 0.5 * (values[left * dim + c] + values[right * dim + c]) + sd * z;
            }
        }
    }
}

impl DyadicPath {
    /// Generates the path of `seed` at grid level `level`.
    pub fn generate(seed: u64, dim: usize, level: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        check_level(level)?;
        let nodes = (1usize << level) + 1;
        let mut values = vec![0.0; nodes * dim];
        let last = nodes - 1;
        for c in 0..dim {
            values[last * dim + c] = normal_from_key(node_key(seed, 0, 0, c as u32));
        }
        fill_levels(&mut values, dim, seed, 0, level);
        Ok(Self { dim, level, seed, frozen: false, origin: PathOrigin::Generated, values })
    }

    /// Builds a path from raw grid values. `values[0..dim]` must be zero.
    pub fn from_values(seed: u64, dim: usize, level: u32, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        check_level(level)?;
        let expected = ((1usize << level) + 1) * dim;
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        if values[..dim].iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidArgument("path must start at the origin".into()));
        }
        Ok(Self { dim, level, seed, frozen: false, origin: PathOrigin::Generated, values })
    }

    /// Refines in place to `level`; values already present are untouched.
    pub fn refine(&mut self, level: u32) -> Result<()> {
        if level < self.level {
            return Err(Error::RefineBelowCurrent { current: self.level, requested: level });
        }
        if level == self.level {
            return Ok(());
        }
        if self.frozen || self.origin != PathOrigin::Generated {
            return Err(Error::Frozen);
        }
        check_level(level)?;
        let dim = self.dim;
        let factor = 1usize << (level - self.level);
        let mut values = vec![0.0; ((1usize << level) + 1) * dim];
        for (k, chunk) in self.values.chunks_exact(dim).enumerate() {
            values[k * factor * dim..(k * factor + 1) * dim].copy_from_slice(chunk);
        }
        fill_levels(&mut values, dim, self.seed, self.level, level);
        self.values = values;
        self.level = level;
        Ok(())
    }

    /// Refined copy; `self` is left as is.
    pub fn refined(&self, level: u32) -> Result<Self> {
        let mut out = self.clone();
        out.refine(level)?;
        Ok(out)
    }

    /// Marks the path immutable; it can then be shared freely between readers.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn origin(&self) -> &PathOrigin {
        &self.origin
    }

    /// Number of grid intervals, `2^L`.
    pub fn intervals(&self) -> u64 {
        1u64 << self.level
    }

    pub fn spacing(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Position at grid node `k`, i.e. at time `k 2^-L`.
    #[inline]
    pub fn node(&self, k: u64) -> &[f64] {
        let k = k as usize;
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Position at an arbitrary time in `[0, 1]`. Off-grid times are linearly
    /// interpolated; the flag reports whether `t` was a grid node.
    pub fn value_at(&self, t: f64) -> Result<(Vec<f64>, bool)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("time {t} outside [0, 1]")));
        }
        let scaled = t * self.intervals() as f64;
        let left = scaled.floor();
        if left == scaled {
            return Ok((self.node(left as u64).to_vec(), true));
        }
        let w = scaled - left;
        let (a, b) = (self.node(left as u64), self.node(left as u64 + 1));
        Ok((a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect(), false))
    }

    /// Increments over the level-L grid, flattened like `values`.
    pub fn increments(&self) -> Vec<f64> {
        let d = self.dim;
        self.values.windows(2 * d).step_by(d).flat_map(|w| (0..d).map(move |c| w[d + c] - w[c])).collect()
    }

    /// The path `t -> l^{-1/2} (W(a + t l) - W(a))`, `l = b - a = 2^-m`, on the
    /// grid of level `L - m`. The result is frozen.
    pub fn rescale_window(&self, a: f64, b: f64) -> Result<Self> {
        let misaligned = || Error::MisalignedWindow { a, b, level: self.level };
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(misaligned());
        }
        let n = self.intervals() as f64;
        let (ka, kb) = (a * n, b * n);
        if ka.fract() != 0.0 || kb.fract() != 0.0 {
            return Err(misaligned());
        }
        let span = (kb - ka) as u64;
        if !span.is_power_of_two() {
            return Err(misaligned());
        }
        let m = self.level - span.trailing_zeros();
        let len = b - a;
        let scale = 1.0 / len.sqrt();
        let d = self.dim;
        let start = ka as u64;
        let base = self.node(start).to_vec();
        let mut values = Vec::with_capacity((span as usize + 1) * d);
        for j in 0..=span {
            for (c, w) in self.node(start + j).iter().enumerate() {
                values.push(scale * (w - base[c]));
            }
        }
        Ok(Self {
            dim: d,
            level: self.level - m,
            seed: self.seed,
            frozen: true,
            origin: PathOrigin::Rescaled { parent_seed: self.seed, a, b },
            values,
        })
    }

    /// Writes the binary dump: magic, version, d, L, seed, then little-endian
    /// `f64` values in time-major, coordinate-minor order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&self.level.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::MalformedDump(e.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::MalformedDump("bad magic".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word).map_err(io)?;
        let version = u32::from_le_bytes(word);
        if version != DUMP_VERSION {
            return Err(Error::MalformedDump(format!("unsupported version {version}")));
        }
        input.read_exact(&mut word).map_err(io)?;
        let dim = u32::from_le_bytes(word) as usize;
        input.read_exact(&mut word).map_err(io)?;
        let level = u32::from_le_bytes(word);
        let mut long = [0u8; 8];
        input.read_exact(&mut long).map_err(io)?;
        let seed = u64::from_le_bytes(long);
        check_level(level)?;
        let count = ((1usize << level) + 1) * dim;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut long).map_err(io)?;
            values.push(f64::from_le_bytes(long));
        }
        Self::from_values(seed, dim, level, values)
    }
}

/// Read access to a Brownian skeleton on a uniform grid over `[0, horizon]`.
pub trait Skeleton: Sync {
    fn dim(&self) -> usize;
    fn level(&self) -> u32;
    fn seed(&self) -> u64;
    /// Number of unit blocks covered.
    fn horizon(&self) -> u64;
    /// Position at global grid node `node` (time `node 2^-L`).
    fn grid_value(&self, node: u64, out: &mut [f64]);

    fn nodes_per_unit(&self) -> u64 {
        1u64 << self.level()
    }
}

impl Skeleton for DyadicPath {
    fn dim(&self) -> usize {
        self.dim
    }
    fn level(&self) -> u32 {
        self.level
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn horizon(&self) -> u64 {
        1
    }
    fn grid_value(&self, node: u64, out: &mut [f64]) {
        out.copy_from_slice(self.node(node));
    }
}

/// Brownian motion on `[0, T]` made of unit blocks; block `j > 0` uses the
/// sub-seed `derive_seed(seed, j)` and starts where block `j - 1` ends.
#[derive(Clone, Debug)]
pub struct BlockPath {
    seed: u64,
    blocks: Vec<DyadicPath>,
    offsets: Vec<Vec<f64>>,
}

impl BlockPath {
    pub fn generate(seed: u64, dim: usize, level: u32, blocks: u64) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::InvalidArgument("at least one block is required".into()));
        }
        let mut paths = Vec::with_capacity(blocks as usize);
        let mut offsets = Vec::with_capacity(blocks as usize);
        let mut offset = vec![0.0; dim];
        for j in 0..blocks {
            let block_seed = if j == 0 { seed } else { derive_seed(seed, j) };
            let path = DyadicPath::generate(block_seed, dim, level)?;
            offsets.push(offset.clone());
            let end = path.node(path.intervals());
            offset.iter_mut().zip(end).for_each(|(o, e)| *o += e);
            paths.push(path);
        }
        Ok(Self { seed, blocks: paths, offsets })
    }

    pub fn blocks(&self) -> &[DyadicPath] {
        &self.blocks
    }
}

impl Skeleton for BlockPath {
    fn dim(&self) -> usize {
        self.blocks[0].dim
    }
    fn level(&self) -> u32 {
        self.blocks[0].level
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn horizon(&self) -> u64 {
        self.blocks.len() as u64
    }
    fn grid_value(&self, node: u64, out: &mut [f64]) {
        let per = self.nodes_per_unit();
        let (mut block, mut k) = (node / per, node % per);
        if block == self.horizon() {
            block -= 1;
            k = per;
        }
        let path = &self.blocks[block as usize];
        for ((o, w), off) in out.iter_mut().zip(path.node(k)).zip(&self.offsets[block as usize]) {
            *o = off + w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn sample_variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn starts_at_origin() {
        let p = DyadicPath::generate(42, 1, 4).unwrap();
        assert_eq!(p.node(0), &[0.0]);
        assert_eq!(p.values().len(), 17);
    }

    #[test]
    fn refinement_preserves_coarse_nodes() {
        let coarse = DyadicPath::generate(42, 1, 4).unwrap();
        let fine = coarse.refined(8).unwrap();
        for k in 0..=16 {
            assert_eq!(coarse.node(k), fine.node(k * 16));
        }
    }

    #[test]
    fn refine_matches_direct_generation() {
        for seed in [0u64, 7, 42, u64::MAX] {
            let refined = DyadicPath::generate(seed, 1, 4).unwrap().refined(8).unwrap();
            assert_eq!(refined, DyadicPath::generate(seed, 1, 8).unwrap());
        }
        let two_step = DyadicPath::generate(3, 3, 2).unwrap().refined(5).unwrap().refined(9).unwrap();
        assert_eq!(two_step, DyadicPath::generate(3, 3, 9).unwrap());
    }

    #[test]
    fn identity_refinement() {
        let mut p = DyadicPath::generate(5, 2, 6).unwrap();
        let before = p.clone();
        p.refine(6).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn two_dimensional_endpoints_survive_refinement() {
        let p = DyadicPath::generate(11, 2, 0).unwrap();
        let q = p.refined(12).unwrap();
        assert_eq!(p.node(1), q.node(1 << 12));
        assert_eq!(q.node(0), &[0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert_eq!(DyadicPath::generate(1, 0, 3), Err(Error::ZeroDimension));
        assert!(matches!(DyadicPath::generate(1, 1, 25), Err(Error::LevelTooHigh { .. })));
        let mut p = DyadicPath::generate(1, 1, 6).unwrap();
        assert!(matches!(p.refine(5), Err(Error::RefineBelowCurrent { .. })));
        p.freeze();
        assert_eq!(p.refine(7), Err(Error::Frozen));
    }

    #[test]
    fn increment_variance_regression() {
        // seed 42, level 10: frozen from the reference generator.
        let p = DyadicPath::generate(42, 1, 10).unwrap();
        let inc = p.increments();
        assert_eq!(inc.len(), 1024);
        let ratio = sample_variance(&inc) * 1024.0;
        assert!((0.8..=1.2).contains(&ratio), "ratio {ratio}");
        assert!((ratio - INCREMENT_VARIANCE_RATIO_SEED42).abs() < 1e-12, "ratio {ratio}");
    }

    const INCREMENT_VARIANCE_RATIO_SEED42: f64 = 1.0062155561022477;

    #[test]
    fn rescale_identity_and_quarter_window() {
        let p = DyadicPath::generate(9, 1, 8).unwrap();
        let same = p.rescale_window(0.0, 1.0).unwrap();
        assert_eq!(same.values(), p.values());
        let quarter = p.rescale_window(0.0, 0.25).unwrap();
        assert_eq!(quarter.level(), 6);
        assert_eq!(quarter.node(quarter.intervals())[0], 2.0 * p.node(64)[0]);
        assert!(quarter.is_frozen());
    }

    #[test]
    fn rescaled_increments_have_grid_variance() {
        let p = DyadicPath::generate(42, 1, 12).unwrap();
        let w = p.rescale_window(0.5, 0.75).unwrap();
        let ratio = sample_variance(&w.increments()) / w.spacing();
        assert!((0.8..=1.2).contains(&ratio), "ratio {ratio}");
        assert!((ratio - RESCALED_VARIANCE_RATIO_SEED42).abs() < 1e-12, "ratio {ratio}");
    }

    const RESCALED_VARIANCE_RATIO_SEED42: f64 = 0.9858896458392894;

    #[test]
    fn rescale_rejects_misaligned_windows() {
        let p = DyadicPath::generate(9, 1, 8).unwrap();
        assert!(p.rescale_window(0.1, 0.5).is_err());
        assert!(p.rescale_window(0.0, 0.75).is_err());
        assert!(p.rescale_window(0.5, 0.5).is_err());
    }

    #[test]
    fn interpolates_off_grid() {
        let p = DyadicPath::generate(2, 1, 2).unwrap();
        let (v, on_grid) = p.value_at(0.25).unwrap();
        assert!(on_grid);
        assert_eq!(v[0], p.node(1)[0]);
        let (v, on_grid) = p.value_at(0.125).unwrap();
        assert!(!on_grid);
        assert!((v[0] - 0.5 * (p.node(0)[0] + p.node(1)[0])).abs() < 1e-15);
    }

    #[test]
    fn endpoint_statistics_over_many_seeds() {
        let n = 10_000;
        let ends: Vec<f64> = (0..n)
            .map(|i| {
                let p = DyadicPath::generate(derive_seed(2024, i), 1, 8).unwrap();
                p.node(p.intervals())[0]
            })
            .collect();
        let var = sample_variance(&ends);
        assert!((0.97..=1.03).contains(&var), "var {var}");
        let mut sorted = ends.clone();
        sorted.sort_by(f64::total_cmp);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let nf = n as f64;
        let ks = sorted
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let c = normal.cdf(*x);
                (c - i as f64 / nf).abs().max(((i + 1) as f64 / nf - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.628 / nf.sqrt(), "ks {ks}");
    }

    #[test]
    fn block_path_is_continuous_across_blocks() {
        let bp = BlockPath::generate(4, 1, 5, 3).unwrap();
        let mut a = [0.0];
        let mut b = [0.0];
        bp.grid_value(32, &mut a);
        bp.grid_value(33, &mut b);
        let first = &bp.blocks()[0];
        assert_eq!(a[0], first.node(32)[0]);
        assert_eq!(b[0], a[0] + bp.blocks()[1].node(1)[0]);
        bp.grid_value(96, &mut a);
        assert_eq!(bp.horizon(), 3);
        assert!(a[0].is_finite());
    }

    #[test]
    fn dump_rejects_garbage() {
        assert!(DyadicPath::read_dump(&b"NOTAPATH"[..]).is_err());
    }

    proptest! {
        #[test]
        fn dump_round_trips(seed in any::<u64>(), dim in 1usize..4, level in 0u32..8) {
            let p = DyadicPath::generate(seed, dim, level).unwrap();
            let mut buf = Vec::new();
            p.write_dump(&mut buf).unwrap();
            prop_assert_eq!(buf.len(), 28 + 8 * p.values().len());
            let q = DyadicPath::read_dump(&buf[..]).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn coarse_nodes_preserved(seed in any::<u64>(), lo in 0u32..10, extra in 1u32..6) {
            let p = DyadicPath::generate(seed, 2, lo).unwrap();
            let q = p.refined(lo + extra).unwrap();
            for k in 0..=p.intervals() {
                prop_assert_eq!(p.node(k), q.node(k << extra));
            }
        }
    }
}
