//! Dyadic intervals, the Haar system on a mesh, and randomly shifted and
//! dilated dyadic grids.
//!
//! A [`Mesh`] is a half-open window `[a, b)` split into `2^D` equal leaf
//! cells. Its dyadic tree has the window as root (level 0) and the leaf
//! cells at level `D`. Functions are piecewise constant on the leaf cells,
//! so every Haar coefficient and every interval average is an exact finite
//! sum.
//!
//! Haar functions use the sign convention
//! `h_I = |I|^{-1/2} (χ_{I₋} − χ_{I₊})`, where `I₊` is the left half and
//! `I₋` the right half of `I`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open real interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl From<[f64; 2]> for Window {
    fn from(v: [f64; 2]) -> Self {
        Self {
            start: v[0],
            end: v[1],
        }
    }
}

impl From<Window> for [f64; 2] {
    fn from(w: Window) -> Self {
        [w.start, w.end]
    }
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::InvalidParameter(format!(
                "window [{start}, {end}) is empty or not finite"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn unit() -> Self {
        Self {
            start: 0.0,
            end: 1.0,
        }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x < self.end
    }
}

/// A dyadic interval identified by its level and index within a tree.
///
/// On a [`Mesh`] the level counts halvings of the window; on a
/// [`ShiftedGrid`] the level `n` means width `r·2^{-n}` and may be negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub level: i32,
    pub index: i64,
}

impl DyadicInterval {
    pub const fn new(level: i32, index: i64) -> Self {
        Self { level, index }
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(level {}, index {})", self.level, self.index)
    }
}

/// Parent/child structure shared by meshes and shifted grids.
pub trait DyadicTree {
    fn contains(&self, interval: DyadicInterval) -> bool;

    /// Parent within the tree, `None` at the coarsest level or when the
    /// parent falls outside the tree.
    fn parent(&self, interval: DyadicInterval) -> Option<DyadicInterval>;

    /// `(I₊, I₋)`: left and right halves.
    fn children(&self, interval: DyadicInterval) -> (DyadicInterval, DyadicInterval);
}

/// Length of the shortest parent/child path between two intervals.
pub fn tree_distance<T: DyadicTree + ?Sized>(
    tree: &T,
    a: DyadicInterval,
    b: DyadicInterval,
) -> Result<u32> {
    for x in [a, b] {
        if !tree.contains(x) {
            return Err(Error::OutsideGrid(x));
        }
    }
    let (mut x, mut y) = (a, b);
    let mut steps = 0u32;
    let climb = |i: DyadicInterval| tree.parent(i).ok_or(Error::NoCommonAncestor(a, b));
    while x.level > y.level {
        x = climb(x)?;
        steps += 1;
    }
    while y.level > x.level {
        y = climb(y)?;
        steps += 1;
    }
    while x != y {
        x = climb(x)?;
        y = climb(y)?;
        steps += 2;
    }
    Ok(steps)
}

/// Uniform leaf mesh of `2^depth` cells over a window, with its dyadic tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub window: Window,
    pub depth: u32,
}

/// Largest supported mesh depth.
pub const MAX_DEPTH: u32 = 24;

impl Mesh {
    pub fn new(window: Window, depth: u32) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::InvalidParameter(format!(
                "depth {depth} exceeds the maximum {MAX_DEPTH}"
            )));
        }
        Window::new(window.start, window.end)?;
        Ok(Self { window, depth })
    }

    /// The unit interval `[0, 1)` at the given depth.
    pub fn unit(depth: u32) -> Self {
        Self {
            window: Window::unit(),
            depth,
        }
    }

    pub fn num_cells(&self) -> usize {
        1usize << self.depth
    }

    pub fn cell_len(&self) -> f64 {
        self.window.len() / self.num_cells() as f64
    }

    pub fn cell_midpoint(&self, cell: usize) -> f64 {
        self.window.start + (cell as f64 + 0.5) * self.cell_len()
    }

    pub fn cell_bounds(&self, cell: usize) -> (f64, f64) {
        let h = self.cell_len();
        (
            self.window.start + cell as f64 * h,
            self.window.start + (cell + 1) as f64 * h,
        )
    }

    pub fn root(&self) -> DyadicInterval {
        DyadicInterval::new(0, 0)
    }

    /// Number of Haar-carrying intervals (levels `0..depth`).
    pub fn num_haar(&self) -> usize {
        self.num_cells() - 1
    }

    /// Number of intervals at all levels `0..=depth`.
    pub fn num_nodes(&self) -> usize {
        (self.num_cells() << 1) - 1
    }

    /// Breadth-first position of an interval: `2^level − 1 + index`.
    pub fn node_id(&self, i: DyadicInterval) -> usize {
        ((1usize << i.level) - 1) + i.index as usize
    }

    pub fn node(&self, id: usize) -> DyadicInterval {
        let level = (usize::BITS - (id + 1).leading_zeros() - 1) as i32;
        DyadicInterval::new(level, (id + 1 - (1usize << level)) as i64)
    }

    /// Haar-carrying intervals in breadth-first order.
    pub fn haar_intervals(&self) -> impl Iterator<Item = DyadicInterval> + '_ {
        (0..self.num_haar()).map(|id| self.node(id))
    }

    /// All intervals of the tree, leaves included, breadth-first.
    pub fn intervals(&self) -> impl Iterator<Item = DyadicInterval> + '_ {
        (0..self.num_nodes()).map(|id| self.node(id))
    }

    pub fn is_haar(&self, i: DyadicInterval) -> bool {
        self.contains(i) && (i.level as u32) < self.depth
    }

    pub fn length(&self, i: DyadicInterval) -> f64 {
        self.window.len() / (1u64 << i.level) as f64
    }

    pub fn bounds(&self, i: DyadicInterval) -> (f64, f64) {
        let len = self.length(i);
        let start = self.window.start + i.index as f64 * len;
        (start, start + len)
    }

    /// Leaf cells covered by `i`, as a half-open range.
    pub fn cell_range(&self, i: DyadicInterval) -> std::ops::Range<usize> {
        let span = 1usize << (self.depth - i.level as u32);
        let lo = i.index as usize * span;
        lo..lo + span
    }

    /// Leaf-level interval of a cell.
    pub fn leaf(&self, cell: usize) -> DyadicInterval {
        DyadicInterval::new(self.depth as i32, cell as i64)
    }

    /// Whether `inner` is contained in (or equal to) `outer`.
    pub fn is_within(&self, inner: DyadicInterval, outer: DyadicInterval) -> bool {
        inner.level >= outer.level
            && (inner.index >> (inner.level - outer.level)) == outer.index
    }

    /// Dyadic subintervals of `i` (including `i`), breadth-first, down to the
    /// given maximum level.
    pub fn subintervals(&self, i: DyadicInterval, max_level: u32) -> Vec<DyadicInterval> {
        let mut out = Vec::new();
        for level in i.level..=(max_level as i32) {
            let shift = level - i.level;
            let lo = i.index << shift;
            for k in lo..lo + (1i64 << shift) {
                out.push(DyadicInterval::new(level, k));
            }
        }
        out
    }

    pub(crate) fn check(&self, i: DyadicInterval) -> Result<()> {
        if self.contains(i) {
            Ok(())
        } else {
            Err(Error::OutsideGrid(i))
        }
    }
}

impl DyadicTree for Mesh {
    fn contains(&self, i: DyadicInterval) -> bool {
        i.level >= 0 && (i.level as u32) <= self.depth && i.index >= 0 && i.index < (1i64 << i.level)
    }

    fn parent(&self, i: DyadicInterval) -> Option<DyadicInterval> {
        (i.level > 0 && self.contains(i)).then(|| DyadicInterval::new(i.level - 1, i.index >> 1))
    }

    fn children(&self, i: DyadicInterval) -> (DyadicInterval, DyadicInterval) {
        (
            DyadicInterval::new(i.level + 1, 2 * i.index),
            DyadicInterval::new(i.level + 1, 2 * i.index + 1),
        )
    }
}

/// A vector field in `ℝ^N`, constant on each leaf cell of a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafField {
    mesh: Mesh,
    dim: usize,
    values: Vec<f64>,
}

impl LeafField {
    pub fn zeros(mesh: Mesh, dim: usize) -> Self {
        Self {
            mesh,
            dim,
            values: vec![0.0; mesh.num_cells() * dim],
        }
    }

    /// `values` is cell-major: cell `i` occupies `values[i*dim..(i+1)*dim]`.
    pub fn from_values(mesh: Mesh, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != mesh.num_cells() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} cells of dimension {dim}",
                values.len(),
                mesh.num_cells()
            )));
        }
        Ok(Self { mesh, dim, values })
    }

    pub fn from_fn(mesh: Mesh, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(mesh.num_cells() * dim);
        for c in 0..mesh.num_cells() {
            let v = f(mesh.cell_midpoint(c));
            assert_eq!(v.len(), dim);
            values.extend(v);
        }
        Self { mesh, dim, values }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.values[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.dim..(c + 1) * self.dim]
    }

    /// Unweighted `L²` norm, `(Σ_cells |cell|·|f|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.mesh.cell_len() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `L²` inner product.
    pub fn inner(&self, other: &LeafField) -> f64 {
        self.mesh.cell_len() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Squared `L²` norm restricted to the cells of `region`.
    pub fn l2_norm_sq_on(&self, region: DyadicInterval) -> f64 {
        let r = self.mesh.cell_range(region);
        self.mesh.cell_len()
            * self.values[r.start * self.dim..r.end * self.dim]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
    }

    pub fn add(&self, other: &LeafField) -> LeafField {
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        out
    }

    pub fn scale(&self, s: f64) -> LeafField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|a| *a *= s);
        out
    }

    pub fn max_abs_diff(&self, other: &LeafField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub(crate) fn same_mesh(&self, mesh: &Mesh) -> Result<()> {
        if &self.mesh != mesh {
            return Err(Error::Shape(format!(
                "field lives on {:?}, expected {:?}",
                self.mesh, mesh
            )));
        }
        Ok(())
    }
}

/// Haar coefficients `f_I ∈ ℝ^N` of every Haar-carrying interval of a mesh,
/// plus the coefficient of the normalized indicator of the root.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoefficients {
    mesh: Mesh,
    dim: usize,
    mean: Vec<f64>,
    /// Breadth-first by node id, `dim` entries per interval.
    entries: Vec<f64>,
}

impl HaarCoefficients {
    pub fn zeros(mesh: Mesh, dim: usize) -> Self {
        Self {
            mesh,
            dim,
            mean: vec![0.0; dim],
            entries: vec![0.0; mesh.num_haar() * dim],
        }
    }

    /// Single unit coefficient `e_component ⊗ h_I`.
    pub fn unit(mesh: Mesh, dim: usize, interval: DyadicInterval, component: usize) -> Result<Self> {
        let mut c = Self::zeros(mesh, dim);
        c.get_mut(interval)?[component] = 1.0;
        Ok(c)
    }

    /// From a flat vector in the basis `{e_j ⊗ h_I}` (interval-major, no mean).
    pub fn from_flat(mesh: Mesh, dim: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != mesh.num_haar() * dim {
            return Err(Error::Shape(format!(
                "{} coefficients for {} intervals of dimension {dim}",
                flat.len(),
                mesh.num_haar()
            )));
        }
        Ok(Self {
            mesh,
            dim,
            mean: vec![0.0; dim],
            entries: flat.to_vec(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_mut(&mut self) -> &mut [f64] {
        &mut self.mean
    }

    /// Interval coefficients, flat and interval-major (mean excluded).
    pub fn flat(&self) -> &[f64] {
        &self.entries
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn get(&self, i: DyadicInterval) -> Result<&[f64]> {
        if !self.mesh.is_haar(i) {
            return Err(Error::OutsideGrid(i));
        }
        let id = self.mesh.node_id(i);
        Ok(&self.entries[id * self.dim..(id + 1) * self.dim])
    }

    pub fn get_mut(&mut self, i: DyadicInterval) -> Result<&mut [f64]> {
        if !self.mesh.is_haar(i) {
            return Err(Error::OutsideGrid(i));
        }
        let id = self.mesh.node_id(i);
        Ok(&mut self.entries[id * self.dim..(id + 1) * self.dim])
    }

    #[inline]
    pub(crate) fn by_id(&self, id: usize) -> &[f64] {
        &self.entries[id * self.dim..(id + 1) * self.dim]
    }

    #[inline]
    pub(crate) fn by_id_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.entries[id * self.dim..(id + 1) * self.dim]
    }

    /// Same coefficients with the mean slot zeroed.
    pub fn without_mean(mut self) -> Self {
        self.mean.fill(0.0);
        self
    }

    /// `|mean|² + Σ_I |f_I|²`, the squared `L²` norm of the synthesized field.
    pub fn norm_sq(&self) -> f64 {
        self.mean.iter().chain(&self.entries).map(|v| v * v).sum()
    }

    pub fn add(&self, other: &HaarCoefficients) -> HaarCoefficients {
        let mut out = self.clone();
        out.mean.iter_mut().zip(&other.mean).for_each(|(a, b)| *a += b);
        out.entries.iter_mut().zip(&other.entries).for_each(|(a, b)| *a += b);
        out
    }

    pub fn scale(&self, s: f64) -> HaarCoefficients {
        let mut out = self.clone();
        out.mean.iter_mut().for_each(|a| *a *= s);
        out.entries.iter_mut().for_each(|a| *a *= s);
        out
    }

    pub fn max_abs_diff(&self, other: &HaarCoefficients) -> f64 {
        self.mean
            .iter()
            .chain(&self.entries)
            .zip(other.mean.iter().chain(&other.entries))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Exact finite Haar transform of a leaf field.
pub fn haar_decompose(f: &LeafField, mesh: &Mesh) -> Result<HaarCoefficients> {
    f.same_mesh(mesh)?;
    let dim = f.dim;
    let h = mesh.cell_len();
    // Integrals ∫_I f at the current level, interval-major.
    let mut sums: Vec<f64> = f.values.iter().map(|v| v * h).collect();
    let mut out = HaarCoefficients::zeros(*mesh, dim);
    for level in (0..mesh.depth as i32).rev() {
        let count = 1usize << level;
        let inv_sqrt_len = 1.0 / mesh.length(DyadicInterval::new(level, 0)).sqrt();
        let mut parent = vec![0.0; count * dim];
        for k in 0..count {
            let left = &sums[(2 * k) * dim..(2 * k + 1) * dim];
            let right = &sums[(2 * k + 1) * dim..(2 * k + 2) * dim];
            let id = mesh.node_id(DyadicInterval::new(level, k as i64));
            let coef = out.by_id_mut(id);
            for j in 0..dim {
                coef[j] = inv_sqrt_len * (right[j] - left[j]);
                parent[k * dim + j] = left[j] + right[j];
            }
        }
        sums = parent;
    }
    let inv_sqrt_root = 1.0 / mesh.window.len().sqrt();
    for j in 0..dim {
        out.mean[j] = sums[j] * inv_sqrt_root;
    }
    Ok(out)
}

/// Inverse of [`haar_decompose`]: evaluates
/// `mean·|root|^{-1/2} + Σ_I f_I h_I` on every leaf cell.
pub fn haar_reconstruct(c: &HaarCoefficients, mesh: &Mesh) -> Result<LeafField> {
    if &c.mesh != mesh {
        return Err(Error::Shape("coefficients belong to a different mesh".into()));
    }
    let dim = c.dim;
    let mut level_vals: Vec<f64> = c.mean.iter().map(|m| m / mesh.window.len().sqrt()).collect();
    for level in 0..mesh.depth as i32 {
        let count = 1usize << level;
        let inv_sqrt_len = 1.0 / mesh.length(DyadicInterval::new(level, 0)).sqrt();
        let mut next = vec![0.0; 2 * count * dim];
        for k in 0..count {
            let id = mesh.node_id(DyadicInterval::new(level, k as i64));
            let coef = c.by_id(id);
            for j in 0..dim {
                let base = level_vals[k * dim + j];
                let step = coef[j] * inv_sqrt_len;
                next[(2 * k) * dim + j] = base - step;
                next[(2 * k + 1) * dim + j] = base + step;
            }
        }
        level_vals = next;
    }
    LeafField::from_values(*mesh, dim, level_vals)
}

/// A dyadic lattice dilated by `r ∈ [1, 2)` and translated level by level.
///
/// Level `n` consists of the intervals
/// `r·([k·2^{-n}, (k+1)·2^{-n}) + ω_n)` with `ω_n = Σ_{n<j≤finest} β_j 2^{-j}`,
/// restricted to those lying entirely inside the window. Because
/// `ω_n = ω_{n+1} + β_{n+1} 2^{-(n+1)}`, every level-`n` interval is the
/// disjoint union of two level-`(n+1)` intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedGrid {
    dilation: f64,
    /// `β_j` for `j = coarsest+1 ..= finest`.
    bits: Vec<u8>,
    coarsest: i32,
    finest: i32,
    window: Window,
    /// `ω_n` for `n = coarsest ..= finest`.
    offsets: Vec<f64>,
}

/// Inclusive index range of a grid level that fits inside the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelRange {
    pub lo: i64,
    pub hi: i64,
}

impl LevelRange {
    pub fn len(&self) -> usize {
        if self.hi < self.lo {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, k: i64) -> bool {
        k >= self.lo && k <= self.hi
    }
}

impl ShiftedGrid {
    /// Grid with explicit shift bits (`bits[j - coarsest - 1] = β_j`).
    pub fn new(dilation: f64, bits: Vec<u8>, window: Window, coarsest: i32, finest: i32) -> Result<Self> {
        if !(1.0..2.0).contains(&dilation) {
            return Err(Error::InvalidParameter(format!(
                "dilation {dilation} outside [1, 2)"
            )));
        }
        if finest <= coarsest {
            return Err(Error::InvalidParameter(format!(
                "level range {coarsest}..={finest} is empty"
            )));
        }
        if bits.len() != (finest - coarsest) as usize || bits.iter().any(|b| *b > 1) {
            return Err(Error::InvalidParameter(format!(
                "expected {} shift bits in {{0, 1}}",
                finest - coarsest
            )));
        }
        Window::new(window.start, window.end)?;
        let mut offsets = vec![0.0; (finest - coarsest + 1) as usize];
        for n in (coarsest..finest).rev() {
            let pos = (n - coarsest) as usize;
            let beta = bits[pos] as f64;
            offsets[pos] = offsets[pos + 1] + beta * (-(n + 1) as f64).exp2();
        }
        let grid = Self {
            dilation,
            bits,
            coarsest,
            finest,
            window,
            offsets,
        };
        // Coarse levels may be empty (truncated by the window); the
        // finest Haar level must not be.
        if grid.level_range(finest - 1).is_empty() {
            return Err(Error::InvalidParameter(format!(
                "window {:?} holds no interval of level {}",
                window,
                finest - 1
            )));
        }
        Ok(grid)
    }

    /// The unshifted, undilated grid on `window`.
    pub fn standard(window: Window, coarsest: i32, finest: i32) -> Result<Self> {
        Self::new(1.0, vec![0; (finest - coarsest).max(0) as usize], window, coarsest, finest)
    }

    pub fn dilation(&self) -> f64 {
        self.dilation
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn coarsest(&self) -> i32 {
        self.coarsest
    }

    pub fn finest(&self) -> i32 {
        self.finest
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn offset(&self, level: i32) -> f64 {
        self.offsets[(level - self.coarsest) as usize]
    }

    fn beta(&self, j: i32) -> i64 {
        self.bits[(j - self.coarsest - 1) as usize] as i64
    }

    pub fn width(&self, level: i32) -> f64 {
        self.dilation * (-level as f64).exp2()
    }

    pub fn bounds(&self, i: DyadicInterval) -> (f64, f64) {
        let unit = (-i.level as f64).exp2();
        let off = self.offset(i.level);
        (
            self.dilation * (i.index as f64 * unit + off),
            self.dilation * ((i.index + 1) as f64 * unit + off),
        )
    }

    /// Index of the level-`level` interval containing `x` (ignoring the window).
    pub fn locate(&self, level: i32, x: f64) -> i64 {
        ((x / self.dilation - self.offset(level)) * (level as f64).exp2()).floor() as i64
    }

    /// Indices of the level's intervals lying inside the window.
    pub fn level_range(&self, level: i32) -> LevelRange {
        let tol = 1e-12 * self.window.len();
        let mut lo = self.locate(level, self.window.start) - 1;
        while self.bounds(DyadicInterval::new(level, lo)).0 < self.window.start - tol {
            lo += 1;
        }
        let mut hi = self.locate(level, self.window.end) + 1;
        while self.bounds(DyadicInterval::new(level, hi)).1 > self.window.end + tol {
            hi -= 1;
        }
        LevelRange { lo, hi }
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.coarsest..=self.finest
    }

    /// Haar-carrying levels: every level whose children are still in the grid.
    pub fn haar_levels(&self) -> std::ops::Range<i32> {
        self.coarsest..self.finest
    }

    /// Whether every interval is the disjoint union of its two children.
    pub fn is_consistent(&self) -> bool {
        for level in self.haar_levels() {
            let range = self.level_range(level);
            for k in range.lo..=range.hi {
                let i = DyadicInterval::new(level, k);
                let (l, r) = self.children(i);
                let (a, b) = self.bounds(i);
                let (la, lb) = self.bounds(l);
                let (ra, rb) = self.bounds(r);
                let tol = 1e-12 * (b - a);
                if (la - a).abs() > tol || (lb - ra).abs() > tol || (rb - b).abs() > tol {
                    return false;
                }
                if self.parent(l) != Some(i) || self.parent(r) != Some(i) {
                    return false;
                }
            }
        }
        true
    }
}

impl DyadicTree for ShiftedGrid {
    fn contains(&self, i: DyadicInterval) -> bool {
        self.levels().contains(&i.level) && self.level_range(i.level).contains(i.index)
    }

    fn parent(&self, i: DyadicInterval) -> Option<DyadicInterval> {
        if i.level <= self.coarsest || !self.contains(i) {
            return None;
        }
        let p = DyadicInterval::new(i.level - 1, (i.index - self.beta(i.level)).div_euclid(2));
        self.contains(p).then_some(p)
    }

    fn children(&self, i: DyadicInterval) -> (DyadicInterval, DyadicInterval) {
        let left = 2 * i.index + self.beta(i.level + 1);
        (
            DyadicInterval::new(i.level + 1, left),
            DyadicInterval::new(i.level + 1, left + 1),
        )
    }
}

/// Draws the shift bits `β_j` i.i.d. fair from a generator seeded with `seed`.
pub fn sample_shifted_grid(
    seed: u64,
    dilation: f64,
    window: Window,
    coarsest: i32,
    finest: i32,
) -> Result<ShiftedGrid> {
    if finest <= coarsest {
        return Err(Error::InvalidParameter(format!(
            "level range {coarsest}..={finest} is empty"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = (coarsest..finest).map(|_| rng.random::<bool>() as u8).collect();
    ShiftedGrid::new(dilation, bits, window, coarsest, finest)
}

/// Haar coefficients on the in-window intervals of a shifted grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCoefficients {
    pub dim: usize,
    pub coarsest: i32,
    /// One entry per Haar level: its index range and `dim` values per index.
    pub levels: Vec<(LevelRange, Vec<f64>)>,
}

impl GridCoefficients {
    pub fn zeros_like(grid: &ShiftedGrid, dim: usize) -> Self {
        let levels = grid
            .haar_levels()
            .map(|n| {
                let r = grid.level_range(n);
                (r, vec![0.0; r.len() * dim])
            })
            .collect();
        Self {
            dim,
            coarsest: grid.coarsest,
            levels,
        }
    }

    pub fn get(&self, i: DyadicInterval) -> Option<&[f64]> {
        let pos = usize::try_from(i.level - self.coarsest).ok()?;
        let (range, vals) = self.levels.get(pos)?;
        if !range.contains(i.index) {
            return None;
        }
        let k = (i.index - range.lo) as usize;
        Some(&vals[k * self.dim..(k + 1) * self.dim])
    }
}

/// Running integral `x ↦ ∫_{window.start}^{x} f` of a leaf field.
pub(crate) struct PrefixIntegral<'a> {
    field: &'a LeafField,
    cumulative: Vec<f64>,
}

impl<'a> PrefixIntegral<'a> {
    pub(crate) fn new(field: &'a LeafField) -> Self {
        let dim = field.dim;
        let h = field.mesh.cell_len();
        let cells = field.mesh.num_cells();
        let mut cumulative = vec![0.0; (cells + 1) * dim];
        for c in 0..cells {
            for j in 0..dim {
                cumulative[(c + 1) * dim + j] = cumulative[c * dim + j] + h * field.values[c * dim + j];
            }
        }
        Self { field, cumulative }
    }

    pub(crate) fn eval(&self, x: f64, out: &mut [f64]) {
        let mesh = &self.field.mesh;
        let dim = self.field.dim;
        let cells = mesh.num_cells();
        let h = mesh.cell_len();
        let pos = (x - mesh.window.start) / h;
        if pos <= 0.0 {
            out.fill(0.0);
            return;
        }
        if pos >= cells as f64 {
            out.copy_from_slice(&self.cumulative[cells * dim..]);
            return;
        }
        let c = (pos.floor() as usize).min(cells - 1);
        let frac = (pos - c as f64) * h;
        for j in 0..dim {
            out[j] = self.cumulative[c * dim + j] + frac * self.field.values[c * dim + j];
        }
    }
}

impl ShiftedGrid {
    /// Inner products `⟨f, h_I⟩` of a leaf field with the Haar functions of
    /// every in-window Haar-carrying interval. Exact for piecewise-constant `f`.
    pub fn analyze(&self, f: &LeafField) -> GridCoefficients {
        let dim = f.dim;
        let prefix = PrefixIntegral::new(f);
        let mut out = GridCoefficients::zeros_like(self, dim);
        let (mut fa, mut fm, mut fb) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        for (pos, level) in self.haar_levels().enumerate() {
            let (range, vals) = &mut out.levels[pos];
            let inv_sqrt = 1.0 / self.width(level).sqrt();
            for k in range.lo..=range.hi {
                let (a, b) = self.bounds(DyadicInterval::new(level, k));
                let m = 0.5 * (a + b);
                prefix.eval(a, &mut fa);
                prefix.eval(m, &mut fm);
                prefix.eval(b, &mut fb);
                let slot = (k - range.lo) as usize * dim;
                for j in 0..dim {
                    vals[slot + j] = inv_sqrt * ((fb[j] - fm[j]) - (fm[j] - fa[j]));
                }
            }
        }
        out
    }

    /// Cell averages of `Σ_I c_I h_I` over the leaf cells of `mesh`: the
    /// `L²` projection of the synthesized function onto the mesh.
    pub fn synthesize(&self, c: &GridCoefficients, mesh: &Mesh) -> LeafField {
        let dim = c.dim;
        let cells = mesh.num_cells();
        let h = mesh.cell_len();
        // G(x) = Σ_I c_I ∫_{-∞}^x h_I at every cell boundary.
        let mut running = vec![0.0; (cells + 1) * dim];
        for (b, slot) in running.chunks_mut(dim).enumerate() {
            let x = mesh.window.start + b as f64 * h;
            for (pos, level) in self.haar_levels().enumerate() {
                let (range, vals) = &c.levels[pos];
                let k = self.locate(level, x);
                if !range.contains(k) {
                    continue;
                }
                let (a, e) = self.bounds(DyadicInterval::new(level, k));
                let m = 0.5 * (a + e);
                let inv_sqrt = 1.0 / (e - a).sqrt();
                let weight = if x < m { -(x - a) } else { -(e - x) } * inv_sqrt;
                if weight == 0.0 {
                    continue;
                }
                let base = (k - range.lo) as usize * dim;
                for j in 0..dim {
                    slot[j] += weight * vals[base + j];
                }
            }
        }
        let mut out = LeafField::zeros(*mesh, dim);
        for cell in 0..cells {
            for j in 0..dim {
                out.values[cell * dim + j] =
                    (running[(cell + 1) * dim + j] - running[cell * dim + j]) / h;
            }
        }
        out
    }
}
