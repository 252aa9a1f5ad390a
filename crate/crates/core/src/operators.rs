//! Haar-side operators, their weighted realizations and norm scans.
//!
//! Every operator here acts on [`HaarCoefficients`] and annihilates the mean
//! slot. Weighted versions are realized on plain leaf fields as
//! `g ↦ U^{1/2}·R·op·Dec·V^{-1/2} g`, the unweighted picture of
//! `op: L²(V) → L²(U)`. Fields are handled through their raw cell values; the
//! uniform cell length rescales input and output alike, so matrix norms
//! computed on values are `L²` operator norms.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{haar_decompose, haar_reconstruct, tree_distance, DyadicInterval, DyadicTree, HaarCoefficients, LeafField, Mesh};
use crate::matops::{self, LinearOperator, Matrix};
use crate::weights::MatrixWeight;
use crate::{Error, Result};

/// Dense matrices up to this many columns get their norm from a full
/// symmetric eigensolve instead of power iteration.
pub const DENSE_NORM_LIMIT: usize = 512;

/// Largest singular value of an assembled matrix.
pub fn dense_norm(m: &Matrix) -> Result<f64> {
    if m.cols().min(m.rows()) <= DENSE_NORM_LIMIT {
        Ok(matops::spectral_norm(m))
    } else {
        matops::largest_singular_value(m)
    }
}

/// A linear map on Haar coefficients.
pub trait HaarOperator: Sync {
    fn apply(&self, c: &HaarCoefficients) -> Result<HaarCoefficients>;
}

/// Identity on the interval coefficients; drops the mean.
#[derive(Clone, Copy, Debug, Default)]
pub struct HaarIdentity;

impl HaarOperator for HaarIdentity {
    fn apply(&self, c: &HaarCoefficients) -> Result<HaarCoefficients> {
        Ok(c.clone().without_mean())
    }
}

// ---------------------------------------------------------------------------
// martingale transforms

/// `σ(I) ∈ {+1, −1}`, `+1` unless listed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SignPattern {
    entries: BTreeMap<DyadicInterval, i8>,
}

impl SignPattern {
    pub fn plus() -> Self {
        Self::default()
    }

    pub fn minus(mesh: &Mesh) -> Self {
        Self::from_fn(mesh, |_| -1)
    }

    /// `−1` on odd levels.
    pub fn alternating(mesh: &Mesh) -> Self {
        Self::from_fn(mesh, |i| if i.level % 2 == 1 { -1 } else { 1 })
    }

    /// Fair independent signs.
    pub fn random(mesh: &Mesh, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self::default();
        for i in mesh.haar_intervals() {
            if rng.random::<bool>() {
                s.entries.insert(i, -1);
            }
        }
        s
    }

    /// Bit `id` of `bits` set means `σ = −1` on the interval with node id `id`.
    pub fn from_bits(mesh: &Mesh, bits: u64) -> Self {
        Self::from_fn(mesh, |i| if bits >> mesh.node_id(i) & 1 == 1 { -1 } else { 1 })
    }

    fn from_fn(mesh: &Mesh, f: impl Fn(DyadicInterval) -> i8) -> Self {
        let entries = mesh.haar_intervals().map(|i| (i, f(i))).filter(|(_, s)| *s == -1).collect();
        Self { entries }
    }

    pub fn set(&mut self, i: DyadicInterval, sign: i8) -> Result<()> {
        match sign {
            1 => {
                self.entries.remove(&i);
            }
            -1 => {
                self.entries.insert(i, -1);
            }
            _ => return Err(Error::InvalidParameter(format!("sign {sign} is not ±1"))),
        }
        Ok(())
    }

    pub fn sign(&self, i: DyadicInterval) -> f64 {
        if self.entries.contains_key(&i) {
            -1.0
        } else {
            1.0
        }
    }
}

pub fn martingale_transform(sigma: &SignPattern, c: &HaarCoefficients) -> HaarCoefficients {
    let mesh = *c.mesh();
    let mut out = c.clone().without_mean();
    for (&i, _) in sigma.entries.iter().filter(|(i, _)| mesh.is_haar(**i)) {
        out.by_id_mut(mesh.node_id(i)).iter_mut().for_each(|v| *v = -*v);
    }
    out
}

impl HaarOperator for SignPattern {
    fn apply(&self, c: &HaarCoefficients) -> Result<HaarCoefficients> {
        Ok(martingale_transform(self, c))
    }
}

// ---------------------------------------------------------------------------
// block multipliers

/// `f_I ↦ B_I f_I` with one `N×N` block per Haar interval.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMultiplier {
    mesh: Mesh,
    dim: usize,
    blocks: Vec<Option<Matrix>>,
}

impl BlockMultiplier {
    pub fn empty(mesh: Mesh, dim: usize) -> Self {
        Self {
            mesh,
            dim,
            blocks: vec![None; mesh.num_haar()],
        }
    }

    pub fn identity(mesh: Mesh, dim: usize) -> Self {
        Self {
            mesh,
            dim,
            blocks: vec![Some(Matrix::identity(dim)); mesh.num_haar()],
        }
    }

    pub fn insert(&mut self, i: DyadicInterval, block: Matrix) -> Result<()> {
        if !self.mesh.is_haar(i) {
            return Err(Error::OutsideGrid(i));
        }
        if block.rows() != self.dim || block.cols() != self.dim {
            return Err(Error::Shape(format!(
                "{}×{} block for dimension {}",
                block.rows(),
                block.cols(),
                self.dim
            )));
        }
        self.blocks[self.mesh.node_id(i)] = Some(block);
        Ok(())
    }

    pub fn get(&self, i: DyadicInterval) -> Option<&Matrix> {
        if !self.mesh.is_haar(i) {
            return None;
        }
        self.blocks[self.mesh.node_id(i)].as_ref()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

pub fn block_multiply(b: &BlockMultiplier, c: &HaarCoefficients) -> Result<HaarCoefficients> {
    if c.mesh() != &b.mesh || c.dim() != b.dim {
        return Err(Error::Shape("block multiplier and coefficients disagree on mesh or dimension".into()));
    }
    let mut out = HaarCoefficients::zeros(b.mesh, b.dim);
    for (id, block) in b.blocks.iter().enumerate() {
        let x = c.by_id(id);
        match block {
            Some(m) => m.matvec_into(x, out.by_id_mut(id)),
            None if x.iter().any(|v| *v != 0.0) => return Err(Error::MissingBlock(b.mesh.node(id))),
            None => {}
        }
    }
    Ok(out)
}

impl HaarOperator for BlockMultiplier {
    fn apply(&self, c: &HaarCoefficients) -> Result<HaarCoefficients> {
        block_multiply(self, c)
    }
}

fn blocks_from(w: &MatrixWeight, f: impl Fn(&Matrix) -> Result<Matrix> + Sync, source: impl Fn(DyadicInterval) -> DyadicInterval + Sync) -> Result<BlockMultiplier> {
    let mesh = *w.mesh();
    let avg = w.averages();
    let blocks = mesh
        .haar_intervals()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|i| f(avg.get(source(i))).map(Some))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockMultiplier {
        mesh,
        dim: w.dim(),
        blocks,
    })
}

/// `D_W`: blocks `⟨W⟩_I^{1/2}`.
pub fn make_dw(w: &MatrixWeight) -> Result<BlockMultiplier> {
    blocks_from(w, matops::psd_sqrt, |i| i)
}

/// `D_W⁻¹`: blocks `⟨W⟩_I^{-1/2}`.
pub fn make_dw_inv(w: &MatrixWeight) -> Result<BlockMultiplier> {
    blocks_from(w, matops::psd_inv_sqrt, |i| i)
}

/// `D_W⁺`: blocks `⟨W⟩_{I₊}^{1/2}` from the left child.
pub fn make_dw_plus(w: &MatrixWeight) -> Result<BlockMultiplier> {
    let mesh = *w.mesh();
    blocks_from(w, matops::psd_sqrt, move |i| mesh.children(i).0)
}

/// `D_W⁻`: blocks `⟨W⟩_{I₋}^{1/2}` from the right child.
pub fn make_dw_minus(w: &MatrixWeight) -> Result<BlockMultiplier> {
    let mesh = *w.mesh();
    blocks_from(w, matops::psd_sqrt, move |i| mesh.children(i).1)
}

/// Assigns to a Haar interval `I` the interval `I_i` whose average feeds the
/// block at `I`. Unlisted intervals map to themselves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OffsetMap {
    pub radius: u32,
    map: BTreeMap<DyadicInterval, DyadicInterval>,
}

impl OffsetMap {
    pub fn new(radius: u32) -> Self {
        Self {
            radius,
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, mesh: &Mesh, at: DyadicInterval, source: DyadicInterval) -> Result<()> {
        if !mesh.is_haar(at) {
            return Err(Error::OutsideGrid(at));
        }
        let distance = tree_distance(mesh, at, source)?;
        if distance > self.radius {
            return Err(Error::BandRadius {
                source_interval: source,
                target: at,
                distance,
                radius: self.radius,
            });
        }
        self.map.insert(at, source);
        Ok(())
    }

    pub fn source(&self, at: DyadicInterval) -> DyadicInterval {
        self.map.get(&at).copied().unwrap_or(at)
    }
}

/// `D^i_W`: blocks `⟨W⟩_{I_i}^{1/2}` with `I_i` given by the offset map.
pub fn make_dw_offset(w: &MatrixWeight, offsets: &OffsetMap) -> Result<BlockMultiplier> {
    let mesh = *w.mesh();
    for (&at, &src) in &offsets.map {
        mesh.check(src)?;
        mesh.check(at)?;
    }
    blocks_from(w, matops::psd_sqrt, |i| offsets.source(i))
}

/// `f(x) ↦ W(x)^{±1/2} f(x)` cellwise.
pub fn pointwise_weight_half(w: &MatrixWeight, sign: i32, f: &LeafField) -> Result<LeafField> {
    w.check_field(f)?;
    Ok(apply_cellwise(&w.half_powers(sign)?, f))
}

fn apply_cellwise(mats: &[Matrix], f: &LeafField) -> LeafField {
    let mut out = LeafField::zeros(*f.mesh(), f.dim());
    for (c, m) in mats.iter().enumerate() {
        m.matvec_into(f.cell(c), out.cell_mut(c));
    }
    out
}

// ---------------------------------------------------------------------------
// dyadic shift

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftPart {
    /// `ℍ`
    Full,
    /// `ℍ₁`: `(ℍ₁f)_I = f_{I₊}`
    Left,
    /// `ℍ₂`: `(ℍ₂f)_I = −f_{I₋}`
    Right,
}

/// `(ℍf)_I = f_{I₊} − f_{I₋}` or one of its two halves. Intervals whose
/// children are leaves get nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DyadicShift(pub ShiftPart);

impl HaarOperator for DyadicShift {
    fn apply(&self, c: &HaarCoefficients) -> Result<HaarCoefficients> {
        let mesh = *c.mesh();
        let mut out = HaarCoefficients::zeros(mesh, c.dim());
        let depth = mesh.depth as i32;
        for i in mesh.haar_intervals().filter(|i| i.level + 1 < depth) {
            let (l, r) = mesh.children(i);
            let (fl, fr) = (c.by_id(mesh.node_id(l)), c.by_id(mesh.node_id(r)));
            let o = out.by_id_mut(mesh.node_id(i));
            for j in 0..o.len() {
                o[j] = match self.0 {
                    ShiftPart::Full => fl[j] - fr[j],
                    ShiftPart::Left => fl[j],
                    ShiftPart::Right => -fr[j],
                };
            }
        }
        Ok(out)
    }
}

pub fn dyadic_shift(c: &HaarCoefficients) -> HaarCoefficients {
    DyadicShift(ShiftPart::Full).apply(c).expect("shift is total")
}

// ---------------------------------------------------------------------------
// band operators

/// One term `φ(I, I_i)⟨f, h_I⟩h_{I_i}` of a band operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPair {
    pub source: DyadicInterval,
    pub target: DyadicInterval,
    pub phi: f64,
}

/// Haar operator with coefficients supported within tree distance `radius`
/// of the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandSpec {
    #[serde(skip)]
    mesh: Mesh,
    radius: u32,
    pairs: Vec<BandPair>,
}

impl BandSpec {
    /// Validates radii and grid membership; duplicate `(source, target)`
    /// pairs are rejected.
    pub fn new(mesh: Mesh, radius: u32, mut pairs: Vec<BandPair>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in &pairs {
            for i in [p.source, p.target] {
                if !mesh.is_haar(i) {
                    return Err(Error::OutsideGrid(i));
                }
            }
            if !p.phi.is_finite() {
                return Err(Error::InvalidParameter(format!("φ({}, {}) = {}", p.source, p.target, p.phi)));
            }
            let distance = tree_distance(&mesh, p.source, p.target)?;
            if distance > radius {
                return Err(Error::BandRadius {
                    source_interval: p.source,
                    target: p.target,
                    distance,
                    radius,
                });
            }
            if !seen.insert((p.source, p.target)) {
                return Err(Error::InvalidParameter(format!("pair ({}, {}) listed twice", p.source, p.target)));
            }
        }
        pairs.sort_by(|a, b| (a.target, a.source).cmp(&(b.target, b.source)));
        Ok(Self { mesh, radius, pairs })
    }

    /// Radius-0 band with `φ(I, I) = values(I)`.
    pub fn diagonal(mesh: Mesh, values: impl Fn(DyadicInterval) -> f64) -> Result<Self> {
        let pairs = mesh
            .haar_intervals()
            .map(|i| BandPair {
                source: i,
                target: i,
                phi: values(i),
            })
            .collect();
        Self::new(mesh, 0, pairs)
    }

    /// The dyadic shift as a radius-1 band: `φ(I₊, I) = 1`, `φ(I₋, I) = −1`.
    pub fn shift(mesh: Mesh) -> Result<Self> {
        let depth = mesh.depth as i32;
        let mut pairs = Vec::new();
        for i in mesh.haar_intervals().filter(|i| i.level + 1 < depth) {
            let (l, r) = mesh.children(i);
            pairs.push(BandPair { source: l, target: i, phi: 1.0 });
            pairs.push(BandPair { source: r, target: i, phi: -1.0 });
        }
        Self::new(mesh, 1, pairs)
    }

    /// Each pair within the radius is kept with probability `density`, with
    /// `φ` uniform on `[−amplitude, amplitude]`.
    pub fn random(mesh: Mesh, radius: u32, density: f64, amplitude: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::InvalidParameter(format!("density {density} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let haar: Vec<_> = mesh.haar_intervals().collect();
        let mut pairs = Vec::new();
        for &s in &haar {
            for &t in &haar {
                if tree_distance(&mesh, s, t)? <= radius && rng.random::<f64>() < density {
                    let phi = amplitude * (2.0 * rng.random::<f64>() - 1.0);
                    pairs.push(BandPair { source: s, target: t, phi });
                }
            }
        }
        Self::new(mesh, radius, pairs)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Sorted by target, then source.
    pub fn pairs(&self) -> &[BandPair] {
        &self.pairs
    }
}

pub fn band_apply(spec: &BandSpec, c: &HaarCoefficients) -> Result<HaarCoefficients> {
    if c.mesh() != &spec.mesh {
        return Err(Error::Shape("band spec and coefficients live on different meshes".into()));
    }
    let mesh = spec.mesh;
    let mut out = HaarCoefficients::zeros(mesh, c.dim());
    for p in &spec.pairs {
        let x = c.by_id(mesh.node_id(p.source)).to_vec();
        for (o, v) in out.by_id_mut(mesh.node_id(p.target)).iter_mut().zip(x) {
            *o += p.phi * v;
        }
    }
    Ok(out)
}

impl HaarOperator for BandSpec {
    fn apply(&self, c: &HaarCoefficients) -> Result<HaarCoefficients> {
        band_apply(self, c)
    }
}

/// Splits the pairs so that every part feeds each target from at most one
/// source. The `k`-th pair into a target goes to part `k`, so the number of
/// parts is the largest number of sources of any target.
pub fn band_decompose(spec: &BandSpec) -> Vec<BandSpec> {
    let mut parts: Vec<Vec<BandPair>> = Vec::new();
    let mut used: BTreeMap<DyadicInterval, usize> = BTreeMap::new();
    for p in &spec.pairs {
        let k = used.entry(p.target).or_insert(0);
        if parts.len() <= *k {
            parts.push(Vec::new());
        }
        parts[*k].push(*p);
        *k += 1;
    }
    parts
        .into_iter()
        .map(|pairs| BandSpec {
            mesh: spec.mesh,
            radius: spec.radius,
            pairs,
        })
        .collect()
}

pub fn phi_sup(spec: &BandSpec) -> f64 {
    spec.pairs.iter().fold(0.0, |m, p| m.max(p.phi.abs()))
}

/// For a part with single sources per target: the map target → source used
/// by the commuting block multiplier `D^i` (`T_i D = D^i T_i`).
pub fn part_offsets(part: &BandSpec) -> Result<OffsetMap> {
    let mut map = OffsetMap::new(part.radius);
    for p in &part.pairs {
        if map.map.contains_key(&p.target) {
            return Err(Error::InvalidParameter(format!("target {} has several sources", p.target)));
        }
        map.insert(&part.mesh, p.target, p.source)?;
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// assembly

/// Matrix of `op` in the basis `{e_j ⊗ h_I}`, column `node_id(I)·N + j`.
pub fn assemble_matrix(op: &dyn HaarOperator, mesh: &Mesh, dim: usize) -> Result<Matrix> {
    let n = mesh.num_haar() * dim;
    let cols = (0..n)
        .into_par_iter()
        .map(|col| {
            let mut unit = vec![0.0; n];
            unit[col] = 1.0;
            let c = HaarCoefficients::from_flat(*mesh, dim, &unit)?;
            Ok(op.apply(&c)?.flat().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = Matrix::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m.set(i, j, *v);
        }
    }
    Ok(m)
}

/// Unweighted norm of `op` on coefficient space.
pub fn coefficient_norm(op: &dyn HaarOperator, mesh: &Mesh, dim: usize) -> Result<f64> {
    dense_norm(&assemble_matrix(op, mesh, dim)?)
}

/// `g ↦ post·R(c)` as a (cell values) × (coefficients) matrix.
fn synthesis_matrix(mesh: &Mesh, dim: usize, post: Option<&[Matrix]>) -> Result<Matrix> {
    let n = mesh.num_haar() * dim;
    let rows = mesh.num_cells() * dim;
    let mut m = Matrix::zeros(rows, n);
    for col in 0..n {
        let mut unit = vec![0.0; n];
        unit[col] = 1.0;
        let mut f = haar_reconstruct(&HaarCoefficients::from_flat(*mesh, dim, &unit)?, mesh)?;
        if let Some(p) = post {
            f = apply_cellwise(p, &f);
        }
        for (i, v) in f.values().iter().enumerate() {
            m.set(i, col, *v);
        }
    }
    Ok(m)
}

/// `g ↦ Dec(pre·g)` without the mean, as a (coefficients) × (cell values) matrix.
fn analysis_matrix(mesh: &Mesh, dim: usize, pre: Option<&[Matrix]>) -> Result<Matrix> {
    let n = mesh.num_haar() * dim;
    let cols = mesh.num_cells() * dim;
    let mut m = Matrix::zeros(n, cols);
    for col in 0..cols {
        let mut unit = vec![0.0; cols];
        unit[col] = 1.0;
        let mut f = LeafField::from_values(*mesh, dim, unit)?;
        if let Some(p) = pre {
            f = apply_cellwise(p, &f);
        }
        for (i, v) in haar_decompose(&f, mesh)?.flat().iter().enumerate() {
            m.set(i, col, *v);
        }
    }
    Ok(m)
}

/// `g ↦ post·R·op·Dec·pre·g` on leaf fields, with `pre`/`post` cellwise
/// matrices.
pub struct FieldOperator<'a> {
    mesh: Mesh,
    dim: usize,
    pre: Option<Vec<Matrix>>,
    op: &'a dyn HaarOperator,
    post: Option<Vec<Matrix>>,
}

impl<'a> FieldOperator<'a> {
    pub fn new(mesh: Mesh, dim: usize, pre: Option<Vec<Matrix>>, op: &'a dyn HaarOperator, post: Option<Vec<Matrix>>) -> Result<Self> {
        for cells in pre.iter().chain(&post) {
            if cells.len() != mesh.num_cells() || cells.iter().any(|m| m.rows() != dim || m.cols() != dim) {
                return Err(Error::Shape("cellwise factor does not match the mesh".into()));
            }
        }
        Ok(Self { mesh, dim, pre, op, post })
    }

    pub fn apply(&self, g: &LeafField) -> Result<LeafField> {
        g.same_mesh(&self.mesh)?;
        let mut x = g.clone();
        if let Some(p) = &self.pre {
            x = apply_cellwise(p, &x);
        }
        let c = self.op.apply(&haar_decompose(&x, &self.mesh)?)?;
        let mut y = haar_reconstruct(&c.without_mean(), &self.mesh)?;
        if let Some(p) = &self.post {
            y = apply_cellwise(p, &y);
        }
        Ok(y)
    }

    /// Dense matrix on cell values, built from the three stages.
    pub fn matrix(&self) -> Result<Matrix> {
        let left = synthesis_matrix(&self.mesh, self.dim, self.post.as_deref())?;
        let right = analysis_matrix(&self.mesh, self.dim, self.pre.as_deref())?;
        let middle = assemble_matrix(self.op, &self.mesh, self.dim)?;
        Ok(left.matmul(&middle).matmul(&right))
    }

    pub fn norm(&self) -> Result<f64> {
        dense_norm(&self.matrix()?)
    }
}

impl LinearOperator for FieldOperator<'_> {
    fn nrows(&self) -> usize {
        self.mesh.num_cells() * self.dim
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = LeafField::from_values(self.mesh, self.dim, x.to_vec()).expect("length checked by caller");
        y.copy_from_slice(FieldOperator::apply(self, &g).expect("operator applies to its own mesh").values());
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        // Only needed by power iteration; dense transpose keeps this simple.
        let m = self.matrix().expect("operator assembles on its own mesh");
        m.tmatvec_into(x, y);
    }
}

/// `U^{1/2}·op·V^{-1/2}` on unweighted fields.
pub fn weighted_conjugate<'a>(op: &'a dyn HaarOperator, u: &MatrixWeight, v: &MatrixWeight) -> Result<FieldOperator<'a>> {
    u.same_mesh(v)?;
    FieldOperator::new(*u.mesh(), u.dim(), Some(v.half_powers(-1)?), op, Some(u.half_powers(1)?))
}

/// `‖U^{1/2}·op·V^{-1/2}‖`.
pub fn weighted_norm_of(op: &dyn HaarOperator, u: &MatrixWeight, v: &MatrixWeight) -> Result<f64> {
    weighted_conjugate(op, u, v)?.norm()
}

// ---------------------------------------------------------------------------
// norm scans

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaNorm {
    pub sigma_id: String,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaScan {
    pub norms: Vec<SigmaNorm>,
    pub max: f64,
    pub min: f64,
    pub exhaustive: bool,
}

/// Depth up to which [`sigma_norm_scan`] enumerates every sign pattern.
pub const EXHAUSTIVE_MAX_DEPTH: u32 = 3;

/// Weighted norms of `T_σ` for `σ ≡ +1`, alternating-by-level, `num_sigma`
/// seeded patterns, and every pattern when the depth is at most
/// [`EXHAUSTIVE_MAX_DEPTH`].
pub fn sigma_norm_scan(u: &MatrixWeight, v: &MatrixWeight, num_sigma: usize, seed: u64) -> Result<SigmaScan> {
    if num_sigma == 0 {
        return Err(Error::InvalidParameter("num_sigma must be at least 1".into()));
    }
    u.same_mesh(v)?;
    let mesh = *u.mesh();
    let dim = u.dim();
    let left = synthesis_matrix(&mesh, dim, Some(&u.half_powers(1)?))?;
    let right = analysis_matrix(&mesh, dim, Some(&v.half_powers(-1)?))?;

    let mut patterns = vec![("plus".to_string(), SignPattern::plus()), ("alternating".to_string(), SignPattern::alternating(&mesh))];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..num_sigma {
        patterns.push((format!("random-{k}"), SignPattern::random(&mesh, rng.random())));
    }
    let exhaustive = mesh.depth <= EXHAUSTIVE_MAX_DEPTH;
    if exhaustive {
        for bits in 0..1u64 << mesh.num_haar() {
            patterns.push((format!("bits-{bits}"), SignPattern::from_bits(&mesh, bits)));
        }
    }

    let norms = patterns
        .into_par_iter()
        .map(|(sigma_id, sigma)| {
            // L·diag(σ ⊗ 1_N)·R
            let mut l = left.clone();
            for i in mesh.haar_intervals().filter(|i| sigma.sign(*i) < 0.0) {
                let id = mesh.node_id(i);
                for col in id * dim..(id + 1) * dim {
                    for row in 0..l.rows() {
                        l.set(row, col, -l.get(row, col));
                    }
                }
            }
            Ok(SigmaNorm {
                sigma_id,
                norm: dense_norm(&l.matmul(&right))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max = norms.iter().map(|s| s.norm).fold(f64::NEG_INFINITY, f64::max);
    let min = norms.iter().map(|s| s.norm).fold(f64::INFINITY, f64::min);
    Ok(SigmaScan { norms, max, min, exhaustive })
}

/// Factor norms of `U^{1/2} T_σ V^{-1/2} = (U^{1/2}D)·T_σ·(D^{-1}V^{-1/2})`
/// with `D = D_{V⁻¹}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationBound {
    /// `‖M_V^{-1/2} D_{V⁻¹}^{-1}‖`, computed on its adjoint `D^{-1}V^{-1/2}`.
    pub inverse_factor: f64,
    /// `‖D_{V⁻¹} M_U^{1/2}‖`, computed on its adjoint `U^{1/2}D` (the
    /// two-weight square function).
    pub square_function: f64,
    pub product: f64,
}

pub fn factorization_bound(u: &MatrixWeight, v: &MatrixWeight) -> Result<FactorizationBound> {
    u.same_mesh(v)?;
    let v_inv = v.inverse_weight()?;
    let d = make_dw(&v_inv)?;
    let d_inv = make_dw_inv(&v_inv)?;
    let (mesh, dim) = (*u.mesh(), u.dim());
    let inverse_factor = FieldOperator::new(mesh, dim, Some(v.half_powers(-1)?), &d_inv, None)?.norm()?;
    let square_function = FieldOperator::new(mesh, dim, None, &d, Some(u.half_powers(1)?))?.norm()?;
    Ok(FactorizationBound {
        inverse_factor,
        square_function,
        product: inverse_factor * square_function,
    })
}

/// `max_I ‖⟨V⁻¹⟩_I^{1/2}⟨U⟩_I^{1/2}‖` over every interval of the mesh,
/// leaves included, so that its square is the joint A₂ constant.
pub fn diagonal_product_norm(u: &MatrixWeight, v: &MatrixWeight) -> Result<f64> {
    u.same_mesh(v)?;
    let (ua, va) = (u.averages(), v.inverse_weight()?.averages());
    let mesh = *u.mesh();
    let norms = (0..mesh.num_nodes())
        .into_par_iter()
        .map(|id| Ok(matops::spectral_norm(&matops::psd_sqrt(va.by_id(id))?.matmul(&matops::psd_sqrt(ua.by_id(id))?))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// `‖D_{V⁻¹}D_U‖` on coefficient space, i.e. the same supremum over Haar
/// intervals only.
pub fn diagonal_product_operator_norm(u: &MatrixWeight, v: &MatrixWeight) -> Result<f64> {
    u.same_mesh(v)?;
    let du = assemble_matrix(&make_dw(u)?, u.mesh(), u.dim())?;
    let dv = assemble_matrix(&make_dw(&v.inverse_weight()?)?, u.mesh(), u.dim())?;
    dense_norm(&dv.matmul(&du))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Domination {
    Plus,
    Minus,
    Offset(OffsetMap),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationCheck {
    /// `‖D^• M_U^{1/2} f‖²`
    pub lhs: f64,
    /// `factor·‖D_{V⁻¹} M_U^{1/2} f‖²`
    pub rhs: f64,
    /// `2` for `D±`, `2^r/β` for an offset multiplier.
    pub factor: f64,
    pub pass: bool,
}

/// Smallest interval of the mesh containing both.
fn common_ancestor(mesh: &Mesh, mut a: DyadicInterval, mut b: DyadicInterval) -> DyadicInterval {
    while a.level > b.level {
        a = mesh.parent(a).expect("levels above the root");
    }
    while b.level > a.level {
        b = mesh.parent(b).expect("levels above the root");
    }
    while a != b {
        a = mesh.parent(a).expect("common root");
        b = mesh.parent(b).expect("common root");
    }
    a
}

/// `β = min over listed I of min_γ (∫_I ‖V^{-1/2}γ‖²)/(∫_{I'} ‖V^{-1/2}γ‖²)`
/// with `I'` the smallest common ancestor of `I` and its offset target.
/// The inner minimum is a generalized eigenvalue, so no direction sampling
/// is involved.
pub fn offset_beta(v: &MatrixWeight, offsets: &OffsetMap) -> Result<f64> {
    let mesh = *v.mesh();
    let avg = v.inverse_weight()?.averages();
    let mut beta: f64 = 1.0;
    for i in mesh.haar_intervals() {
        let a = common_ancestor(&mesh, i, offsets.source(i));
        if a == i {
            continue;
        }
        let num = avg.get(i).scale(mesh.length(i));
        let den = avg.get(a).scale(mesh.length(a));
        beta = beta.min(matops::min_generalized_eigen(&num, &den)?.0);
    }
    Ok(beta)
}

/// Compares `‖D^• M_U^{1/2} f‖²` against the bound for `D^• ∈ {D⁺, D⁻, D^i}`
/// (all built from `V⁻¹`).
pub fn dplus_domination_check(u: &MatrixWeight, v: &MatrixWeight, f: &LeafField, variant: &Domination) -> Result<DominationCheck> {
    u.same_mesh(v)?;
    u.check_field(f)?;
    let v_inv = v.inverse_weight()?;
    let c = haar_decompose(&pointwise_weight_half(u, 1, f)?, u.mesh())?;
    let (moved, factor) = match variant {
        Domination::Plus => (make_dw_plus(&v_inv)?, 2.0),
        Domination::Minus => (make_dw_minus(&v_inv)?, 2.0),
        Domination::Offset(map) => {
            let beta = offset_beta(v, map)?;
            (make_dw_offset(&v_inv, map)?, 2f64.powi(map.radius as i32) / beta)
        }
    };
    let lhs = block_multiply(&moved, &c)?.norm_sq();
    let rhs = factor * block_multiply(&make_dw(&v_inv)?, &c)?.norm_sq();
    Ok(DominationCheck {
        lhs,
        rhs,
        factor,
        pass: lhs <= rhs + 1e-9,
    })
}

/// One summand of the band bound: `‖M_U^{1/2}D^i‖` and `‖T_i‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPartBound {
    pub multiplier_norm: f64,
    pub part_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandBound {
    /// `‖U^{1/2} T V^{-1/2}‖`
    pub weighted_norm: f64,
    pub parts: Vec<BandPartBound>,
    /// `‖D_{V⁻¹}^{-1} M_{V⁻¹}^{1/2}‖`
    pub inverse_factor: f64,
    /// `(Σ_i ‖M_U^{1/2}D^i‖·‖T_i‖)·‖D^{-1}M_{V⁻¹}^{1/2}‖`
    pub bound: f64,
    pub phi_sup: f64,
    pub unweighted_norm: f64,
}

/// Weighted band norm against the bound from `T·D = Σ_i D^i·T_i`.
pub fn band_bound(u: &MatrixWeight, v: &MatrixWeight, spec: &BandSpec) -> Result<BandBound> {
    u.same_mesh(v)?;
    if spec.mesh() != u.mesh() {
        return Err(Error::Shape("band spec and weights live on different meshes".into()));
    }
    let (mesh, dim) = (*u.mesh(), u.dim());
    let v_inv = v.inverse_weight()?;
    let u_half = u.half_powers(1)?;
    let weighted_norm = weighted_norm_of(spec, u, v)?;
    let inverse_factor = FieldOperator::new(mesh, dim, Some(v.half_powers(-1)?), &make_dw_inv(&v_inv)?, None)?.norm()?;
    let parts = band_decompose(spec)
        .iter()
        .map(|part| {
            let d_i = make_dw_offset(&v_inv, &part_offsets(part)?)?;
            Ok(BandPartBound {
                multiplier_norm: FieldOperator::new(mesh, dim, None, &d_i, Some(u_half.clone()))?.norm()?,
                part_norm: coefficient_norm(part, &mesh, dim)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sum: f64 = parts.iter().map(|p| p.multiplier_norm * p.part_norm).sum();
    Ok(BandBound {
        weighted_norm,
        bound: sum * inverse_factor,
        parts,
        inverse_factor,
        phi_sup: phi_sup(spec),
        unweighted_norm: coefficient_norm(spec, &mesh, dim)?,
    })
}
