//! Stopping time for a pair of weights: generations of maximal bad
//! subintervals, the free families between them, decay, and the pieces
//! `Δ_j`, `S_j` of the two-weight square function.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{haar_reconstruct, DyadicInterval, DyadicTree, HaarCoefficients, LeafField, Mesh};
use crate::matops::{self, Matrix};
use crate::operators::{block_multiply, make_dw};
use crate::weights::{AverageTable, MatrixWeight};
use crate::{Error, Result};

/// Averages and cell values shared by every stopping test.
struct Pair {
    mesh: Mesh,
    u: AverageTable,
    v_inv: AverageTable,
    u_cells: Vec<Matrix>,
    v_inv_cells: Vec<Matrix>,
}

/// The three normalizers attached to a stopping root `J`.
struct RootFrame {
    v_half: Matrix,
    v_inv_half: Matrix,
    u_inv_half: Matrix,
}

impl Pair {
    fn new(u: &MatrixWeight, v: &MatrixWeight) -> Result<Self> {
        u.same_mesh(v)?;
        let v_inv = v.inverse_weight()?;
        Ok(Self {
            mesh: *u.mesh(),
            u: u.averages(),
            v_inv: v_inv.averages(),
            u_cells: u.cells().to_vec(),
            v_inv_cells: v_inv.cells().to_vec(),
        })
    }

    fn frame(&self, j: DyadicInterval) -> Result<RootFrame> {
        let vj = self.v_inv.get(j);
        Ok(RootFrame {
            v_half: matops::psd_sqrt(vj)?,
            v_inv_half: matops::psd_inv_sqrt(vj)?,
            u_inv_half: matops::psd_inv_sqrt(self.u.get(j))?,
        })
    }

    /// Norms of the three normalized matrices for given `U`, `V⁻¹` values.
    fn norms(frame: &RootFrame, u: &Matrix, v_inv: &Matrix) -> [f64; 3] {
        let sandwich = |a: &Matrix, m: &Matrix| matops::spectral_norm(&a.matmul(m).matmul(a).symmetrized());
        [
            sandwich(&frame.v_half, u),
            sandwich(&frame.v_inv_half, v_inv),
            sandwich(&frame.u_inv_half, u),
        ]
    }

    /// Top-down first-hit scan of the proper subintervals of `j`. Returns
    /// the stopping children and the free intervals (including `j`).
    fn split(&self, lambda: f64, j: DyadicInterval) -> Result<(Vec<DyadicInterval>, Vec<DyadicInterval>)> {
        let frame = self.frame(j)?;
        let depth = self.mesh.depth as i32;
        let mut stops = Vec::new();
        let mut free = vec![j];
        let mut frontier = vec![j];
        while let Some(parent) = frontier.pop() {
            if parent.level >= depth {
                continue;
            }
            let (l, r) = self.mesh.children(parent);
            for i in [l, r] {
                let id = self.mesh.node_id(i);
                let n = Self::norms(&frame, self.u.by_id(id), self.v_inv.by_id(id));
                if n.iter().any(|v| *v > lambda) {
                    stops.push(i);
                } else {
                    free.push(i);
                    frontier.push(i);
                }
            }
        }
        stops.sort();
        free.sort();
        Ok((stops, free))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("λ = {lambda} must exceed 1")));
    }
    Ok(())
}

/// Maximal proper subintervals `I ⊊ J` violating one of
///
/// * `‖⟨V⁻¹⟩_J^{1/2}⟨U⟩_I⟨V⁻¹⟩_J^{1/2}‖ > λ`,
/// * `‖⟨V⁻¹⟩_J^{-1/2}⟨V⁻¹⟩_I⟨V⁻¹⟩_J^{-1/2}‖ > λ`,
/// * `‖⟨U⟩_J^{-1/2}⟨U⟩_I⟨U⟩_J^{-1/2}‖ > λ`.
///
/// Leaf cells are tested too, so that the bounds hold pointwise off the
/// stopping intervals.
pub fn stopping_children(u: &MatrixWeight, v: &MatrixWeight, lambda: f64, j: DyadicInterval) -> Result<Vec<DyadicInterval>> {
    check_lambda(lambda)?;
    u.mesh().check(j)?;
    Ok(Pair::new(u, v)?.split(lambda, j)?.0)
}

/// Generations `J_{λ,k}` and free families `F_{λ,k}` below a root.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingTree {
    pub lambda: f64,
    pub root: DyadicInterval,
    #[serde(skip)]
    mesh: Option<Mesh>,
    /// `generations[k-1] = J_{λ,k}`, sorted.
    pub generations: Vec<Vec<DyadicInterval>>,
    /// `families[k-1] = F_{λ,k}`, sorted. Leaf cells are included.
    pub families: Vec<Vec<DyadicInterval>>,
    /// Stopping children of every interval that served as a root.
    #[serde(skip)]
    pub children: BTreeMap<DyadicInterval, Vec<DyadicInterval>>,
    /// Whether `k_max` cut the recursion short. The last family then holds
    /// every subinterval of the last generation.
    pub truncated: bool,
}

impl StoppingTree {
    pub fn mesh(&self) -> &Mesh {
        self.mesh.as_ref().expect("built trees carry their mesh")
    }

    /// `J_{λ,k}` with `J_{λ,0} = {root}`.
    pub fn generation(&self, k: usize) -> Vec<DyadicInterval> {
        if k == 0 {
            vec![self.root]
        } else {
            self.generations.get(k - 1).cloned().unwrap_or_default()
        }
    }

    /// `F_{λ,j}`, `j ≥ 1`.
    pub fn family(&self, j: usize) -> &[DyadicInterval] {
        j.checked_sub(1).and_then(|i| self.families.get(i)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Index `j` of the family holding `i`.
    pub fn family_of(&self, i: DyadicInterval) -> Option<usize> {
        self.families.iter().position(|f| f.binary_search(&i).is_ok()).map(|p| p + 1)
    }
}

pub fn build_tree(u: &MatrixWeight, v: &MatrixWeight, lambda: f64, root: DyadicInterval, k_max: usize) -> Result<StoppingTree> {
    check_lambda(lambda)?;
    let mesh = *u.mesh();
    mesh.check(root)?;
    let pair = Pair::new(u, v)?;
    let mut generations = Vec::new();
    let mut families = Vec::new();
    let mut children = BTreeMap::new();
    let mut current = vec![root];
    let mut truncated = false;
    loop {
        if generations.len() == k_max {
            truncated = true;
            let rest: BTreeSet<_> = current.iter().flat_map(|&i| mesh.subintervals(i, mesh.depth)).collect();
            families.push(rest.into_iter().collect());
            break;
        }
        let splits = current
            .par_iter()
            .map(|&i| pair.split(lambda, i).map(|s| (i, s)))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::new();
        let mut family = Vec::new();
        for (i, (stops, free)) in splits {
            next.extend(stops.iter().copied());
            family.extend(free);
            children.insert(i, stops);
        }
        next.sort();
        family.sort();
        families.push(family);
        if next.is_empty() {
            break;
        }
        generations.push(next.clone());
        current = next;
    }
    Ok(StoppingTree {
        lambda,
        root,
        mesh: Some(mesh),
        generations,
        families,
        children,
        truncated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeasure {
    pub k: usize,
    pub count: usize,
    pub measure_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub lambda: f64,
    pub measures: Vec<GenerationMeasure>,
    /// `max_k m_k^{1/k}`, zero without generations.
    pub delta_fit: f64,
    pub nonincreasing: bool,
    /// `m_k ≤ m_1^k·(1 + 1e-9)` for every `k`. Diagnostic only.
    pub geometric_in_m1: bool,
    pub pass: bool,
}

/// Generation measures `m_k = |∪J_{λ,k}|/|J|`; passes when they never grow
/// and `δ < 1`.
pub fn decay_report(tree: &StoppingTree) -> DecayReport {
    let mesh = tree.mesh();
    let total = mesh.length(tree.root);
    let measures: Vec<GenerationMeasure> = tree
        .generations
        .iter()
        .enumerate()
        .map(|(k, g)| GenerationMeasure {
            k: k + 1,
            count: g.len(),
            measure_fraction: g.iter().map(|i| mesh.length(*i)).sum::<f64>() / total,
        })
        .collect();
    let delta_fit = measures
        .iter()
        .map(|m| m.measure_fraction.powf(1.0 / m.k as f64))
        .fold(0.0, f64::max);
    let nonincreasing = measures.windows(2).all(|w| w[1].measure_fraction <= w[0].measure_fraction);
    let m1 = measures.first().map_or(0.0, |m| m.measure_fraction);
    let geometric_in_m1 = measures
        .iter()
        .all(|m| m.measure_fraction <= m1.powi(m.k as i32) * (1.0 + 1e-9));
    DecayReport {
        lambda: tree.lambda,
        measures,
        delta_fit,
        nonincreasing,
        geometric_in_m1,
        pass: nonincreasing && delta_fit < 1.0,
    }
}

/// Counting bounds for `m_1` under a joint A₂ constant `c`: each of the three
/// conditions selects at most a `trace/λ` share, so
/// `m_1 ≤ N·(2 + c)/λ`. Also reports the single-condition figure `N/λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingBound {
    pub m1: f64,
    pub single_condition: f64,
    pub union: f64,
    pub within_single: bool,
    pub within_union: bool,
}

pub fn counting_bound(tree: &StoppingTree, dim: usize, joint_a2: f64) -> CountingBound {
    let m1 = decay_report(tree).measures.first().map_or(0.0, |m| m.measure_fraction);
    let n = dim as f64;
    let single_condition = n / tree.lambda;
    let union = n * (2.0 + joint_a2) / tree.lambda;
    CountingBound {
        m1,
        single_condition,
        union,
        within_single: m1 <= single_condition,
        within_union: m1 <= union,
    }
}

/// `λ` large enough for the union counting bound to force decay by a factor
/// `2/3` per generation.
pub fn decaying_lambda(dim: usize, joint_a2: f64) -> f64 {
    1.5 * dim as f64 * (2.0 + joint_a2)
}

fn check_tree(tree: &StoppingTree, c: &HaarCoefficients) -> Result<()> {
    if c.mesh() != tree.mesh() {
        return Err(Error::Shape("coefficients and stopping tree live on different meshes".into()));
    }
    Ok(())
}

/// `Δ_j`: restriction of the coefficients to `F_{λ,j}`.
pub fn delta_projection(tree: &StoppingTree, j: usize, c: &HaarCoefficients) -> Result<HaarCoefficients> {
    check_tree(tree, c)?;
    let mesh = *tree.mesh();
    let mut out = HaarCoefficients::zeros(mesh, c.dim());
    for &i in tree.family(j).iter().filter(|i| mesh.is_haar(**i)) {
        out.get_mut(i)?.copy_from_slice(c.get(i)?);
    }
    Ok(out)
}

/// `S_j c = U^{1/2}·R(D_{V⁻¹}Δ_j c)`.
pub fn s_projection(u: &MatrixWeight, v: &MatrixWeight, tree: &StoppingTree, j: usize, c: &HaarCoefficients) -> Result<LeafField> {
    square_piece(&u.half_powers(1)?, &make_dw(&v.inverse_weight()?)?, tree, j, c)
}

fn square_piece(u_half: &[Matrix], d: &crate::operators::BlockMultiplier, tree: &StoppingTree, j: usize, c: &HaarCoefficients) -> Result<LeafField> {
    let mesh = *tree.mesh();
    let g = haar_reconstruct(&block_multiply(d, &delta_projection(tree, j, c)?)?, &mesh)?;
    let mut out = LeafField::zeros(mesh, c.dim());
    for (cell, m) in u_half.iter().enumerate() {
        m.matvec_into(g.cell(cell), out.cell_mut(cell));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CotlarRow {
    pub j: usize,
    pub k: usize,
    /// `∫_{∪J_{λ,k−1}} ‖S_j f‖²`
    pub lhs: f64,
    /// `‖Δ_j f‖²`
    pub reference: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CotlarReport {
    pub rows: Vec<CotlarRow>,
    /// `max |S_k S_jᵀ|` over the tabulated `k`; the pieces are orthogonal
    /// when this vanishes.
    pub orthogonality_defect: f64,
}

/// Off-diagonal pieces of `S_j f` for every `k > j` up to one past the last
/// generation, with the orthogonality check `S_k S_j* = 0`.
pub fn cotlar_offdiag(u: &MatrixWeight, v: &MatrixWeight, tree: &StoppingTree, j: usize, f: &HaarCoefficients) -> Result<CotlarReport> {
    check_tree(tree, f)?;
    if j == 0 || j > tree.families.len() {
        return Err(Error::InvalidParameter(format!("family index {j} outside 1..={}", tree.families.len())));
    }
    let mesh = *tree.mesh();
    let u_half = u.half_powers(1)?;
    let d = make_dw(&v.inverse_weight()?)?;
    let sj = square_piece(&u_half, &d, tree, j, f)?;
    let reference = delta_projection(tree, j, f)?.norm_sq();
    let h = mesh.cell_len();
    let last = tree.families.len();
    let mut rows = Vec::new();
    for k in j + 1..=last.max(j + 1) {
        let region: BTreeSet<usize> = tree.generation(k - 1).iter().flat_map(|i| mesh.cell_range(*i)).collect();
        let lhs: f64 = region.iter().map(|&c| sj.cell(c).iter().map(|x| x * x).sum::<f64>() * h).sum();
        rows.push(CotlarRow {
            j,
            k,
            lhs,
            reference,
            ratio: if reference > 0.0 { lhs / reference } else { 0.0 },
        });
    }

    let sj_matrix = piece_matrix(&u_half, &d, tree, j, f.dim())?;
    let mut defect: f64 = 0.0;
    for k in (1..=last).filter(|k| *k != j) {
        let sk = piece_matrix(&u_half, &d, tree, k, f.dim())?;
        defect = defect.max(sk.matmul(&sj_matrix.transpose()).max_abs());
    }
    Ok(CotlarReport {
        rows,
        orthogonality_defect: defect,
    })
}

/// `S_j` as a (cell values) × (coefficients) matrix.
pub fn s_matrix(u: &MatrixWeight, v: &MatrixWeight, tree: &StoppingTree, j: usize) -> Result<Matrix> {
    piece_matrix(&u.half_powers(1)?, &make_dw(&v.inverse_weight()?)?, tree, j, u.dim())
}

fn piece_matrix(u_half: &[Matrix], d: &crate::operators::BlockMultiplier, tree: &StoppingTree, j: usize, dim: usize) -> Result<Matrix> {
    let mesh = *tree.mesh();
    let n = mesh.num_haar() * dim;
    let mut m = Matrix::zeros(mesh.num_cells() * dim, n);
    for col in 0..n {
        let mut unit = vec![0.0; n];
        unit[col] = 1.0;
        let g = square_piece(u_half, d, tree, j, &HaarCoefficients::from_flat(mesh, dim, &unit)?)?;
        for (row, x) in g.values().iter().enumerate() {
            m.set(row, col, *x);
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseCheck {
    /// Largest of the three normalized cell norms over all free cells.
    pub max_norm: f64,
    pub lambda: f64,
    pub pass: bool,
}

/// On `J \ ∪J(J)` for every root `J` of the tree, the cell values satisfy
/// all three normalized bounds with constant `λ`.
pub fn pointwise_bounds(u: &MatrixWeight, v: &MatrixWeight, tree: &StoppingTree) -> Result<PointwiseCheck> {
    let pair = Pair::new(u, v)?;
    let mesh = pair.mesh;
    let mut max_norm: f64 = 0.0;
    for (&j, stops) in &tree.children {
        let frame = pair.frame(j)?;
        let covered: BTreeSet<usize> = stops.iter().flat_map(|i| mesh.cell_range(*i)).collect();
        for c in mesh.cell_range(j).filter(|c| !covered.contains(c)) {
            let n = Pair::norms(&frame, &pair.u_cells[c], &pair.v_inv_cells[c]);
            max_norm = n.iter().fold(max_norm, |m, x| m.max(*x));
        }
    }
    Ok(PointwiseCheck {
        max_norm,
        lambda: tree.lambda,
        pass: max_norm <= tree.lambda + 1e-9,
    })
}
