//! Matrix weights: piecewise-constant fields of symmetric positive definite
//! matrices on the leaf cells of a mesh.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicInterval, DyadicTree, LeafField, Mesh, Window};
use crate::error::{Error, Result};
use crate::matops::{self, Matrix, PsdMatrix};

/// Largest cell condition number accepted when inverting a weight.
pub const MAX_CELL_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixWeight {
    dim: usize,
    mesh: Mesh,
    cells: Vec<PsdMatrix>,
}

impl MatrixWeight {
    /// Validates shape, symmetry and strict positivity of every cell.
    pub fn new(mesh: Mesh, cells: Vec<PsdMatrix>) -> Result<Self> {
        if cells.len() != mesh.num_cells() {
            return Err(Error::Shape(format!(
                "{} cells for a mesh of {}",
                cells.len(),
                mesh.num_cells()
            )));
        }
        let dim = cells[0].rows();
        for (i, c) in cells.iter().enumerate() {
            if c.rows() != dim || c.cols() != dim {
                return Err(Error::Shape(format!("cell {i} is {}x{}, expected {dim}x{dim}", c.rows(), c.cols())));
            }
            if !c.is_symmetric(1e-12) {
                return Err(Error::InvalidParameter(format!("cell {i} is not symmetric")));
            }
            let eig = matops::sym_eigen(c);
            if !(eig.min() > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "cell {i} is not positive definite (smallest eigenvalue {:e})",
                    eig.min()
                )));
            }
        }
        Ok(Self { dim, mesh, cells })
    }

    pub fn constant(mesh: Mesh, value: PsdMatrix) -> Result<Self> {
        Self::new(mesh, vec![value; mesh.num_cells()])
    }

    pub fn identity(mesh: Mesh, dim: usize) -> Self {
        Self {
            dim,
            mesh,
            cells: vec![Matrix::identity(dim); mesh.num_cells()],
        }
    }

    /// Scalar weight embedded as `w(x)·Identity`.
    pub fn from_scalar(mesh: Mesh, dim: usize, values: &[f64]) -> Result<Self> {
        let cells = values.iter().map(|v| Matrix::identity(dim).scale(*v)).collect();
        Self::new(mesh, cells)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn cells(&self) -> &[PsdMatrix] {
        &self.cells
    }

    pub fn cell(&self, c: usize) -> &PsdMatrix {
        &self.cells[c]
    }

    /// Exact average `⟨W⟩_I` over the cells of `I`.
    pub fn average(&self, interval: DyadicInterval) -> Result<PsdMatrix> {
        self.mesh.check(interval)?;
        Ok(pairwise_mean(&self.cells[self.mesh.cell_range(interval)]))
    }

    /// Averages over every interval of the mesh tree.
    pub fn averages(&self) -> AverageTable {
        AverageTable::new(self)
    }

    /// Cellwise inverse.
    pub fn inverse_weight(&self) -> Result<MatrixWeight> {
        let mut cells = Vec::with_capacity(self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            let cond = matops::condition_number(c)?;
            if cond > MAX_CELL_CONDITION {
                return Err(Error::IllConditioned { cell: i, condition: cond });
            }
            cells.push(matops::psd_inverse(c)?);
        }
        Ok(Self {
            dim: self.dim,
            mesh: self.mesh,
            cells,
        })
    }

    /// `W(x)^{+1/2}` (sign > 0) or `W(x)^{-1/2}` (sign < 0) per cell.
    pub fn half_powers(&self, sign: i32) -> Result<Vec<Matrix>> {
        self.cells
            .iter()
            .map(|c| if sign >= 0 { matops::psd_sqrt(c) } else { matops::psd_inv_sqrt(c) })
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<MatrixWeight> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale factor {factor} must be positive")));
        }
        Ok(Self {
            dim: self.dim,
            mesh: self.mesh,
            cells: self.cells.iter().map(|c| c.scale(factor)).collect(),
        })
    }

    /// Whether all cells are bitwise equal.
    pub fn is_constant(&self) -> bool {
        self.cells.windows(2).all(|w| w[0] == w[1])
    }

    pub(crate) fn same_mesh(&self, other: &MatrixWeight) -> Result<()> {
        if self.mesh != other.mesh || self.dim != other.dim {
            return Err(Error::Shape(format!(
                "weights live on different meshes or dimensions ({:?}/{} vs {:?}/{})",
                self.mesh, self.dim, other.mesh, other.dim
            )));
        }
        Ok(())
    }

    pub(crate) fn check_field(&self, f: &LeafField) -> Result<()> {
        f.same_mesh(&self.mesh)?;
        if f.dim() != self.dim {
            return Err(Error::Shape(format!(
                "field dimension {} against weight dimension {}",
                f.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn to_file(&self) -> WeightFile {
        WeightFile {
            n: self.dim,
            d: self.mesh.depth,
            window: self.mesh.window,
            cells: self.cells.iter().map(Matrix::to_rows).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightFile = serde_json::from_str(text)?;
        file.into_weight()
    }
}

/// Serialized weight: `{N, D, window, cells}` with each cell as a list of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: u32,
    pub window: Window,
    pub cells: Vec<Vec<Vec<f64>>>,
}

impl WeightFile {
    pub fn into_weight(self) -> Result<MatrixWeight> {
        let mesh = Mesh::new(self.window, self.d)?;
        let cells = self
            .cells
            .iter()
            .map(|rows| Matrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        let w = MatrixWeight::new(mesh, cells)?;
        if w.dim != self.n {
            return Err(Error::Shape(format!("cells are {0}x{0} but N = {1}", w.dim, self.n)));
        }
        Ok(w)
    }
}

/// Mean by recursive halving, so that `⟨W⟩_I = (⟨W⟩_{I₊} + ⟨W⟩_{I₋})/2`
/// holds bit for bit between tables and single queries.
fn pairwise_mean(cells: &[Matrix]) -> Matrix {
    if cells.len() == 1 {
        return cells[0].clone();
    }
    let (l, r) = cells.split_at(cells.len() / 2);
    pairwise_mean(l).midpoint(&pairwise_mean(r))
}

/// `⟨W⟩_I` for every interval of the mesh tree, leaves included.
#[derive(Clone, Debug)]
pub struct AverageTable {
    mesh: Mesh,
    values: Vec<Matrix>,
}

impl AverageTable {
    pub fn new(w: &MatrixWeight) -> Self {
        let mesh = w.mesh;
        let mut values = vec![Matrix::zeros(0, 0); mesh.num_nodes()];
        for (c, cell) in w.cells.iter().enumerate() {
            values[mesh.node_id(mesh.leaf(c))] = cell.clone();
        }
        for level in (0..mesh.depth as i32).rev() {
            for k in 0..(1i64 << level) {
                let i = DyadicInterval::new(level, k);
                let (l, r) = mesh.children(i);
                let avg = values[mesh.node_id(l)].midpoint(&values[mesh.node_id(r)]);
                values[mesh.node_id(i)] = avg;
            }
        }
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn get(&self, i: DyadicInterval) -> &Matrix {
        &self.values[self.mesh.node_id(i)]
    }

    pub fn by_id(&self, id: usize) -> &Matrix {
        &self.values[id]
    }
}

/// `‖f‖_{L²(W)} = (Σ_cells |cell|·⟨W f, f⟩)^{1/2}`.
pub fn weighted_norm(f: &LeafField, w: &MatrixWeight) -> Result<f64> {
    w.check_field(f)?;
    let h = w.mesh.cell_len();
    let total: f64 = (0..w.mesh.num_cells()).map(|c| w.cells[c].quad_form(f.cell(c))).sum();
    Ok((h * total).sqrt())
}

/// Weight families used as experiment inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    /// The same matrix on every cell; identity when `matrix` is absent.
    Constant {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
    },
    /// Scalar `left` on the left half of the window and `right` on the right
    /// half, times the identity.
    TwoValue { left: f64, right: f64 },
    /// `|x|^alpha` sampled at cell midpoints, times the identity.
    ScalarPower { alpha: f64 },
    /// `R(θ(x))·diag(1, t)·R(θ(x))ᵀ` in the first two coordinates (identity in
    /// the rest), with `θ(x) = angle_offset + angle_slope·x` and `t = eccentricity`.
    Rotating {
        angle_slope: f64,
        #[serde(default)]
        angle_offset: f64,
        eccentricity: f64,
    },
    /// Independent cells with log-uniform eigenvalues in `[1/cond_max, cond_max]`
    /// and random eigenvectors.
    RandomLogbounded { cond_max: f64 },
}

/// Builds a weight of the requested family; deterministic in `seed`.
pub fn generate(kind: &WeightKind, dim: usize, mesh: Mesh, seed: u64) -> Result<MatrixWeight> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let cells = mesh.num_cells();
    match kind {
        WeightKind::Constant { matrix } => {
            let m = match matrix {
                Some(rows) => Matrix::from_rows(rows)?,
                None => Matrix::identity(dim),
            };
            if m.rows() != dim {
                return Err(Error::Shape(format!("constant matrix is {}x{}, N = {dim}", m.rows(), m.cols())));
            }
            MatrixWeight::constant(mesh, m)
        }
        WeightKind::TwoValue { left, right } => {
            if !(*left > 0.0 && *right > 0.0 && left.is_finite() && right.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "two_value needs positive finite values, got ({left}, {right})"
                )));
            }
            if mesh.depth == 0 {
                return Err(Error::InvalidParameter("two_value needs depth >= 1".into()));
            }
            let values: Vec<f64> = (0..cells).map(|c| if c < cells / 2 { *left } else { *right }).collect();
            MatrixWeight::from_scalar(mesh, dim, &values)
        }
        WeightKind::ScalarPower { alpha } => {
            if !(alpha.is_finite() && *alpha > -1.0) {
                return Err(Error::InvalidParameter(format!("scalar_power needs alpha > -1, got {alpha}")));
            }
            let values: Vec<f64> = (0..cells).map(|c| mesh.cell_midpoint(c).abs().powf(*alpha)).collect();
            MatrixWeight::from_scalar(mesh, dim, &values)
        }
        WeightKind::Rotating {
            angle_slope,
            angle_offset,
            eccentricity,
        } => {
            if dim < 2 {
                return Err(Error::InvalidParameter("rotating weights need N >= 2".into()));
            }
            if !(*eccentricity > 0.0 && eccentricity.is_finite()) {
                return Err(Error::InvalidParameter(format!("eccentricity {eccentricity} must be positive")));
            }
            let cells = (0..cells)
                .map(|c| {
                    let theta = angle_offset + angle_slope * mesh.cell_midpoint(c);
                    let (s, co) = theta.sin_cos();
                    let mut m = Matrix::identity(dim);
                    // R diag(1, t) Rᵀ
                    m.set(0, 0, co * co + eccentricity * s * s);
                    m.set(1, 1, s * s + eccentricity * co * co);
                    let off = co * s * (1.0 - eccentricity);
                    m.set(0, 1, off);
                    m.set(1, 0, off);
                    m
                })
                .collect();
            MatrixWeight::new(mesh, cells)
        }
        WeightKind::RandomLogbounded { cond_max } => {
            if !(*cond_max >= 1.0 && cond_max.is_finite()) {
                return Err(Error::InvalidParameter(format!("cond_max {cond_max} must be >= 1")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let log_max = cond_max.ln();
            let cells = (0..cells).map(|_| random_spd(&mut rng, dim, log_max)).collect();
            MatrixWeight::new(mesh, cells)
        }
    }
}

/// Random SPD matrix with eigenvalues `exp(u)`, `u` uniform in `[-log_max, log_max]`.
pub(crate) fn random_spd<R: Rng>(rng: &mut R, dim: usize, log_max: f64) -> Matrix {
    let basis = random_orthogonal(rng, dim);
    let eigs: Vec<f64> = (0..dim).map(|_| (rng.random_range(-1.0..=1.0) * log_max).exp()).collect();
    let mut out = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v: f64 = (0..dim).map(|k| basis.get(i, k) * eigs[k] * basis.get(j, k)).sum();
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// Orthogonal matrix as a product of Givens rotations with uniform angles.
fn random_orthogonal<R: Rng>(rng: &mut R, dim: usize) -> Matrix {
    let mut q = Matrix::identity(dim);
    for p in 0..dim {
        for r in (p + 1)..dim {
            let theta = rng.random_range(0.0..2.0 * PI);
            let (s, c) = theta.sin_cos();
            for k in 0..dim {
                let a = q.get(k, p);
                let b = q.get(k, r);
                q.set(k, p, c * a - s * b);
                q.set(k, r, s * a + c * b);
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_value(depth: u32, left: f64, right: f64) -> MatrixWeight {
        generate(&WeightKind::TwoValue { left, right }, 1, Mesh::unit(depth), 0).unwrap()
    }

    #[test]
    fn constant_average() {
        let m = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let w = MatrixWeight::constant(Mesh::unit(4), m.clone()).unwrap();
        for i in w.mesh().intervals() {
            assert_eq!(w.average(i).unwrap(), m);
        }
    }

    #[test]
    fn two_value_root_average() {
        let w = two_value(1, 1.0, 4.0);
        assert_eq!(w.average(DyadicInterval::new(0, 0)).unwrap().get(0, 0), 2.5);
        let w6 = two_value(6, 1.0, 4.0);
        assert_eq!(w6.average(DyadicInterval::new(0, 0)).unwrap().get(0, 0), 2.5);
    }

    #[test]
    fn average_outside_mesh_is_error() {
        let w = two_value(2, 1.0, 4.0);
        assert!(matches!(w.average(DyadicInterval::new(3, 0)), Err(Error::OutsideGrid(_))));
        assert!(w.average(DyadicInterval::new(1, 2)).is_err());
    }

    #[test]
    fn midpoint_identity_holds_in_table() {
        let w = generate(&WeightKind::RandomLogbounded { cond_max: 50.0 }, 3, Mesh::unit(5), 9).unwrap();
        let t = w.averages();
        for i in w.mesh().haar_intervals() {
            let (l, r) = w.mesh().children(i);
            let mid = t.get(l).midpoint(t.get(r));
            assert!(mid.sub(t.get(i)).max_abs() <= 1e-12 * t.get(i).max_abs());
            assert_eq!(&w.average(i).unwrap(), t.get(i));
        }
    }

    #[test]
    fn inverse_examples() {
        let id = MatrixWeight::identity(Mesh::unit(3), 2);
        assert_eq!(id.inverse_weight().unwrap(), id);
        let w = two_value(1, 1.0, 4.0).inverse_weight().unwrap();
        assert_eq!(w.cell(0).get(0, 0), 1.0);
        assert_eq!(w.cell(1).get(0, 0), 0.25);

        let bad = MatrixWeight::new(Mesh::unit(1), vec![Matrix::identity(2), Matrix::from_diag(&[1.0, 1e-13])]).unwrap();
        match bad.inverse_weight() {
            Err(Error::IllConditioned { cell, .. }) => assert_eq!(cell, 1),
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let mesh = Mesh::unit(0);
        let w = MatrixWeight::constant(mesh, Matrix::from_diag(&[4.0, 1.0])).unwrap();
        let f = LeafField::from_values(mesh, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(weighted_norm(&f, &w).unwrap(), 2.0);

        let mesh = Mesh::unit(3);
        let f = LeafField::from_fn(mesh, 2, |x| vec![x, 1.0 - 2.0 * x]);
        let id = MatrixWeight::identity(mesh, 2);
        assert!((weighted_norm(&f, &id).unwrap() - f.l2_norm()).abs() < 1e-12);

        let wrong = LeafField::zeros(Mesh::unit(2), 2);
        assert!(weighted_norm(&wrong, &id).is_err());
    }

    #[test]
    fn generators_validate_parameters() {
        let mesh = Mesh::unit(3);
        assert!(generate(&WeightKind::ScalarPower { alpha: -1.0 }, 1, mesh, 0).is_err());
        assert!(generate(&WeightKind::TwoValue { left: 0.0, right: 1.0 }, 1, mesh, 0).is_err());
        assert!(generate(&WeightKind::RandomLogbounded { cond_max: 0.5 }, 2, mesh, 0).is_err());
        assert!(generate(&WeightKind::Rotating { angle_slope: 1.0, angle_offset: 0.0, eccentricity: 3.0 }, 1, mesh, 0).is_err());
    }

    #[test]
    fn random_logbounded_eigenvalues_in_range() {
        for seed in 0..5 {
            let w = generate(&WeightKind::RandomLogbounded { cond_max: 10.0 }, 3, Mesh::unit(4), seed).unwrap();
            for c in w.cells() {
                let e = matops::sym_eigen(c);
                assert!(e.min() >= 0.1 * (1.0 - 1e-12) && e.max() <= 10.0 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn rotating_weight_has_fixed_spectrum() {
        let kind = WeightKind::Rotating { angle_slope: 3.0, angle_offset: 0.2, eccentricity: 9.0 };
        let w = generate(&kind, 2, Mesh::unit(4), 0).unwrap();
        for c in w.cells() {
            let e = matops::sym_eigen(c);
            assert!((e.min() - 1.0).abs() < 1e-12 && (e.max() - 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let w = generate(&WeightKind::RandomLogbounded { cond_max: 30.0 }, 2, Mesh::unit(3), 4).unwrap();
        let text = w.to_json().unwrap();
        let back = MatrixWeight::from_json(&text).unwrap();
        assert_eq!(back, w);
        assert!(text.contains("\"N\"") && text.contains("\"D\"") && text.contains("\"window\""));
    }
}
