//! Small dense matrix numerics.
//!
//! Everything here is sized for the block dimension of a matrix weight
//! (N ≤ 8) or for operators assembled on desk-scale meshes (a few hundred
//! rows). Symmetric problems go through a cyclic Jacobi eigensolver so that
//! results are deterministic and independent of any BLAS backend.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Symmetric positive (semi)definite matrix. The type is a plain alias: the
/// PSD contract is checked by the operations that need it.
pub type PsdMatrix = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_diag(&[value])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn tmatvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        y.fill(0.0);
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += a * xi;
            }
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// Arithmetic mean `(self + other) / 2`, exact for equal operands.
    pub fn midpoint(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Quadratic form `xᵀ M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            acc += x[i] * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self.get(i, j) - self.get(j, i)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// `(M + Mᵀ)/2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }
}

/// Eigen-decomposition of a symmetric matrix: ascending eigenvalues and
/// the matching orthonormal eigenvectors as matrix columns.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    pub fn min(&self) -> f64 {
        *self.values.first().unwrap_or(&0.0)
    }

    /// Rebuild `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.vectors.get(i, k) * fv[k] * self.vectors.get(j, k);
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        out
    }
}

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for symmetric input. Sweeps stop once the
/// off-diagonal Frobenius norm falls below `1e-13·‖M‖_F`.
pub fn sym_eigen(m: &Matrix) -> SymEigen {
    assert!(m.is_square(), "sym_eigen needs a square matrix");
    let n = m.rows;
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let total = a.frobenius();
    let off = |a: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a.get(i, j) * a.get(i, j);
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= JACOBI_TOL * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, dst, v.get(k, src));
        }
    }
    SymEigen { values, vectors }
}

/// Tolerated negative eigenvalue, relative to the spectral norm, before a
/// PSD operation gives up.
const NEG_EIG_TOL: f64 = 1e-10;
/// Smallest eigenvalue, relative to the largest, that still counts as
/// strictly positive.
const SINGULAR_TOL: f64 = 1e-12;

fn checked_psd(m: &Matrix) -> Result<SymEigen> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{}x{} is not square", m.rows, m.cols)));
    }
    let eig = sym_eigen(m);
    let norm = eig.values.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let floor = -NEG_EIG_TOL * norm;
    if eig.min() < floor {
        return Err(Error::NotPositive {
            eigenvalue: eig.min(),
            floor,
        });
    }
    Ok(eig)
}

fn checked_pd(m: &Matrix) -> Result<SymEigen> {
    let eig = checked_psd(m)?;
    if eig.min() <= SINGULAR_TOL * eig.max() || eig.max() <= 0.0 {
        return Err(Error::Singular {
            eigenvalue: eig.min(),
            largest: eig.max(),
        });
    }
    Ok(eig)
}

/// Unique PSD square root; tiny negative eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = checked_psd(m)?;
    Ok(eig.map(|l| l.max(0.0).sqrt()))
}

pub fn psd_inv_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = checked_pd(m)?;
    Ok(eig.map(|l| 1.0 / l.sqrt()))
}

pub fn psd_inverse(m: &Matrix) -> Result<Matrix> {
    let eig = checked_pd(m)?;
    Ok(eig.map(|l| 1.0 / l))
}

/// `log det M` as the sum of log-eigenvalues.
pub fn logdet(m: &Matrix) -> Result<f64> {
    let eig = checked_pd(m)?;
    Ok(eig.values.iter().map(|l| l.ln()).sum())
}

/// `λ_max / λ_min` for a positive definite matrix.
pub fn condition_number(m: &Matrix) -> Result<f64> {
    let eig = checked_psd(m)?;
    if eig.min() <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(eig.max() / eig.min())
}

/// Largest singular value of a small dense matrix.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.data.iter().all(|a| *a == 0.0) {
        return 0.0;
    }
    if m.is_symmetric(0.0) {
        let eig = sym_eigen(m);
        return eig.max().abs().max(eig.min().abs());
    }
    let gram = if m.rows <= m.cols {
        m.matmul(&m.transpose())
    } else {
        m.transpose().matmul(m)
    };
    sym_eigen(&gram).max().max(0.0).sqrt()
}

/// Smallest generalized eigenvalue `min_γ (γᵀAγ)/(γᵀBγ)` for PSD `A` and
/// positive definite `B`, with the minimizing direction.
pub fn min_generalized_eigen(a: &Matrix, b: &Matrix) -> Result<(f64, Vec<f64>)> {
    let b_is = psd_inv_sqrt(b)?;
    let c = b_is.matmul(a).matmul(&b_is);
    let eig = sym_eigen(&c);
    let y = eig.vectors.column(0);
    let mut gamma = b_is.matvec(&y);
    let norm = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
    gamma.iter_mut().for_each(|g| *g /= norm);
    Ok((eig.min(), gamma))
}

/// A linear map `ℝ^cols → ℝ^rows` known through products with it and with
/// its transpose.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for Matrix {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.tmatvec_into(x, y);
    }
}

/// Linear map from a pair of closures (forward product and transpose product).
pub struct FnOperator<F, G> {
    pub rows: usize,
    pub cols: usize,
    pub forward: F,
    pub transpose: G,
}

impl<F, G> LinearOperator for FnOperator<F, G>
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
{
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.forward)(x, y)
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        (self.transpose)(x, y)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PowerIteration {
    /// Relative change in the estimate of `σ²` that ends an iteration run.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the restart vector.
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            seed: 0x5eed_0f_5a1e,
        }
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl PowerIteration {
    /// Dominant singular value of `op` by power iteration on `AᵀA`.
    ///
    /// The first run starts from the normalized all-ones vector. A second
    /// run starts from a seeded random vector, which catches the case where
    /// the all-ones vector is (numerically) orthogonal to the dominant right
    /// singular subspace; the larger of the two estimates is returned.
    pub fn largest_singular_value(&self, op: &dyn LinearOperator) -> Result<f64> {
        let n = op.ncols();
        if n == 0 || op.nrows() == 0 {
            return Ok(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.probe_linearity(op, &mut rng)?;

        let ones = vec![1.0 / (n as f64).sqrt(); n];
        let first = self.run(op, ones)?;
        let start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let second = self.run(op, start)?;
        Ok(first.max(second))
    }

    fn probe_linearity(&self, op: &dyn LinearOperator, rng: &mut ChaCha8Rng) -> Result<()> {
        let n = op.ncols();
        let m = op.nrows();
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let (a, b) = (0.75, -1.25);
        let combo: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
        let mut ax = vec![0.0; m];
        let mut az = vec![0.0; m];
        let mut ac = vec![0.0; m];
        op.apply(&x, &mut ax);
        op.apply(&z, &mut az);
        op.apply(&combo, &mut ac);
        let scale = norm2(&ax).max(norm2(&az)).max(f64::MIN_POSITIVE);
        let diff: f64 = ac
            .iter()
            .zip(ax.iter().zip(&az))
            .map(|(c, (p, q))| (c - a * p - b * q).powi(2))
            .sum::<f64>()
            .sqrt();
        if diff > 1e-8 * scale {
            return Err(Error::NotLinear(diff / scale));
        }
        Ok(())
    }

    fn run(&self, op: &dyn LinearOperator, mut v: Vec<f64>) -> Result<f64> {
        let nv = norm2(&v);
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|a| *a /= nv);
        let mut w = vec![0.0; op.nrows()];
        let mut z = vec![0.0; op.ncols()];
        let mut prev = f64::NAN;
        let mut residual = f64::INFINITY;
        for _ in 0..self.max_iter {
            op.apply(&v, &mut w);
            let sigma2 = w.iter().map(|a| a * a).sum::<f64>();
            op.apply_transpose(&w, &mut z);
            let nz = norm2(&z);
            if nz == 0.0 || sigma2 == 0.0 {
                return Ok(0.0);
            }
            residual = (sigma2 - prev).abs() / sigma2;
            if residual <= self.tol {
                return Ok(sigma2.sqrt());
            }
            prev = sigma2;
            for (vi, zi) in v.iter_mut().zip(&z) {
                *vi = zi / nz;
            }
        }
        Err(Error::NonConvergence {
            iterations: self.max_iter,
            estimate: prev.max(0.0).sqrt(),
            residual,
        })
    }
}

/// Dominant singular value with the default power-iteration settings.
pub fn largest_singular_value(op: &dyn LinearOperator) -> Result<f64> {
    PowerIteration::default().largest_singular_value(op)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, rng.random::<f64>() * 2.0 - 1.0);
            }
        }
        a.matmul(&a.transpose()).add(&Matrix::identity(n).scale(0.05))
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol * b.max_abs().max(1.0)
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        assert_eq!(psd_sqrt(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let r = psd_sqrt(&Matrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!(close(&r, &Matrix::from_diag(&[2.0, 3.0]), 1e-15));
    }

    #[test]
    fn sqrt_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=4 {
            for _ in 0..50 {
                let m = random_psd(&mut rng, n);
                let s = psd_sqrt(&m).unwrap();
                let back = s.matmul(&s);
                assert!(spectral_norm(&back.sub(&m)) <= 1e-10 * spectral_norm(&m));
            }
        }
    }

    #[test]
    fn sqrt_rejects_negative_and_clamps_tiny() {
        let m = Matrix::from_diag(&[1.0, -0.5]);
        assert!(matches!(psd_sqrt(&m), Err(Error::NotPositive { .. })));
        let tiny = Matrix::from_diag(&[1.0, -1e-14]);
        let s = psd_sqrt(&tiny).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&Matrix::from_diag(&[3.0, 1.0])), 3.0);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 3)), 0.0);
        let nonsym = Matrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!((spectral_norm(&nonsym) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn logdet_and_inv_sqrt() {
        assert_eq!(logdet(&Matrix::identity(3)).unwrap(), 0.0);
        assert_eq!(psd_inv_sqrt(&Matrix::identity(2)).unwrap(), Matrix::identity(2));
        assert!(logdet(&Matrix::from_diag(&[4.0, 0.25])).unwrap().abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            let m = random_psd(&mut rng, n);
            let r = psd_inv_sqrt(&m).unwrap();
            let inv = psd_inverse(&r.matmul(&r)).unwrap();
            assert!(close(&inv, &m, 1e-9));
        }
    }

    #[test]
    fn singular_input_is_reported() {
        let m = Matrix::from_diag(&[1.0, 0.0]);
        match logdet(&m) {
            Err(Error::Singular { eigenvalue, .. }) => assert_eq!(eigenvalue, 0.0),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn power_iteration_trivial_maps() {
        for n in [1, 5, 17] {
            let id = Matrix::identity(n);
            assert!((largest_singular_value(&id).unwrap() - 1.0).abs() < 1e-12);
            let two = id.scale(2.0);
            assert!((largest_singular_value(&two).unwrap() - 2.0).abs() < 1e-12);
        }
        assert_eq!(largest_singular_value(&Matrix::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn power_iteration_recovers_from_orthogonal_start() {
        // All-ones lies in the kernel; the restart has to find σ = 3.
        let m = Matrix::from_rows(&[vec![3.0, -3.0], vec![0.0, 0.0]]).unwrap();
        let s = largest_singular_value(&m).unwrap();
        assert!((s - 18f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn nonlinear_map_is_rejected() {
        let op = FnOperator {
            rows: 2,
            cols: 2,
            forward: |x: &[f64], y: &mut [f64]| {
                y[0] = x[0] * x[0];
                y[1] = x[1];
            },
            transpose: |x: &[f64], y: &mut [f64]| y.copy_from_slice(x),
        };
        assert!(matches!(largest_singular_value(&op), Err(Error::NotLinear(_))));
    }
}
