//! Discretized Hilbert transform and its representation as an average of
//! dyadic shifts over randomly translated and dilated grids.
//!
//! The kernel is `Hf(x) = p.v.∫ f(t)/(x − t) dt` without the `1/π`; the
//! fitted proportionality constant absorbs any normalization.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicInterval, DyadicTree, GridCoefficients, LeafField, Mesh, ShiftedGrid, Window};
use crate::matops::Matrix;
use crate::operators::dense_norm;
use crate::seeds::indexed_rng;
use crate::weights::MatrixWeight;
use crate::{Error, Result};

/// `Hf` at `x` for a piecewise-constant `f`. Fails when `x` is an endpoint
/// of a cell where `f` does not vanish.
pub fn hilbert_at(f: &LeafField, x: f64) -> Result<Vec<f64>> {
    let mesh = f.mesh();
    let mut out = vec![0.0; f.dim()];
    for c in 0..mesh.num_cells() {
        let v = f.cell(c);
        if v.iter().all(|a| *a == 0.0) {
            continue;
        }
        let (a, b) = mesh.cell_bounds(c);
        if x == a || x == b {
            return Err(Error::BoundaryPoint(x));
        }
        // ∫_a^b dt/(x − t); symmetric principal value when a < x < b
        let k = ((x - a) / (x - b)).abs().ln();
        for (o, vi) in out.iter_mut().zip(v) {
            *o += vi * k;
        }
    }
    Ok(out)
}

/// `Hf` at the cell midpoints of `eval`.
pub fn hilbert_exact(f: &LeafField, eval: &Mesh) -> Result<LeafField> {
    let values = (0..eval.num_cells())
        .into_par_iter()
        .map(|c| hilbert_at(f, eval.cell_midpoint(c)))
        .collect::<Result<Vec<_>>>()?;
    LeafField::from_values(*eval, f.dim(), values.concat())
}

/// `(ℍc)_I = c_{I₊} − c_{I₋}` on every grid interval whose children carry
/// coefficients.
fn shift_grid_coefficients(grid: &ShiftedGrid, c: &GridCoefficients) -> GridCoefficients {
    let mut out = GridCoefficients::zeros_like(grid, c.dim);
    let levels: Vec<i32> = grid.haar_levels().collect();
    for (pos, &level) in levels.iter().enumerate().take(levels.len().saturating_sub(1)) {
        let (range, vals) = &mut out.levels[pos];
        for k in range.lo..=range.hi {
            let (l, r) = grid.children(DyadicInterval::new(level, k));
            let (Some(fl), Some(fr)) = (c.get(l), c.get(r)) else {
                continue;
            };
            let slot = (k - range.lo) as usize * c.dim;
            for j in 0..c.dim {
                vals[slot + j] = fl[j] - fr[j];
            }
        }
    }
    out
}

fn check_support(grid: &ShiftedGrid, f: &LeafField) -> Result<()> {
    let w = grid.window();
    let mesh = f.mesh();
    let tol = 1e-12 * w.len();
    for c in 0..mesh.num_cells() {
        let (a, b) = mesh.cell_bounds(c);
        if f.cell(c).iter().any(|v| *v != 0.0) && (a < w.start - tol || b > w.end + tol) {
            return Err(Error::InvalidParameter(format!(
                "support of f reaches cell [{a}, {b}) outside the grid window [{}, {})",
                w.start, w.end
            )));
        }
    }
    Ok(())
}

/// `ℍ^{β,r} f` on the grid, returned as cell averages on `eval`.
pub fn shift_on_grid(grid: &ShiftedGrid, f: &LeafField, eval: &Mesh) -> Result<LeafField> {
    check_support(grid, f)?;
    let c = grid.analyze(f);
    Ok(grid.synthesize(&shift_grid_coefficients(grid, &c), eval))
}

/// Grid levels kept by the averaging experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpan {
    pub coarsest: i32,
    pub finest: i32,
}

impl Default for LevelSpan {
    fn default() -> Self {
        Self { coarsest: -6, finest: 6 }
    }
}

/// Default averaging window.
pub fn default_window() -> Window {
    Window { start: -4.0, end: 4.0 }
}

/// Default evaluation depth on [`default_window`].
pub const DEFAULT_EVAL_DEPTH: u32 = 8;

/// A grid drawn from the product of fair shift bits and the dilation law
/// `dr/(r ln 2)` on `[1, 2)`.
pub fn draw_grid<R: Rng>(rng: &mut R, window: Window, levels: LevelSpan) -> Result<ShiftedGrid> {
    let r = rng.random::<f64>().exp2();
    let bits = (levels.coarsest..levels.finest).map(|_| rng.random::<bool>() as u8).collect();
    ShiftedGrid::new(r.min(2.0 - f64::EPSILON), bits, window, levels.coarsest, levels.finest)
}

/// How [`mc_average`] picks its grids.
#[derive(Clone, Debug, PartialEq)]
pub enum GridSampling {
    Random { window: Window, levels: LevelSpan },
    /// Every sample uses this grid.
    Fixed(ShiftedGrid),
}

impl GridSampling {
    fn grid(&self, seed: u64, index: u64) -> Result<ShiftedGrid> {
        match self {
            GridSampling::Random { window, levels } => draw_grid(&mut indexed_rng(seed, index), *window, *levels),
            GridSampling::Fixed(g) => Ok(g.clone()),
        }
    }

    fn window(&self) -> Window {
        match self {
            GridSampling::Random { window, .. } => *window,
            GridSampling::Fixed(g) => g.window(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionFit {
    pub name: String,
    pub fitted_c: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    pub samples: usize,
    /// Least-squares `c` in `c·avg ≈ Hf` over all functions jointly.
    pub fitted_c: f64,
    /// `‖c·avg − Hf‖/‖Hf‖` over all functions jointly.
    pub residual: f64,
    pub functions: Vec<FunctionFit>,
}

const CHUNK: usize = 256;

/// Mean of `ℍ^{β,r} f` over `num_samples` grids, for several functions at
/// once (each sample grid is shared by all functions).
pub fn mc_average_many(fs: &[&LeafField], num_samples: usize, seed: u64, sampling: &GridSampling) -> Result<Vec<LeafField>> {
    if num_samples == 0 {
        return Err(Error::InvalidParameter("num_samples must be at least 1".into()));
    }
    let Some(first) = fs.first() else {
        return Ok(Vec::new());
    };
    let eval = *first.mesh();
    for f in fs {
        f.same_mesh(&eval)?;
    }
    let zero = || fs.iter().map(|f| vec![0.0; f.values().len()]).collect::<Vec<_>>();
    let chunks = num_samples.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = zero();
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(num_samples) {
                let grid = sampling.grid(seed, i as u64)?;
                for (a, f) in acc.iter_mut().zip(fs) {
                    let s = shift_on_grid(&grid, f, &eval)?;
                    a.iter_mut().zip(s.values()).for_each(|(x, y)| *x += y);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = zero();
    for p in partial {
        for (t, a) in total.iter_mut().zip(p) {
            t.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        }
    }
    let n = num_samples as f64;
    total
        .into_iter()
        .zip(fs)
        .map(|(t, f)| LeafField::from_values(eval, f.dim(), t.into_iter().map(|x| x / n).collect()))
        .collect()
}

/// Cells whose midpoint lies in the inner 80% of the window.
fn interior_cells(mesh: &Mesh) -> Vec<usize> {
    let w = mesh.window;
    let (lo, hi) = (w.start + 0.1 * w.len(), w.end - 0.1 * w.len());
    (0..mesh.num_cells())
        .filter(|c| {
            let m = mesh.cell_midpoint(*c);
            m >= lo && m <= hi
        })
        .collect()
}

/// `(⟨a, b⟩, ⟨a, a⟩, ⟨b, b⟩)` over interior cells.
fn fit_sums(avg: &LeafField, hf: &LeafField, cells: &[usize]) -> (f64, f64, f64) {
    let mut s = (0.0, 0.0, 0.0);
    for &c in cells {
        for (a, b) in avg.cell(c).iter().zip(hf.cell(c)) {
            s.0 += a * b;
            s.1 += a * a;
            s.2 += b * b;
        }
    }
    s
}

fn fit((ab, aa, bb): (f64, f64, f64), what: &str) -> Result<(f64, f64)> {
    if aa == 0.0 {
        if bb == 0.0 {
            // f = 0: nothing to fit
            return Ok((0.0, 0.0));
        }
        return Err(Error::DegenerateFit(format!("average of shifts vanishes for {what}")));
    }
    let c = ab / aa;
    let res_sq = (bb - 2.0 * c * ab + c * c * aa).max(0.0);
    Ok((c, if bb > 0.0 { (res_sq / bb).sqrt() } else { 0.0 }))
}

/// Averages the shifts of every function and fits `c·avg ≈ Hf` on the
/// interior of the window, per function and jointly.
pub fn averaging_experiment(fs: &[(&str, &LeafField)], num_samples: usize, seed: u64, sampling: &GridSampling) -> Result<(Vec<LeafField>, AveragingReport)> {
    let fields: Vec<&LeafField> = fs.iter().map(|(_, f)| *f).collect();
    let avgs = mc_average_many(&fields, num_samples, seed, sampling)?;
    let mut joint = (0.0, 0.0, 0.0);
    let mut functions = Vec::new();
    for ((name, f), avg) in fs.iter().zip(&avgs) {
        check_support_window(sampling.window(), f)?;
        let hf = hilbert_exact(f, f.mesh())?;
        let sums = fit_sums(avg, &hf, &interior_cells(f.mesh()));
        joint = (joint.0 + sums.0, joint.1 + sums.1, joint.2 + sums.2);
        let (fitted_c, residual) = fit(sums, name)?;
        functions.push(FunctionFit {
            name: name.to_string(),
            fitted_c,
            residual,
        });
    }
    let (fitted_c, residual) = fit(joint, "the function set")?;
    Ok((
        avgs,
        AveragingReport {
            samples: num_samples,
            fitted_c,
            residual,
            functions,
        },
    ))
}

fn check_support_window(window: Window, f: &LeafField) -> Result<()> {
    if f.mesh().window != window {
        return Err(Error::Shape("test functions must live on the averaging window".into()));
    }
    Ok(())
}

/// Average of the shifts of `f` with its fit against `Hf`.
pub fn mc_average(f: &LeafField, num_samples: usize, seed: u64, sampling: &GridSampling) -> Result<(LeafField, AveragingReport)> {
    let (mut avgs, report) = averaging_experiment(&[("f", f)], num_samples, seed, sampling)?;
    Ok((avgs.remove(0), report))
}

/// The shift on one grid as a matrix on the cell values of `mesh`, with
/// optional cellwise factors before and after.
pub fn grid_shift_matrix(grid: &ShiftedGrid, mesh: &Mesh, dim: usize, pre: Option<&[Matrix]>, post: Option<&[Matrix]>) -> Result<Matrix> {
    let n = mesh.num_cells() * dim;
    let cols = (0..n)
        .into_par_iter()
        .map(|col| {
            let mut g = LeafField::zeros(*mesh, dim);
            g.values_mut()[col] = 1.0;
            if let Some(p) = pre {
                g = apply_cells(p, &g);
            }
            let mut y = shift_on_grid(grid, &g, mesh)?;
            if let Some(p) = post {
                y = apply_cells(p, &y);
            }
            Ok(y.into_values())
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

fn apply_cells(mats: &[Matrix], f: &LeafField) -> LeafField {
    let mut out = LeafField::zeros(*f.mesh(), f.dim());
    for (c, m) in mats.iter().enumerate() {
        m.matvec_into(f.cell(c), out.cell_mut(c));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionRatio {
    pub name: String,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedHilbertReport {
    /// `‖U^{1/2}·H·V^{-1/2} f‖/‖f‖` per test function.
    pub hilbert_ratios: Vec<FunctionRatio>,
    /// `‖H f‖/‖f‖` per test function.
    pub unweighted_ratios: Vec<FunctionRatio>,
    /// `‖U^{1/2}·ℍ^{β,r}·V^{-1/2}‖` per sampled grid.
    pub grid_norms: Vec<f64>,
    /// `C*`, the largest grid norm.
    pub max_grid_norm: f64,
    pub min_grid_norm: f64,
    /// `max/min` over grids.
    pub dispersion: f64,
    /// Largest Hilbert ratio over `C*`.
    pub ratio: f64,
}

/// Weighted Hilbert ratios on the test functions next to the weighted
/// shift norms of `num_grids` sampled grids (the first one standard).
pub fn weighted_hilbert_scan(
    u: &MatrixWeight,
    v: &MatrixWeight,
    tests: &[(&str, &LeafField)],
    num_grids: usize,
    seed: u64,
    levels: LevelSpan,
) -> Result<WeightedHilbertReport> {
    u.same_mesh(v)?;
    let mesh = *u.mesh();
    let u_half = u.half_powers(1)?;
    let v_inv_half = v.half_powers(-1)?;
    let mut hilbert_ratios = Vec::new();
    let mut unweighted_ratios = Vec::new();
    for (name, f) in tests {
        u.check_field(f)?;
        let norm = f.l2_norm();
        if norm == 0.0 {
            return Err(Error::InvalidParameter(format!("test function {name} vanishes")));
        }
        let weighted = apply_cells(&u_half, &hilbert_exact(&apply_cells(&v_inv_half, f), &mesh)?);
        let plain = hilbert_exact(f, &mesh)?;
        hilbert_ratios.push(FunctionRatio {
            name: name.to_string(),
            ratio: weighted.l2_norm() / norm,
        });
        unweighted_ratios.push(FunctionRatio {
            name: name.to_string(),
            ratio: plain.l2_norm() / norm,
        });
    }
    let grid_norms = (0..num_grids.max(1))
        .map(|i| {
            let grid = if i == 0 {
                ShiftedGrid::standard(mesh.window, levels.coarsest, levels.finest)?
            } else {
                draw_grid(&mut indexed_rng(seed, i as u64), mesh.window, levels)?
            };
            dense_norm(&grid_shift_matrix(&grid, &mesh, u.dim(), Some(&v_inv_half), Some(&u_half))?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_grid_norm = grid_norms.iter().copied().fold(0.0, f64::max);
    let min_grid_norm = grid_norms.iter().copied().fold(f64::INFINITY, f64::min);
    let top = hilbert_ratios.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(WeightedHilbertReport {
        hilbert_ratios,
        unweighted_ratios,
        dispersion: if min_grid_norm > 0.0 { max_grid_norm / min_grid_norm } else { f64::INFINITY },
        ratio: if max_grid_norm > 0.0 { top / max_grid_norm } else { f64::INFINITY },
        grid_norms,
        max_grid_norm,
        min_grid_norm,
    })
}

/// Haar function `h_I` of a window interval `[a, b)` sampled on `mesh`
/// (negative on the left half).
pub fn haar_function(mesh: &Mesh, a: f64, b: f64) -> LeafField {
    let m = 0.5 * (a + b);
    let s = 1.0 / (b - a).sqrt();
    LeafField::from_fn(*mesh, 1, |x| {
        vec![if x < a || x >= b {
            0.0
        } else if x < m {
            -s
        } else {
            s
        }]
    })
}

/// Indicator of `[a, b)` sampled on `mesh`.
pub fn indicator(mesh: &Mesh, a: f64, b: f64) -> LeafField {
    LeafField::from_fn(*mesh, 1, |x| vec![if x >= a && x < b { 1.0 } else { 0.0 }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{haar_decompose, haar_reconstruct};
    use crate::operators::dyadic_shift;

    #[test]
    fn log_formula_examples() {
        let mesh = Mesh::new(default_window(), 7).unwrap();
        let f = indicator(&mesh, 0.0, 1.0);
        assert!((hilbert_at(&f, 2.0 + 1e-3).unwrap()[0] - ((2.001f64) / 1.001).ln()).abs() < 1e-12);
        let eval = Mesh::new(Window { start: 1.5, end: 2.5 }, 0).unwrap();
        assert!((hilbert_exact(&f, &eval).unwrap().values()[0] - 2f64.ln()).abs() < 1e-12);
        let eval = Mesh::new(Window { start: -1.5, end: -0.5 }, 0).unwrap();
        assert!((hilbert_exact(&f, &eval).unwrap().values()[0] - 0.5f64.ln()).abs() < 1e-12);
        assert!(matches!(hilbert_at(&f, 1.0), Err(Error::BoundaryPoint(_))));
    }

    #[test]
    fn even_function_vanishes_at_center() {
        let mesh = Mesh::new(default_window(), 6).unwrap();
        let x0 = mesh.cell_midpoint(40);
        let h = mesh.cell_len();
        let f = LeafField::from_fn(mesh, 1, |x| vec![(-(x - x0).powi(2)).exp()]);
        assert!(hilbert_at(&f, x0).unwrap()[0].abs() < 1e-3);
        let f = LeafField::from_fn(mesh, 1, |x| vec![if (x - x0).abs() < 2.5 * h { 3.0 - (x - x0).abs() } else { 0.0 }]);
        assert!(hilbert_at(&f, x0).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn standard_grid_matches_mesh_shift() {
        let mesh = Mesh::unit(5);
        let grid = ShiftedGrid::standard(mesh.window, 0, 5).unwrap();
        let f = LeafField::from_fn(mesh, 2, |x| vec![(7.0 * x).sin(), x * x]);
        let via_grid = shift_on_grid(&grid, &f, &mesh).unwrap();
        let direct = haar_reconstruct(&dyadic_shift(&haar_decompose(&f, &mesh).unwrap()), &mesh).unwrap();
        assert!(via_grid.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn forced_single_sample_is_the_standard_shift() {
        let mesh = Mesh::new(default_window(), 7).unwrap();
        let f = haar_function(&mesh, 0.0, 0.5);
        let grid = ShiftedGrid::standard(mesh.window, -2, 5).unwrap();
        let (avg, _) = mc_average(&f, 1, 3, &GridSampling::Fixed(grid.clone())).unwrap();
        assert_eq!(avg, shift_on_grid(&grid, &f, &mesh).unwrap());
    }

    #[test]
    fn zero_function_averages_to_zero() {
        let mesh = Mesh::new(default_window(), 6).unwrap();
        let f = LeafField::zeros(mesh, 1);
        let sampling = GridSampling::Random {
            window: mesh.window,
            levels: LevelSpan::default(),
        };
        let (avg, report) = mc_average(&f, 10, 1, &sampling).unwrap();
        assert!(avg.values().iter().all(|v| *v == 0.0));
        assert_eq!(report.fitted_c, 0.0);
    }
}
