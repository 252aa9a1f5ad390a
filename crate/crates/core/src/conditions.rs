//! Measured weight-condition constants with witnesses.
//!
//! Every constant is a maximum over all intervals of the mesh tree
//! (levels `0..=D`, leaves included). Witness ties resolve to the smallest
//! level and then the smallest index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicInterval, Mesh};
use crate::error::{Error, Result};
use crate::matops::{self, Matrix};
use crate::weights::MatrixWeight;

/// Exponents tried by [`rh_exponent_search`].
pub const RH_LADDER: [f64; 6] = [2.25, 2.5, 3.0, 4.0, 6.0, 8.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    JointA2,
    A2Zero,
    ReverseHolder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub constant: f64,
    pub witness: DyadicInterval,
    pub direction: Option<Vec<f64>>,
    pub r: Option<f64>,
    pub depth: u32,
}

/// First strict maximum in breadth-first order.
fn argmax<T>(items: Vec<(f64, T)>) -> (usize, f64, T) {
    // values within rounding of the maximum count as ties, so the earliest one wins
    let max = items.iter().map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * max.abs();
    let pos = items
        .iter()
        .position(|(v, _)| *v >= max - tol)
        .expect("non-empty interval scan");
    let (v, extra) = items.into_iter().nth(pos).unwrap();
    (pos, v, extra)
}

/// `max_I ‖⟨V⁻¹⟩_I^{1/2} ⟨U⟩_I ⟨V⁻¹⟩_I^{1/2}‖`, witnessed by the top eigenvector.
pub fn joint_a2(u: &MatrixWeight, v: &MatrixWeight) -> Result<ConditionReport> {
    u.same_mesh(v)?;
    let mesh = *u.mesh();
    let u_avg = u.averages();
    let vinv_avg = v.inverse_weight()?.averages();
    let values = (0..mesh.num_nodes())
        .into_par_iter()
        .map(|id| {
            let m = joint_product(vinv_avg.by_id(id), u_avg.by_id(id))?;
            let eig = matops::sym_eigen(&m);
            let last = eig.values.len() - 1;
            Ok((eig.max(), eig.vectors.column(last)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (pos, constant, dir) = argmax(values);
    Ok(ConditionReport {
        condition: Condition::JointA2,
        constant,
        witness: mesh.node(pos),
        direction: Some(dir),
        r: None,
        depth: mesh.depth,
    })
}

/// `A^{1/2} B A^{1/2}` for PSD `A`, symmetrized.
pub(crate) fn joint_product(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let s = matops::psd_sqrt(a)?;
    Ok(s.matmul(b).matmul(&s).symmetrized())
}

/// `max_I det⟨W⟩_I / exp⟨log det W⟩_I`, evaluated in log space.
pub fn a2zero(w: &MatrixWeight) -> Result<ConditionReport> {
    let mesh = *w.mesh();
    let avg = w.averages();
    let cell_logdet = w.cells().iter().map(matops::logdet).collect::<Result<Vec<f64>>>()?;
    let mean_logdet = node_means(&mesh, &cell_logdet);
    let gaps = (0..mesh.num_nodes())
        .into_par_iter()
        .map(|id| Ok((matops::logdet(avg.by_id(id))? - mean_logdet[id], ())))
        .collect::<Result<Vec<_>>>()?;
    let (pos, log_constant, ()) = argmax(gaps);
    Ok(ConditionReport {
        condition: Condition::A2Zero,
        constant: log_constant.exp(),
        witness: mesh.node(pos),
        direction: None,
        r: None,
        depth: mesh.depth,
    })
}

/// Scalar interval means by the same midpoint recursion as matrix averages.
fn node_means(mesh: &Mesh, cells: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_nodes()];
    for (c, v) in cells.iter().enumerate() {
        out[mesh.node_id(mesh.leaf(c))] = *v;
    }
    for id in (0..mesh.num_haar()).rev() {
        out[id] = 0.5 * (out[2 * id + 1] + out[2 * id + 2]);
    }
    out
}

/// How the supremum over directions `y` is approximated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSampling {
    /// Uniform sphere samples on top of the canonical basis and the
    /// eigenvectors of each `⟨U⟩_I`.
    pub samples: usize,
    pub seed: u64,
}

impl Default for DirectionSampling {
    fn default() -> Self {
        Self { samples: 64, seed: 0x0d12_ec71 }
    }
}

impl DirectionSampling {
    fn fixed_directions(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut dirs: Vec<Vec<f64>> = (0..dim)
            .map(|j| {
                let mut e = vec![0.0; dim];
                e[j] = 1.0;
                e
            })
            .collect();
        if dim > 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for _ in 0..self.samples {
                let mut y: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = y.iter().map(|a| a * a).sum::<f64>().sqrt();
                if n > 0.0 {
                    y.iter_mut().for_each(|a| *a /= n);
                    dirs.push(y);
                }
            }
        }
        dirs
    }
}

/// Reverse Hölder constant at exponent `r > 2`:
/// `max_{I, y} ( ⟨‖U^{1/2} ⟨U⟩_I^{-1/2} y‖^r⟩_I )^{1/r}` over unit directions `y`.
///
/// The maximum over `y` is taken over a finite direction set, so the result
/// is a lower bound on the supremum (exact for `N = 1`).
pub fn reverse_holder(u: &MatrixWeight, r: f64, sampling: DirectionSampling) -> Result<ConditionReport> {
    if !(r > 2.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("reverse Hölder exponent must exceed 2, got {r}")));
    }
    let mesh = *u.mesh();
    let avg = u.averages();
    let fixed = sampling.fixed_directions(u.dim());
    let values = (0..mesh.num_nodes())
        .into_par_iter()
        .map(|id| {
            let interval = mesh.node(id);
            let a = avg.by_id(id);
            let inv_sqrt = matops::psd_inv_sqrt(a)?;
            let eig = matops::sym_eigen(a);
            let cells = &u.cells()[mesh.cell_range(interval)];
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let eigvecs = (0..u.dim()).map(|j| eig.vectors.column(j));
            for y in fixed.iter().cloned().chain(eigvecs) {
                let z = inv_sqrt.matvec(&y);
                let moment = cells.iter().map(|c| c.quad_form(&z).max(0.0).powf(0.5 * r)).sum::<f64>()
                    / cells.len() as f64;
                let value = moment.powf(1.0 / r);
                if value > best.0 {
                    best = (value, y);
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let (pos, constant, dir) = argmax(values);
    Ok(ConditionReport {
        condition: Condition::ReverseHolder,
        constant,
        witness: mesh.node(pos),
        direction: Some(dir),
        r: Some(r),
        depth: mesh.depth,
    })
}

/// Largest ladder exponent whose reverse Hölder constant stays within
/// `budget`, or `None` when even the smallest exponent exceeds it.
pub fn rh_exponent_search(
    u: &MatrixWeight,
    budget: f64,
    sampling: DirectionSampling,
) -> Result<Option<(f64, ConditionReport)>> {
    if !(budget > 1.0) {
        return Err(Error::InvalidParameter(format!("budget must exceed 1, got {budget}")));
    }
    let mut found = None;
    for &r in RH_LADDER.iter() {
        let report = reverse_holder(u, r, sampling)?;
        if report.constant <= budget {
            found = Some((r, report));
        }
    }
    Ok(found)
}

/// A₂,₀ constant against reverse Hölder constant at a fixed exponent, over
/// a family of weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct A2ZeroRhTrend {
    pub r: f64,
    /// `(a2zero, reverse_holder)` pairs sorted by the A₂,₀ constant.
    pub points: Vec<(f64, f64)>,
    /// Spearman rank correlation between the two constants.
    pub rank_correlation: f64,
}

/// Diagnostic for the implication A₂,₀ ⇒ reverse Hölder: whether larger
/// A₂,₀ constants come with larger RH constants. Not an assertion; the
/// implication only guarantees some admissible exponent.
pub fn a2zero_rh_trend(weights: &[MatrixWeight], r: f64, sampling: DirectionSampling) -> Result<A2ZeroRhTrend> {
    let mut points = weights
        .iter()
        .map(|w| Ok((a2zero(w)?.constant, reverse_holder(w, r, sampling)?.constant)))
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rank_correlation = spearman(&points);
    Ok(A2ZeroRhTrend { r, points, rank_correlation })
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank as f64;
    }
    out
}

fn spearman(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (rx, ry) = (ranks(&xs), ranks(&ys));
    let mean = (n as f64 - 1.0) / 2.0;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        cov += (rx[i] - mean) * (ry[i] - mean);
        vx += (rx[i] - mean).powi(2);
        vy += (ry[i] - mean).powi(2);
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{generate, WeightKind};

    fn two_value(depth: u32, left: f64, right: f64) -> MatrixWeight {
        generate(&WeightKind::TwoValue { left, right }, 1, Mesh::unit(depth), 0).unwrap()
    }

    #[test]
    fn identity_weights_give_one() {
        let id = MatrixWeight::identity(Mesh::unit(3), 2);
        let j = joint_a2(&id, &id).unwrap();
        assert!((j.constant - 1.0).abs() < 1e-12);
        assert_eq!(j.witness, DyadicInterval::new(0, 0));
        assert!((a2zero(&id).unwrap().constant - 1.0).abs() < 1e-12);
        let rh = reverse_holder(&id, 3.0, DirectionSampling::default()).unwrap();
        assert!((rh.constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_a2_two_value() {
        let w = two_value(1, 1.0, 4.0);
        let j = joint_a2(&w, &w).unwrap();
        assert!((j.constant - 1.5625).abs() < 1e-14);
        assert_eq!(j.witness, DyadicInterval::new(0, 0));
    }

    #[test]
    fn joint_a2_rotated_diagonals() {
        let mesh = Mesh::unit(1);
        let u = MatrixWeight::new(mesh, vec![Matrix::from_diag(&[1.0, 4.0]), Matrix::from_diag(&[4.0, 1.0])]).unwrap();
        let v = MatrixWeight::identity(mesh, 2);
        let j = joint_a2(&u, &v).unwrap();
        assert!((j.constant - 4.0).abs() < 1e-14);
        assert_eq!(j.witness, DyadicInterval::new(1, 0));
    }

    #[test]
    fn a2zero_examples() {
        let w = two_value(1, 1.0, 4.0);
        let r = a2zero(&w).unwrap();
        assert!((r.constant - 1.25).abs() < 1e-14);
        assert_eq!(r.witness, DyadicInterval::new(0, 0));
        assert!(r.direction.is_none());

        let mesh = Mesh::unit(1);
        let u = MatrixWeight::new(mesh, vec![Matrix::from_diag(&[1.0, 4.0]), Matrix::from_diag(&[4.0, 1.0])]).unwrap();
        assert!((a2zero(&u).unwrap().constant - 1.5625).abs() < 1e-14);
    }

    #[test]
    fn reverse_holder_two_value() {
        let w = two_value(1, 1.0, 4.0);
        let r = reverse_holder(&w, 4.0, DirectionSampling::default()).unwrap();
        let expected = 1.36f64.powf(0.25);
        assert!((r.constant - expected).abs() < 1e-14);
        assert_eq!(r.witness, DyadicInterval::new(0, 0));
        assert!(reverse_holder(&w, 2.0, DirectionSampling::default()).is_err());
    }

    #[test]
    fn exponent_search_examples() {
        let id = MatrixWeight::identity(Mesh::unit(3), 1);
        let (r, rep) = rh_exponent_search(&id, 1.01, DirectionSampling::default()).unwrap().unwrap();
        assert_eq!(r, 8.0);
        assert_eq!(rep.constant, 1.0);

        let mild = rh_exponent_search(&two_value(1, 1.0, 4.0), 1.1, DirectionSampling::default()).unwrap().unwrap();
        assert_eq!(mild.0, 4.0);
        let harsh = rh_exponent_search(&two_value(1, 1.0, 1e6), 1.1, DirectionSampling::default()).unwrap().unwrap();
        assert!(harsh.0 < mild.0);
        assert_eq!(harsh.0, 2.5);

        // Nothing on the ladder fits a budget this tight.
        assert!(rh_exponent_search(&two_value(1, 1.0, 1e6), 1.0001, DirectionSampling::default()).unwrap().is_none());
    }

    #[test]
    fn spearman_of_monotone_data_is_one() {
        let pts = vec![(1.0, 2.0), (2.0, 3.0), (3.0, 10.0)];
        assert!((spearman(&pts) - 1.0).abs() < 1e-15);
    }
}
