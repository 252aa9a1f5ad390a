//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use haarweights::dyadic::{DyadicInterval, LeafField, Mesh};
use haarweights::matops::Matrix;
use haarweights::weights::{generate, MatrixWeight, WeightKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(mesh: Mesh, dim: usize, seed: u64) -> LeafField {
    let mut r = rng(seed);
    let values = (0..mesh.num_cells() * dim).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    LeafField::from_values(mesh, dim, values).unwrap()
}

/// A weight drawn from one of several families, chosen by the seed.
pub fn random_weight(mesh: Mesh, dim: usize, seed: u64) -> MatrixWeight {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let kind = match seed % 4 {
        0 | 1 => WeightKind::RandomLogbounded {
            cond_max: r.random_range(1.5..200.0),
        },
        2 => WeightKind::ScalarPower {
            alpha: r.random_range(-0.9..0.9),
        },
        _ if dim >= 2 => WeightKind::Rotating {
            angle_slope: r.random_range(-6.0..6.0),
            angle_offset: r.random_range(0.0..3.0),
            eccentricity: r.random_range(0.05..20.0),
        },
        _ => WeightKind::TwoValue {
            left: r.random_range(0.1..10.0),
            right: r.random_range(0.1..10.0),
        },
    };
    generate(&kind, dim, mesh, seed).unwrap()
}

/// A constant weight with a random SPD value.
pub fn random_constant(mesh: Mesh, dim: usize, seed: u64) -> MatrixWeight {
    let single = generate(&WeightKind::RandomLogbounded { cond_max: 30.0 }, dim, Mesh::unit(0), seed).unwrap();
    MatrixWeight::constant(mesh, single.cell(0).clone()).unwrap()
}

/// A jointly A₂ pair with a real singularity: `U = |x − x₀|^α·S` with a
/// random SPD `S`, and `V = s(x)·U` with `s` uniform in `[1/2, 2]` per cell.
pub fn power_pair(depth: u32, dim: usize, seed: u64) -> (MatrixWeight, MatrixWeight) {
    let mesh = Mesh::unit(depth);
    let mut r = rng(seed);
    let x0: f64 = r.random();
    let alpha = -r.random_range(0.5..0.95);
    let base = random_constant(Mesh::unit(0), dim, seed).cell(0).clone();
    let u: Vec<Matrix> = (0..mesh.num_cells())
        .map(|c| base.scale((mesh.cell_midpoint(c) - x0).abs().powf(alpha)))
        .collect();
    let v: Vec<Matrix> = u.iter().map(|m| m.scale(r.random_range(0.5..2.0))).collect();
    (MatrixWeight::new(mesh, u).unwrap(), MatrixWeight::new(mesh, v).unwrap())
}

/// `h_I` on the mesh straight from the definition: `−|I|^{-1/2}` on the
/// left half, `+|I|^{-1/2}` on the right half.
pub fn haar_by_definition(mesh: &Mesh, i: DyadicInterval) -> Vec<f64> {
    let (a, b) = mesh.bounds(i);
    let mid = 0.5 * (a + b);
    let s = 1.0 / (b - a).sqrt();
    (0..mesh.num_cells())
        .map(|c| {
            let x = mesh.cell_midpoint(c);
            if x < a || x >= b {
                0.0
            } else if x < mid {
                -s
            } else {
                s
            }
        })
        .collect()
}

pub fn to_nalgebra(m: &Matrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

/// Largest singular value from nalgebra's SVD.
pub fn svd_norm(m: &Matrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    to_nalgebra(m).singular_values().max()
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(m: &Matrix) -> f64 {
    let n = m.rows();
    if n == 1 {
        return m.get(0, 0);
    }
    (0..n)
        .map(|j| {
            let rows: Vec<Vec<f64>> = (1..n)
                .map(|i| (0..n).filter(|c| *c != j).map(|c| m.get(i, c)).collect())
                .collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * m.get(0, j) * cofactor_det(&Matrix::from_rows(&rows).unwrap())
        })
        .sum()
}

/// Tree distance by breadth-first search over explicit parent/child edges.
pub fn bfs_distance(mesh: &Mesh, a: DyadicInterval, b: DyadicInterval) -> u32 {
    use std::collections::{HashMap, VecDeque};
    let depth = mesh.depth as i32;
    let mut seen = HashMap::new();
    let mut queue = VecDeque::from([a]);
    seen.insert(a, 0u32);
    while let Some(x) = queue.pop_front() {
        let d = seen[&x];
        if x == b {
            return d;
        }
        let mut next = Vec::new();
        if x.level > 0 {
            next.push(DyadicInterval::new(x.level - 1, x.index.div_euclid(2)));
        }
        if x.level < depth {
            next.push(DyadicInterval::new(x.level + 1, 2 * x.index));
            next.push(DyadicInterval::new(x.level + 1, 2 * x.index + 1));
        }
        for y in next {
            seen.entry(y).or_insert_with(|| {
                queue.push_back(y);
                d + 1
            });
        }
    }
    unreachable!("the mesh tree is connected")
}
