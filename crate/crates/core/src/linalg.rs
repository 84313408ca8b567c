//! Small dense kernels: symmetric eigendecomposition and triangular solves.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector of `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigendecomposition of the `n × n` symmetric matrix `a`
/// (row-major). Only the upper triangle is read.
pub fn symmetric_eigen(a: &[f64], n: usize) -> SymmetricEigen {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    for i in 0..n {
        for j in 0..i {
            m[i * n + j] = m[j * n + i];
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    SymmetricEigen {
        values: order.iter().map(|&i| m[i * n + i]).collect(),
        vectors: order
            .iter()
            .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
            .collect(),
    }
}

/// Minimum-norm solution of `A x = b` for symmetric positive semidefinite
/// `A` (upper triangle read), dropping eigenvalues below `1e-12·λ_max`.
pub fn psd_solve(a: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let eig = symmetric_eigen(a, n);
    let cutoff = eig.values.first().copied().unwrap_or(0.0) * 1e-12;
    let mut x = vec![0.0; n];
    for (&lambda, v) in eig.values.iter().zip(&eig.vectors) {
        if lambda <= cutoff || lambda <= 0.0 {
            break;
        }
        let coef = math::dot(v, b) / lambda;
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += coef * vi;
        }
    }
    x
}

/// Lower-triangular Cholesky factor grown one row at a time.
#[derive(Debug, Clone, Default)]
pub struct IncrementalCholesky {
    /// Row `i` holds `L[i][0..=i]`.
    rows: Vec<Vec<f64>>,
}

impl IncrementalCholesky {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Appends a row for a new column with cross-Gram `g` (against existing
    /// columns) and squared norm `diag`. Returns the new pivot, or `None`
    /// (leaving the factor untouched) when the squared pivot relative to
    /// `diag` falls below `min_pivot`, i.e. the new column is numerically in
    /// the span of the existing ones.
    pub fn push(&mut self, g: &[f64], diag: f64, min_pivot: f64) -> Option<f64> {
        debug_assert_eq!(g.len(), self.rows.len());
        let w = self.forward(g);
        let d2 = diag - math::norm_sq(&w);
        if !(d2 >= min_pivot * diag) || !(diag > 0.0) {
            return None;
        }
        let pivot = math::sqrt(d2);
        let mut row = w;
        row.push(pivot);
        self.rows.push(row);
        Some(pivot)
    }

    /// Solves `L w = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&w).map(|(a, b)| a * b).sum();
            w.push((b[i] - s) / row[i]);
        }
        w
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.forward(b);
        let n = x.len();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.rows[k][i] * x[k];
            }
            x[i] = s / self.rows[i][i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psd_solve_full_rank_and_singular() {
        let a = [4.0, 2.0, 0.0, 3.0];
        let x = psd_solve(&a, 2, &[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        let x = psd_solve(&[1.0, 1.0, 0.0, 1.0], 2, &[2.0, 2.0]);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert_eq!(psd_solve(&[0.0; 4], 2, &[1.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 9;
        let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
            }
        }
        let e = symmetric_eigen(&a, n);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j]).sum();
                assert!((r - a[i * n + j]).abs() < 1e-10);
            }
        }
        let na = nalgebra::DMatrix::from_row_slice(n, n, &a);
        let mut oracle: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (x, y) in e.values.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 6;
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut ch = IncrementalCholesky::default();
        for k in 0..n {
            let g: Vec<f64> = (0..k).map(|i| math::dot(&cols[i], &cols[k])).collect();
            ch.push(&g, math::norm_sq(&cols[k]), 1e-10).unwrap();
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = ch.solve(&b);
        for i in 0..n {
            let gx: f64 = (0..n).map(|j| math::dot(&cols[i], &cols[j]) * x[j]).sum();
            assert!((gx - b[i]).abs() < 1e-10);
        }
        let dup = cols[0].clone();
        let g: Vec<f64> = (0..n).map(|i| math::dot(&cols[i], &dup)).collect();
        assert!(ch.push(&g, math::norm_sq(&dup), 1e-10).is_none());
        assert_eq!(ch.dim(), n);
    }
}
