//! Leading eigenpairs of symmetric operators.
//!
//! Two routes: a dense solver for small matrices and a restarted block
//! Lanczos (block Krylov + Rayleigh–Ritz) iteration with full
//! reorthogonalization for large sparse ones. The block keeps a few more
//! vectors than requested so that repeated eigenvalues, which a
//! single-vector Krylov space cannot resolve, are still found.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;

/// Symmetric linear operator `y = A x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Row-major dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(self.values.chunks(self.n)) {
            *yi = dot(row, x);
        }
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[range.clone()]
                .iter()
                .zip(&self.values[range])
                .map(|(&j, &a)| a * x[j])
                .sum();
        }
    }
}

/// Eigenpairs in descending eigenvalue order; vectors have unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Matrix-vector products spent (0 for the dense route).
    pub matvecs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeOptions {
    /// Residual tolerance relative to the operator norm estimate.
    pub tolerance: f64,
    pub max_matvecs: usize,
    pub seed: u64,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_matvecs: 5000,
            seed: 0,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖A v − λ v‖`.
pub fn residual_norm(op: &dyn LinearOperator, value: f64, vector: &[f64]) -> f64 {
    let mut av = vec![0.0; vector.len()];
    op.apply(vector, &mut av);
    axpy(-value, vector, &mut av);
    norm(&av)
}

/// All eigenpairs of a small dense symmetric matrix, largest first,
/// truncated to `count`.
pub fn dense_top_eigenpairs(matrix: &DenseMatrix, count: usize) -> Result<EigenPairs> {
    let n = matrix.n;
    if count > n {
        return Err(Error::InvalidParameter(format!(
            "requested {count} eigenpairs of a {n}×{n} matrix"
        )));
    }
    let m = DMatrix::from_row_slice(n, n, &matrix.values);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..count]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok(EigenPairs {
        values,
        vectors,
        matvecs: 0,
    })
}

fn materialize(op: &dyn LinearOperator) -> DenseMatrix {
    let n = op.dim();
    let mut values = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            values[i * n + j] = col[i];
        }
    }
    // Symmetrize away rounding.
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (values[i * n + j] + values[j * n + i]);
            values[i * n + j] = avg;
            values[j * n + i] = avg;
        }
    }
    DenseMatrix { n, values }
}

/// Orthogonalizes `v` against `basis` twice (classical Gram–Schmidt with
/// reorthogonalization) and returns its remaining norm before scaling.
fn orthonormalize_against(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
    let nv = norm(v);
    if nv > 0.0 {
        v.iter_mut().for_each(|x| *x /= nv);
    }
    nv
}

/// Largest `count` eigenpairs by restarted block Lanczos.
pub fn iterative_top_eigenpairs(
    op: &dyn LinearOperator,
    count: usize,
    options: IterativeOptions,
) -> Result<EigenPairs> {
    let n = op.dim();
    if count == 0 || count > n {
        return Err(Error::InvalidParameter(format!(
            "requested {count} eigenpairs of a {n}×{n} operator"
        )));
    }
    let block = (count + 3).min(n);
    let max_basis = (8 * block).max(120).min(n);
    if n <= 64 || 2 * block > max_basis {
        let mut pairs = dense_top_eigenpairs(&materialize(op), count)?;
        pairs.matvecs = n;
        return Ok(pairs);
    }

    let mut rng = seed::rng(options.seed);
    let mut random_vector = |basis: &[Vec<f64>]| -> Vec<f64> {
        loop {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            if orthonormalize_against(&mut v, basis) > 1e-8 {
                return v;
            }
        }
    };

    let mut matvecs = 0;
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        op.apply(v, &mut y);
        y
    };

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    for _ in 0..block {
        let v = random_vector(&basis);
        images.push(apply(&v));
        matvecs += 1;
        basis.push(v);
    }
    let keep = (max_basis / 2).max(block).min(max_basis - block);

    loop {
        // Extend the block Krylov space. The first block grows from the
        // images of the leading vectors, which after a restart are the
        // leading Ritz vectors, so the new directions are their residuals.
        let mut frontier = 0..block;
        while basis.len() + block <= max_basis {
            let start = basis.len();
            for idx in frontier.clone() {
                let mut v = images[idx].clone();
                let before = norm(&v);
                let after = orthonormalize_against(&mut v, &basis);
                if after <= 1e-10 * before.max(f64::MIN_POSITIVE) {
                    v = random_vector(&basis);
                }
                images.push(apply(&v));
                matvecs += 1;
                basis.push(v);
            }
            frontier = start..basis.len();
        }

        // Rayleigh–Ritz on the current subspace.
        let m = basis.len();
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);

        let mut ritz = Vec::with_capacity(keep);
        let mut ritz_images = Vec::with_capacity(keep);
        let mut worst = 0.0f64;
        for (rank, &col) in order[..keep.min(m)].iter().enumerate() {
            let theta = eig.eigenvalues[col];
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for (c, (q, aq)) in eig.eigenvectors.column(col).iter().zip(basis.iter().zip(&images)) {
                axpy(*c, q, &mut y);
                axpy(*c, aq, &mut ay);
            }
            if rank < count {
                let mut r = ay.clone();
                axpy(-theta, &y, &mut r);
                worst = worst.max(norm(&r) / scale);
            }
            ritz.push((theta, y));
            ritz_images.push(ay);
        }

        if worst <= options.tolerance {
            // Confirm with fresh products; recombined images carry rounding.
            let mut values = Vec::with_capacity(count);
            let mut vectors = Vec::with_capacity(count);
            let mut confirmed = 0.0f64;
            for (theta, y) in &ritz[..count] {
                let nv = norm(y);
                let v: Vec<f64> = y.iter().map(|x| x / nv).collect();
                confirmed = confirmed.max(residual_norm(op, *theta, &v) / scale);
                matvecs += 1;
                values.push(*theta);
                vectors.push(v);
            }
            if confirmed <= options.tolerance {
                return Ok(EigenPairs {
                    values,
                    vectors,
                    matvecs,
                });
            }
            worst = confirmed;
        }
        if matvecs >= options.max_matvecs {
            return Err(Error::NoConvergence {
                matvecs,
                residual: worst,
            });
        }

        // Thick restart: keep the leading Ritz vectors and their images.
        basis.clear();
        images.clear();
        for ((_, y), ay) in ritz.into_iter().zip(ritz_images) {
            basis.push(y);
            images.push(ay);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = seed::rng(seed);
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.gen_range(-1.0..1.0);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        DenseMatrix { n, values }
    }

    fn frobenius(m: &DenseMatrix) -> f64 {
        norm(&m.values)
    }

    #[test]
    fn dense_solver_diagonal() {
        let m = DenseMatrix {
            n: 3,
            values: vec![1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0],
        };
        let pairs = dense_top_eigenpairs(&m, 2).unwrap();
        assert_eq!(pairs.values, vec![3.0, 2.0]);
        assert!((pairs.vectors[0][1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn iterative_matches_dense_on_random_matrices() {
        for (n, seed) in [(80, 1), (150, 2), (300, 3)] {
            let m = random_symmetric(n, seed);
            let dense = dense_top_eigenpairs(&m, 4).unwrap();
            let iter = iterative_top_eigenpairs(&m, 4, IterativeOptions::default()).unwrap();
            let bound = 1e-8 * frobenius(&m);
            for i in 0..4 {
                assert!((dense.values[i] - iter.values[i]).abs() < 1e-6, "n={n} i={i}");
                assert!(residual_norm(&m, iter.values[i], &iter.vectors[i]) <= bound);
                assert!(residual_norm(&m, dense.values[i], &dense.vectors[i]) <= bound);
            }
        }
    }

    #[test]
    fn repeated_top_eigenvalue_is_resolved() {
        // Three disjoint cliques: eigenvalue 1 with multiplicity 3 after
        // normalization.
        let sizes = [40, 50, 60];
        let n: usize = sizes.iter().sum();
        let mut values = vec![0.0; n * n];
        let mut start = 0;
        for &s in &sizes {
            for i in start..start + s {
                for j in start..start + s {
                    if i != j {
                        values[i * n + j] = 1.0 / (s as f64 - 1.0);
                    }
                }
            }
            start += s;
        }
        let m = DenseMatrix { n, values };
        let pairs = iterative_top_eigenpairs(&m, 3, IterativeOptions::default()).unwrap();
        for v in &pairs.values {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sparse_operator_matches_dense() {
        // Path graph adjacency.
        let n = 200;
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        for i in 0..n {
            if i > 0 {
                cols.push(i - 1);
            }
            if i + 1 < n {
                cols.push(i + 1);
            }
            row_ptr.push(cols.len());
        }
        let values = vec![1.0; cols.len()];
        let csr = CsrMatrix {
            n,
            row_ptr,
            cols,
            values,
        };
        let pairs = iterative_top_eigenpairs(&csr, 2, IterativeOptions::default()).unwrap();
        let exact = |j: f64| 2.0 * (j * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((pairs.values[0] - exact(1.0)).abs() < 1e-9);
        assert!((pairs.values[1] - exact(2.0)).abs() < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let m = random_symmetric(200, 7);
        let options = IterativeOptions {
            tolerance: 1e-30,
            max_matvecs: 300,
            seed: 0,
        };
        assert!(matches!(
            iterative_top_eigenpairs(&m, 3, options),
            Err(Error::NoConvergence { .. })
        ));
    }
}
