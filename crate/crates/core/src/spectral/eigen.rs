use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::rng::{stream, Purpose};

use super::SpectralError;

/// Largest dimension solved densely.
pub const DENSE_LIMIT: usize = 2000;
pub const LANCZOS_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100_000;
/// Krylov basis size before an explicit restart.
const RESTART: usize = 400;

/// Symmetric sparse matrix in row-compressed form.
#[derive(Debug, Clone)]
pub struct SymSparse {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SymSparse {
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] += self.vals[k];
            }
        }
        m
    }
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_spectrum(a: &SymSparse) -> Vec<f64> {
    let mut ev: Vec<f64> = a.to_dense().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Smallest eigenvalue of the positive semidefinite `a` on the orthogonal
/// complement of the unit vector `null`, by Lanczos with full
/// reorthogonalisation and explicit restarts.
pub fn lanczos_smallest(a: &SymSparse, null: &[f64], seed: u64) -> Result<(f64, usize), SpectralError> {
    let n = a.n;
    let deflate = |v: &mut [f64]| {
        let c = dot(v, null);
        axpy(-c, null, v);
    };
    let mut rng = stream(seed, Purpose::Probe, n as u64);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    deflate(&mut start);
    normalize(&mut start);
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    while iterations < MAX_ITERATIONS {
        let m = RESTART.min(n.saturating_sub(1)).max(1);
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut best = (f64::NAN, Vec::new());
        for k in 0..m {
            a.apply(&basis[k], &mut w);
            iterations += 1;
            let ak = dot(&basis[k], &w);
            alpha.push(ak);
            axpy(-ak, &basis[k], &mut w);
            if k > 0 {
                axpy(-beta[k - 1], &basis[k - 1], &mut w);
            }
            for _ in 0..2 {
                deflate(&mut w);
                for q in &basis {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
            }
            let bk = dot(&w, &w).sqrt();
            let size = alpha.len();
            let converged_basis = bk <= 1e-13 * ak.abs().max(1.0) || size == n - 1;
            if size % 5 == 0 || converged_basis || k + 1 == m {
                let t = DMatrix::from_fn(size, size, |i, j| {
                    if i == j {
                        alpha[i]
                    } else if i + 1 == j {
                        beta[i]
                    } else if j + 1 == i {
                        beta[j]
                    } else {
                        0.0
                    }
                });
                let eig = SymmetricEigen::new(t);
                let (idx, &theta) =
                    eig.eigenvalues.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).expect("non-empty");
                let s: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
                let residual = bk * s[size - 1].abs();
                best = (theta, s.iter().copied().collect());
                if converged_basis || residual <= LANCZOS_TOL * theta.abs().max(1e-300) {
                    return Ok((theta, iterations));
                }
            }
            beta.push(bk);
            let mut next = w.clone();
            next.iter_mut().for_each(|v| *v /= bk);
            basis.push(next);
        }
        // restart from the current Ritz vector
        let (_, s) = best;
        let mut ritz = vec![0.0; n];
        for (c, q) in s.iter().zip(&basis) {
            axpy(*c, q, &mut ritz);
        }
        deflate(&mut ritz);
        normalize(&mut ritz);
        start = ritz;
    }
    Err(SpectralError::ConvergenceFailure { iterations })
}
