//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, SymmetricEigen};

/// Frobenius inner product `Σ a_ij b_ij`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty matrix).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix (`-inf` for an empty matrix).
pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Packs the upper triangle with off-diagonals scaled by `√2`, so that
/// `svec(a)·svec(b) = ⟨a, b⟩` for symmetric `a`, `b`.
pub fn svec(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                v.push(a[(i, i)]);
            } else {
                v.push(std::f64::consts::SQRT_2 * 0.5 * (a[(i, j)] + a[(j, i)]));
            }
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                a[(i, i)] = v[k];
            } else {
                let x = v[k] / std::f64::consts::SQRT_2;
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
            k += 1;
        }
    }
    a
}
