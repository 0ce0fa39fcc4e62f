use nalgebra::{DMatrix, SymmetricEigen};

use crate::grid::SparseSymOp;

/// All generalized eigenpairs of `(A, M)` through `M^{-1/2} A M^{-1/2}`,
/// ascending; vectors are returned in node space, M-orthonormal.
pub fn dense_eigenpairs(op: &SparseSymOp) -> (Vec<f64>, DMatrix<f64>) {
    let n = op.dim();
    let s: Vec<f64> = op.mass().iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for (i, j, v) in op.matrix().triplets() {
        b[(i, j)] = v * s[i] * s[j];
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]).then(a.cmp(&c)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, col)] = eig.eigenvectors[(i, k)] * s[i];
        }
    }
    (values, vectors)
}

/// Ascending generalized eigenvalues by the dense route.
pub fn dense_spectrum(op: &SparseSymOp) -> Vec<f64> {
    dense_eigenpairs(op).0
}
