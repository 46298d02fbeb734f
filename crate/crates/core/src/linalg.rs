//! Internal `f64` symmetric linear algebra: eigenvalue queries, PSD repair
//! and square-root factors. Everything here runs in `f64` regardless of the
//! model scalar; matrices at the sizes this engine handles (tens of risks)
//! are far below the scale where that choice costs anything.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Factor `L` with `L * L^T = m` after clamping negative eigenvalues to
/// zero. For PSD input this reproduces `m` up to eigensolver accuracy; for
/// slightly indefinite input it is the factor of the nearest PSD matrix in
/// the eigenvalue sense.
pub(crate) fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(m.clone());
    let roots = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&l| if l > 0.0 { l.sqrt() } else { 0.0 }),
    );
    let mut l = eig.eigenvectors;
    for (j, mut col) in l.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    l
}

/// Projects a symmetric matrix to a valid correlation matrix: clamps
/// negative eigenvalues to zero, reassembles, and rescales rows and columns
/// so the diagonal is exactly one again. Off-diagonal entries stay within
/// `[-1, 1]` because the reassembled matrix is a Gram matrix.
pub(crate) fn clip_to_correlation(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let clamped = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&l| if l > 0.0 { l } else { 0.0 }),
    );
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clamped) * v.transpose();

    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = (rebuilt[(i, i)] * rebuilt[(j, j)]).sqrt();
            out[(i, j)] = if i == j {
                1.0
            } else if d > 0.0 {
                (rebuilt[(i, j)] / d).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
    // Exact symmetry can be lost to rounding in the reassembly product.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}
