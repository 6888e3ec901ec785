//! Small dense linear-algebra helpers shared by the reducers.

use nalgebra::{DMatrix, SymmetricEigen};

/// Flip each column so its largest-magnitude entry is positive.
///
/// Ties on magnitude go to the earliest index.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, v) in m.column(j).iter().enumerate() {
            if v.abs() > best_abs + 1e-12 {
                best = i;
                best_abs = v.abs();
            }
        }
        if m[(best, j)] < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in
/// nonincreasing order and sign-normalised eigenvectors.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    fix_column_signs(&mut vectors);
    (values, vectors)
}

/// Extend `basis` (orthonormal columns, T x r) to a full orthonormal T x T
/// basis by Gram-Schmidt against the standard basis vectors.
pub fn complete_basis(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let t = basis.nrows();
    let mut cols: Vec<nalgebra::DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    for e in 0..t {
        if cols.len() == t {
            break;
        }
        let mut v = nalgebra::DVector::<f64>::zeros(t);
        v[e] = 1.0;
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v.axpy(-proj, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Population variance of all entries of a matrix.
pub fn entry_variance(m: &DMatrix<f64>) -> f64 {
    let n = m.len() as f64;
    let mean = m.sum() / n;
    m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}
