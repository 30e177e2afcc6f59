//! Dense linear-algebra helpers on top of nalgebra.

use crate::Matrix;
use nalgebra::SymmetricEigen;

/// Moore-Penrose pseudoinverse via SVD. Singular values below
/// `max(rows, cols) * eps * s_max` are treated as zero, which yields the
/// minimum-norm least-squares solution for rank-deficient inputs.
pub fn pinv(a: &Matrix) -> Matrix {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Matrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let vt = svd.v_t.expect("svd computed with v_t");
    let smax = svd.singular_values.max();
    let cutoff = r.max(c) as f64 * f64::EPSILON * smax;
    let k = svd.singular_values.len();
    let mut out = Matrix::zeros(c, r);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let vi = vt.row(i).transpose();
        let ui = u.column(i).transpose();
        out += (vi * ui) / s;
    }
    out
}

/// Eigenpairs of a symmetric matrix in descending eigenvalue order. Each
/// eigenvector is signed so that its largest-magnitude entry is positive.
pub fn sym_eigen_desc(g: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = SymmetricEigen::new(g.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(g.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let mut best = 0;
        for i in 0..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Orthogonal polar factor `U V^T` of a square matrix (orthogonal Procrustes).
pub fn polar_factor(b: &Matrix) -> Matrix {
    let svd = b.clone().svd(true, true);
    svd.u.expect("svd computed with u") * svd.v_t.expect("svd computed with v_t")
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Row-wise concatenation of matrices sharing a column count.
pub fn vstack(parts: &[&Matrix]) -> Matrix {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack: column mismatch");
        out.view_mut((at, 0), (p.nrows(), cols)).copy_from(*p);
        at += p.nrows();
    }
    out
}

pub fn select_columns(m: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}
