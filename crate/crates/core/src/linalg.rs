//! Small dense helpers shared by the regression engines.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition with eigenvalues in ascending order.
pub(crate) fn sorted_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = 0.5 * (a + a.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    // fix the sign so the largest-magnitude entry is positive
    for mut col in vectors.column_iter_mut() {
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    (values, vectors)
}

/// Orthonormal basis of { v : C v = 0 } for a constraint matrix C (m×k).
pub(crate) fn null_space(c: &DMatrix<f64>) -> DMatrix<f64> {
    let k = c.ncols();
    if c.nrows() == 0 {
        return DMatrix::identity(k, k);
    }
    let ctc = c.transpose() * c;
    let (values, vectors) = sorted_eigen(&ctc);
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: Vec<usize> = (0..k).filter(|&i| values[i] <= 1e-11 * top).collect();
    vectors.select_columns(keep.iter())
}

/// Orthonormal basis of the (numerical) null space of a PSD matrix.
pub(crate) fn psd_null_space(s: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(s);
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] <= 1e-9 * top).collect();
    vectors.select_columns(keep.iter())
}

/// E with EᵀE = P for a symmetric PSD matrix P (negative eigenvalues dropped).
pub(crate) fn psd_root(p: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(p);
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 1e-13 * top).collect();
    let mut e = DMatrix::zeros(keep.len(), p.ncols());
    for (r, &i) in keep.iter().enumerate() {
        let s = values[i].sqrt();
        for c in 0..p.ncols() {
            e[(r, c)] = s * vectors[(c, i)];
        }
    }
    e
}

/// Inverse of an upper-triangular matrix with nonzero diagonal.
pub(crate) fn upper_inverse(r: &DMatrix<f64>) -> DMatrix<f64> {
    let p = r.nrows();
    let mut inv = DMatrix::zeros(p, p);
    for j in 0..p {
        inv[(j, j)] = 1.0 / r[(j, j)];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in i + 1..=j {
                s += r[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / r[(i, i)];
        }
    }
    inv
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let base = c * 8;
        for l in 0..8 {
            acc[l] += a[base + l] * b[base + l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    acc.iter().sum::<f64>() + tail
}

/// In-place Cholesky factorization of a row-major n×n matrix; only the
/// lower triangle is read and on success holds L. Returns false when the
/// matrix is not numerically positive definite.
pub(crate) fn cholesky_rowmajor(a: &mut [f64], n: usize) -> bool {
    for i in 0..n {
        let (done, rest) = a.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + j + 1];
            let s = row_i[j] - dot(&row_i[..j], &row_j[..j]);
            row_i[j] = s / row_j[j];
        }
        let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        row_i[i] = d.sqrt();
    }
    true
}

/// Solves L x = b in place for row-major lower-triangular L.
pub(crate) fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s = b[i] - dot(row, &b[..i]);
        b[i] = s / l[i * n + i];
    }
}

/// Solves Lᵀ x = b in place for row-major lower-triangular L.
pub(crate) fn backward_solve_transpose(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        b[i] /= l[i * n + i];
        let bi = b[i];
        let row = &l[i * n..i * n + i];
        for (bk, lk) in b[..i].iter_mut().zip(row) {
            *bk -= lk * bi;
        }
    }
}

/// L⁻¹ (row-major, lower triangle filled) for row-major lower-triangular L.
pub(crate) fn lower_inverse(l: &[f64], n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        let (done, rest) = m.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        let lrow = &l[i * n..i * n + i];
        for (k, &lik) in lrow.iter().enumerate() {
            if lik != 0.0 {
                let row_k = &done[k * n..k * n + k + 1];
                for (dst, src) in row_i[..=k].iter_mut().zip(row_k) {
                    *dst -= lik * src;
                }
            }
        }
        row_i[i] += 1.0;
        let d = l[i * n + i];
        for v in row_i[..=i].iter_mut() {
            *v /= d;
        }
    }
    m
}

/// (L Lᵀ)⁻¹ = L⁻ᵀ L⁻¹ from M = L⁻¹, returned as a full symmetric row-major matrix.
pub(crate) fn inverse_from_lower_inverse(m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        let row_k = &m[k * n..k * n + k + 1];
        for a in 0..=k {
            let f = row_k[a];
            if f != 0.0 {
                let dst = &mut out[a * n..a * n + a + 1];
                for (d, s) in dst.iter_mut().zip(&row_k[..=a]) {
                    *d += f * s;
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            out[b * n + a] = out[a * n + b];
        }
    }
    out
}
