//! Column-major dense storage used by the solvers.
//!
//! Both inner solvers touch the design one column at a time (coordinate
//! updates, `X'v` products, sparse `Xb` products), so columns are kept
//! contiguous.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub fn from_view(x: ArrayView2<'_, f64>) -> Self {
        Self::with_leading_ones(x, false)
    }

    /// Copies `x`, optionally prepending a column of ones.
    pub fn with_leading_ones(x: ArrayView2<'_, f64>, ones: bool) -> Self {
        let (rows, p) = x.dim();
        let cols = p + usize::from(ones);
        let mut data = Vec::with_capacity(rows * cols);
        if ones {
            data.extend(std::iter::repeat_n(1.0, rows));
        }
        for col in x.columns() {
            data.extend(col.iter().copied());
        }
        Self { rows, cols, data }
    }

    /// Selects a subset of rows (in the given order).
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for j in 0..self.cols {
            let c = self.col(j);
            data.extend(idx.iter().map(|&i| c[i]));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copies the given columns (in the given order).
    pub fn select_cols(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Self {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| self.data[j * self.rows + i])
    }

    /// `X b`, skipping zero coefficients.
    pub fn mul_sparse(&self, b: &[f64], out: &mut [f64]) {
        debug_assert_eq!(b.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                axpy(bj, self.col(j), out);
            }
        }
    }

    pub fn mul_vec(&self, b: &[f64]) -> Array1<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_sparse(b, &mut out);
        Array1::from(out)
    }

    /// `X' v`.
    pub fn tmul(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.col(j), v);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociation flags.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
/// Returns `None` when `a` is not numerically positive definite.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let mut z = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn leading_ones_and_products() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let m = ColMatrix::with_leading_ones(x.view(), true);
        assert_eq!(m.cols(), 3);
        assert_eq!(m.col(0), &[1.0, 1.0, 1.0]);
        assert_eq!(m.col(2), &[2.0, 4.0, 6.0]);
        assert_eq!(m.mul_vec(&[1.0, 0.0, 1.0]).to_vec(), vec![3.0, 5.0, 7.0]);
        let mut out = vec![0.0; 3];
        m.tmul(&[1.0, 1.0, 1.0], &mut out);
        assert_eq!(out, vec![3.0, 9.0, 12.0]);
        assert_eq!(m.to_array()[[2, 1]], 5.0);
        let sub = m.select_rows(&[2, 0]);
        assert_eq!(sub.col(1), &[5.0, 1.0]);
    }

    #[test]
    fn cholesky_small_system() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let b = array![2.0, 1.0];
        let x = cholesky_solve(&a, &b).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && x[1].abs() < 1e-12);
        assert!(cholesky_solve(&array![[0.0]], &array![1.0]).is_none());
    }
}
