//! Minimal row-major dense matrix.
//!
//! Just enough linear algebra for small feed-forward networks: the three
//! product shapes backpropagation needs, bias broadcast, and column sums.
//! Kept in-crate so arithmetic order is fixed and reruns stay bitwise
//! reproducible.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense matrix stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from a row-major buffer; the length must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "buffer of length {} cannot fill a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows; at least one row is required.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::ShapeMismatch("no rows given".into()));
        };
        let cols = first.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    row.len(),
                    cols
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self (n x k) * other^T (m x k)` -> `n x m`.
    ///
    /// This is the forward shape: activations times a weight matrix stored
    /// as `out_dim x in_dim`.
    pub fn matmul_nt(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.cols, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let lhs = self.row(i);
            for j in 0..other.rows {
                let rhs = other.row(j);
                let mut acc = T::zero();
                for k in 0..self.cols {
                    acc += lhs[k] * rhs[k];
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        out
    }

    /// `self^T (k x n) * other (n x m)` -> `k x m`.
    ///
    /// Backward shape: pre-activation gradients transposed times layer inputs.
    pub fn matmul_tn(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.rows, other.rows, "outer dimensions must agree");
        let mut out = Mat::zeros(self.cols, other.cols);
        for n in 0..self.rows {
            let lhs = self.row(n);
            let rhs = other.row(n);
            for k in 0..self.cols {
                let scale = lhs[k];
                let row_out = &mut out.data[k * other.cols..(k + 1) * other.cols];
                for (o, &r) in row_out.iter_mut().zip(rhs) {
                    *o += scale * r;
                }
            }
        }
        out
    }

    /// Plain `self (n x k) * other (k x m)` -> `n x m`.
    pub fn matmul_nn(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let lhs = self.row(i);
            for k in 0..self.cols {
                let scale = lhs[k];
                let rhs = other.row(k);
                let row_out = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &r) in row_out.iter_mut().zip(rhs) {
                    *o += scale * r;
                }
            }
        }
        out
    }

    /// Adds `bias` to every row in place.
    pub fn add_row_bias(&mut self, bias: &[T]) {
        assert_eq!(bias.len(), self.cols, "bias length must match columns");
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, &b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
    }

    /// New matrix holding the listed rows in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat<T> {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.data[r * self.cols..(r + 1) * self.cols].copy_from_slice(self.row(i));
        }
        out
    }

    /// Sum over rows, one entry per column.
    pub fn col_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (o, &x) in out.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
        Mat::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_nt_matches_hand_product() {
        // x (2x3), w (2x3 interpreted as 2 output rows) -> 2x2
        let x = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = m(2, 3, &[1.0, 0.0, -1.0, 0.5, 0.5, 0.5]);
        let y = x.matmul_nt(&w);
        assert_eq!(y.data(), &[-2.0, 3.0, -2.0, 7.5]);
    }

    #[test]
    fn matmul_tn_matches_hand_product() {
        // dz (2x2)^T * x (2x3) -> 2x3
        let dz = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x = m(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, 1.0]);
        let g = dz.matmul_tn(&x);
        assert_eq!(g.data(), &[1.0, 3.0, 5.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn matmul_nn_matches_hand_product() {
        let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = m(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let c = a.matmul_nn(&b);
        assert_eq!(c.data(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn transpose_identities_agree_on_random_shapes() {
        // matmul_nt(x, w) equals matmul_nn(x, w^T) built by hand.
        let x = m(3, 2, &[1.0, -1.0, 2.0, 0.5, 0.0, 3.0]);
        let w = m(4, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.0, 2.0, 2.0]);
        let mut wt = Mat::zeros(2, 4);
        for i in 0..4 {
            for j in 0..2 {
                wt.set(j, i, w.get(i, j));
            }
        }
        assert_eq!(x.matmul_nt(&w), x.matmul_nn(&wt));
    }

    #[test]
    fn bias_and_col_sums() {
        let mut x = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        x.add_row_bias(&[10.0, 20.0]);
        assert_eq!(x.data(), &[11.0, 22.0, 13.0, 24.0]);
        assert_eq!(x.col_sums(), vec![24.0, 46.0]);
    }

    #[test]
    fn select_rows_copies_in_order() {
        let x = m(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.select_rows(&[2, 0]);
        assert_eq!(y.rows(), 2);
        assert_eq!(y.data(), &[5.0, 6.0, 1.0, 2.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Mat::from_vec(2, 2, vec![1.0f64, 2.0, 3.0]).is_err());
    }

    #[test]
    fn from_rows_rejects_ragged_input() {
        let rows = vec![vec![1.0f64, 2.0], vec![3.0]];
        assert!(Mat::from_rows(&rows).is_err());
    }
}
