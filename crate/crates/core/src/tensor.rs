//! Dense row-major `f64` matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{} values ({rows}x{cols})", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    format!("Matrix::from_rows row {i}"),
                    cols,
                    r.len(),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// New matrix made of the given rows, in order.
    pub fn gather_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// `self · rhs`. Each output element sums over the shared index in
    /// ascending order, so a row's result does not depend on the other rows.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "matmul inner dimension",
                self.cols,
                rhs.rows,
            ));
        }
        let n = rhs.cols;
        let mut out = Matrix::zeros(self.rows, n);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * n..(i + 1) * n];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b = &rhs.data[k * n..(k + 1) * n];
                for (oj, &bj) in o.iter_mut().zip(b) {
                    *oj += aik * bj;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`.
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::shape("t_matmul shared rows", self.rows, rhs.rows));
        }
        let (m, n) = (self.cols, rhs.cols);
        let mut out = Matrix::zeros(m, n);
        for i in 0..self.rows {
            let a = self.row(i);
            let b = rhs.row(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let o = &mut out.data[k * n..(k + 1) * n];
                for (oj, &bj) in o.iter_mut().zip(b) {
                    *oj += aik * bj;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::shape("matmul_t shared cols", self.cols, rhs.cols));
        }
        let n = rhs.rows;
        let mut out = Matrix::zeros(self.rows, n);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..n {
                let b = rhs.row(j);
                out.data[i * n + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        Ok(out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::shape("add_row_vector", self.cols, bias.len()));
        }
        for r in 0..self.rows {
            for (x, b) in self.row_mut(r).iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Column sums.
    pub fn sum_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, x) in out.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// Sum of squares of all entries.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Row-wise argmax; ties go to the lowest column index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Log-softmax of one row, written into `out`.
pub fn log_softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}

/// Row-wise softmax of `logits / temperature`.
pub fn softmax_rows(logits: &Matrix, temperature: f64) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    let mut scaled = vec![0.0; logits.cols()];
    for r in 0..logits.rows() {
        for (s, &x) in scaled.iter_mut().zip(logits.row(r)) {
            *s = x / temperature;
        }
        softmax_into(&scaled, out.row_mut(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Matrix::from_vec(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn transposed_products_match_naive() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 0.0, -1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.25, 4.0], vec![-1.0, 2.0]]).unwrap();
        // aᵀ·b
        let mut at = Matrix::zeros(3, 2);
        for i in 0..2 {
            for j in 0..3 {
                at.set(j, i, a.get(i, j));
            }
        }
        assert_eq!(a.t_matmul(&b).unwrap(), naive(&at, &b));
        // b·bᵀ
        let mut bt = Matrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                bt.set(j, i, b.get(i, j));
            }
        }
        assert_eq!(b.matmul_t(&b).unwrap(), naive(&b, &bt));
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 2.0, 2.0]]).unwrap();
        assert_eq!(m.argmax_rows(), vec![0, 1]);
    }

    #[test]
    fn softmax_handles_large_magnitudes() {
        let mut out = [0.0; 2];
        softmax_into(&[1000.0, 0.0], &mut out);
        assert!(out.iter().all(|p| p.is_finite()));
        assert_eq!(out[0], 1.0);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(row in prop::collection::vec(-1e3f64..1e3, 1..12)) {
            let mut out = vec![0.0; row.len()];
            softmax_into(&row, &mut out);
            let s: f64 = out.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn matmul_matches_naive(
            m in 1usize..5, k in 1usize..5, n in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from(seed);
            let a = Matrix::from_vec(m, k, (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let b = Matrix::from_vec(k, n, (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let got = a.matmul(&b).unwrap();
            let want = naive(&a, &b);
            for (x, y) in got.data().iter().zip(want.data()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
