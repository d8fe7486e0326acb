//! Dense and sparse matrix kernels plus the activations used by the encoders.
//!
//! Matrices are row-major `f64`. Products are row-parallel with a fixed
//! per-row accumulation order, so results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Work (multiply-adds) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = Matrix { rows, cols, data };
        m.check_finite("matrix data")?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::shape(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(idx) => Err(Error::NonFinite(format!(
                "{what} at ({}, {})",
                idx / self.cols.max(1),
                idx % self.cols.max(1)
            ))),
        }
    }

    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows {
            return Err(Error::shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, b.cols);
        if b.cols == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &bv) in out_row.iter_mut().zip(b.row(k)) {
                    *o += a * bv;
                }
            }
        };
        if self.rows * self.cols * b.cols >= PAR_THRESHOLD {
            out.data.par_chunks_mut(b.cols).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(b.cols).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `self · bᵀ`
    pub fn matmul_t(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.cols {
            return Err(Error::shape(format!(
                "matmul_t {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, b.rows);
        if b.rows == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let a = self.row(i);
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = dot(a, b.row(j));
            }
        };
        if self.rows * self.cols * b.rows >= PAR_THRESHOLD {
            out.data.par_chunks_mut(b.rows).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(b.rows).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · b`
    pub fn t_matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.rows != b.rows {
            return Err(Error::shape(format!(
                "t_matmul ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        self.transpose().matmul(b)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Column-wise concatenation `[a ‖ b]`.
    pub fn hconcat(a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.rows != b.rows {
            return Err(Error::shape(format!(
                "hconcat of {} and {} rows",
                a.rows, b.rows
            )));
        }
        let cols = a.cols + b.cols;
        let mut data = Vec::with_capacity(a.rows * cols);
        for i in 0..a.rows {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Ok(Matrix {
            rows: a.rows,
            cols,
            data,
        })
    }

    /// Splits columns into `[0, at)` and `[at, cols)`.
    pub fn split_cols(&self, at: usize) -> (Matrix, Matrix) {
        assert!(at <= self.cols, "split point beyond column count");
        let mut left = Vec::with_capacity(self.rows * at);
        let mut right = Vec::with_capacity(self.rows * (self.cols - at));
        for i in 0..self.rows {
            let row = self.row(i);
            left.extend_from_slice(&row[..at]);
            right.extend_from_slice(&row[at..]);
        }
        (
            Matrix {
                rows: self.rows,
                cols: at,
                data: left,
            },
            Matrix {
                rows: self.rows,
                cols: self.cols - at,
                data: right,
            },
        )
    }

    pub fn add_row_vector(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::shape(format!(
                "bias of length {} for {} columns",
                v.len(),
                self.cols
            )));
        }
        for row in self.data.chunks_mut(self.cols.max(1)) {
            for (x, &b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        Ok(())
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols.max(1)) {
            for (s, &x) in sums.iter_mut().zip(row) {
                *s += x;
            }
        }
        sums
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise `self ⊙ f(other)`.
    pub fn hadamard_map(&self, other: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "hadamard {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&g, &x)| g * f(x))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Compressed sparse row matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut b = SparseBuilder::new(m.cols);
        for i in 0..m.rows {
            for (j, &x) in m.row(i).iter().enumerate() {
                if x != 0.0 {
                    b.push(j, x);
                }
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            for (&j, &x) in idx.iter().zip(val) {
                m.set(i, j, x);
            }
        }
        m
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in order, so each transposed row stays sorted.
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            for (&j, &x) in idx.iter().zip(val) {
                let slot = cursor[j];
                indices[slot] = i;
                values[slot] = x;
                cursor[j] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn matmul_dense(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows() {
            return Err(Error::shape(format!(
                "sparse matmul {}x{} by {}x{}",
                self.rows,
                self.cols,
                b.rows(),
                b.cols()
            )));
        }
        let width = b.cols();
        let mut out = Matrix::zeros(self.rows, width);
        if width == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let (idx, val) = self.row(i);
            for (&k, &a) in idx.iter().zip(val) {
                for (o, &bv) in out_row.iter_mut().zip(b.row(k)) {
                    *o += a * bv;
                }
            }
        };
        if self.nnz() * width >= PAR_THRESHOLD {
            out.data_mut()
                .par_chunks_mut(width)
                .enumerate()
                .for_each(kernel);
        } else {
            out.data_mut()
                .chunks_mut(width)
                .enumerate()
                .for_each(kernel);
        }
        Ok(out)
    }

    /// Sparse-sparse product (row-by-row accumulation into a dense scratch row).
    pub fn matmul_sparse(&self, b: &SparseMatrix) -> Result<SparseMatrix> {
        if self.cols != b.rows {
            return Err(Error::shape(format!(
                "sparse matmul {}x{} by {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut acc = vec![0.0; b.cols];
        let mut touched = vec![false; b.cols];
        let mut cols_hit = Vec::new();
        let mut out = SparseBuilder::new(b.cols);
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            for (&k, &a) in idx.iter().zip(val) {
                let (bidx, bval) = b.row(k);
                for (&j, &x) in bidx.iter().zip(bval) {
                    if !touched[j] {
                        touched[j] = true;
                        cols_hit.push(j);
                    }
                    acc[j] += a * x;
                }
            }
            cols_hit.sort_unstable();
            for &j in &cols_hit {
                if acc[j] != 0.0 {
                    out.push(j, acc[j]);
                }
                acc[j] = 0.0;
                touched[j] = false;
            }
            cols_hit.clear();
            out.finish_row();
        }
        Ok(out.build())
    }

    pub fn hconcat(a: &SparseMatrix, b: &SparseMatrix) -> Result<SparseMatrix> {
        if a.rows != b.rows {
            return Err(Error::shape(format!(
                "hconcat of {} and {} rows",
                a.rows, b.rows
            )));
        }
        let mut out = SparseBuilder::new(a.cols + b.cols);
        for i in 0..a.rows {
            let (idx, val) = a.row(i);
            for (&j, &x) in idx.iter().zip(val) {
                out.push(j, x);
            }
            let (idx, val) = b.row(i);
            for (&j, &x) in idx.iter().zip(val) {
                out.push(a.cols + j, x);
            }
            out.finish_row();
        }
        Ok(out.build())
    }
}

/// Row-at-a-time CSR construction; callers push sorted column indices.
pub(crate) struct SparseBuilder {
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseBuilder {
    pub(crate) fn new(cols: usize) -> Self {
        SparseBuilder {
            cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, col: usize, value: f64) {
        debug_assert!(col < self.cols);
        self.indices.push(col);
        self.values.push(value);
    }

    pub(crate) fn finish_row(&mut self) {
        self.indptr.push(self.indices.len());
    }

    pub(crate) fn build(self) -> SparseMatrix {
        SparseMatrix {
            rows: self.indptr.len() - 1,
            cols: self.cols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Subgradient 0 at the kink.
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// ELU with α = 1.
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Divides each row by `max(‖row‖₂, eps)`.
pub fn l2_normalize_rows(m: &Matrix, eps: f64) -> Matrix {
    l2_normalize_leading(m, m.cols(), eps)
}

/// Normalizes the first `span` columns of each row by their own L2 norm and
/// copies the remaining columns through unchanged.
pub fn l2_normalize_leading(m: &Matrix, span: usize, eps: f64) -> Matrix {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let row = &mut out.row_mut(i)[..span];
        let scale = row_norm(row).max(eps);
        for x in row.iter_mut() {
            *x /= scale;
        }
    }
    out
}

/// Vector-Jacobian product of [`l2_normalize_leading`] with respect to its input.
pub fn l2_normalize_leading_backward(
    input: &Matrix,
    grad: &Matrix,
    span: usize,
    eps: f64,
) -> Result<Matrix> {
    if input.shape() != grad.shape() {
        return Err(Error::shape(format!(
            "normalization backward {:?} vs {:?}",
            input.shape(),
            grad.shape()
        )));
    }
    let mut out = grad.clone();
    for i in 0..input.rows() {
        let x = &input.row(i)[..span];
        let norm = row_norm(x);
        let g = &mut out.row_mut(i)[..span];
        if norm > eps {
            // (I/‖x‖ − x xᵀ/‖x‖³) g
            let proj = dot(x, g) / (norm * norm);
            for (gj, &xj) in g.iter_mut().zip(x) {
                *gj = (*gj - xj * proj) / norm;
            }
        } else {
            for gj in g.iter_mut() {
                *gj /= eps;
            }
        }
    }
    Ok(out)
}

pub fn l2_normalize_rows_backward(input: &Matrix, grad: &Matrix, eps: f64) -> Result<Matrix> {
    l2_normalize_leading_backward(input, grad, input.cols(), eps)
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
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

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn identity_times_a_is_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 4, 3);
        assert_eq!(Matrix::identity(4).matmul(&a).unwrap(), a);
    }

    #[test]
    fn small_hand_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 7, 5);
        let b = random(&mut rng, 5, 3);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
        for _ in 0..50 {
            let (r, k, c) = (
                rng.random_range(1..40),
                rng.random_range(1..40),
                rng.random_range(1..40),
            );
            let a = random(&mut rng, r, k);
            let b = random(&mut rng, k, c);
            let oracle = naive_matmul(&a, &b);
            let mut diff = a.matmul(&b).unwrap();
            let scale = oracle.frobenius_norm().max(1e-300);
            for (d, o) in diff.data_mut().iter_mut().zip(oracle.data()) {
                *d -= o;
            }
            assert!(diff.frobenius_norm() / scale < 1e-12);
        }
    }

    #[test]
    fn transposed_products_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 6, 4);
        let b = random(&mut rng, 6, 5);
        let c = random(&mut rng, 3, 4);
        let expected = naive_matmul(&a.transpose(), &b);
        assert!(a.t_matmul(&b).unwrap().max_abs_diff(&expected) < 1e-12);
        let expected = naive_matmul(&a, &c.transpose());
        assert!(a.matmul_t(&c).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Shape(_))));
        assert!(Matrix::from_vec(2, 2, vec![1.0]).is_err());
        assert!(matches!(
            Matrix::from_vec(1, 1, vec![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn sparse_kernels_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = random(&mut rng, 9, 7);
        for x in a.data_mut() {
            if *x < 0.2 {
                *x = 0.0;
            }
        }
        let b = random(&mut rng, 7, 4);
        let sa = SparseMatrix::from_dense(&a);
        assert_eq!(sa.to_dense(), a);
        assert!(
            sa.matmul_dense(&b)
                .unwrap()
                .max_abs_diff(&naive_matmul(&a, &b))
                < 1e-12
        );
        assert_eq!(sa.transpose().to_dense(), a.transpose());
        let sb = SparseMatrix::from_dense(&b);
        let prod = sa.matmul_sparse(&sb).unwrap().to_dense();
        assert!(prod.max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
        let cat = SparseMatrix::hconcat(&sa, &sa).unwrap().to_dense();
        assert_eq!(cat, Matrix::hconcat(&a, &a).unwrap());
    }

    #[test]
    fn relu_values_and_gradient() {
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(3.0), 3.0);
        assert_eq!(relu_grad(0.0), 0.0);
        assert!((relu_grad(0.7) - central_diff(relu, 0.7)).abs() < 1e-8);
    }

    #[test]
    fn elu_values_and_gradient() {
        assert_eq!(elu(0.0), 0.0);
        assert!((elu(-1.0) - (-1.0f64).exp() + 1.0).abs() < 1e-15);
        assert!((elu(-1.0) + 0.63212).abs() < 1e-5);
        assert!((elu_grad(-0.5) - central_diff(elu, -0.5)).abs() < 1e-8);
    }

    #[test]
    fn sigmoid_values_and_stability() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-12);
        let tiny = sigmoid(-800.0);
        assert!(tiny.is_finite() && (0.0..=1e-300).contains(&tiny));
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn activation_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut x: f64 = rng.random_range(-5.0..5.0);
            if x.abs() < 1e-4 {
                x += 0.01;
            }
            for (f, g) in [
                (relu as fn(f64) -> f64, relu_grad as fn(f64) -> f64),
                (elu, elu_grad),
            ] {
                let fd = central_diff(f, x);
                let an = g(x);
                assert!(
                    (fd - an).abs() <= 1e-5 * an.abs().max(1e-3),
                    "x={x} fd={fd} an={an}"
                );
            }
        }
    }

    #[test]
    fn normalize_rows() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let n = l2_normalize_rows(&m, 1e-12);
        assert_eq!(n.row(0), &[0.6, 0.8]);
        assert_eq!(n.row(1), &[0.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = random(&mut rng, 10, 4);
        m.row_mut(3).fill(0.0);
        let n = l2_normalize_rows(&m, 1e-12);
        for i in 0..10 {
            let norm = row_norm(n.row(i));
            assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_backward_matches_analytic_jacobian() {
        let x = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let g = Matrix::from_rows(&[vec![0.3, -1.1]]).unwrap();
        let back = l2_normalize_rows_backward(&x, &g, 1e-12).unwrap();
        // J = I/5 − x xᵀ/125
        let j = [
            [1.0 / 5.0 - 9.0 / 125.0, -12.0 / 125.0],
            [-12.0 / 125.0, 1.0 / 5.0 - 16.0 / 125.0],
        ];
        let expected = [
            j[0][0] * 0.3 + j[0][1] * -1.1,
            j[1][0] * 0.3 + j[1][1] * -1.1,
        ];
        assert!((back.get(0, 0) - expected[0]).abs() < 1e-14);
        assert!((back.get(0, 1) - expected[1]).abs() < 1e-14);
    }

    #[test]
    fn normalize_leading_leaves_tail_alone() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0, -7.0]]).unwrap();
        let n = l2_normalize_leading(&m, 2, 1e-12);
        assert_eq!(n.row(0), &[0.6, 0.8, -7.0]);
    }
}
