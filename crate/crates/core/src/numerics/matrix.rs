use std::fmt;

use crate::{Result, WasError};

/// Dense row-major matrix of 64-bit reals.
///
/// Entries are finite except where a masking operation has written
/// `f64::NEG_INFINITY` into a logit matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(WasError::contract(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    ///
    /// # Panics
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Value of a 1×1 matrix.
    pub fn item(&self) -> Option<f64> {
        (self.shape() == (1, 1)).then(|| self.data[0])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(WasError::Dimension {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, m) = (self.rows, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix {
            rows: n,
            cols: m,
            data: out,
        })
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

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(WasError::Dimension {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// Adds a `1 × cols` row vector to every row.
    pub fn add_row(&self, row: &Matrix) -> Result<Matrix> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(WasError::Dimension {
                op: "add_row",
                left: self.shape(),
                right: row.shape(),
            });
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        self.map(|x| x * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// In-place `self += other`.
    pub fn accumulate(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(WasError::Dimension {
                op: "accumulate",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column-wise sums as a `1 × cols` row vector.
    pub fn sum_rows(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for (o, &x) in out.data.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Columns `start..end` as a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Matrix> {
        if start > end || end > self.cols {
            return Err(WasError::contract(format!(
                "column range {start}..{end} outside {} columns",
                self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, end - start, |i, j| self.get(i, start + j)))
    }

    /// Horizontal concatenation.
    pub fn concat_cols(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(WasError::Dimension {
                op: "concat_cols",
                left: (rows, parts[0].cols),
                right: bad.shape(),
            });
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Row-wise softmax with max subtraction.
    ///
    /// `−∞` entries map to exactly zero. A row with no finite entry is a
    /// [`WasError::DegenerateRow`].
    pub fn softmax_rows(&self) -> Result<Matrix> {
        let mut out = self.clone();
        for i in 0..self.rows {
            softmax_in_place(out.row_mut(i)).map_err(|_| WasError::DegenerateRow { row: i })?;
        }
        Ok(out)
    }
}

/// Numerically stable softmax over one row, in place.
///
/// Returns `Err(())` when the row contains no finite value; the row is left
/// untouched in that case.
pub(crate) fn softmax_in_place(row: &mut [f64]) -> std::result::Result<(), ()> {
    let max = row
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(());
    }
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = if *x == f64::NEG_INFINITY { 0.0 } else { (*x - max).exp() };
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
    Ok(())
}

/// Row-wise layer normalization: `gain ⊙ (x − μ)/√(σ² + ε) + bias` with the
/// population variance of each row.
pub fn layer_norm(x: &Matrix, gain: &[f64], bias: &[f64], epsilon: f64) -> Result<Matrix> {
    Ok(layer_norm_parts(x, gain, bias, epsilon)?.0)
}

/// Layer norm returning `(output, normalized input, 1/σ per row)`; the last
/// two feed the backward pass.
pub(crate) fn layer_norm_parts(
    x: &Matrix,
    gain: &[f64],
    bias: &[f64],
    epsilon: f64,
) -> Result<(Matrix, Matrix, Vec<f64>)> {
    if gain.len() != x.cols || bias.len() != x.cols {
        return Err(WasError::Dimension {
            op: "layer_norm",
            left: x.shape(),
            right: (gain.len(), bias.len()),
        });
    }
    let n = x.cols as f64;
    let mut normalized = x.clone();
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + epsilon).sqrt();
        inv_std.push(inv);
        for (j, &v) in row.iter().enumerate() {
            let h = (v - mean) * inv;
            normalized.set(i, j, h);
            out.set(i, j, gain[j] * h + bias[j]);
        }
    }
    Ok((out, normalized, inv_std))
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}
