//! Dense row-major `f64` tensors.
//!
//! Only what the recurrent cells need: rank 0/1/2 shapes, elementwise maps,
//! a handful of axis reductions and matrix products. Reductions use pairwise
//! summation so results do not depend on how a caller chunks its batch.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

/// Pairwise sum; the split points only depend on the slice length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(
            n,
            data.len(),
            "tensor shape {shape:?} needs {n} elements, got {}",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor::new(vec![], vec![x])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![value; n])
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.rank(), 2, "expected a matrix, got shape {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        let (_, cols) = self.dims2();
        self.data[r * cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, cols) = self.dims2();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn nan_count(&self) -> usize {
        self.data.iter().filter(|x| x.is_nan()).count()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(
            self.shape, other.shape,
            "elementwise op on mismatched shapes {:?} and {:?}",
            self.shape, other.shape
        );
        Tensor::new(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|x| k * x)
    }

    pub fn sum(&self) -> f64 {
        pairwise_sum(&self.data)
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        pairwise_sum(&self.mul(other).data)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = self.dims2();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = self.dims2();
        let (k2, n) = other.dims2();
        assert_eq!(k, k2, "matmul inner dims differ: [{m}, {k}] x [{k2}, {n}]");
        let mut out = vec![0.0; m * n];
        if m > 0 && n > 0 && k > 0 {
            // SAFETY: the pointers address row-major buffers of exactly the
            // dimensions and strides passed in.
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    k,
                    n,
                    1.0,
                    self.data.as_ptr(),
                    k as isize,
                    1,
                    other.data.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `[m, n] + [n]` broadcast over rows.
    pub fn add_row(&self, bias: &Tensor) -> Tensor {
        let (m, n) = self.dims2();
        assert_eq!(bias.shape(), &[n], "row bias of shape {:?} for [{m}, {n}]", bias.shape());
        let mut out = self.data.clone();
        for row in out.chunks_mut(n.max(1)) {
            for (o, b) in row.iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// Column sums: `[m, n] -> [n]`.
    pub fn sum_rows(&self) -> Tensor {
        let (m, n) = self.dims2();
        let mut col = vec![0.0; m];
        let out = (0..n)
            .map(|j| {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = self.data[i * n + j];
                }
                pairwise_sum(&col)
            })
            .collect();
        Tensor::vector(out)
    }

    /// Row sums: `[m, n] -> [m]`.
    pub fn sum_cols(&self) -> Tensor {
        let (m, n) = self.dims2();
        Tensor::vector((0..m).map(|i| pairwise_sum(&self.data[i * n..(i + 1) * n])).collect())
    }

    /// `[n] -> [m, n]`.
    pub fn broadcast_rows(&self, m: usize) -> Tensor {
        assert_eq!(self.rank(), 1, "broadcast_rows expects a vector");
        let n = self.len();
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(&self.data);
        }
        Tensor::matrix(m, n, out)
    }

    /// `[m] -> [m, n]`.
    pub fn broadcast_cols(&self, n: usize) -> Tensor {
        assert_eq!(self.rank(), 1, "broadcast_cols expects a vector");
        let m = self.len();
        let mut out = Vec::with_capacity(m * n);
        for &x in &self.data {
            out.extend(std::iter::repeat_n(x, n));
        }
        Tensor::matrix(m, n, out)
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        let (m, n) = self.dims2();
        assert!(start + len <= n, "column slice {start}..{} out of {n}", start + len);
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&self.data[i * n + start..i * n + start + len]);
        }
        Tensor::matrix(m, len, out)
    }

    /// Embed `[m, len]` at column offset `start` of an `[m, total]` zero matrix.
    pub fn pad_cols(&self, start: usize, total: usize) -> Tensor {
        let (m, len) = self.dims2();
        assert!(start + len <= total, "column pad {start}+{len} exceeds {total}");
        let mut out = vec![0.0; m * total];
        for i in 0..m {
            out[i * total + start..i * total + start + len]
                .copy_from_slice(&self.data[i * len..(i + 1) * len]);
        }
        Tensor::matrix(m, total, out)
    }

    /// Contiguous range of the flat data as a vector.
    pub fn slice_flat(&self, start: usize, len: usize) -> Tensor {
        assert!(start + len <= self.len(), "flat slice {start}..{} out of {}", start + len, self.len());
        Tensor::vector(self.data[start..start + len].to_vec())
    }

    /// Embed a vector at `start` of a zero vector of length `total`.
    pub fn pad_flat(&self, start: usize, total: usize) -> Tensor {
        assert!(start + self.len() <= total, "flat pad {start}+{} exceeds {total}", self.len());
        let mut out = vec![0.0; total];
        out[start..start + self.len()].copy_from_slice(&self.data);
        Tensor::vector(out)
    }

    /// Each row repeated `times` times consecutively: `[m, n] -> [m*times, n]`.
    pub fn repeat_rows(&self, times: usize) -> Tensor {
        let (m, n) = self.dims2();
        let mut out = Vec::with_capacity(m * times * n);
        for i in 0..m {
            for _ in 0..times {
                out.extend_from_slice(&self.data[i * n..(i + 1) * n]);
            }
        }
        Tensor::matrix(m * times, n, out)
    }

    /// Adjoint of [`Tensor::repeat_rows`]: sums consecutive groups of `times` rows.
    pub fn sum_row_groups(&self, times: usize) -> Tensor {
        let (mt, n) = self.dims2();
        assert!(times > 0 && mt % times == 0, "{mt} rows not divisible into groups of {times}");
        let m = mt / times;
        let mut out = vec![0.0; m * n];
        let mut col = vec![0.0; times];
        for i in 0..m {
            for j in 0..n {
                for (k, c) in col.iter_mut().enumerate() {
                    *c = self.data[(i * times + k) * n + j];
                }
                out[i * n + j] = pairwise_sum(&col);
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax(&self) -> Tensor {
        let (m, n) = self.dims2();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let shifted: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
            let lse = max + pairwise_sum(&shifted).ln();
            for j in 0..n {
                out[i * n + j] = row[j] - lse;
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// Index of the largest entry in each row (first one on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        let (m, n) = self.dims2();
        (0..m)
            .map(|i| {
                let row = &self.data[i * n..(i + 1) * n];
                let mut best = 0;
                for j in 1..n {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}
