use crate::scalar::{Scalar, View};
use rayon::prelude::*;

/// Work (in multiply-adds) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor2<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer of length {} cannot hold a {}x{} tensor",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn scalar(v: T) -> Self {
        Self::from_vec(1, 1, vec![v])
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
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> T {
        assert_eq!(self.shape(), (1, 1), "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor2<U> {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    /// Column sums accumulated row by row.
    pub fn col_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            axpy(&mut out.data, T::one(), self.row(r));
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols,
            other.rows,
            "matmul shape mismatch: {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let a = View {
            data: &self.data,
            rs: self.cols as isize,
            cs: 1,
        };
        let b = View {
            data: &other.data,
            rs: other.cols as isize,
            cs: 1,
        };
        gemm_rows(self.rows, self.cols, other.cols, a, b)
    }

    /// `self · otherᵀ`.
    pub fn matmul_bt(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols,
            other.cols,
            "matmul_bt shape mismatch: {:?} x {:?}ᵀ",
            self.shape(),
            other.shape()
        );
        let a = View {
            data: &self.data,
            rs: self.cols as isize,
            cs: 1,
        };
        let b = View {
            data: &other.data,
            rs: 1,
            cs: other.cols as isize,
        };
        gemm_rows(self.rows, self.cols, other.rows, a, b)
    }

    /// `selfᵀ · other`.
    pub fn matmul_at(&self, other: &Self) -> Self {
        assert_eq!(
            self.rows,
            other.rows,
            "matmul_at shape mismatch: {:?}ᵀ x {:?}",
            self.shape(),
            other.shape()
        );
        let a = View {
            data: &self.data,
            rs: 1,
            cs: self.cols as isize,
        };
        let b = View {
            data: &other.data,
            rs: other.cols as isize,
            cs: 1,
        };
        gemm_rows(self.cols, self.rows, other.cols, a, b)
    }
}

/// Output rows per GEMM task. Fixed, so results never depend on the number
/// of worker threads.
const GEMM_ROW_BLOCK: usize = 256;

/// `m×n` product of the strided views `a` (`m×k`) and `b` (`k×n`), computed
/// in independent blocks of output rows.
fn gemm_rows<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: View<'_, T>,
    b: View<'_, T>,
) -> Tensor2<T> {
    let mut out = Tensor2::zeros(m, n);
    if m == 0 || n == 0 {
        return out;
    }
    let block = |(i, chunk): (usize, &mut [T])| {
        let r0 = i * GEMM_ROW_BLOCK;
        let rows = chunk.len() / n;
        let off = r0 as isize * a.rs;
        let sub = View {
            data: &a.data[off as usize..],
            rs: a.rs,
            cs: a.cs,
        };
        T::gemm(rows, k, n, sub, b, chunk);
    };
    if m * k * n >= PAR_THRESHOLD && m > GEMM_ROW_BLOCK {
        out.data
            .par_chunks_mut(GEMM_ROW_BLOCK * n)
            .enumerate()
            .for_each(block);
    } else {
        out.data
            .chunks_mut(GEMM_ROW_BLOCK * n)
            .enumerate()
            .for_each(block);
    }
    out
}

#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub(crate) fn par_rows<T: Scalar, F>(data: &mut [T], cols: usize, work_per_row: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if cols == 0 {
        return;
    }
    let rows = data.len() / cols;
    if rows * work_per_row >= PAR_THRESHOLD {
        data.par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, r)| f(i, r));
    } else {
        data.chunks_mut(cols).enumerate().for_each(|(i, r)| f(i, r));
    }
}

/// Constant sparse matrix in compressed-row form, with a column-major copy
/// kept for deterministic weight-gradient accumulation.
#[derive(Clone, Debug)]
pub struct SparseRows<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    // column-major view: (row, value) entries grouped by column
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_values: Vec<T>,
}

impl<T: Scalar> SparseRows<T> {
    /// Builds from per-row `(column, value)` lists; zero values are dropped.
    pub fn from_row_entries(cols: usize, entries: &[Vec<(usize, T)>]) -> Self {
        let rows = entries.len();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in entries {
            for &(c, v) in row {
                assert!(c < cols, "column {c} out of range for width {cols}");
                if v != T::zero() {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::finish(rows, cols, row_ptr, col_idx, values)
    }

    /// Builds from a dense tensor, keeping the nonzero entries.
    pub fn from_dense(t: &Tensor2<T>) -> Self {
        let entries: Vec<Vec<(usize, T)>> = (0..t.rows())
            .map(|r| {
                t.row(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        Self::from_row_entries(t.cols(), &entries)
    }

    /// Gathers the listed rows of `self` into a new matrix.
    pub fn select_rows(&self, ids: &[usize]) -> Self {
        let mut row_ptr = Vec::with_capacity(ids.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &r in ids {
            let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
            col_idx.extend_from_slice(&self.col_idx[s..e]);
            values.extend_from_slice(&self.values[s..e]);
            row_ptr.push(col_idx.len());
        }
        Self::finish(ids.len(), self.cols, row_ptr, col_idx, values)
    }

    fn finish(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Self {
        let mut counts = vec![0usize; cols + 1];
        for &c in &col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..cols {
            counts[c + 1] += counts[c];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut col_rows = vec![0; col_idx.len()];
        let mut col_values = vec![T::zero(); col_idx.len()];
        for r in 0..rows {
            for p in row_ptr[r]..row_ptr[r + 1] {
                let c = col_idx[p];
                col_rows[fill[c]] = r;
                col_values[fill[c]] = values[p];
                fill[c] += 1;
            }
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            col_ptr,
            col_rows,
            col_values,
        }
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

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor2<T> {
        let mut out = Tensor2::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> SparseRows<U> {
        SparseRows {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            col_ptr: self.col_ptr.clone(),
            col_rows: self.col_rows.clone(),
            col_values: self.col_values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// `self · w` for dense `w` (cols × m).
    pub fn matmul(&self, w: &Tensor2<T>) -> Tensor2<T> {
        assert_eq!(
            self.cols,
            w.rows(),
            "sparse matmul shape mismatch: {}x{} x {:?}",
            self.rows,
            self.cols,
            w.shape()
        );
        let m = w.cols();
        let mut out = Tensor2::zeros(self.rows, m);
        let avg = 1 + self.nnz() / self.rows.max(1);
        par_rows(out.data_mut(), m, avg * m, |r, orow| {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                axpy(orow, self.values[p], w.row(self.col_idx[p]));
            }
        });
        out
    }

    /// `selfᵀ · g` for dense `g` (rows × m), accumulated per output row in
    /// ascending source-row order.
    pub fn matmul_at(&self, g: &Tensor2<T>) -> Tensor2<T> {
        assert_eq!(self.rows, g.rows(), "sparse matmul_at shape mismatch");
        let m = g.cols();
        let mut out = Tensor2::zeros(self.cols, m);
        let avg = 1 + self.nnz() / self.cols.max(1);
        par_rows(out.data_mut(), m, avg * m, |c, orow| {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                axpy(orow, self.col_values[p], g.row(self.col_rows[p]));
            }
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor2::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let b = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]);
        let ab = a.matmul(&b);
        assert_eq!(ab.data(), &[7.0, -1.0, 16.0, -1.0]);
        assert_eq!(a.matmul_bt(&b.transpose()), ab);
        assert_eq!(a.transpose().matmul_at(&b), ab);
    }

    #[test]
    fn sparse_matches_dense() {
        let d = Tensor2::from_rows(&[vec![0.0, 2.0, 0.0], vec![1.0, 0.0, 3.0]]);
        let s = SparseRows::from_dense(&d);
        assert_eq!(s.nnz(), 3);
        let w = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(s.matmul(&w), d.matmul(&w));
        let g = Tensor2::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]);
        assert_eq!(s.matmul_at(&g), d.matmul_at(&g));
        assert_eq!(s.select_rows(&[1]).to_dense().data(), &[1.0, 0.0, 3.0]);
    }
}
