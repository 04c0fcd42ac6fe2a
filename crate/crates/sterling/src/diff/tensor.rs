//! Dense row-major matrices.
//!
//! `Tensor` is the plain value type; gradient tracking lives in
//! [`crate::diff::tape`]. Matrix products go through `matrixmultiply`,
//! split over fixed-size row chunks so results are bitwise reproducible
//! for any thread count.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Rows per parallel GEMM chunk. Fixed so the summation pattern (and hence
/// the floating-point result) does not depend on the number of threads.
const GEMM_CHUNK_ROWS: usize = 128;

/// Dense matrix with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: S) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Scalar wrapped as a 1x1 tensor.
    pub fn scalar(value: S) -> Self {
        Tensor::filled(1, 1, value)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Tensor { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor { rows, cols, data }
    }

    pub fn eye(n: usize) -> Self {
        Tensor::from_fn(n, n, |r, c| if r == c { S::one() } else { S::zero() })
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: S) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.shape(), (1, 1), "item() requires a 1x1 tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        assert_eq!(self.shape(), other.shape(), "zip_map shape mismatch");
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += c * other`.
    pub fn scaled_add_assign(&mut self, c: S, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "scaled_add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&self, c: S) -> Self {
        self.map(|x| c * x)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn sum(&self) -> S {
        let mut acc = S::zero();
        for &x in &self.data {
            acc += x;
        }
        acc
    }

    pub fn mean(&self) -> S {
        if self.data.is_empty() {
            S::zero()
        } else {
            self.sum() / S::from_f64(self.data.len() as f64)
        }
    }

    /// Population standard deviation over all entries.
    pub fn std(&self) -> S {
        if self.data.is_empty() {
            return S::zero();
        }
        let mu = self.mean();
        let mut acc = S::zero();
        for &x in &self.data {
            let d = x - mu;
            acc += d * d;
        }
        (acc / S::from_f64(self.data.len() as f64)).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Euclidean norms of each row.
    pub fn row_norms(&self) -> Vec<S> {
        (0..self.rows)
            .map(|r| {
                let mut acc = S::zero();
                for &x in self.row(r) {
                    acc += x * x;
                }
                acc.sqrt()
            })
            .collect()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} · {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Tensor::zeros(m, n);
        gemm_row_chunks(
            m, k, n,
            &self.data, k as isize, 1, k,
            &other.data, n as isize, 1,
            &mut out.data,
        );
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Self {
        assert_eq!(
            self.rows, other.rows,
            "matmul_tn: {}x{}ᵀ · {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (m, k, n) = (self.cols, self.rows, other.cols);
        let mut out = Tensor::zeros(m, n);
        gemm_row_chunks(
            m, k, n,
            &self.data, 1, self.cols as isize, 1,
            &other.data, n as isize, 1,
            &mut out.data,
        );
        out
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.cols,
            "matmul_nt: {}x{} · {}x{}ᵀ",
            self.rows, self.cols, other.rows, other.cols
        );
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = Tensor::zeros(m, n);
        gemm_row_chunks(
            m, k, n,
            &self.data, k as isize, 1, k,
            &other.data, 1, other.cols as isize,
            &mut out.data,
        );
        out
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x.as_f64()).collect(),
        }
    }

    pub fn from_f64_tensor(src: &Tensor<f64>) -> Self {
        Tensor {
            rows: src.rows,
            cols: src.cols,
            data: src.data.iter().map(|&x| S::from_f64(x)).collect(),
        }
    }
}

/// Chunked GEMM over output rows. `a_row_elems` is how many elements of `a`
/// one logical output row advances (k for normal layout, 1 for a transposed
/// left operand).
#[allow(clippy::too_many_arguments)]
fn gemm_row_chunks<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[S],
    rsa: isize,
    csa: isize,
    a_row_elems: usize,
    b: &[S],
    rsb: isize,
    csb: isize,
    c: &mut [S],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(S::zero());
        return;
    }
    c.par_chunks_mut(GEMM_CHUNK_ROWS * n)
        .enumerate()
        .for_each(|(ci, chunk)| {
            let rows = chunk.len() / n;
            let a_off = ci * GEMM_CHUNK_ROWS * a_row_elems;
            unsafe {
                S::gemm(
                    rows,
                    k,
                    n,
                    a.as_ptr().add(a_off),
                    rsa,
                    csa,
                    b.as_ptr(),
                    rsb,
                    csb,
                    chunk.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let mut out = Tensor::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for p in 0..a.cols() {
                    acc += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_matches_naive() {
        let a = Tensor::from_fn(7, 5, |r, c| (r * 5 + c) as f64 * 0.1 - 1.0);
        let b = Tensor::from_fn(5, 4, |r, c| (r as f64 - c as f64) * 0.3);
        let got = a.matmul(&b);
        let want = naive_matmul(&a, &b);
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let a = Tensor::from_fn(6, 3, |r, c| (r + 2 * c) as f64 * 0.17 - 0.9);
        let b = Tensor::from_fn(6, 4, |r, c| (r * c) as f64 * 0.05 + 0.2);
        let tn = a.matmul_tn(&b);
        let want_tn = naive_matmul(&a.transpose(), &b);
        for (x, y) in tn.data().iter().zip(want_tn.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        let c = Tensor::from_fn(4, 3, |r, c| (r as f64 + 0.5) * (c as f64 - 1.0));
        let nt = a.matmul_nt(&c);
        let want_nt = naive_matmul(&a, &c.transpose());
        for (x, y) in nt.data().iter().zip(want_nt.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "matmul")]
    fn matmul_rejects_mismatched_shapes() {
        let a = Tensor::<f64>::zeros(2, 3);
        let b = Tensor::<f64>::zeros(4, 2);
        let _ = a.matmul(&b);
    }

    #[test]
    fn matmul_is_reproducible_across_chunk_boundaries() {
        // 300 rows spans three parallel chunks. Repeated runs must agree
        // bitwise (fixed chunk partition, sequential kernel per chunk), and
        // the result must match the naive triple loop up to rounding.
        let a = Tensor::from_fn(300, 20, |r, c| ((r * 31 + c * 7) % 13) as f64 * 0.3 - 1.7);
        let b = Tensor::from_fn(20, 9, |r, c| ((r * 5 + c * 11) % 17) as f64 * 0.21 - 1.3);
        let got = a.matmul(&b);
        assert_eq!(got.data(), a.matmul(&b).data());
        let want = naive_matmul(&a, &b);
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn population_std() {
        let t = Tensor::<f64>::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        assert!((t.mean() - 2.5).abs() < 1e-15);
        assert!((t.std() - (1.25f64).sqrt()).abs() < 1e-15);
    }
}
