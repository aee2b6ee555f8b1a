//! Dense row-major matrices and the matrix-product kernel.
//!
//! Every product accumulates over the inner dimension in ascending order,
//! starting from zero, with separate multiply and add. The result is
//! therefore bit-identical to the textbook triple loop no matter how the
//! kernel is blocked.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a matrix by stacking equally sized row slices.
    pub fn stack<'a, I>(cols: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut data = Vec::new();
        let mut n = 0;
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row of length {} in a {cols}-column stack",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
            n += 1;
        }
        Ok(Mat {
            rows: n,
            cols,
            data,
        })
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
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
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        transpose_into(&self.data, self.rows, self.cols, &mut out.data);
        out
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        matmul(self, other)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Mat::zeros(a.rows, b.cols);
    gemm(&a.data, &b.data, &mut c.data, a.rows, a.cols, b.cols);
    Ok(c)
}

pub(crate) fn transpose_into(src: &[f64], rows: usize, cols: usize, dst: &mut [f64]) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    const BLK: usize = 32;
    for i0 in (0..rows).step_by(BLK) {
        for j0 in (0..cols).step_by(BLK) {
            for i in i0..(i0 + BLK).min(rows) {
                for j in j0..(j0 + BLK).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

const MR: usize = 4;
const NR: usize = 16;

/// `c = a · b` for row-major `a` (m×k), `b` (k×n), `c` (m×n). `c` is overwritten.
pub(crate) fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    c.fill(0.0);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let full_n = n - n % NR;
    let full_m = m - m % MR;
    let mut panel = vec![0.0; k * NR];

    for j0 in (0..full_n).step_by(NR) {
        for p in 0..k {
            panel[p * NR..(p + 1) * NR].copy_from_slice(&b[p * n + j0..p * n + j0 + NR]);
        }
        for i0 in (0..full_m).step_by(MR) {
            let mut acc = [[0.0f64; NR]; MR];
            for p in 0..k {
                let brow: &[f64; NR] = panel[p * NR..(p + 1) * NR].try_into().unwrap();
                for r in 0..MR {
                    let av = a[(i0 + r) * k + p];
                    let acc_r = &mut acc[r];
                    for q in 0..NR {
                        acc_r[q] += av * brow[q];
                    }
                }
            }
            for r in 0..MR {
                c[(i0 + r) * n + j0..(i0 + r) * n + j0 + NR].copy_from_slice(&acc[r]);
            }
        }
        for i in full_m..m {
            let mut acc = [0.0f64; NR];
            for p in 0..k {
                let av = a[i * k + p];
                let brow = &panel[p * NR..(p + 1) * NR];
                for q in 0..NR {
                    acc[q] += av * brow[q];
                }
            }
            c[i * n + j0..i * n + j0 + NR].copy_from_slice(&acc);
        }
    }

    if full_n < n {
        let w = n - full_n;
        for i in 0..m {
            let mut acc = [0.0f64; NR];
            for p in 0..k {
                let av = a[i * k + p];
                let brow = &b[p * n + full_n..p * n + n];
                for q in 0..w {
                    acc[q] += av * brow[q];
                }
            }
            c[i * n + full_n..i * n + n].copy_from_slice(&acc[..w]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut c = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    fn random(rng: &mut Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, rng.standard_normal_vec(r * c)).unwrap()
    }

    #[test]
    fn identity_times_matrix() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(Mat::identity(2).matmul(&m).unwrap(), m);
    }

    #[test]
    fn projector() {
        let p = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let v = Mat::from_rows(&[vec![5.0], vec![7.0]]).unwrap();
        let out = p.matmul(&v).unwrap();
        assert_eq!(out.as_slice(), &[5.0, 0.0]);
    }

    #[test]
    fn small_random_matches_triple_loop_exactly() {
        let mut rng = Rng::new(7, 1);
        let a = random(&mut rng, 3, 4);
        let b = random(&mut rng, 4, 2);
        assert_eq!(a.matmul(&b).unwrap(), naive(&a, &b));
    }

    #[test]
    fn blocked_sizes_match_triple_loop_exactly() {
        let mut rng = Rng::new(11, 2);
        for &(m, k, n) in &[(4, 5, 16), (9, 33, 37), (17, 3, 48), (1, 1, 1), (130, 20, 19)] {
            let a = random(&mut rng, m, k);
            let b = random(&mut rng, k, n);
            assert_eq!(a.matmul(&b).unwrap(), naive(&a, &b), "{m}x{k}x{n}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn transpose_roundtrip() {
        let mut rng = Rng::new(3, 3);
        let a = random(&mut rng, 37, 70);
        let t = a.transpose();
        assert_eq!(t.get(5, 9), a.get(9, 5));
        assert_eq!(t.transpose(), a);
    }
}
