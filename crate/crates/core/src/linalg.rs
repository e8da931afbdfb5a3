//! Dense row-major matrices and the SVD-based routines used by projection
//! and reconstruction. Decompositions are delegated to `nalgebra`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values below `PINV_RCOND * sigma_max` are treated as zero.
pub const PINV_RCOND: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidDimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x` into `out`. Lengths are the caller's responsibility.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    /// `self^T * y` into `out`.
    pub fn matvec_transpose_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * yr;
            }
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.data[i * self.cols + p];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(p);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Self { rows, cols, data }
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .to_nalgebra()
            .singular_values()
            .iter()
            .copied()
            .collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Moore–Penrose pseudoinverse via SVD with relative cutoff
    /// [`PINV_RCOND`].
    pub fn pseudoinverse(&self) -> Result<Matrix> {
        let svd = self.to_nalgebra().svd(true, true);
        let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        if sigma_max == 0.0 || !sigma_max.is_finite() {
            return Err(Error::DegenerateMatrix(
                "no nonzero singular values".to_string(),
            ));
        }
        let cutoff = PINV_RCOND * sigma_max;
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let rank = svd.singular_values.len();
        // A+ = V diag(1/s) U^T, shape cols x rows.
        let mut out = Matrix::zeros(self.cols, self.rows);
        for (i, &s) in svd.singular_values.iter().enumerate().take(rank) {
            if s <= cutoff {
                continue;
            }
            let inv = 1.0 / s;
            for c in 0..self.cols {
                let v = v_t[(i, c)] * inv;
                if v == 0.0 {
                    continue;
                }
                let dst = &mut out.data[c * self.rows..(c + 1) * self.rows];
                for (r, d) in dst.iter_mut().enumerate() {
                    *d += v * u[(r, i)];
                }
            }
        }
        Ok(out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Haar-distributed random orthogonal matrix: QR of a Gaussian matrix with
/// the signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(n: usize, rng: &mut crate::rng::Rng64) -> Matrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.normal());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Matrix::from_nalgebra(&q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;

    #[test]
    fn pseudoinverse_of_invertible_is_inverse() {
        let m = Matrix::from_row_major(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        let p = m.pseudoinverse().unwrap();
        let prod = m.matmul(&p);
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((prod.get(r, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pseudoinverse_rank_deficient() {
        let m = Matrix::from_row_major(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let p = m.pseudoinverse().unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pseudoinverse_wide_satisfies_penrose() {
        let mut rng = Rng64::new(5);
        let m = Matrix::from_row_major(3, 5, (0..15).map(|_| rng.normal()).collect()).unwrap();
        let p = m.pseudoinverse().unwrap();
        let mpm = m.matmul(&p).matmul(&m);
        for (a, b) in mpm.as_slice().iter().zip(m.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        assert!(Matrix::zeros(3, 3).pseudoinverse().is_err());
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = Rng64::new(11);
        let q = random_orthogonal(6, &mut rng);
        let qtq = q.transpose().matmul(&q);
        for r in 0..6 {
            for c in 0..6 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((qtq.get(r, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matvec_transpose_agrees_with_transpose() {
        let mut rng = Rng64::new(2);
        let m = Matrix::from_row_major(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let y = [1.0, -2.0, 0.5];
        let mut a = vec![0.0; 4];
        let mut b = vec![0.0; 4];
        m.matvec_transpose_into(&y, &mut a);
        m.transpose().matvec_into(&y, &mut b);
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() < 1e-14);
        }
    }
}
