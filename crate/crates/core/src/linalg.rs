//! Dense complex matrix kernels for small MIMO dimensions.
//!
//! Matrices are stored row-major. Everything here is sized for the handful of
//! antennas a MU-MIMO scenario has (up to a few dozen rows), so the routines are
//! straightforward triple loops without blocking.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub, SubAssign};

use num_complex::Complex64;

use crate::counters;
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Pivots at or below this value make a Hermitian factorization fail.
pub const PIVOT_TOLERANCE: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, value: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(value, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real-valued rows.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        Self::from_fn(rows.len(), cols, |i, j| C64::new(rows[i][j], 0.0))
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {:?} * {:?}",
            self.shape(),
            rhs.shape()
        );
        counters::record_matmul();
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lhs_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^H * rhs` without materializing the adjoint.
    pub fn adjoint_matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.rows, rhs.rows,
            "adjoint_matmul shape mismatch: {:?}^H * {:?}",
            self.shape(),
            rhs.shape()
        );
        counters::record_matmul();
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let lhs_row = &self.data[k * self.cols..(k + 1) * self.cols];
            let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
            for (i, a) in lhs_row.iter().enumerate() {
                let a = a.conj();
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * rhs^H` without materializing the adjoint.
    pub fn matmul_adjoint(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.cols,
            "matmul_adjoint shape mismatch: {:?} * {:?}^H",
            self.shape(),
            rhs.shape()
        );
        counters::record_matmul();
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..rhs.rows {
                let b = &rhs.data[j * rhs.cols..(j + 1) * rhs.cols];
                out.data[i * rhs.rows + j] = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale_mut(s);
        m
    }

    pub fn scale_mut(&mut self, s: f64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    /// Replaces the matrix by `(M + M^H) / 2`. Square matrices only.
    pub fn hermitize(&mut self) {
        assert_eq!(self.rows, self.cols, "hermitize needs a square matrix");
        let n = self.rows;
        for i in 0..n {
            let d = self.data[i * n + i];
            self.data[i * n + i] = C64::new(d.re, 0.0);
            for j in (i + 1)..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `Re Tr(self^H other)`, the real inner product of the entries.
    pub fn real_inner(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "inner product shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    /// Real view: real parts row-major, then imaginary parts row-major.
    pub fn to_real_parts(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.data.len());
        out.extend(self.data.iter().map(|z| z.re));
        out.extend(self.data.iter().map(|z| z.im));
        out
    }

    /// Inverse of [`ComplexMatrix::to_real_parts`].
    pub fn from_real_parts(rows: usize, cols: usize, parts: &[f64]) -> Result<Self> {
        let n = rows * cols;
        if parts.len() != 2 * n {
            return Err(Error::Dimension(format!(
                "{} reals cannot encode a {rows}x{cols} complex matrix",
                parts.len()
            )));
        }
        let data = (0..n).map(|i| C64::new(parts[i], parts[n + i])).collect();
        Self::from_vec(rows, cols, data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, b)| *a += b);
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, b)| *a -= b);
    }
}

impl Mul<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

pub fn hermitian_transpose(m: &ComplexMatrix) -> ComplexMatrix {
    m.adjoint()
}

/// Lower-triangular Cholesky factor `L` with `A = L L^H`.
#[derive(Clone, Debug)]
pub struct HpdFactor {
    l: ComplexMatrix,
}

impl HpdFactor {
    /// Factors a Hermitian positive definite matrix. Only the lower triangle is read.
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::Dimension(format!(
                "cannot factor a non-square {}x{} matrix",
                a.rows, a.cols
            )));
        }
        counters::record_factorization();
        let n = a.rows;
        let mut l = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if d.is_nan() || d <= PIVOT_TOLERANCE {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = C64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Smallest diagonal entry of the factor.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].re).fold(f64::INFINITY, f64::min)
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        let n = self.dim();
        if b.rows != n {
            return Err(Error::Dimension(format!(
                "right-hand side has {} rows, factor is {n}x{n}",
                b.rows
            )));
        }
        let mut x = b.clone();
        let m = b.cols;
        // forward: L y = b
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                for c in 0..m {
                    let t = x[(k, c)];
                    x[(i, c)] -= lik * t;
                }
            }
            let d = self.l[(i, i)].re;
            for c in 0..m {
                x[(i, c)] /= d;
            }
        }
        // backward: L^H x = y
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)].conj();
                for c in 0..m {
                    let t = x[(k, c)];
                    x[(i, c)] -= lki * t;
                }
            }
            let d = self.l[(i, i)].re;
            for c in 0..m {
                x[(i, c)] /= d;
            }
        }
        Ok(x)
    }

    /// `log2 det A`.
    pub fn logdet2(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].re.log2()).sum::<f64>()
    }
}

/// `sigma2 I + sum_r H V_r V_r^H H^H`, skipping `V_exclude` when given.
pub fn received_covariance(
    h: &ComplexMatrix,
    v_list: &[ComplexMatrix],
    sigma2: f64,
    exclude: Option<usize>,
) -> Result<ComplexMatrix> {
    let n_rx = h.rows;
    let mut acc = ComplexMatrix::scaled_identity(n_rx, sigma2);
    for (r, v) in v_list.iter().enumerate() {
        if v.rows != h.cols {
            return Err(Error::Dimension(format!(
                "channel is {}x{} but beamformer {r} is {}x{}",
                h.rows, h.cols, v.rows, v.cols
            )));
        }
        if Some(r) == exclude {
            continue;
        }
        let hv = h.matmul(v);
        acc += &hv.matmul_adjoint(&hv);
    }
    acc.hermitize();
    Ok(acc)
}

pub fn solve_hpd(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    HpdFactor::new(a)?.solve(b)
}

pub fn logdet2_hpd(a: &ComplexMatrix) -> Result<f64> {
    Ok(HpdFactor::new(a)?.logdet2())
}

/// `sum_k Tr(V_k V_k^H)`.
pub fn frob2(v_list: &[ComplexMatrix]) -> f64 {
    v_list.iter().map(ComplexMatrix::norm_sqr).sum()
}
