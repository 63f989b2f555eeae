//! Small dense complex linear algebra: Hermitian eigendecomposition by cyclic
//! Jacobi rotations, Cholesky factorization with triangular solves, and
//! Hermitian quadratic forms.
//!
//! Sizes of interest are a few hundred at most, so everything is row-major
//! `Vec<Complex64>` without blocking.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

/// Relative tolerance for the Hermitian symmetry check.
pub const HERMITIAN_TOL: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |A - A^H| = {asymmetry:e} (scale {scale:e})")]
    NotHermitian { asymmetry: f64, scale: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite: pivot {index} = {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_diagonal:e})")]
    NoConvergence { sweeps: usize, off_diagonal: f64 },
    #[error("quadratic form has non-negligible imaginary part {imag:e} (real part {real:e})")]
    ComplexQuadraticForm { real: f64, imag: f64 },
    #[error("empty matrix")]
    Empty,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real_diagonal(&vec![1.0; n])
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// `self + c·I`.
    pub fn shift_diagonal(&self, c: f64) -> Result<Self> {
        self.require_square()?;
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] += c;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let other_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot apply {}x{} matrix to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, x)| a * x).sum())
            .collect())
    }

    /// Largest entrywise deviation `|A[i][j] - conj(A[j][i])|`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.is_square() && self.hermitian_asymmetry() <= HERMITIAN_TOL * self.max_abs()
    }

    fn require_square(&self) -> Result<()> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if self.rows == 0 {
            return Err(LinalgError::Empty);
        }
        Ok(())
    }

    fn require_hermitian(&self) -> Result<()> {
        self.require_square()?;
        let asymmetry = self.hermitian_asymmetry();
        let scale = self.max_abs();
        if asymmetry > HERMITIAN_TOL * scale {
            return Err(LinalgError::NotHermitian { asymmetry, scale });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenvalues in ascending order with the matching unitary eigenvector basis
/// stored column-wise.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub basis: ComplexMatrix,
}

impl EigenDecomposition {
    /// `U·diag(λ)·Uᴴ`
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| self.basis[(i, k)] * self.eigenvalues[k] * self.basis[(j, k)].conj())
                .sum()
        })
    }
}

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<EigenDecomposition> {
    a.require_hermitian()?;
    let n = a.rows();
    // Work on the exactly Hermitian part so rounding in the input cannot bias the phases.
    let mut work = ComplexMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj()));
    let mut basis = ComplexMatrix::identity(n);

    let total = work.frobenius_norm();
    let target = 1e-15 * total;
    let mut off = off_diagonal_norm(&work);
    let mut sweeps = 0;
    while off > target && total > 0.0 {
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off_diagonal: off,
            });
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut work, &mut basis, p, q);
            }
        }
        sweeps += 1;
        let next = off_diagonal_norm(&work);
        if next >= off && next <= 1e-13 * total {
            // Stalled at rounding level.
            break;
        }
        off = next;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| work[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let eigenvalues = order.iter().map(|&i| diag[i]).collect();
    let sorted_basis = ComplexMatrix::from_fn(n, n, |i, j| basis[(i, order[j])]);
    Ok(EigenDecomposition {
        eigenvalues,
        basis: sorted_basis,
    })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)].norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// One two-sided rotation `A ← Jᴴ A J`, `V ← V J` annihilating `A[p][q]`.
///
/// J is a phase rotation making `A[p][q]` real followed by a real Givens
/// rotation.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let phase = apq / r;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let j_pp = Complex64::new(c, 0.0);
    let j_pq = Complex64::new(s, 0.0);
    let j_qp = -s * phase.conj();
    let j_qq = c * phase.conj();

    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * j_pp + akq * j_qp;
        a[(k, q)] = akp * j_pq + akq * j_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = j_pp.conj() * apk + j_qp.conj() * aqk;
        a[(q, k)] = j_pq.conj() * apk + j_qq.conj() * aqk;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * j_pp + vkq * j_qp;
        v[(k, q)] = vkp * j_pq + vkq * j_qq;
    }
}

/// Lower-triangular Cholesky factor `A = L·Lᴴ` of a Hermitian positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<Complex64>,
}

impl Cholesky {
    /// Factorizes `a`, reading only its lower triangle.
    pub fn factor(a: &ComplexMatrix) -> Result<Self> {
        a.require_square()?;
        let n = a.rows();
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
            }
            let d = d.sqrt();
            l[j * n + j] = Complex64::new(d, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) -> Result<()> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "right-hand side of length {} for a {n}x{n} system",
                b.len()
            )));
        }
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i].re;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[k * n + i].conj() * b[k];
            }
            b[i] = s / l[i * n + i].re;
        }
        Ok(())
    }

    pub fn solve_vec(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        if b.rows() != self.n {
            return Err(LinalgError::DimensionMismatch(format!(
                "right-hand side has {} rows for a {}x{} system",
                b.rows(),
                self.n,
                self.n
            )));
        }
        let mut out = ComplexMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.column(j))?;
            for (i, xi) in x.into_iter().enumerate() {
                out[(i, j)] = xi;
            }
        }
        Ok(out)
    }
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn hpd_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    Cholesky::factor(a)?.solve(b)
}

/// `vᴴ A v` for Hermitian `A`; the imaginary part must vanish up to rounding.
pub fn quad_form(v: &[Complex64], a: &ComplexMatrix) -> Result<f64> {
    if !a.is_square() || a.rows() != v.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "vector of length {} against {}x{} matrix",
            v.len(),
            a.rows(),
            a.cols()
        )));
    }
    let av = a.matvec(v)?;
    let z: Complex64 = v.iter().zip(&av).map(|(x, y)| x.conj() * y).sum();
    let scale = a.frobenius_norm() * norm_sqr(v);
    if z.im.abs() > 1e-10 * z.re.abs() && z.im.abs() > 1e-13 * scale {
        return Err(LinalgError::ComplexQuadraticForm {
            real: z.re,
            imag: z.im,
        });
    }
    Ok(z.re)
}

pub fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}
