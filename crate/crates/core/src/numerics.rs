//! Dense linear algebra for small matrices.
//!
//! Everything here works on tiny problems (plant dimension 2, reduced network
//! blocks up to a few hundred rows), so the algorithms favour determinism and
//! simplicity: Taylor scaling-and-squaring for the exponential, cyclic Jacobi
//! for symmetric spectra, and a Francis double-shift QR for the occasional
//! non-symmetric Laplacian.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, NumericsError>;

fn shape_err(msg: impl Into<String>) -> NumericsError {
    NumericsError::Shape(msg.into())
}

/// Complex scalar stored as an explicit `(re, im)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn real(re: f64) -> Self {
        Self { re, im: 0.0 }
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    pub fn mul(self, o: Complex) -> Self {
        Self {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl fmt::Display for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im == 0.0 {
            write!(f, "{}", self.re)
        } else if self.im < 0.0 {
            write!(f, "{}-{}j", self.re, -self.im)
        } else {
            write!(f, "{}+{}j", self.re, self.im)
        }
    }
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(shape_err("matrix must have at least one row and column"));
        }
        if data.len() != rows * cols {
            return Err(shape_err(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|row| row.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|row| row.as_ref().len() != c) {
            return Err(shape_err("ragged rows"));
        }
        let data = rows.iter().flat_map(|row| row.as_ref().iter().copied()).collect();
        Self::new(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(shape_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(shape_err("vector length does not match column count"));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(shape_err(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn kron(&self, rhs: &Matrix) -> Matrix {
        let mut out = Self::zeros(self.rows * rhs.rows, self.cols * rhs.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a == 0.0 {
                    continue;
                }
                for p in 0..rhs.rows {
                    for q in 0..rhs.cols {
                        out[(i * rhs.rows + p, j * rhs.cols + q)] = a * rhs[(p, q)];
                    }
                }
            }
        }
        out
    }

    /// Copy of the `rows x cols` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Matrix> {
        if r0 + rows > self.rows || c0 + cols > self.cols || rows == 0 || cols == 0 {
            return Err(shape_err("block out of range"));
        }
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        Ok(out)
    }

    /// Assemble a square grid of equally sized blocks.
    pub fn from_blocks(blocks: &[Vec<Matrix>]) -> Result<Matrix> {
        let (br, bc) = check_block_grid(blocks, false)?;
        let n = blocks.len();
        let m = blocks[0].len();
        let mut out = Self::zeros(n * br, m * bc);
        for (bi, row) in blocks.iter().enumerate() {
            for (bj, blk) in row.iter().enumerate() {
                for i in 0..br {
                    for j in 0..bc {
                        out[(bi * br + i, bj * bc + j)] = blk[(i, j)];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(shape_err("inverse of a non-square matrix"));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
                .unwrap();
            if a[(pivot, col)].abs() <= scale * 1e-14 {
                return Err(NumericsError::Singular);
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                    inv.data.swap(pivot * n + j, col * n + j);
                }
            }
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = a[(i, col)];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[(i, j)] -= f * a[(col, j)];
                    inv[(i, j)] -= f * inv[(col, j)];
                }
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Complex matrix held as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    re: Matrix,
    im: Matrix,
}

impl ComplexMatrix {
    pub fn new(re: Matrix, im: Matrix) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(shape_err("real and imaginary parts differ in shape"));
        }
        Ok(Self { re, im })
    }

    pub fn from_real(re: Matrix) -> Self {
        let im = Matrix::zeros(re.rows, re.cols);
        Self { re, im }
    }

    pub fn re(&self) -> &Matrix {
        &self.re
    }

    pub fn im(&self) -> &Matrix {
        &self.im
    }

    pub fn shape(&self) -> (usize, usize) {
        self.re.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex {
        Complex::new(self.re[(i, j)], self.im[(i, j)])
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        let re = self.re.matmul(&rhs.re)?.sub(&self.im.matmul(&rhs.im)?)?;
        let im = self.re.matmul(&rhs.im)?.add(&self.im.matmul(&rhs.re)?)?;
        Ok(ComplexMatrix { re, im })
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        Ok(ComplexMatrix { re: self.re.sub(&rhs.re)?, im: self.im.sub(&rhs.im)? })
    }

    pub fn scale(&self, s: Complex) -> ComplexMatrix {
        let re = self.re.scale(s.re).sub(&self.im.scale(s.im)).expect("same shape");
        let im = self.re.scale(s.im).add(&self.im.scale(s.re)).expect("same shape");
        ComplexMatrix { re, im }
    }

    pub fn conj_transpose(&self) -> ComplexMatrix {
        ComplexMatrix { re: self.re.transpose(), im: self.im.transpose().scale(-1.0) }
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        let (r, c) = self.shape();
        if other.shape() != (r, c) {
            return Err(shape_err("complex shape mismatch"));
        }
        let mut m: f64 = 0.0;
        for i in 0..r {
            for j in 0..c {
                let d = Complex::new(
                    self.re[(i, j)] - other.re[(i, j)],
                    self.im[(i, j)] - other.im[(i, j)],
                );
                m = m.max(d.abs());
            }
        }
        Ok(m)
    }
}

/// Matrix types that support singular-value estimates.
pub trait SingularValues {
    fn dims(&self) -> (usize, usize);
    /// Modulus of entry `(i, j)`.
    fn abs_at(&self, i: usize, j: usize) -> f64;
    /// All singular values, ascending.
    fn singular_values(&self) -> Vec<f64>;
    fn max_singular_value(&self) -> f64;
}

impl SingularValues for Matrix {
    fn dims(&self) -> (usize, usize) {
        self.shape()
    }

    fn abs_at(&self, i: usize, j: usize) -> f64 {
        self[(i, j)].abs()
    }

    fn singular_values(&self) -> Vec<f64> {
        let gram = if self.rows >= self.cols {
            self.transpose().matmul(self).expect("gram shape")
        } else {
            self.matmul(&self.transpose()).expect("gram shape")
        };
        let mut sv: Vec<f64> = jacobi_eigenvalues(&gram)
            .into_iter()
            .map(|l| l.max(0.0).sqrt())
            .collect();
        sv.sort_by(f64::total_cmp);
        sv
    }

    fn max_singular_value(&self) -> f64 {
        if self.shape() == (2, 2) {
            return sv_max_2x2(self[(0, 0)], self[(0, 1)], self[(1, 0)], self[(1, 1)]);
        }
        self.singular_values().last().copied().unwrap_or(0.0)
    }
}

impl SingularValues for ComplexMatrix {
    fn dims(&self) -> (usize, usize) {
        self.shape()
    }

    fn abs_at(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).abs()
    }

    fn singular_values(&self) -> Vec<f64> {
        // Hermitian Gram X + iY has the same spectrum as the real symmetric
        // [[X, -Y], [Y, X]], with every eigenvalue doubled.
        let (r, c) = self.shape();
        let gram = if r >= c {
            self.conj_transpose().matmul(self)
        } else {
            self.matmul(&self.conj_transpose())
        }
        .expect("gram shape");
        let embedded = real_block_embedding(&gram.re, &gram.im).expect("same shape");
        let mut ev = jacobi_eigenvalues(&embedded);
        ev.sort_by(f64::total_cmp);
        ev.into_iter().step_by(2).map(|l| l.max(0.0).sqrt()).collect()
    }

    fn max_singular_value(&self) -> f64 {
        self.singular_values().last().copied().unwrap_or(0.0)
    }
}

/// Largest singular value of a real 2x2 matrix in closed form.
pub fn sv_max_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    // sigma_max = (sqrt((a+d)^2 + (c-b)^2) + sqrt((a-d)^2 + (b+c)^2)) / 2
    let (p, q, r, w) = (a + d, c - b, a - d, b + c);
    let s = (p * p + q * q).sqrt();
    let t = (r * r + w * w).sqrt();
    0.5 * (s + t)
}

/// Maximum singular value of a real or complex matrix.
pub fn max_singular_value<M: SingularValues + ?Sized>(m: &M) -> f64 {
    m.max_singular_value()
}

/// Scalar Gershgorin-type bound: max over i of max(row-i, column-i) absolute sum.
pub fn gershgorin_sv_bound<M: SingularValues + ?Sized>(m: &M) -> Result<f64> {
    let (r, c) = m.dims();
    if r != c {
        return Err(shape_err("Gershgorin bound needs a square matrix"));
    }
    Ok((0..r)
        .map(|i| {
            let row: f64 = (0..r).map(|j| m.abs_at(i, j)).sum();
            let col: f64 = (0..r).map(|j| m.abs_at(j, i)).sum();
            row.max(col)
        })
        .fold(0.0, f64::max))
}

fn check_block_grid(blocks: &[Vec<Matrix>], square: bool) -> Result<(usize, usize)> {
    let n = blocks.len();
    if n == 0 || blocks[0].is_empty() {
        return Err(shape_err("empty block grid"));
    }
    let m = blocks[0].len();
    if square && m != n {
        return Err(shape_err("block grid must be square"));
    }
    if blocks.iter().any(|row| row.len() != m) {
        return Err(shape_err("ragged block grid"));
    }
    let shape = blocks[0][0].shape();
    if blocks.iter().flatten().any(|b| b.shape() != shape) {
        return Err(shape_err("blocks differ in shape"));
    }
    if square && shape.0 != shape.1 {
        return Err(shape_err("blocks must be square"));
    }
    Ok(shape)
}

/// Block Gershgorin bound: `max_i max(sum_j sv(A_ij), sum_j sv(A_ji))`.
pub fn block_gershgorin_sv_bound(blocks: &[Vec<Matrix>]) -> Result<f64> {
    check_block_grid(blocks, true)?;
    let n = blocks.len();
    let sv: Vec<Vec<f64>> = blocks
        .iter()
        .map(|row| row.iter().map(|b| b.max_singular_value()).collect())
        .collect();
    Ok((0..n)
        .map(|i| {
            let r: f64 = (0..n).map(|j| sv[i][j]).sum();
            let c: f64 = (0..n).map(|j| sv[j][i]).sum();
            r.max(c)
        })
        .fold(0.0, f64::max))
}

/// Split the real embedding `[[A, -B], [B, A]]` into `(A - jB, A + jB)`.
pub fn complex_block_split(a: &Matrix, b: &Matrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(shape_err("A and B must be square and of equal shape"));
    }
    Ok((
        ComplexMatrix::new(a.clone(), b.scale(-1.0))?,
        ComplexMatrix::new(a.clone(), b.clone())?,
    ))
}

/// Real `2n x 2n` matrix `[[A, -B], [B, A]]`.
pub fn real_block_embedding(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(shape_err("A and B must have equal shape"));
    }
    Matrix::from_blocks(&[vec![a.clone(), b.scale(-1.0)], vec![b.clone(), a.clone()]])
}

/// `e^{A h}` by scaling and squaring of a truncated Taylor series.
///
/// Accurate to about 1e-13 relative for `|A h| <= 10`; nilpotent inputs are
/// exact up to rounding because the series terminates.
pub fn expm(a: &Matrix, h: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(shape_err("exponential of a non-square matrix"));
    }
    if !h.is_finite() || h < 0.0 {
        return Err(shape_err("duration must be finite and non-negative"));
    }
    let x = a.scale(h);
    let norm = x.norm_one();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let x = x.scale(0.5f64.powi(squarings as i32));
    let n = a.rows();
    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=24 {
        term = term.matmul(&x)?.scale(1.0 / k as f64);
        let tmax = term.max_abs();
        if tmax == 0.0 {
            break;
        }
        result = result.add(&term)?;
        if tmax <= 1e-18 * result.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result)?;
    }
    Ok(result)
}

/// `(integral_0^h e^{A t} dt) B` via the augmented exponential
/// `exp([[A, B], [0, 0]] h)`, whose top-right block is the integral.
pub fn expm_integral(a: &Matrix, b: &Matrix, h: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(shape_err("A must be square"));
    }
    if b.rows() != a.rows() {
        return Err(shape_err("B row count must match A"));
    }
    let n = a.rows();
    let m = b.cols();
    let mut aug = Matrix::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = a[(i, j)];
        }
        for j in 0..m {
            aug[(i, n + j)] = b[(i, j)];
        }
    }
    expm(&aug, h)?.block(0, n, n, m)
}

/// Eigenvalues of a real symmetric matrix, ascending, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(shape_err("eigenvalues of a non-square matrix"));
    }
    let scale = a.max_abs().max(1.0);
    if !a.is_symmetric(1e-12 * scale) {
        return Err(shape_err("matrix is not symmetric"));
    }
    let mut ev = jacobi_eigenvalues(a);
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.clone();
    // symmetrize against rounding in Gram products
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let total = m.frobenius();
    if total == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-16 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

/// Eigenvalues of a general real square matrix (Hessenberg reduction followed
/// by Francis double-shift QR). Sorted by real part, then imaginary part.
pub fn general_eigenvalues(a: &Matrix) -> Result<Vec<Complex>> {
    if !a.is_square() {
        return Err(shape_err("eigenvalues of a non-square matrix"));
    }
    let n = a.rows();
    let mut h = a.clone();
    hessenberg(&mut h);
    let mut ev = hqr(&mut h, n)?;
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(ev)
}

// Reduction to upper Hessenberg form by stabilized elementary similarity
// transformations.
fn hessenberg(a: &mut Matrix) {
    let n = a.rows();
    for m in 1..n.saturating_sub(1) {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..n {
                let t = a[(i, j)];
                a[(i, j)] = a[(m, j)];
                a[(m, j)] = t;
            }
            for j in 0..n {
                let t = a[(j, i)];
                a[(j, i)] = a[(j, m)];
                a[(j, m)] = t;
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        let v = a[(m, j)];
                        a[(i, j)] -= y * v;
                    }
                    for j in 0..n {
                        let v = a[(j, i)];
                        a[(j, m)] += y * v;
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[(i, j)] = 0.0;
        }
    }
}

fn hqr(a: &mut Matrix, n: usize) -> Result<Vec<Complex>> {
    let mut out = vec![Complex::ZERO; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 1 {
                let lu = l as usize;
                let s = a[(lu - 1, lu - 1)].abs() + a[(lu, lu)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if a[(lu, lu - 1)].abs() + s == s {
                    a[(lu, lu - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let nu = nn as usize;
            let x = a[(nu, nu)];
            if l == nn {
                out[nu] = Complex::real(x + t);
                nn -= 1;
                break;
            }
            let y = a[(nu - 1, nu - 1)];
            let w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let z = q.abs().sqrt();
                let xx = x + t;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    let first = xx + z;
                    let second = if z != 0.0 { xx - w / z } else { first };
                    out[nu - 1] = Complex::real(first);
                    out[nu] = Complex::real(second);
                } else {
                    out[nu - 1] = Complex::new(xx + p, z);
                    out[nu] = Complex::new(xx + p, -z);
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return Err(NumericsError::NoConvergence);
            }
            let (mut x, mut y, mut w) = (x, y, w);
            if its == 10 || its == 20 {
                t += x;
                for i in 0..=nu {
                    a[(i, i)] -= x;
                }
                let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            while m >= l {
                let mu = m as usize;
                let z = a[(mu, mu)];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[(mu + 1, mu)] + a[(mu, mu + 1)];
                q = a[(mu + 1, mu + 1)] - z - r - s;
                r = a[(mu + 2, mu + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(mu, mu - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[(mu - 1, mu - 1)].abs() + z.abs() + a[(mu + 1, mu + 1)].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            let mu = m as usize;
            for i in (mu + 2)..=nu {
                a[(i, i - 2)] = 0.0;
                if i != mu + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            let mut k = mu;
            while k + 1 <= nu {
                if k != mu {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = 0.0;
                    if k + 1 != nu {
                        r = a[(k + 2, k - 1)];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == mu {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                        if k + 1 != nu {
                            pp += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pp * z;
                        }
                        a[(k + 1, j)] -= pp * y;
                        a[(k, j)] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in (l as usize)..=mmin {
                        let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k + 1 != nu {
                            pp += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pp * r;
                        }
                        a[(i, k + 1)] -= pp * q;
                        a[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        let data = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(r, c, data).unwrap()
    }

    fn power_iteration_sv(a: &Matrix) -> f64 {
        let g = a.transpose().matmul(a).unwrap();
        let mut v = vec![1.0; g.cols()];
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w = g.matvec(&v).unwrap();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = norm;
            v = w.iter().map(|x| x / norm).collect();
        }
        lambda.sqrt()
    }

    #[test]
    fn expm_nilpotent_is_exact() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let f = expm(&a, 2.0).unwrap();
        assert_eq!(f, Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap());
    }

    #[test]
    fn expm_zero_is_identity() {
        let f = expm(&Matrix::zeros(2, 2), 5.0).unwrap();
        assert_eq!(f, Matrix::identity(2));
    }

    #[test]
    fn expm_diagonal_matches_scalar_exp() {
        let a = Matrix::from_rows(&[[-1.0, 0.0], [0.0, -1.0]]).unwrap();
        let f = expm(&a, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((f[(0, 0)] - e).abs() < 1e-15);
        assert!((f[(1, 1)] - e).abs() < 1e-15);
        assert_eq!(f[(0, 1)], 0.0);
    }

    #[test]
    fn expm_rotation_generator() {
        let a = Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap();
        let f = expm(&a, 7.5).unwrap();
        let (s, c) = 7.5f64.sin_cos();
        let want = Matrix::from_rows(&[[c, -s], [s, c]]).unwrap();
        assert!(f.max_abs_diff(&want).unwrap() < 1e-13);
    }

    #[test]
    fn expm_rejects_non_square() {
        assert!(matches!(expm(&Matrix::zeros(2, 3), 1.0), Err(NumericsError::Shape(_))));
    }

    #[test]
    fn integral_double_integrator() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        for h in [0.1, 1.0, 3.0, 7.25] {
            let g = expm_integral(&a, &b, h).unwrap();
            assert!((g[(0, 0)] - h * h / 2.0).abs() <= 1e-14 * h * h);
            assert!((g[(1, 0)] - h).abs() <= 1e-15 * h);
        }
    }

    #[test]
    fn integral_zero_plant() {
        let g = expm_integral(&Matrix::zeros(2, 2), &Matrix::identity(2), 3.0).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(2).scale(3.0)).unwrap() < 1e-15);
    }

    #[test]
    fn integral_scalar_decay_matches_quadrature() {
        let g = expm_integral(&Matrix::from_rows(&[[-1.0]]).unwrap(), &Matrix::from_rows(&[[1.0]]).unwrap(), 1.0)
            .unwrap();
        // composite Simpson on e^{-t}, 2000 panels
        let n = 2000;
        let step = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * (-(i as f64) * step).exp();
        }
        let quad = s * step / 3.0;
        assert!((g[(0, 0)] - quad).abs() < 1e-12);
    }

    #[test]
    fn integral_shape_mismatch() {
        assert!(expm_integral(&Matrix::zeros(2, 2), &Matrix::zeros(3, 1), 1.0).is_err());
    }

    #[test]
    fn sv_simple_cases() {
        assert!((max_singular_value(&Matrix::identity(4)) - 1.0).abs() < 1e-15);
        let m = Matrix::from_rows(&[[0.0, 2.0], [0.0, 0.0]]).unwrap();
        assert!((max_singular_value(&m) - 2.0).abs() < 1e-15);
        let m3 = Matrix::from_rows(&[[0.0, 2.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        assert!((max_singular_value(&m3) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sv_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 4, 4);
            let want = power_iteration_sv(&a);
            assert!((a.max_singular_value() - want).abs() < 1e-8, "{a:?}");
        }
    }

    #[test]
    fn two_by_two_closed_form_agrees_with_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = random_matrix(&mut rng, 2, 2);
            let jac = a.singular_values()[1];
            assert!((a.max_singular_value() - jac).abs() < 1e-12);
        }
    }

    #[test]
    fn gershgorin_examples() {
        assert_eq!(gershgorin_sv_bound(&Matrix::identity(3)).unwrap(), 1.0);
        let m = Matrix::from_rows(&[[1.0, -1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(gershgorin_sv_bound(&m).unwrap(), 2.0);
        assert!(gershgorin_sv_bound(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn gershgorin_dominates_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = random_matrix(&mut rng, 5, 5);
            assert!(gershgorin_sv_bound(&a).unwrap() >= a.max_singular_value() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn block_gershgorin_examples() {
        let i2 = Matrix::identity(2);
        let grid = vec![vec![i2.clone(), i2.clone()], vec![i2.clone(), i2.clone()]];
        assert!((block_gershgorin_sv_bound(&grid).unwrap() - 2.0).abs() < 1e-15);

        let m = Matrix::from_rows(&[[1.0, 2.0], [-0.5, 0.3]]).unwrap();
        let z = Matrix::zeros(2, 2);
        let diag = vec![vec![m.clone(), z.clone()], vec![z, m.clone()]];
        assert!((block_gershgorin_sv_bound(&diag).unwrap() - m.max_singular_value()).abs() < 1e-14);

        let ragged = vec![vec![i2.clone(), i2.clone()], vec![i2.clone()]];
        assert!(block_gershgorin_sv_bound(&ragged).is_err());
    }

    #[test]
    fn complex_split_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 3, 3);
        let z = Matrix::zeros(3, 3);
        let (lo, hi) = complex_block_split(&a, &z).unwrap();
        assert!((lo.max_singular_value() - a.max_singular_value()).abs() < 1e-12);
        assert!((hi.max_singular_value() - a.max_singular_value()).abs() < 1e-12);

        let emb = real_block_embedding(&z, &Matrix::identity(3)).unwrap();
        assert!((emb.max_singular_value() - 1.0).abs() < 1e-14);
        assert!(complex_block_split(&a, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn symmetric_eigenvalues_known_spectrum() {
        let k3 = Matrix::from_rows(&[[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]]).unwrap();
        let ev = symmetric_eigenvalues(&k3).unwrap();
        for (got, want) in ev.iter().zip([0.0, 3.0, 3.0]) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn general_eigenvalues_cycle_laplacian() {
        let n = 5;
        let mut l = Matrix::identity(n);
        for i in 0..n {
            l[(i, (i + 1) % n)] = -1.0;
        }
        let ev = general_eigenvalues(&l).unwrap();
        let mut want: Vec<Complex> = (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex::new(1.0 - th.cos(), -th.sin())
            })
            .collect();
        want.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        for (g, w) in ev.iter().zip(&want) {
            assert!((g.re - w.re).abs() < 1e-10 && (g.im - w.im).abs() < 1e-10, "{ev:?}");
        }
    }

    #[test]
    fn general_eigenvalues_agree_with_jacobi_on_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2, 3, 6, 9] {
            let r = random_matrix(&mut rng, n, n);
            let s = r.add(&r.transpose()).unwrap();
            let sym = symmetric_eigenvalues(&s).unwrap();
            let gen = general_eigenvalues(&s).unwrap();
            for (a, b) in sym.iter().zip(&gen) {
                assert!((a - b.re).abs() < 1e-10 && b.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn general_eigenvalues_trace_and_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [3, 4, 7] {
            let a = random_matrix(&mut rng, n, n);
            let ev = general_eigenvalues(&a).unwrap();
            let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
            let sum_re: f64 = ev.iter().map(|e| e.re).sum();
            let sum_im: f64 = ev.iter().map(|e| e.im).sum();
            assert!((trace - sum_re).abs() < 1e-10);
            assert!(sum_im.abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 4, 4);
        let prod = a.matmul(&a.inverse().unwrap()).unwrap();
        assert!(prod.max_abs_diff(&Matrix::identity(4)).unwrap() < 1e-12);
        assert_eq!(Matrix::zeros(2, 2).inverse(), Err(NumericsError::Singular));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert_eq!(Matrix::new(1, 1, vec![f64::NAN]), Err(NumericsError::NonFinite));
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
