//! Dense complex linear algebra.
//!
//! [`ComplexMatrix`] stores entries row-major; [`vec`]/[`unvec`] use the
//! column-stacking convention. Decompositions (SVD, Hermitian eigen, Schur)
//! are delegated to `nalgebra`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
#[allow(unused_imports)] // float methods are inherent when std is linked
use num_traits::Float;
use num_traits::Zero;

use crate::error::dim_err;
use crate::{Error, Result, C64};

/// Singular values below this fraction of the largest are treated as zero by [`pinv`].
pub const PINV_RTOL: f64 = 1e-12;
/// Condition estimate above which [`solve_hermitian`] refuses to solve.
pub const MAX_CONDITION: f64 = 1e14;

const MAX_ITER: usize = 10_000;
/// Relative deflation tolerance; machine epsilon alone stalls on heavily
/// repeated eigenvalues.
const SCHUR_TOL: f64 = 64.0 * f64::EPSILON;

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

/// Dense complex column vector.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplexVector(pub Vec<C64>);

impl ComplexMatrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::zero(); rows * cols],
        }
    }

    /// Identity of order `n`.
    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, C64::new(1.0, 0.0))
    }

    /// `c · I_n`.
    pub fn scaled_identity(n: usize, c: C64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c;
        }
        m
    }

    /// Builds a matrix from a row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err("from_row_major", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested real rows. Panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| {
            assert_eq!(rows[i].len(), c, "ragged rows");
            C64::new(rows[i][j], 0.0)
        })
    }

    /// Builds a matrix entry by entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Block-diagonal matrix with `block` repeated `copies` times.
    pub fn block_diag_repeat(block: &ComplexMatrix, copies: usize) -> Self {
        let (r, c) = block.shape();
        let mut m = Self::zeros(r * copies, c * copies);
        for k in 0..copies {
            m.set_block(k * r, k * c, block);
        }
        m
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Whether the matrix is square.
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// Mutable row-major entries.
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// Plain transpose.
    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Multiplies every entry by `c`.
    pub fn scale(&self, c: C64) -> Self {
        self.map(|z| z * c)
    }

    /// Multiplies every entry by the real `s`.
    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    /// Applies `f` entrywise.
    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Matrix product, checked.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(dim_err("matmul", self.cols, rhs.rows));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product, checked.
    pub fn mul_vec(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if self.cols != v.len() {
            return Err(dim_err("mul_vec", self.cols, v.len()));
        }
        Ok(ComplexVector(
            (0..self.rows)
                .map(|i| self.row(i).iter().zip(&v.0).map(|(&a, &b)| a * b).sum())
                .collect(),
        ))
    }

    /// `selfᴴ · v`, checked.
    pub fn adjoint_mul_vec(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if self.rows != v.len() {
            return Err(dim_err("adjoint_mul_vec", self.rows, v.len()));
        }
        let mut out = vec![C64::zero(); self.cols];
        for (i, &vi) in v.0.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * vi;
            }
        }
        Ok(ComplexVector(out))
    }

    /// Entrywise sum, checked.
    pub fn try_add(&self, rhs: &ComplexMatrix) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    /// Entrywise difference, checked.
    pub fn try_sub(&self, rhs: &ComplexMatrix) -> Result<Self> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    fn zip_with(&self, rhs: &ComplexMatrix, op: &'static str, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(dim_err(op, shape_str(self.shape()), shape_str(rhs.shape())));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Copy of the `rows × cols` block whose top-left corner is `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Overwrites the block at `(r0, c0)` with `src`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &ComplexMatrix) {
        for i in 0..src.rows {
            for j in 0..src.cols {
                self[(r0 + i, c0 + j)] = src[(i, j)];
            }
        }
    }

    /// Sum of the diagonal.
    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self − other`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `(X + Xᴴ)/2`. Panics if not square.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square(), "hermitian_part of non-square matrix");
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Whether `|X − Xᴴ|` is entrywise below `tol`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() < tol))
    }

    /// Whether every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

}

fn shape_str((r, c): (usize, usize)) -> alloc::string::String {
    alloc::format!("{r}x{c}")
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

/// Panicking product for internal use where shapes are invariants.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product shape")
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_add(rhs).expect("matrix sum shape")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_sub(rhs).expect("matrix difference shape")
    }
}

impl ComplexVector {
    /// All-zero vector of length `n`.
    pub fn zeros(n: usize) -> Self {
        Self(vec![C64::zero(); n])
    }

    /// Vector from real entries.
    pub fn from_real(xs: &[f64]) -> Self {
        Self(xs.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Length.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Whether the vector is empty.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    /// Squared Euclidean norm.
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// First `n` entries.
    pub fn head(&self, n: usize) -> Self {
        Self(self.0[..n].to_vec())
    }

    /// Multiplies every entry by `c`.
    pub fn scale(&self, c: C64) -> Self {
        Self(self.0.iter().map(|&z| z * c).collect())
    }

    /// `self · otherᴴ`.
    pub fn outer_adjoint(&self, other: &ComplexVector) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.len(), other.len(), |i, j| self.0[i] * other.0[j].conj())
    }

    /// Largest entrywise modulus of `self − other`; infinite on length mismatch.
    pub fn max_abs_diff(&self, other: &ComplexVector) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Whether every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<usize> for ComplexVector {
    type Output = C64;

    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl Add for &ComplexVector {
    type Output = ComplexVector;

    fn add(self, rhs: &ComplexVector) -> ComplexVector {
        assert_eq!(self.len(), rhs.len(), "vector sum length");
        ComplexVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &ComplexVector {
    type Output = ComplexVector;

    fn sub(self, rhs: &ComplexVector) -> ComplexVector {
        assert_eq!(self.len(), rhs.len(), "vector difference length");
        ComplexVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &ComplexVector {
    type Output = ComplexVector;

    fn neg(self) -> ComplexVector {
        ComplexVector(self.0.iter().map(|z| -z).collect())
    }
}

impl From<Vec<C64>> for ComplexVector {
    fn from(v: Vec<C64>) -> Self {
        Self(v)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (br, bc) = b.shape();
    ComplexMatrix::from_fn(a.rows * br, a.cols * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Column-stacking vectorization.
pub fn vec(m: &ComplexMatrix) -> ComplexVector {
    let mut out = Vec::with_capacity(m.rows * m.cols);
    for j in 0..m.cols {
        for i in 0..m.rows {
            out.push(m[(i, j)]);
        }
    }
    ComplexVector(out)
}

/// Inverse of [`vec`].
pub fn unvec(v: &ComplexVector, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if v.len() != rows * cols {
        return Err(dim_err("unvec", rows * cols, v.len()));
    }
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| v[j * rows + i]))
}

/// Moore-Penrose pseudo-inverse via SVD, truncating singular values below
/// `PINV_RTOL · σ_max`.
pub fn pinv(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if m.rows == 0 || m.cols == 0 {
        return Err(Error::Empty("pinv operand"));
    }
    if m.max_abs() == 0.0 {
        return Err(Error::InvalidParameter("pinv of the zero matrix".into()));
    }
    let svd = m
        .to_nalgebra()
        .try_svd(true, true, f64::EPSILON, MAX_ITER)
        .ok_or(Error::NotConverged("SVD"))?;
    let u = svd.u.as_ref().ok_or(Error::NotConverged("SVD"))?;
    let v_t = svd.v_t.as_ref().ok_or(Error::NotConverged("SVD"))?;
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_RTOL * s_max;
    // V · Σ⁺ · Uᴴ
    let mut out = ComplexMatrix::zeros(m.cols, m.rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..m.cols {
            let vik = v_t[(k, i)].conj() * inv;
            for j in 0..m.rows {
                out[(i, j)] += vik * u[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

/// Hermitian eigendecomposition; eigenvalues ascending, eigenvectors as columns.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !m.is_square() {
        return Err(dim_err("hermitian_eigen", "square", shape_str(m.shape())));
    }
    let eig = m
        .hermitian_part()
        .to_nalgebra()
        .try_symmetric_eigen(f64::EPSILON, MAX_ITER)
        .ok_or(Error::NotConverged("Hermitian eigendecomposition"))?;
    let mut order: Vec<usize> = (0..m.rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(m.rows, m.rows, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Solves `lhs · X = rhs` for Hermitian `lhs` (which need not be definite).
///
/// Fails when `lhs` is not Hermitian to 1e-9 (relative to its largest entry)
/// or when its condition estimate exceeds [`MAX_CONDITION`].
pub fn solve_hermitian(lhs: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !lhs.is_square() {
        return Err(dim_err("solve_hermitian", "square lhs", shape_str(lhs.shape())));
    }
    if rhs.rows != lhs.rows {
        return Err(dim_err("solve_hermitian", lhs.rows, rhs.rows));
    }
    let scale = lhs.max_abs().max(1.0);
    if !lhs.is_hermitian(1e-9 * scale) {
        return Err(Error::NotHermitian("solve_hermitian"));
    }
    let (values, vectors) = hermitian_eigen(lhs)?;
    let abs_max = values.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let abs_min = values.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let cond = if abs_min > 0.0 { abs_max / abs_min } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned { op: "solve_hermitian", cond });
    }
    // X = V · Λ⁻¹ · Vᴴ · rhs
    let mut tmp = vectors.adjoint().matmul(rhs)?;
    for (k, &l) in values.iter().enumerate() {
        let inv = 1.0 / l;
        for z in &mut tmp.data[k * rhs.cols..(k + 1) * rhs.cols] {
            *z *= inv;
        }
    }
    vectors.matmul(&tmp)
}

/// Eigenvalues of a general square complex matrix (via Schur decomposition).
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(dim_err("eigenvalues", "square", shape_str(m.shape())));
    }
    let schur = m
        .to_nalgebra()
        .try_schur(SCHUR_TOL, MAX_ITER)
        .ok_or(Error::NotConverged("Schur decomposition"))?;
    let (_, t) = schur.unpack();
    Ok((0..m.rows).map(|i| t[(i, i)]).collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &ComplexMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Projects onto the Hermitian positive semidefinite cone: symmetrize, then
/// clip negative eigenvalues to zero.
pub fn project_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (values, vectors) = hermitian_eigen(m)?;
    if values.iter().all(|&l| l >= 0.0) {
        return Ok(m.hermitian_part());
    }
    let n = m.rows;
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &l) in values.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vectors[(i, k)] * l;
            for j in 0..n {
                out[(i, j)] += vik * vectors[(j, k)].conj();
            }
        }
    }
    Ok(out.hermitian_part())
}
