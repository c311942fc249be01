//! Dense linear algebra for small symmetric positive-definite systems.
//!
//! Parameter dimensions in this crate are tens at most, so everything is
//! plain row-major storage with an unpivoted Cholesky factorization.

use crate::error::{BfiError, Result};

/// Entries whose mirror differs by more than this (relative to the largest
/// entry, floored at 1) are rejected instead of symmetrized.
pub const ASYMMETRY_TOLERANCE: f64 = 1e-8;

/// Dense symmetric matrix, stored in full.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from row-major entries, replacing each
    /// off-diagonal pair by its mean.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(BfiError::InvalidInput("matrix dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(BfiError::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(BfiError::InvalidInput(format!(
                "non-finite matrix entry at ({}, {})",
                bad / dim,
                bad % dim
            )));
        }
        let scale = data.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let mut m = SymMatrix { dim, data };
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (m.data[i * dim + j], m.data[j * dim + i]);
                let gap = (a - b).abs();
                if gap > ASYMMETRY_TOLERANCE * scale {
                    return Err(BfiError::Asymmetric { row: i, col: j, gap });
                }
                let mean = 0.5 * (a + b);
                m.data[i * dim + j] = mean;
                m.data[j * dim + i] = mean;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(BfiError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        Self::from_diagonal(&vec![value; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || self.get(i, j) == 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.check_dim(other.dim)?;
        Ok(SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.check_dim(other.dim)?;
        Ok(SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &SymMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn sub_assign(&mut self, other: &SymMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
    }

    /// Adds `weight * x xᵗ` in place. Both triangles receive the same
    /// rounded products, so exact symmetry is preserved.
    pub(crate) fn add_outer(&mut self, x: &[f64], weight: f64) {
        let d = self.dim;
        for i in 0..d {
            let wi = weight * x[i];
            if wi == 0.0 {
                continue;
            }
            for j in i..d {
                let v = wi * x[j];
                self.data[i * d + j] += v;
                if j != i {
                    self.data[j * d + i] += v;
                }
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        Ok(self
            .data
            .chunks(self.dim)
            .map(|row| dot(row, v))
            .collect())
    }

    /// Principal submatrix on `indices` (in the given order).
    pub fn submatrix(&self, indices: &[usize]) -> SymMatrix {
        let k = indices.len();
        let mut data = Vec::with_capacity(k * k);
        for &i in indices {
            for &j in indices {
                data.push(self.get(i, j));
            }
        }
        SymMatrix { dim: k, data }
    }

    /// Off-diagonal block with rows `rows` and columns `cols`.
    pub fn cross_block(&self, rows: &[usize], cols: &[usize]) -> RectMatrix {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                data.push(self.get(i, j));
            }
        }
        RectMatrix {
            rows: rows.len(),
            cols: cols.len(),
            data,
        }
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(BfiError::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    /// Builds from a row-major buffer that is symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(dim: usize, mut data: Vec<f64>) -> SymMatrix {
        for i in 0..dim {
            for j in (i + 1)..dim {
                let mean = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = mean;
                data[j * dim + i] = mean;
            }
        }
        SymMatrix { dim, data }
    }
}

/// Dense rectangular matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RectMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RectMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(BfiError::InvalidInput("matrix must have at least one row and column".into()));
        }
        if data.len() != rows * cols {
            return Err(BfiError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(RectMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(BfiError::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RectMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }


    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(BfiError::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok(self.data.chunks(self.cols).map(|row| dot(row, v)).collect())
    }

    /// `selfᵗ · v`.
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(BfiError::DimensionMismatch {
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (row, &vi) in self.data.chunks(self.cols).zip(v) {
            for (o, &r) in out.iter_mut().zip(row) {
                *o += r * vi;
            }
        }
        Ok(out)
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> RectMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        RectMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Lower-triangular Cholesky factor `G` with `G·Gᵗ = m`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

/// Factorizes `m`; fails with the index of the first non-positive pivot.
pub fn chol_factor(m: &SymMatrix) -> Result<CholeskyFactor> {
    let n = m.dim;
    let mut g = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = m.get(j, j);
        for k in 0..j {
            diag -= g[j * n + k] * g[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(BfiError::NotPositiveDefinite { pivot: j });
        }
        let gjj = diag.sqrt();
        g[j * n + j] = gjj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = s / gjj;
        }
    }
    Ok(CholeskyFactor { dim: n, lower: g })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// Solves `m·x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(BfiError::DimensionMismatch {
                expected: self.dim,
                found: b.len(),
            });
        }
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        Ok(y)
    }

    /// `m⁻¹`, assembled column by column from unit-vector solves.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
        SymMatrix::from_symmetric_unchecked(n, data)
    }

    /// Diagonal of `m⁻¹` without forming the full inverse.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        self.inverse().diagonal()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }
}

/// Solves `m·x = b` through the factor.
pub fn spd_solve(f: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    f.solve(b)
}

pub fn spd_inverse(f: &CholeskyFactor) -> SymMatrix {
    f.inverse()
}

/// `vᵗ·m·v`.
pub fn quad_form(m: &SymMatrix, v: &[f64]) -> Result<f64> {
    let mv = m.mul_vec(v)?;
    Ok(dot(&mv, v))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}


/// Nearest positive semi-definite matrix in Frobenius norm: negative
/// eigenvalues are set to zero (cyclic Jacobi eigendecomposition).
pub fn psd_floor(m: &SymMatrix) -> SymMatrix {
    let n = m.dim();
    if m.is_diagonal() {
        let d: Vec<f64> = m.diagonal().into_iter().map(|v| v.max(0.0)).collect();
        return SymMatrix::from_diagonal(&d);
    }
    let mut a = m.as_slice().to_vec();
    let mut v = SymMatrix::identity(n).as_slice().to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= 1e-30 * (1.0 + m.max_abs()).powi(2) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig: Vec<f64> = (0..n).map(|i| a[i * n + i].max(0.0)).collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| v[i * n + k] * eig[k] * v[j * n + k]).sum();
        }
    }
    SymMatrix::from_symmetric_unchecked(n, out)
}
