//! Dense symmetric linear algebra for small information matrices.
//!
//! Matrices are stored as packed lower triangles. Factorisation is an
//! unpivoted Cholesky; a non-positive pivot is reported as rank deficiency
//! rather than papered over with a pseudo-inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

/// Symmetric `p x p` matrix in packed lower-triangular storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds a matrix from `f(i, j)` evaluated on the lower triangle.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds from a dense row-major matrix, reading only the lower triangle.
    pub fn from_dense(dim: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: dense.len(),
            });
        }
        Ok(Self::from_fn(dim, |i, j| dense[i * dim + j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[packed_index(i, j)] = value;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, value: f64) {
        self.data[packed_index(i, j)] += value;
    }

    /// Packed lower triangle, row by row.
    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let p = self.dim;
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                out[i * p + j] = self.get(i, j);
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        self.check_dim(other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let p = self.dim;
        let mut out = vec![0.0; p];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..p).map(|j| self.get(i, j) * x[j]).sum();
        }
        Ok(out)
    }

    /// Dense product `self * other` (not symmetric in general).
    pub fn mul_dense(&self, other: &SymMatrix) -> Result<Vec<f64>> {
        self.check_dim(other.dim)?;
        let p = self.dim;
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                out[i * p + j] = (0..p).map(|k| self.get(i, k) * other.get(k, j)).sum();
            }
        }
        Ok(out)
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let ax = self.mul_vec(x)?;
        Ok(ax.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    dim: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(i, j)`; zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[packed_index(i, j)]
        }
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_fn(self.dim, |i, j| {
            (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum()
        })
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let p = self.dim;
        if b.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: b.len(),
            });
        }
        // forward: L z = b
        let mut z = b.to_vec();
        for i in 0..p {
            let mut s = z[i];
            for k in 0..i {
                s -= self.data[packed_index(i, k)] * z[k];
            }
            z[i] = s / self.data[packed_index(i, i)];
        }
        // backward: Lᵀ x = z
        for i in (0..p).rev() {
            let mut s = z[i];
            for k in i + 1..p {
                s -= self.data[packed_index(k, i)] * z[k];
            }
            z[i] = s / self.data[packed_index(i, i)];
        }
        Ok(z)
    }

    /// Log-determinant of `L Lᵀ`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim)
            .map(|i| self.data[packed_index(i, i)].ln())
            .sum::<f64>()
    }
}

/// Cholesky factorisation without pivoting.
pub fn cholesky(a: &SymMatrix) -> Result<LowerTriangular> {
    let p = a.dim();
    let mut l = vec![0.0; p * (p + 1) / 2];
    for j in 0..p {
        let mut d = a.get(j, j);
        for k in 0..j {
            let ljk = l[packed_index(j, k)];
            d -= ljk * ljk;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::RankDeficient { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[packed_index(j, j)] = djj;
        for i in j + 1..p {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[packed_index(i, k)] * l[packed_index(j, k)];
            }
            l[packed_index(i, j)] = s / djj;
        }
    }
    Ok(LowerTriangular { dim: p, data: l })
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.len(),
        });
    }
    cholesky(a)?.solve(b)
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_spd(a: &SymMatrix) -> Result<SymMatrix> {
    let p = a.dim();
    let l = cholesky(a)?;
    let mut inv = SymMatrix::zeros(p);
    let mut e = vec![0.0; p];
    for j in 0..p {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = l.solve(&e)?;
        for (i, &v) in col.iter().enumerate().skip(j) {
            inv.set(i, j, v);
        }
    }
    Ok(inv)
}

/// Largest singular value of a dense square matrix, by power iteration on `MᵀM`.
pub fn spectral_norm(dense: &[f64], dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut sigma = 0.0;
    for _ in 0..500 {
        let mv: Vec<f64> = (0..dim)
            .map(|i| (0..dim).map(|j| dense[i * dim + j] * v[j]).sum())
            .collect();
        let mtmv: Vec<f64> = (0..dim)
            .map(|j| (0..dim).map(|i| dense[i * dim + j] * mv[i]).sum())
            .collect();
        let norm = mtmv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = mtmv.iter().map(|x| x / norm).collect();
        if (next - sigma).abs() <= 1e-12 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}
