//! Dense symmetric linear algebra for small principal submatrices.
//!
//! Vectors are plain `[f64]` slices. Model indices are 0-based throughout.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model: a nonempty, strictly increasing list of covariate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ModelIndex(Vec<usize>);

impl ModelIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() || indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(indices));
        }
        Ok(Self(indices))
    }

    /// Caller guarantees the invariant; used by the enumerator.
    pub(crate) fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(!indices.is_empty() && indices.windows(2).all(|w| w[0] < w[1]));
        Self(indices)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_index(&self) -> usize {
        *self.0.last().expect("models are nonempty")
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let m = self.max_index();
        if m >= dim {
            return Err(Error::IndexOutOfRange { index: m, dim });
        }
        Ok(())
    }

    /// Gathers `v(M)`.
    pub fn gather(&self, v: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&j| v[j]).collect()
    }

    /// Embeds a length-|M| vector into R^p.
    pub fn scatter(&self, v: &[f64], p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (a, &j) in self.0.iter().enumerate() {
            out[j] = v[a];
        }
        out
    }
}

impl TryFrom<Vec<usize>> for ModelIndex {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ModelIndex> for Vec<usize> {
    fn from(m: ModelIndex) -> Self {
        m.0
    }
}

impl fmt::Display for ModelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (a, j) in self.0.iter().enumerate() {
            if a > 0 {
                write!(f, " ")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

/// Dense symmetric matrix storing each unordered pair once (packed lower triangle),
/// so `get(i, j) == get(j, i)` holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl From<SymmetricMatrix> for Vec<Vec<f64>> {
    fn from(m: SymmetricMatrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymmetricMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self { dim, data: vec![0.0; dim * (dim + 1) / 2] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from `f(i, j)` evaluated on the lower triangle `i >= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.data[packed(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from row vectors. Rows must be square, finite and exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::input("empty matrix"));
        }
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        for i in 0..dim {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::input(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    /// Outer product `c · v vᵀ`.
    pub fn outer(v: &[f64], c: f64) -> Self {
        Self::from_fn(v.len(), |i, j| c * v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[packed(i, j)] = v;
    }

    #[inline]
    pub(crate) fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[packed(i, j)] += v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Principal submatrix `A(M)`.
    pub fn submatrix(&self, model: &ModelIndex) -> Result<Self> {
        model.check_dim(self.dim)?;
        let idx = model.as_slice();
        Ok(Self::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b])))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| c * v).collect() }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.matvec(v))
    }

    /// |||A|||_∞: the largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }
}

/// Cholesky factor `A = L Lᵀ`, packed lower triangle.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Fails with `SingularModel` when a pivot is at or below `dim · 1e-12 · max diag`.
    pub fn factor(a: &SymmetricMatrix) -> Result<Self> {
        let n = a.dim();
        let max_diag = a.max_diag();
        let threshold = n as f64 * 1e-12 * max_diag.max(0.0);
        let mut l = vec![0.0; n * (n + 1) / 2];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[packed(j, k)] * l[packed(j, k)];
            }
            if !(d > threshold) {
                return Err(Error::SingularModel { pivot: d, threshold });
            }
            let djj = d.sqrt();
            l[packed(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[packed(i, k)] * l[packed(j, k)];
                }
                l[packed(i, j)] = s / djj;
            }
        }
        Ok(Self { dim: n, l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[packed(i, k)] * y[k];
            }
            y[i] = s / self.l[packed(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[packed(k, i)] * y[k];
            }
            y[i] = s / self.l[packed(i, i)];
        }
        y
    }

    /// `L z`, used to color white noise.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..=i).map(|k| self.l[packed(i, k)] * z[k]).sum())
            .collect()
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| 2.0 * self.l[packed(i, i)].ln()).sum()
    }
}

/// Solves `A x = b` for symmetric positive definite `A`, with one step of
/// iterative refinement.
pub fn solve_spd(a: &SymmetricMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.len() });
    }
    let chol = Cholesky::factor(a)?;
    Ok(refine(a, &chol, b))
}

pub(crate) fn refine(a: &SymmetricMatrix, chol: &Cholesky, b: &[f64]) -> Vec<f64> {
    let mut x = chol.solve(b);
    let ax = a.matvec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let dx = chol.solve(&r);
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi += di;
    }
    x
}

/// Symmetric eigendecomposition; values ascending, `vectors[c]` is the unit
/// eigenvector for `values[c]`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi. Iterates to (near) machine precision and reports
/// non-convergence only when the off-diagonal Frobenius norm still exceeds
/// `1e-10 · (1 + max |entry|)` after the sweep cap.
pub fn eigh(a: &SymmetricMatrix) -> Result<Eigen> {
    let n = a.dim();
    let mut m = a.to_rows();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = 1.0 + a.max_abs();
    let accept = 1e-10 * scale;
    let tight = 1e-15 * scale;

    let off = |m: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[i][j] * m[i][j];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        if off(&m) <= tight {
            break;
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                if s == 0.0 {
                    continue;
                }
                rotated = true;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let residual = off(&m);
    if residual > accept || !residual.is_finite() {
        return Err(Error::NoConvergence { sweeps, residual });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[x][x].total_cmp(&m[y][y]));
    let values = order.iter().map(|&c| m[c][c]).collect();
    let vectors = order.iter().map(|&c| (0..n).map(|r| v[r][c]).collect()).collect();
    Ok(Eigen { values, vectors })
}

/// `(λ_min, λ_max)`.
pub fn eig_extremes(a: &SymmetricMatrix) -> Result<(f64, f64)> {
    let n = a.dim();
    if n == 1 {
        let v = a.get(0, 0);
        return Ok((v, v));
    }
    let e = eigh(a)?;
    Ok((e.values[0], e.values[n - 1]))
}

/// Operator norm of a symmetric matrix.
pub fn op_norm(a: &SymmetricMatrix) -> Result<f64> {
    let (lo, hi) = eig_extremes(a)?;
    Ok(lo.abs().max(hi.abs()))
}

/// `A^{-1/2}` for symmetric positive definite `A`.
pub fn inv_sqrt_spd(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let n = a.dim();
    let e = eigh(a)?;
    let threshold = n as f64 * 1e-12 * a.max_diag().max(0.0);
    if e.values[0] <= threshold {
        return Err(Error::SingularModel { pivot: e.values[0], threshold });
    }
    let w: Vec<f64> = e.values.iter().map(|l| 1.0 / l.sqrt()).collect();
    Ok(SymmetricMatrix::from_fn(n, |i, j| {
        (0..n).map(|c| w[c] * e.vectors[c][i] * e.vectors[c][j]).sum()
    }))
}

/// `B A B` for symmetric `A`, `B` of equal size.
pub fn congruence(b: &SymmetricMatrix, a: &SymmetricMatrix) -> SymmetricMatrix {
    let n = a.dim();
    let ab: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a.get(i, k) * b.get(k, j)).sum()).collect())
        .collect();
    SymmetricMatrix::from_fn(n, |i, j| (0..n).map(|k| b.get(i, k) * ab[k][j]).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VectorNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub l0: usize,
}

pub fn norms(v: &[f64]) -> VectorNorms {
    VectorNorms { l1: norm1(v), l2: norm2(v), linf: norm_inf(v), l0: v.iter().filter(|x| **x != 0.0).count() }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    // Scaled to avoid overflow on huge entries.
    let m = norm_inf(v);
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

#[inline]
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_symmetry() {
        let mut m = SymmetricMatrix::zeros(3);
        m.set(0, 2, 4.0);
        assert_eq!(m.get(2, 0), 4.0);
    }

    #[test]
    fn model_validation() {
        assert!(ModelIndex::new(vec![]).is_err());
        assert!(ModelIndex::new(vec![1, 1]).is_err());
        assert!(ModelIndex::new(vec![2, 1]).is_err());
        assert_eq!(ModelIndex::new(vec![0, 3]).unwrap().to_string(), "{0 3}");
    }

    #[test]
    fn jacobi_handles_degenerate_spectrum() {
        let e = eigh(&SymmetricMatrix::from_fn(4, |_, _| 1.0)).unwrap();
        assert!((e.values[3] - 4.0).abs() < 1e-12);
        assert!(e.values[..3].iter().all(|v| v.abs() < 1e-12));
    }
}
